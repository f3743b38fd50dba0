import numpy as np
import pytest

from fedpatch.nn import (NetworkSpec, WeightFormatError, decode_weights,
                         encode_weights, init_weights, load_weights,
                         save_weights)


def test_round_trip_bit_exact(tiny_weights, tmp_path):
    path = tmp_path / "w.fshd"
    save_weights(tiny_weights, path)
    loaded = load_weights(path, tiny_weights.spec)
    assert loaded.equal(tiny_weights)
    # the on-disk bytes are a pure function of the weights
    save_weights(loaded, tmp_path / "w2.fshd")
    assert (tmp_path / "w.fshd").read_bytes() == (tmp_path / "w2.fshd").read_bytes()


def test_truncated_payload_is_structured_error(tiny_weights):
    blob = encode_weights(tiny_weights)
    for cut in (0, 3, 5, 10, len(blob) // 2, len(blob) - 1):
        with pytest.raises(WeightFormatError):
            decode_weights(blob[:cut], tiny_weights.spec)


def test_corrupted_magic_rejected(tiny_weights):
    blob = bytearray(encode_weights(tiny_weights))
    blob[0] ^= 0xFF
    with pytest.raises(WeightFormatError, match="magic"):
        decode_weights(bytes(blob), tiny_weights.spec)


def test_version_mismatch_rejected(tiny_weights):
    blob = bytearray(encode_weights(tiny_weights))
    blob[4] = 99
    with pytest.raises(WeightFormatError, match="version"):
        decode_weights(bytes(blob), tiny_weights.spec)


def test_spec_mismatch_rejected(tiny_weights):
    blob = encode_weights(tiny_weights)
    other = NetworkSpec(8, 3, ((4, 1), (7, 1)), seed=11)
    with pytest.raises(WeightFormatError, match="spec"):
        decode_weights(blob, other)


def test_error_reports_byte_offset(tiny_weights):
    blob = encode_weights(tiny_weights)
    try:
        decode_weights(blob[:20], tiny_weights.spec)
    except WeightFormatError as exc:
        assert exc.offset is not None
    else:
        pytest.fail("expected WeightFormatError")


def test_float_values_survive_exactly(tmp_path):
    spec = NetworkSpec(8, 1, ((2, 1),), seed=77)
    w = init_weights(spec)
    w.layers["block0_conv0_kernel"][0, 0, 0, 0] = np.float32(np.pi)
    save_weights(w, tmp_path / "pi.fshd")
    loaded = load_weights(tmp_path / "pi.fshd", spec)
    assert loaded.layers["block0_conv0_kernel"][0, 0, 0, 0] == np.float32(np.pi)

"""Bit-exact binary weight format, shared by checkpoints and transport.

Layout: magic `FSHD`, format version (u16 LE), then one record per layer:
name length (u32 LE), UTF-8 name bytes, rank (u32 LE), dims (u32 LE each),
values (f32 LE, row-major). Records run to the end of the payload.
"""

import struct

import numpy as np

from .spec import NetworkSpec
from .weights import ModelWeights, ShapeMismatchError

MAGIC = b"FSHD"
VERSION = 1


class WeightFormatError(ValueError):
    """Malformed or truncated weight payload; carries the byte offset."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte {offset})"
        super().__init__(message)
        self.offset = offset


def encode_weights(weights: ModelWeights) -> bytes:
    parts = [MAGIC, struct.pack("<H", VERSION)]
    for name, tensor in weights.layers.items():
        name_b = name.encode("utf-8")
        parts.append(struct.pack("<I", len(name_b)))
        parts.append(name_b)
        parts.append(struct.pack("<I", tensor.ndim))
        parts.append(struct.pack(f"<{tensor.ndim}I", *tensor.shape))
        parts.append(np.ascontiguousarray(tensor, dtype="<f4").tobytes())
    return b"".join(parts)


def decode_weights(blob: bytes, spec: NetworkSpec) -> ModelWeights:
    if len(blob) < 6:
        raise WeightFormatError("payload shorter than header", offset=0)
    if blob[:4] != MAGIC:
        raise WeightFormatError(f"bad magic {blob[:4]!r}", offset=0)
    (version,) = struct.unpack_from("<H", blob, 4)
    if version != VERSION:
        raise WeightFormatError(f"unsupported format version {version}", offset=4)

    layers = {}
    pos = 6
    end = len(blob)
    while pos < end:
        if pos + 4 > end:
            raise WeightFormatError("truncated record: name length", offset=pos)
        (name_len,) = struct.unpack_from("<I", blob, pos)
        pos += 4
        if pos + name_len > end:
            raise WeightFormatError("truncated record: name", offset=pos)
        name = blob[pos:pos + name_len].decode("utf-8")
        pos += name_len
        if pos + 4 > end:
            raise WeightFormatError("truncated record: rank", offset=pos)
        (rank,) = struct.unpack_from("<I", blob, pos)
        pos += 4
        if rank > 8:
            raise WeightFormatError(f"implausible rank {rank}", offset=pos - 4)
        if pos + 4 * rank > end:
            raise WeightFormatError("truncated record: dims", offset=pos)
        dims = struct.unpack_from(f"<{rank}I", blob, pos)
        pos += 4 * rank
        n_values = 1
        for d in dims:
            n_values *= d
        n_bytes = 4 * n_values
        if pos + n_bytes > end:
            raise WeightFormatError("truncated record: values", offset=pos)
        tensor = np.frombuffer(blob[pos:pos + n_bytes], dtype="<f4").reshape(dims)
        layers[name] = tensor.copy()
        pos += n_bytes

    try:
        return ModelWeights(spec, layers)
    except ShapeMismatchError as exc:
        raise WeightFormatError(f"payload does not match spec: {exc}") from exc


def save_weights(weights: ModelWeights, path):
    with open(path, "wb") as f:
        f.write(encode_weights(weights))


def load_weights(path, spec: NetworkSpec) -> ModelWeights:
    with open(path, "rb") as f:
        return decode_weights(f.read(), spec)

import json

import numpy as np
import pytest

from fedpatch import dataset as ds


def small_profile(site_id=1, seed=123, **kw):
    fields = dict(site_id=site_id, n_patients_train=3, n_patches_train=30,
                  n_patients_validation=2, n_patches_validation=10,
                  positive_rate_train=0.4, positive_rate_validation=0.3,
                  texture_shift=(0.05, -0.1, 0.0), blob_intensity=0.9,
                  seed=seed, patch_side=16)
    fields.update(kw)
    return ds.SiteProfile(**fields)


def test_generation_deterministic():
    p = small_profile()
    s1, s2 = ds.generate_site(p), ds.generate_site(p)
    assert np.array_equal(s1.train.pixels, s2.train.pixels)
    assert np.array_equal(s1.validation.pixels, s2.validation.pixels)
    assert np.array_equal(s1.train.labels, s2.train.labels)


def test_pixels_in_unit_range_and_labels_binary():
    shard = ds.generate_site(small_profile())
    for pset in (shard.train, shard.validation):
        assert pset.pixels.min() >= 0.0 and pset.pixels.max() <= 1.0
        assert set(np.unique(pset.labels)) <= {0, 1}


def test_zero_validation_rate_gives_all_negative():
    shard = ds.generate_site(small_profile(positive_rate_validation=0.0))
    assert np.all(shard.validation.labels == 0)


def test_patient_split_disjoint():
    shard = ds.generate_site(small_profile())
    assert not set(shard.train.patient_ids) & set(shard.validation.patient_ids)
    assert len(set(shard.train.patient_ids)) == 3
    assert len(set(shard.validation.patient_ids)) == 2


def test_patches_fewer_than_patients_rejected():
    with pytest.raises(ValueError, match="cannot cover"):
        ds.generate_site(small_profile(n_patches_train=2, n_patients_train=3))


def test_blob_count_matches_label():
    # label fidelity of the generator against the brute-force counter
    shard = ds.generate_site(small_profile(n_patches_train=120, patch_side=32))
    agree = sum((ds.count_blobs(shard.train.pixels[i]) >= 2)
                == bool(shard.train.labels[i])
                for i in range(len(shard.train)))
    assert agree / len(shard.train) >= 0.99


def test_default_eight_sites_table_ratios():
    profiles = ds.default_eight_sites(1.0, master_seed=0)
    assert len(profiles) == 8
    assert profiles[0].n_patients_train == 89
    assert profiles[0].n_patches_train == 10542
    assert profiles[2].n_patients_train == 3
    assert profiles[5].positive_rate_validation == 0.0
    assert profiles[7].n_patches_train == 39665
    # site 8 largest, site 6 smallest training set
    sizes = [p.n_patches_train for p in profiles]
    assert max(sizes) == sizes[7] and min(sizes) == sizes[5]


def test_default_sites_scaled_counts_floor_at_one_patient():
    profiles = ds.default_eight_sites(0.05, master_seed=1)
    for p in profiles:
        assert p.n_patients_train >= 1
        assert p.n_patches_train >= p.n_patients_train
    shifts = {p.texture_shift for p in profiles}
    assert len(shifts) == 8


def test_scale_out_of_range():
    with pytest.raises(ValueError):
        ds.default_eight_sites(0.0, 1)
    with pytest.raises(ValueError):
        ds.default_eight_sites(1.5, 1)


def test_pool_shards_concatenates_in_site_order():
    shards = [ds.generate_site(small_profile(site_id=i, seed=i)) for i in (2, 1)]
    train, val = ds.pool_shards(shards)
    assert len(train) == sum(len(s.train) for s in shards)
    assert list(np.unique(train.site_ids)) == [1, 2]
    assert np.all(np.diff(train.site_ids) >= 0)
    # single shard pools to itself
    t1, v1 = ds.pool_shards([shards[0]])
    assert np.array_equal(t1.pixels, shards[0].train.pixels)
    # patient disjointness survives pooling
    assert not set(train.patient_ids) & set(val.patient_ids)


class TestManifest:
    def test_round_trip(self, tmp_path):
        shard = ds.generate_site(small_profile())
        ds.write_manifest(shard, tmp_path / "site1")
        loaded = ds.read_manifest(tmp_path / "site1")
        assert np.array_equal(loaded.train.pixels, shard.train.pixels)
        assert np.array_equal(loaded.validation.pixels, shard.validation.pixels)
        assert np.array_equal(loaded.train.labels, shard.train.labels)
        assert loaded.train.patient_ids == shard.train.patient_ids
        assert loaded.profile == shard.profile

    def test_rerun_byte_identical(self, tmp_path):
        shard = ds.generate_site(small_profile())
        ds.write_manifest(shard, tmp_path / "a")
        ds.write_manifest(shard, tmp_path / "b")
        for name in ("index.json", "train.fsht", "validation.fsht"):
            assert (tmp_path / "a" / name).read_bytes() == \
                   (tmp_path / "b" / name).read_bytes()

    def test_truncated_tensor_is_parse_error(self, tmp_path):
        shard = ds.generate_site(small_profile())
        ds.write_manifest(shard, tmp_path / "s")
        tensor = tmp_path / "s" / "train.fsht"
        tensor.write_bytes(tensor.read_bytes()[:50])
        with pytest.raises(ds.ManifestError, match="byte"):
            ds.read_manifest(tmp_path / "s")

    def test_bad_json_is_parse_error(self, tmp_path):
        shard = ds.generate_site(small_profile())
        ds.write_manifest(shard, tmp_path / "s")
        (tmp_path / "s" / "index.json").write_text("{not json")
        with pytest.raises(ds.ManifestError, match="JSON"):
            ds.read_manifest(tmp_path / "s")

    def test_version_mismatch_rejected(self, tmp_path):
        shard = ds.generate_site(small_profile())
        ds.write_manifest(shard, tmp_path / "s")
        index = json.loads((tmp_path / "s" / "index.json").read_text())
        index["format_version"] = 999
        (tmp_path / "s" / "index.json").write_text(json.dumps(index))
        with pytest.raises(ds.ManifestError, match="version"):
            ds.read_manifest(tmp_path / "s")

    def test_empty_train_rejected_on_read(self, tmp_path):
        shard = ds.generate_site(small_profile())
        ds.write_manifest(shard, tmp_path / "s")
        index = json.loads((tmp_path / "s" / "index.json").read_text())
        for split in index["splits"]:
            if split["name"] == "train":
                split["labels"] = []
                split["patient_ids"] = []
                split["shape"][0] = 0
        (tmp_path / "s" / "index.json").write_text(json.dumps(index))
        ds.write_tensor(tmp_path / "s" / "train.fsht",
                        np.zeros((0, 16, 16, 3), dtype=np.float32))
        with pytest.raises(ds.ManifestError, match="empty"):
            ds.read_manifest(tmp_path / "s")

    def test_missing_manifest(self, tmp_path):
        with pytest.raises(ds.ManifestError, match="no such"):
            ds.read_manifest(tmp_path / "nowhere")

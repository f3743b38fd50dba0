import numpy as np
import pytest

from fedpatch.cli import main
from fedpatch.config import ExperimentConfig, load_config, parse_blocks

TINY_CONFIG = """\
[network]
input_side = 16
conv_blocks = 4x1,8x1

[dataset]
scale = 0.001
master_seed = 3

[federation]
rounds = 2
batch_size = 8
"""


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """One gen-data run shared by the pipeline tests."""
    root = tmp_path_factory.mktemp("cli")
    cfg = root / "tiny.ini"
    cfg.write_text(TINY_CONFIG)
    out = root / "out"
    assert main(["--config", str(cfg), "--out", str(out), "gen-data"]) == 0
    return cfg, out


class TestConfig:
    def test_defaults(self):
        cfg = load_config(None)
        assert cfg == ExperimentConfig()

    def test_parse_blocks(self):
        assert parse_blocks("8x1,16x1,32x1") == ((8, 1), (16, 1), (32, 1))
        assert parse_blocks("4") == ((4, 1),)
        with pytest.raises(ValueError):
            parse_blocks("")

    def test_file_and_overrides(self, tmp_path):
        path = tmp_path / "c.ini"
        path.write_text(TINY_CONFIG)
        cfg = load_config(path)
        assert cfg.input_side == 16
        assert cfg.conv_blocks == ((4, 1), (8, 1))
        assert cfg.rounds == 2
        cfg2 = load_config(path, {"rounds": 9, "scale": None})
        assert cfg2.rounds == 9
        assert cfg2.scale == 0.001  # None override is a no-op

    def test_missing_file_rejected(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_config(tmp_path / "absent.ini")

    def test_inconsistent_side_rejected(self, tmp_path):
        path = tmp_path / "c.ini"
        path.write_text("[network]\ninput_side = 10\nconv_blocks = 4x1,8x1\n")
        with pytest.raises(Exception):
            load_config(path)


class TestPipeline:
    def test_gen_data_layout(self, workspace):
        _, out = workspace
        for k in range(1, 9):
            site = out / "sites" / f"site{k}"
            assert (site / "index.json").exists()
            assert (site / "train.fsht").exists()
            assert (site / "validation.fsht").exists()
        assert (out / "slide" / "slide.json").exists()
        assert (out / "slide" / "pixels.fsht").exists()

    def test_train_all_modes_and_evaluate(self, workspace, capsys):
        cfg, out = workspace
        base = ["--config", str(cfg), "--out", str(out)]
        assert main(base + ["train", "--mode", "federated"]) == 0
        assert main(base + ["train", "--mode", "centralized"]) == 0
        assert main(base + ["train", "--mode", "site-specific"]) == 0
        ckpts = out / "checkpoints"
        assert (ckpts / "consensus.fshd").exists()
        assert (ckpts / "centralized.fshd").exists()
        for k in range(1, 9):
            assert (ckpts / f"site{k}.fshd").exists()
        assert (out / "history_federated.csv").exists()
        assert (out / "history_centralized.csv").exists()

        assert main(base + ["evaluate"]) == 0
        shown = capsys.readouterr().out
        assert "Model\\Data" in shown
        assert (out / "matrix.csv").exists()
        lines = (out / "matrix.csv").read_text().strip().splitlines()
        assert lines[0] == ("model,Site1,Site2,Site3,Site4,Site5,Site6,"
                            "Site7,Site8,Average")
        assert len(lines) == 1 + 8 + 2  # 8 site models + consensus + centralized

    def test_heatmap_command(self, workspace):
        cfg, out = workspace
        base = ["--config", str(cfg), "--out", str(out)]
        if not (out / "checkpoints" / "consensus.fshd").exists():
            assert main(base + ["train", "--mode", "federated"]) == 0
        assert main(base + ["heatmap", "--checkpoint",
                            str(out / "checkpoints" / "consensus.fshd")]) == 0
        assert (out / "heatmap.csv").exists()
        grid = np.loadtxt(out / "heatmap.csv", delimiter=",")
        assert grid.shape == (12, 16)
        assert (out / "heatmap.ppm").read_bytes().startswith(b"P6\n")

    def test_gen_data_deterministic(self, workspace, tmp_path):
        cfg, out = workspace
        again = tmp_path / "again"
        assert main(["--config", str(cfg), "--out", str(again), "gen-data"]) == 0
        for k in (1, 6):
            for name in ("index.json", "train.fsht", "validation.fsht"):
                assert (again / "sites" / f"site{k}" / name).read_bytes() == \
                       (out / "sites" / f"site{k}" / name).read_bytes()


class TestErrorPaths:
    def test_train_without_data(self, tmp_path, capsys):
        rc = main(["--out", str(tmp_path / "empty"), "train",
                   "--mode", "federated"])
        assert rc == 1
        assert "error:" in capsys.readouterr().err

    def test_evaluate_without_checkpoints(self, workspace, tmp_path, capsys):
        cfg, out = workspace
        rc = main(["--config", str(cfg), "--out", str(tmp_path / "o"),
                   "evaluate", "--data", str(out),
                   "--checkpoints", str(tmp_path / "none")])
        assert rc == 1
        assert "no checkpoints" in capsys.readouterr().err

    def test_heatmap_wrong_spec_checkpoint(self, workspace, tmp_path, capsys):
        # a checkpoint trained under a different layout must be rejected
        cfg, out = workspace
        ckpt = out / "checkpoints" / "consensus.fshd"
        if not ckpt.exists():
            main(["--config", str(cfg), "--out", str(out),
                  "train", "--mode", "federated"])
        rc = main(["--out", str(tmp_path / "o"), "heatmap",
                   "--checkpoint", str(ckpt),
                   "--slide", str(out / "slide")])
        assert rc == 1
        assert "error:" in capsys.readouterr().err

    def test_unknown_mode_rejected(self, capsys):
        with pytest.raises(SystemExit):
            main(["train", "--mode", "bogus"])

    def test_missing_config_file(self, tmp_path, capsys):
        rc = main(["--config", str(tmp_path / "nope.ini"),
                   "--out", str(tmp_path / "o"), "gen-data"])
        assert rc == 1
        assert "not found" in capsys.readouterr().err

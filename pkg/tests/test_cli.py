"""
Integration tests for the command-line interface
"""
import pandas as pd
import pytest

from app.main import build_config, build_parser, main

TINY = ["--seed", "7", "--scale", "1/676"]


def run(capsys, *argv):
    status = main(list(argv))
    captured = capsys.readouterr()
    return status, captured.out, captured.err


@pytest.fixture
def generated(tmp_path, capsys):
    """Output directory holding a freshly generated tiny corpus"""
    out = str(tmp_path / "run")
    status, stdout, _ = run(capsys, "generate", "--out", out, *TINY)
    assert status == 0
    assert "52 images" in stdout
    return out


@pytest.mark.integration
class TestCli:
    """Test suite for the cspi subcommands"""

    def test_stage_by_stage_pipeline(self, generated, capsys):
        """Test: generate, compress, train and evaluate chain through one directory"""
        assert run(capsys, "compress", "--out", generated, "--m", "20,10", *TINY)[0] == 0
        status, _, err = run(capsys, "train", "--out", generated, "--m", "20,10",
                             "--classifiers", "ld,lr", "--folds", "3", *TINY)
        assert status == 0, err
        status, stdout, _ = run(capsys, "evaluate", "--out", generated, "--m", "20,10",
                                "--classifiers", "ld,lr", *TINY)
        assert status == 0
        assert "ratio_pct" in stdout
        table = pd.read_csv(f"{generated}/results/accuracy_table.csv")
        assert table["M"].tolist() == [20, 10]
        assert table[["ld", "lr"]].notna().all().all()

    def test_train_before_compress_fails_with_stage(self, generated, capsys):
        """Test: A missing archive exits 1 naming the stage"""
        status, _, err = run(capsys, "train", "--out", generated, "--m", "10", *TINY)
        assert status == 1
        assert err.startswith("stage train failed:")

    def test_m_not_below_n_fails(self, generated, capsys):
        """Test: M >= N is rejected before any work is done"""
        status, _, err = run(capsys, "compress", "--out", generated, "--m", "9000", *TINY)
        assert status == 1
        assert "m_list" in err

    def test_discarded_key_blocks_audit(self, generated, capsys):
        """Test: Archives written with --discard-key cannot be attacked"""
        assert run(capsys, "compress", "--out", generated, "--m", "10", "--discard-key", *TINY)[0] == 0
        image_id = pd.read_csv(f"{generated}/dataset/manifest.csv")["image_id"][0]
        status, _, err = run(capsys, "audit", "--out", generated, "--m", "10", "--ids", image_id,
                             "--from-archives", *TINY)
        assert status == 1
        assert "stage audit failed" in err

    def test_unknown_config_key(self, tmp_path, capsys):
        """Test: run-all refuses a config file with an unknown key"""
        config = tmp_path / "bad.env"
        config.write_text("SHARPNESS=3\n")
        status, _, err = run(capsys, "run-all", "--out", str(tmp_path / "x"), "--config", str(config))
        assert status == 1
        assert "sharpness" in err


class TestBuildConfig:
    """Test suite for option precedence"""

    def test_cli_overrides_file(self, tmp_path):
        """Test: Command-line values win over the config file"""
        config = tmp_path / "exp.env"
        config.write_text("GLOBAL_SEED=1\nFOLDS=4\n")
        args = build_parser().parse_args(["run-all", "--config", str(config), "--seed", "9", "--out", "o"])
        cfg = build_config(args)
        assert cfg.global_seed == 9
        assert cfg.folds == 4

    def test_environment_feeds_defaults(self, monkeypatch):
        """Test: CSPI_* settings supply values neither file nor CLI set"""
        monkeypatch.setenv("CSPI_UNREADABLE_PSNR", "14")
        cfg = build_config(build_parser().parse_args(["audit", "--out", "o"]))
        assert cfg.unreadable_psnr == 14.0

    def test_full_flag(self):
        """Test: --full selects the complete corpus"""
        cfg = build_config(build_parser().parse_args(["generate", "--full"]))
        assert cfg.split_sizes() == (15000, 2576)

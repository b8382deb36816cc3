import os

import numpy as np
import pytest

from camadapt import cli, ppm
from camadapt import distortion as dist


def run(argv, capsys):
    code = cli.main(argv)
    captured = capsys.readouterr()
    return code, captured.out, captured.err


class TestAnalyze:
    def test_builtin_table(self, capsys):
        code, out, _ = run(["analyze", "--builtin", "sd"], capsys)
        assert code == 0
        assert "34" in out and "663361" in out

    def test_check_table1_passes_on_builtins(self, capsys):
        code, _, _ = run(["analyze", "--builtin", "bd", "sd", "esd",
                          "--check-table1"], capsys)
        assert code == 0

    def test_check_table1_fails_when_missing(self, capsys):
        code, _, err = run(["analyze", "--builtin", "sd", "--check-table1"],
                           capsys)
        assert code != 0

    def test_spec_file(self, tmp_path, capsys):
        spec = tmp_path / "net.spec"
        spec.write_text("name custom\nconv c=8 k=5 s=2 pad=1\n")
        code, out, _ = run(["analyze", "--spec-file", str(spec)], capsys)
        assert code == 0
        assert "custom" in out

    def test_malformed_spec_reports_line(self, tmp_path, capsys):
        spec = tmp_path / "bad.spec"
        spec.write_text("conv c=8 k=3 s=1 pad=1\nconv c=oops\n")
        code, _, err = run(["analyze", "--spec-file", str(spec)], capsys)
        assert code != 0
        assert "line 2" in err

    def test_no_specs_is_error(self, capsys):
        code, _, err = run(["analyze"], capsys)
        assert code != 0


class TestDistort:
    @pytest.fixture
    def sample_ppm(self, tmp_path):
        img = dist.synthetic_corpus(1, size=32, seed=0)[0]
        path = tmp_path / "in.ppm"
        ppm.write_ppm(str(path), img)
        return path

    def test_model_f_manifest_triple(self, tmp_path, sample_ppm, capsys):
        out = tmp_path / "out" / "f.ppm"
        out.parent.mkdir()
        code, _, _ = run(["distort", "--model", "F", "--seed", "1",
                          str(sample_ppm), str(out)], capsys)
        assert code == 0
        resolved = (out.parent / "config.resolved.txt").read_text()
        assert "sigma_blur = 3" in resolved
        assert "sigma_noise = 10" in resolved
        assert "compression_level = 18" in resolved

    def test_deterministic_outputs(self, tmp_path, sample_ppm, capsys):
        outs = []
        for name in ("a.ppm", "b.ppm"):
            out = tmp_path / name
            code, _, _ = run(["distort", "--noise", "10", "--seed", "7",
                              str(sample_ppm), str(out)], capsys)
            assert code == 0
            outs.append(out.read_bytes())
        assert outs[0] == outs[1]

    def test_exactly_one_mode(self, tmp_path, sample_ppm, capsys):
        code, _, err = run(["distort", "--blur", "1", "--jpeg", "50",
                            str(sample_ppm), str(tmp_path / "x.ppm")], capsys)
        assert code != 0

    def test_unknown_model(self, tmp_path, sample_ppm, capsys):
        code, _, err = run(["distort", "--model", "Z",
                            str(sample_ppm), str(tmp_path / "x.ppm")], capsys)
        assert code != 0


class TestConfigFiles:
    def test_unknown_key_rejected(self, tmp_path, capsys):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("variant = sd\nwarp-speed = 9\n")
        code, _, err = run(["train-i2i", "--config", str(cfg),
                            "--out", str(tmp_path / "o")], capsys)
        assert code != 0
        assert "warp-speed" in err

    def test_flags_override_file(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("crop = 64\nseed = 1\n")
        settings = cli.load_config_file(str(cfg), {"crop", "seed"})
        assert settings == {"crop": "64", "seed": "1"}


class TestTrainAdaptPipeline:
    def test_smoke(self, tmp_path, capsys):
        xdir, ydir = tmp_path / "x", tmp_path / "y"
        xdir.mkdir(), ydir.mkdir()
        rng = np.random.default_rng(0)
        for i in range(3):
            ppm.write_ppm(str(xdir / f"{i}.ppm"),
                          rng.integers(0, 256, (20, 20, 3), dtype=np.uint8))
            ppm.write_ppm(str(ydir / f"{i}.ppm"),
                          rng.integers(0, 256, (20, 20, 3), dtype=np.uint8))
        out = tmp_path / "run"
        code, _, err = run(["train-i2i", "--variant", "esd",
                            "--domain-x", str(xdir), "--domain-y", str(ydir),
                            "--crop", "16", "--epochs-const", "1",
                            "--epochs-decay", "0", "--lambda-i", "0",
                            "--checkpoint-every", "1",
                            "--seed", "0", "--out", str(out)], capsys)
        assert code == 0, err
        assert (out / "losses.csv").exists()
        assert (out / "loss_curves.png").exists()
        assert (out / "manifest.txt").exists()

        adapted = tmp_path / "adapted"
        code, _, err = run(["adapt", "--checkpoint", str(out / "checkpoint"),
                            str(xdir), "--out", str(adapted)], capsys)
        assert code == 0, err
        assert sorted(os.listdir(adapted)).count("0.ppm") == 1
        img = ppm.read_ppm(str(adapted / "0.ppm"))
        assert img.shape == (20, 20, 3)


class TestEvaluateCommand:
    def test_smoke(self, tmp_path, capsys):
        out = tmp_path / "eval"
        code, _, err = run(["evaluate", "--distortion", "none",
                            "--scenarios", "baseline",
                            "--seeds", "0", "--n-per-class-train", "3",
                            "--n-per-class-test", "2",
                            "--pretrain-steps", "10",
                            "--out", str(out)], capsys)
        assert code == 0, err
        lines = (out / "results.csv").read_text().splitlines()
        assert lines[0] == "scenario,distortion,seed,accuracy"
        assert lines[1].startswith("baseline,none,0,")
        assert (out / "results.png").exists()

from pathlib import Path

import numpy as np
import pytest

from ufogen import cli, data_eval as de, trainer

TINY_CONFIG = """
trainer.objective = ufogen
trainer.schedule_steps = 8
trainer.step_size = 2
trainer.total_steps = 12
trainer.batch_size = 8
trainer.warmup_steps = 4
trainer.metrics_every = 4
trainer.seed = 5
model.g_width = 6
model.g_depth = 2
model.d_width = 5
model.d_depth = 2
model.time_dim = 8
model.fourier_bands = 1
data.kind = grid25
data.sigma_mode = 0.05
"""


@pytest.fixture()
def config_file(tmp_path):
    path = tmp_path / "toy.cfg"
    path.write_text(TINY_CONFIG, encoding="utf-8")
    return path


@pytest.fixture()
def trained_dir(tmp_path, config_file):
    out = tmp_path / "run"
    assert cli.main(["train", str(config_file), "--out", str(out), "--quiet"]) == 0
    return out


class TestTrain:
    def test_outputs(self, trained_dir):
        assert (trained_dir / "config.txt").exists()
        assert (trained_dir / "step_12.ufog").exists()
        metrics = (trained_dir / "metrics.csv").read_text().splitlines()
        assert metrics[0] == cli.METRICS_HEADER
        assert [int(line.split(",")[0]) for line in metrics[1:]] == [4, 8, 12]

    def test_rerun_byte_identical(self, tmp_path, config_file, trained_dir):
        other = tmp_path / "run2"
        assert cli.main(["train", str(config_file), "--out", str(other), "--quiet"]) == 0
        for name in ("metrics.csv", "config.txt", "step_12.ufog"):
            assert (other / name).read_bytes() == (trained_dir / name).read_bytes()

    def test_unknown_key_exit_2(self, tmp_path, capsys):
        bad = tmp_path / "bad.cfg"
        bad.write_text(TINY_CONFIG + "trainer.step_sizee = 4\n", encoding="utf-8")
        assert cli.main(["train", str(bad), "--out", str(tmp_path / "x")]) == 2
        assert "step_sizee" in capsys.readouterr().err

    def test_env_seed_override(self, tmp_path, config_file, monkeypatch):
        monkeypatch.setenv("UFOGEN_SEED", "99")
        out = tmp_path / "seeded"
        assert cli.main(["train", str(config_file), "--out", str(out), "--quiet"]) == 0
        assert "trainer.seed = 99" in (out / "config.txt").read_text()

    def test_divergence_exit_3(self, tmp_path, config_file, monkeypatch):
        def explode(cfg, data, state=None, on_metrics=None):
            raise trainer.DivergenceError("boom", step=7)
        monkeypatch.setattr(cli.trainer, "run", explode)
        assert cli.main(["train", str(config_file), "--out", str(tmp_path / "d")]) == 3


class TestSample:
    def test_one_step_default(self, tmp_path, trained_dir):
        out = tmp_path / "samples.tsv"
        rc = cli.main(["sample", str(trained_dir / "step_12.ufog"),
                       "--n", "64", "--out", str(out)])
        assert rc == 0
        pts, meta = de.load_samples(out)
        assert pts.shape == (64, 2)
        assert meta["kind"] == "model"

    def test_multi_step_and_determinism(self, tmp_path, trained_dir):
        ckpt = str(trained_dir / "step_12.ufog")
        a, b = tmp_path / "a.tsv", tmp_path / "b.tsv"
        for out in (a, b):
            rc = cli.main(["sample", ckpt, "--n", "32", "--steps", "4",
                           "--seed", "3", "--out", str(out)])
            assert rc == 0
        assert a.read_bytes() == b.read_bytes()

    def test_no_ema_differs(self, tmp_path, trained_dir):
        ckpt = str(trained_dir / "step_12.ufog")
        a, b = tmp_path / "ema.tsv", tmp_path / "raw.tsv"
        cli.main(["sample", ckpt, "--n", "32", "--out", str(a)])
        cli.main(["sample", ckpt, "--n", "32", "--no-ema", "--out", str(b)])
        assert a.read_bytes() != b.read_bytes()

    def test_missing_checkpoint_exit_4(self, tmp_path):
        rc = cli.main(["sample", str(tmp_path / "nope.ufog"),
                       "--out", str(tmp_path / "s.tsv")])
        assert rc == 4


class TestEval:
    def test_report(self, tmp_path):
        pts = de.make_toy(de.ToySpec(), 2000, seed=1)
        samples = tmp_path / "true.tsv"
        de.save_samples(samples, pts, kind="grid25", seed=1)
        out = tmp_path / "report.csv"
        assert cli.main(["eval", str(samples), "--out", str(out)]) == 0
        header, row = out.read_text().splitlines()
        assert header == "modes_covered,high_quality_fraction,mmd,sample_count"
        fields = row.split(",")
        assert fields[0] == "25"
        assert float(fields[1]) > 0.98

    def test_bad_kind_exit_2(self, tmp_path):
        pts = de.make_toy(de.ToySpec(), 100, seed=2)
        samples = tmp_path / "s.tsv"
        de.save_samples(samples, pts, kind="grid25", seed=2)
        rc = cli.main(["eval", str(samples), "--kind", "blobs",
                       "--out", str(tmp_path / "r.csv")])
        assert rc == 2

    def test_missing_file_exit_4(self, tmp_path):
        assert cli.main(["eval", str(tmp_path / "missing.tsv"),
                         "--out", str(tmp_path / "r.csv")]) == 4


class TestPlot:
    def test_single_panel(self, tmp_path):
        pts = de.make_toy(de.ToySpec(), 500, seed=3)
        samples = tmp_path / "s.tsv"
        de.save_samples(samples, pts, kind="grid25", seed=3)
        out = tmp_path / "fig.svg"
        assert cli.main(["plot", str(samples), "--out", str(out)]) == 0
        body = out.read_text()
        assert body.startswith("<svg")
        assert body.count("<circle") > 500  # dots plus 25 rings

    def test_side_by_side_panels(self, tmp_path):
        a = tmp_path / "a.tsv"
        b = tmp_path / "b.tsv"
        de.save_samples(a, de.make_toy(de.ToySpec(), 100, 4), "grid25", 4)
        de.save_samples(b, de.make_toy(de.ToySpec(), 100, 5), "grid25", 5)
        out = tmp_path / "pair.svg"
        rc = cli.main(["plot", "--panel", str(a), "left run",
                       "--panel", str(b), "right run", "--out", str(out)])
        assert rc == 0
        body = out.read_text()
        assert "left run" in body and "right run" in body

    def test_rerun_byte_identical(self, tmp_path):
        samples = tmp_path / "s.tsv"
        de.save_samples(samples, de.make_toy(de.ToySpec(), 200, 6), "grid25", 6)
        one, two = tmp_path / "1.svg", tmp_path / "2.svg"
        cli.main(["plot", str(samples), "--out", str(one)])
        cli.main(["plot", str(samples), "--out", str(two)])
        assert one.read_bytes() == two.read_bytes()

    def test_nothing_to_plot_exit_2(self, tmp_path):
        assert cli.main(["plot", "--out", str(tmp_path / "x.svg")]) == 2


class TestShippedConfig:
    def test_toy_config_matches_defaults(self):
        path = Path(__file__).resolve().parent.parent / "configs" / "toy.cfg"
        cfg, spec, _ = cli._load_config(path)
        assert cfg == trainer.TrainConfig()
        assert spec == de.ToySpec()


class TestAblate:
    def test_sweep_rows(self, tmp_path, config_file):
        out = tmp_path / "ablate"
        assert cli.main(["ablate", str(config_file), "--out", str(out), "--n", "200"]) == 0
        lines = (out / "ablate.csv").read_text().splitlines()
        assert lines[0] == "step_size,modes_covered,high_quality_fraction,mmd,sample_count"
        assert [int(line.split(",")[0]) for line in lines[1:]] == [1, 2, 4, 8]
        for s in (1, 2, 4, 8):
            assert (out / f"samples_S{s}.tsv").exists()

import numpy as np
import pytest

from ufogen import data_eval, trainer
from ufogen.autodiff import Tensor
from ufogen.config import ConfigError
from ufogen.objectives import ObjectiveKind


def tiny_cfg(**kw):
    defaults = dict(
        objective=ObjectiveKind.UFOGEN, schedule_steps=8, step_size=2,
        beta_min=0.08, beta_max=0.75, batch_size=8, total_steps=30,
        warmup_steps=10, metrics_every=5, g_width=6, g_depth=2, d_width=5,
        d_depth=2, time_dim=8, fourier_bands=1, seed=3,
    )
    defaults.update(kw)
    return trainer.TrainConfig(**defaults)


class TestConfig:
    def test_paper_optimizer_defaults(self):
        # generator momentum on, discriminator momentum off
        cfg = trainer.TrainConfig()
        assert cfg.adam_beta1_g == 0.9 and cfg.adam_beta2_g == 0.999
        assert cfg.adam_beta1_d == 0.0 and cfg.adam_beta2_d == 0.999
        assert cfg.lambda_kl == 1.0
        assert cfg.grad_clip_g == 1.0
        assert cfg.ema_decay == 0.999
        assert cfg.warmup_steps == 1000

    def test_validation(self):
        with pytest.raises(ConfigError):
            tiny_cfg(step_size=9).validate()
        with pytest.raises(ConfigError):
            tiny_cfg(lambda_kl=-0.1).validate()
        with pytest.raises(ConfigError):
            tiny_cfg(ema_decay=1.0).validate()
        with pytest.raises(ConfigError):
            tiny_cfg(lr_peak=0.0).validate()
        with pytest.raises(ConfigError):
            tiny_cfg(gamma_mode="sometimes").validate()

    def test_flat_round_trip(self):
        cfg = tiny_cfg(lambda_kl=0.25, objective=ObjectiveKind.SIDDM)
        again = trainer.config_from_flat(trainer.config_to_flat(cfg))
        assert again == cfg

    def test_unknown_objective(self):
        flat = trainer.config_to_flat(tiny_cfg())
        flat["trainer.objective"] = "wgan"
        with pytest.raises(ConfigError):
            trainer.config_from_flat(flat)


class TestSampleTime:
    def test_coarse_rule(self):
        cfg = trainer.TrainConfig(schedule_steps=1000, step_size=250)
        rng = np.random.default_rng(0)
        seen_zero = False
        for _ in range(500):
            t, t_prev = trainer.sample_time(cfg, rng)
            assert 1 <= t <= 1000
            assert t_prev == max(0, t - 250)
            seen_zero = seen_zero or t_prev == 0
        assert seen_zero

    def test_full_gap_always_reaches_clean(self):
        cfg = tiny_cfg(step_size=8)
        rng = np.random.default_rng(1)
        assert all(trainer.sample_time(cfg, rng)[1] == 0 for _ in range(100))

    def test_specific_subtraction(self):
        cfg = trainer.TrainConfig(schedule_steps=1000, step_size=250)
        rng = np.random.default_rng(2)
        for _ in range(2000):
            t, t_prev = trainer.sample_time(cfg, rng)
            if t == 1000:
                assert t_prev == 750
                break

    def test_uniform_prev_rule(self):
        cfg = tiny_cfg(time_sampling="uniform_prev")
        rng = np.random.default_rng(3)
        for _ in range(200):
            t, t_prev = trainer.sample_time(cfg, rng)
            assert 0 <= t_prev <= 7
            assert t == min(t_prev + cfg.step_size, 8)


class TestWarmup:
    def test_ramp(self):
        cfg = trainer.TrainConfig(lr_peak=2e-3, warmup_steps=1000)
        assert trainer.warmup_lr(0, cfg) == 0.0
        assert trainer.warmup_lr(500, cfg) == pytest.approx(1e-3)
        assert trainer.warmup_lr(1000, cfg) == pytest.approx(2e-3)
        assert trainer.warmup_lr(5000, cfg) == pytest.approx(2e-3)

    def test_negative_step_rejected(self):
        with pytest.raises(ValueError):
            trainer.warmup_lr(-1, trainer.TrainConfig())


class TestClip:
    def test_global_norm_capped(self):
        params = {"a": Tensor(np.zeros(3), requires_grad=True),
                  "b": Tensor(np.zeros(2), requires_grad=True)}
        params["a"].grad = np.array([3.0, 0.0, 0.0])
        params["b"].grad = np.array([0.0, 4.0])
        trainer._clip_global_norm(params, 1.0)
        total = sum(float(np.sum(p.grad ** 2)) for p in params.values())
        assert np.sqrt(total) <= 1.0 + 1e-12
        np.testing.assert_allclose(params["a"].grad, [0.6, 0.0, 0.0])

    def test_below_threshold_untouched(self):
        params = {"a": Tensor(np.zeros(2), requires_grad=True)}
        params["a"].grad = np.array([0.1, 0.2])
        trainer._clip_global_norm(params, 1.0)
        np.testing.assert_array_equal(params["a"].grad, [0.1, 0.2])


class TestTrainStep:
    def test_deterministic_traces(self):
        spec = data_eval.ToySpec()
        rows_a, rows_b = [], []
        trainer.run(tiny_cfg(metrics_every=1), spec, on_metrics=rows_a.append)
        trainer.run(tiny_cfg(metrics_every=1), spec, on_metrics=rows_b.append)
        assert rows_a == rows_b

    def test_all_objectives_run_and_stay_finite(self):
        spec = data_eval.ToySpec()
        for kind in ObjectiveKind:
            state = trainer.run(tiny_cfg(objective=kind, total_steps=12), spec)
            assert state.step == 12
            assert trainer._params_finite(state.models.params)
            assert state.opt_g.finite() and state.opt_d.finite()

    def test_empty_batch_rejected(self):
        cfg = tiny_cfg()
        state = trainer.init_state(cfg)
        with pytest.raises(ValueError):
            trainer.train_step(state, cfg, np.zeros((0, 2)))

    def test_divergence_raises_with_step(self):
        # extreme data overflows the squared reconstruction term to infinity
        cfg = tiny_cfg(total_steps=5)
        with pytest.raises(trainer.DivergenceError) as exc_info:
            trainer.run(cfg, lambda rng, n: np.full((n, 2), 1e200))
        assert exc_info.value.step == 1

    def test_loss_breakdown_composition(self):
        cfg = tiny_cfg(lambda_kl=0.5)
        state = trainer.init_state(cfg)
        batch = data_eval.make_toy(data_eval.ToySpec(), 8, seed=0)
        out = trainer.train_step(state, cfg, batch)
        assert out.finite()
        assert out.g_total == pytest.approx(out.g_adv + 0.5 * out.g_recon, rel=1e-12)

    def test_array_and_callable_datasets(self):
        arr = data_eval.make_toy(data_eval.ToySpec(), 64, seed=1)
        state = trainer.run(tiny_cfg(total_steps=5), arr)
        assert state.step == 5
        state = trainer.run(tiny_cfg(total_steps=5),
                            lambda rng, n: rng.standard_normal((n, 2)))
        assert state.step == 5

    def test_metrics_cadence(self):
        rows = []
        trainer.run(tiny_cfg(total_steps=12, metrics_every=5), data_eval.ToySpec(),
                    on_metrics=rows.append)
        assert [r.step for r in rows] == [5, 10, 12]
        assert all(r.objective == "ufogen" for r in rows)


class TestCheckpoint:
    def test_round_trip_byte_exact(self, tmp_path):
        spec = data_eval.ToySpec()
        state = trainer.run(tiny_cfg(total_steps=7), spec)
        p1 = tmp_path / "a.ufog"
        p2 = tmp_path / "b.ufog"
        trainer.save_checkpoint(state, p1)
        loaded = trainer.load_checkpoint(p1)
        trainer.save_checkpoint(loaded, p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_restores_everything(self, tmp_path):
        state = trainer.run(tiny_cfg(total_steps=6), data_eval.ToySpec())
        path = tmp_path / "s.ufog"
        trainer.save_checkpoint(state, path)
        loaded = trainer.load_checkpoint(path)
        assert loaded.step == state.step
        assert loaded.cfg == state.cfg
        for k in state.models.params:
            np.testing.assert_array_equal(loaded.models.params[k].data,
                                          state.models.params[k].data)
        for k in state.models.ema:
            np.testing.assert_array_equal(loaded.models.ema[k], state.models.ema[k])
        assert loaded.opt_g.t == state.opt_g.t
        np.testing.assert_array_equal(loaded.opt_g.m["g.in.x"], state.opt_g.m["g.in.x"])
        assert loaded.rng.bit_generator.state == state.rng.bit_generator.state

    def test_corrupted_byte_detected(self, tmp_path):
        state = trainer.run(tiny_cfg(total_steps=3), data_eval.ToySpec())
        path = tmp_path / "c.ufog"
        trainer.save_checkpoint(state, path)
        raw = bytearray(path.read_bytes())
        raw[5] ^= 0xFF  # inside the version header
        path.write_bytes(bytes(raw))
        with pytest.raises(trainer.CheckpointError):
            trainer.load_checkpoint(path)

    def test_truncation_detected(self, tmp_path):
        state = trainer.run(tiny_cfg(total_steps=3), data_eval.ToySpec())
        path = tmp_path / "t.ufog"
        trainer.save_checkpoint(state, path)
        path.write_bytes(path.read_bytes()[:-9])
        with pytest.raises(trainer.CheckpointError):
            trainer.load_checkpoint(path)

    def test_garbage_rejected(self, tmp_path):
        path = tmp_path / "g.ufog"
        path.write_bytes(b"not a checkpoint at all")
        with pytest.raises(trainer.CheckpointError):
            trainer.load_checkpoint(path)

    def test_resume_matches_uninterrupted(self, tmp_path):
        spec = data_eval.ToySpec()
        rows_full = []
        trainer.run(tiny_cfg(total_steps=20, metrics_every=1), spec,
                    on_metrics=rows_full.append)

        cfg_half = tiny_cfg(total_steps=10, metrics_every=1)
        state = trainer.run(cfg_half, spec)
        path = tmp_path / "half.ufog"
        trainer.save_checkpoint(state, path)
        resumed = trainer.load_checkpoint(path)
        rows_tail = []
        trainer.run(tiny_cfg(total_steps=20, metrics_every=1), spec,
                    state=resumed, on_metrics=rows_tail.append)
        assert rows_tail == rows_full[10:]

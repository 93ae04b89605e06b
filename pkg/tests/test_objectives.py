import math

import numpy as np
import pytest

from ufogen import autodiff as ad
from ufogen import networks as nets
from ufogen import objectives as obj
from ufogen import schedule as sched
from ufogen.autodiff import Tensor
from ufogen.objectives import ObjectiveKind


@pytest.fixture(scope="module")
def s8():
    return sched.linear_schedule(8, 0.08, 0.75)


def tiny_models(kind=ObjectiveKind.UFOGEN):
    return nets.make_model_pair(
        input_dim=2, time_steps=8, seed=2, g_width=6, g_depth=2, d_width=5,
        d_depth=2, time_dim=8, fourier_bands=1,
        d_takes_extra=kind.conditions_discriminator)


class TestParameterizePrev:
    def test_forward_mode_at_zero_returns_prediction(self, s8):
        x0_hat = Tensor(np.array([[1.0, -1.0]]))
        out = obj.parameterize_prev(ObjectiveKind.UFOGEN, s8, x0_hat,
                                    np.zeros((1, 2)), 2, np.ones((1, 2)), t_prev=0)
        assert out is x0_hat

    def test_forward_mode_moments(self, s8):
        rng = np.random.default_rng(0)
        n, t, t_prev = 400_000, 6, 4
        x0_hat = Tensor(np.tile([[0.5, -1.5]], (n, 1)))
        out = obj.parameterize_prev(ObjectiveKind.UFOGEN, s8, x0_hat,
                                    np.zeros((n, 2)), t, rng.standard_normal((n, 2)), t_prev)
        ab = s8.alpha_bar[t_prev]
        se = math.sqrt((1.0 - ab) / n)
        assert np.all(np.abs(out.data.mean(0) - math.sqrt(ab) * np.array([0.5, -1.5])) < 4 * se)
        assert np.all(np.abs(out.data.var(0) / (1.0 - ab) - 1.0) < 0.02)

    def test_posterior_mode_matches_true_posterior(self, s8):
        # with the prediction equal to the true x0 this is the exact reverse posterior
        rng = np.random.default_rng(1)
        n, t, t_prev = 400_000, 5, 3
        x0 = np.array([1.0, 2.0])
        x_t = sched.marginal_sample(s8, np.tile(x0, (n, 1)), t, rng.standard_normal((n, 2)))
        out = obj.parameterize_prev(ObjectiveKind.SIDDM, s8, Tensor(np.tile(x0, (n, 1))),
                                    x_t, t, rng.standard_normal((n, 2)), t_prev)
        ab = s8.alpha_bar[t_prev]
        se = math.sqrt((1.0 - ab) / n)
        assert np.all(np.abs(out.data.mean(0) - math.sqrt(ab) * x0) < 4 * se)
        assert np.all(np.abs(out.data.var(0) / (1.0 - ab) - 1.0) < 0.02)

    def test_gradient_flows_to_prediction(self, s8):
        x0_hat = Tensor(np.ones((2, 2)), requires_grad=True)
        out = obj.parameterize_prev(ObjectiveKind.UFOGEN, s8, x0_hat,
                                    np.zeros((2, 2)), 4, np.zeros((2, 2)), 2)
        ad.backward(ad.tensor_sum(out))
        np.testing.assert_allclose(x0_hat.grad, math.sqrt(s8.alpha_bar[2]) * np.ones((2, 2)))


class TestDiscriminatorLoss:
    def test_chance_level(self):
        z = Tensor(np.zeros((4, 1)))
        loss = obj.discriminator_loss(ObjectiveKind.UFOGEN, z, z)
        assert float(loss.data) == pytest.approx(2.0 * math.log(2.0), rel=1e-12)

    def test_perfect_separation_limit(self):
        real = Tensor(np.full((4, 1), 40.0))
        fake = Tensor(np.full((4, 1), -40.0))
        loss = obj.discriminator_loss(ObjectiveKind.DDGAN, real, fake)
        assert float(loss.data) < 1e-15

    def test_matches_log_sigmoid_form(self):
        # softplus form equals -log(sigmoid(real)) - log(1 - sigmoid(fake))
        real = Tensor(np.array([[2.0]]))
        fake = Tensor(np.array([[-2.0]]))
        loss = float(obj.discriminator_loss(ObjectiveKind.SIDDM, real, fake).data)
        direct = -math.log(1 / (1 + math.exp(-2.0))) - math.log(1 - 1 / (1 + math.exp(2.0)))
        assert loss == pytest.approx(direct, abs=1e-12)

    def test_monotone_in_separation(self):
        mid = float(obj.discriminator_loss(
            ObjectiveKind.UFOGEN, Tensor(np.array([[1.0]])), Tensor(np.array([[-1.0]]))).data)
        wide = float(obj.discriminator_loss(
            ObjectiveKind.UFOGEN, Tensor(np.array([[3.0]])), Tensor(np.array([[-3.0]]))).data)
        assert wide < mid < 2.0 * math.log(2.0)

    def test_ddpm_has_no_discriminator(self):
        z = Tensor(np.zeros((1, 1)))
        with pytest.raises(ValueError):
            obj.discriminator_loss(ObjectiveKind.DDPM, z, z)

    def test_unequal_batches_rejected(self):
        with pytest.raises(ad.ShapeError):
            obj.discriminator_loss(ObjectiveKind.UFOGEN,
                                   Tensor(np.zeros((2, 1))), Tensor(np.zeros((3, 1))))


class TestGeneratorAdversarialLoss:
    def test_chance_level(self):
        assert float(obj.generator_adversarial_loss(Tensor(np.zeros((3, 1)))).data) == \
            pytest.approx(math.log(2.0), rel=1e-12)

    def test_confident_fake_limit(self):
        assert float(obj.generator_adversarial_loss(Tensor(np.full((2, 1), 40.0))).data) < 1e-15

    def test_gradient_at_zero(self):
        logit = Tensor(np.zeros((1, 1)), requires_grad=True)
        ad.backward(obj.generator_adversarial_loss(logit))
        assert logit.grad[0, 0] == pytest.approx(-0.5)

    def test_decreases_as_fake_logits_rise(self):
        lo = float(obj.generator_adversarial_loss(Tensor(np.array([[0.5]]))).data)
        hi = float(obj.generator_adversarial_loss(Tensor(np.array([[2.5]]))).data)
        assert hi < lo


class TestReconstructionLoss:
    def test_zero_mismatch_all_kinds(self, s8):
        x = np.ones((3, 2))
        for kind in (ObjectiveKind.DDPM, ObjectiveKind.SIDDM, ObjectiveKind.UFOGEN):
            loss = obj.reconstruction_loss(kind, s8, x, Tensor(x), x, Tensor(x), 4)
            assert float(loss.data) == 0.0

    def test_siddm_weighted_value(self):
        s = sched.linear_schedule(2, 0.5, 0.5)
        x_prev = np.zeros((1, 2))
        x_prev_hat = Tensor(np.array([[2.0, 0.0]]))  # squared mismatch 4
        loss = obj.reconstruction_loss(ObjectiveKind.SIDDM, s, None, None,
                                       x_prev, x_prev_hat, 1)
        assert float(loss.data) == pytest.approx(2.0)

    def test_ufogen_gamma_modes(self, s8):
        x0 = np.zeros((1, 2))
        x0_hat = Tensor(np.array([[1.0, 1.0]]))
        t = 3
        const = obj.reconstruction_loss(ObjectiveKind.UFOGEN, s8, x0, x0_hat, None, None, t)
        derived = obj.reconstruction_loss(ObjectiveKind.UFOGEN, s8, x0, x0_hat, None, None, t,
                                          gamma_mode="derived")
        assert float(const.data) == pytest.approx(2.0)
        assert float(derived.data) == pytest.approx(2.0 * sched.gamma(s8, t, "derived"))

    def test_ddgan_rejected(self, s8):
        with pytest.raises(ValueError):
            obj.reconstruction_loss(ObjectiveKind.DDGAN, s8, np.zeros((1, 2)),
                                    Tensor(np.zeros((1, 2))), None, None, 1)

    def test_noisy_match_reduces_to_clean_match_in_expectation(self, s8):
        # Monte-Carlo mean of the weighted noisy-sample loss against the
        # closed form w_t * (alpha_bar_{t-1} ||dx0||^2 + 2 (1 - alpha_bar_{t-1}) d)
        rng = np.random.default_rng(3)
        t, trials, d = 5, 400_000, 2
        x0 = np.array([0.3, -0.6])
        x0_hat = np.array([-0.2, 0.4])
        ab = s8.alpha_bar[t - 1]
        w = sched.reconstruction_weight(s8, t)
        x_prev = sched.marginal_sample(s8, np.tile(x0, (trials, 1)), t - 1,
                                       rng.standard_normal((trials, d)))
        x_prev_hat = sched.marginal_sample(s8, np.tile(x0_hat, (trials, 1)), t - 1,
                                           rng.standard_normal((trials, d)))
        vals = w * np.sum((x_prev_hat - x_prev) ** 2, axis=1)
        analytic = w * (ab * np.sum((x0_hat - x0) ** 2) + 2.0 * (1.0 - ab) * d)
        se = vals.std(ddof=1) / math.sqrt(trials)
        assert abs(vals.mean() - analytic) < 3.0 * se
        # and the loss op computes exactly the mean of those per-sample values
        loss = obj.reconstruction_loss(ObjectiveKind.SIDDM, s8, None, None,
                                       x_prev, Tensor(x_prev_hat), t)
        assert float(loss.data) == pytest.approx(vals.mean(), rel=1e-12)


class TestBuildLosses:
    def test_oracle_generator_zeroes_reconstruction(self, s8, monkeypatch):
        models = tiny_models()
        x0 = np.random.default_rng(4).standard_normal((6, 2))
        captured = {}

        def oracle_forward(m, x_t, t, use_ema=False):
            captured["t"] = t
            return Tensor(x0)

        monkeypatch.setattr(obj, "generator_forward", oracle_forward)
        out = obj.build_losses(ObjectiveKind.UFOGEN, s8, models, x0, 5,
                               np.random.default_rng(0), t_prev=3)
        assert out.g_recon == 0.0
        assert captured["t"] == 5

    def test_discriminator_input_arity_by_kind(self, s8, monkeypatch):
        calls = []
        real_forward = obj.discriminator_forward

        def spy(m, x, t, extra=None):
            calls.append((t, extra is not None))
            return real_forward(m, x, t, extra)

        monkeypatch.setattr(obj, "discriminator_forward", spy)
        x0 = np.random.default_rng(5).standard_normal((4, 2))
        obj.build_losses(ObjectiveKind.DDGAN, s8, tiny_models(ObjectiveKind.DDGAN),
                         x0, 5, np.random.default_rng(1), t_prev=3)
        assert calls and all(has_extra for _, has_extra in calls)
        assert all(t == 3 for t, _ in calls)  # conditioned on the cleaner index

        calls.clear()
        obj.build_losses(ObjectiveKind.UFOGEN, s8, tiny_models(), x0, 5,
                         np.random.default_rng(1), t_prev=3)
        assert calls and not any(has_extra for _, has_extra in calls)

    def test_disc_time_switch(self, s8, monkeypatch):
        calls = []
        real_forward = obj.discriminator_forward

        def spy(m, x, t, extra=None):
            calls.append(t)
            return real_forward(m, x, t, extra)

        monkeypatch.setattr(obj, "discriminator_forward", spy)
        x0 = np.random.default_rng(6).standard_normal((4, 2))
        obj.build_losses(ObjectiveKind.UFOGEN, s8, tiny_models(), x0, 5,
                         np.random.default_rng(1), t_prev=3, disc_time="current")
        assert all(t == 5 for t in calls)

    def test_fixed_seed_reproducible(self, s8):
        models = tiny_models()
        x0 = np.random.default_rng(7).standard_normal((5, 2))
        a = obj.build_losses(ObjectiveKind.UFOGEN, s8, models, x0, 4, np.random.default_rng(9))
        b = obj.build_losses(ObjectiveKind.UFOGEN, s8, models, x0, 4, np.random.default_rng(9))
        assert a == b

    def test_total_composition(self, s8):
        models = tiny_models()
        x0 = np.random.default_rng(8).standard_normal((5, 2))
        out = obj.build_losses(ObjectiveKind.UFOGEN, s8, models, x0, 6,
                               np.random.default_rng(2), lambda_kl=0.7)
        assert out.finite()
        assert out.g_total == pytest.approx(out.g_adv + 0.7 * out.g_recon, rel=1e-12)

    def test_ddpm_path(self, s8):
        models = tiny_models(ObjectiveKind.DDPM)
        x0 = np.random.default_rng(9).standard_normal((5, 2))
        out = obj.build_losses(ObjectiveKind.DDPM, s8, models, x0, 6, np.random.default_rng(3))
        assert out.d_loss == 0.0 and out.g_adv == 0.0
        assert out.g_total == out.g_recon

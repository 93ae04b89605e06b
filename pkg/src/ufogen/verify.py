"""Numerical verification of every closed-form identity the trainer relies on.

Each check pits a closed-form quantity against an independent estimate
(Monte Carlo, central differences, or grid brute force) and reports the worst
measured discrepancy next to its tolerance.  The suite is deterministic per
seed and doubles as the implementation behind the ``verify`` command.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import data_eval as de
from . import networks as nets
from . import objectives as obj
from . import schedule as sched
from .autodiff import Tensor
from .objectives import ObjectiveKind


@dataclass(frozen=True)
class CheckResult:
    """One verification row: worst measured value against its bound."""

    name: str
    measured: float
    tolerance: float
    bound: str  # "upper": pass iff measured < tolerance; "lower": iff >
    passed: bool

    def verdict(self) -> str:
        return "pass" if self.passed else "FAIL"


def _upper(name: str, measured: float, tol: float) -> CheckResult:
    return CheckResult(name, measured, tol, "upper", measured < tol)


def _lower(name: str, measured: float, tol: float) -> CheckResult:
    return CheckResult(name, measured, tol, "lower", measured > tol)


def check_gaussian_kl(seed: int = 0, pairs: int = 10, samples: int = 1_000_000,
                      tol: float = 1e-2, kl_scale: float = 1.0) -> CheckResult:
    """Closed-form KL vs a Monte-Carlo mean of the log density ratio.

    ``kl_scale`` exists for fault injection: scaling the closed form by 1.01
    must push the worst pair outside tolerance.
    """
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x6B6C]))
    worst = 0.0
    for _ in range(pairs):
        d = int(rng.integers(1, 5))
        p = sched.GaussianParams(rng.uniform(-1.5, 1.5, d), float(rng.uniform(0.6, 1.8)))
        q = sched.GaussianParams(rng.uniform(-1.5, 1.5, d), float(rng.uniform(0.6, 1.8)))
        closed = kl_scale * sched.gaussian_kl(p, q, d)
        x = p.mean + math.sqrt(p.covariance_scale) * rng.standard_normal((samples, d))

        def log_density(params, pts):
            diff = pts - params.mean
            return (-0.5 * np.sum(diff * diff, axis=1) / params.covariance_scale
                    - 0.5 * d * math.log(2 * math.pi * params.covariance_scale))

        mc = float(np.mean(log_density(p, x) - log_density(q, x)))
        worst = max(worst, abs(closed - mc))
    return _upper("kl-closed-form-vs-monte-carlo", worst, tol)


def _random_mixture_density(rng: np.random.Generator, xs: np.ndarray) -> np.ndarray:
    mass = np.zeros_like(xs)
    for _ in range(int(rng.integers(2, 5))):
        mu = rng.uniform(-5.0, 5.0)
        width = rng.uniform(0.4, 1.2)
        mass += rng.uniform(0.2, 1.0) * np.exp(-0.5 * ((xs - mu) / width) ** 2)
    return mass / mass.sum()


def check_smoothed_identity(seed: int = 0, pairs: int = 50, equal_pairs: int = 10,
                            cells: int = 1024, sigmas=(0.1, 0.5, 1.0),
                            l1_gap: float = 0.1) -> list[CheckResult]:
    """Gaussian smoothing destroys no equality information.

    Equal densities must stay exactly indistinguishable after convolution
    (JSD < 1e-12); densities with an L1 gap of at least 0.1 must remain
    detectably different (JSD > 1e-6) at every kernel width.
    """
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x6C656D]))
    xs = np.linspace(-8.0, 8.0, cells, endpoint=False)
    worst_equal = 0.0
    worst_unequal = math.inf
    for i in range(pairs):
        p_mass = _random_mixture_density(rng, xs)
        if i < equal_pairs:
            q_mass = p_mass
        else:
            q_mass = _random_mixture_density(rng, xs)
            while np.abs(p_mass - q_mass).sum() < l1_gap:
                q_mass = _random_mixture_density(rng, xs)
        p = de.GridDensity(-8.0, 8.0, p_mass)
        q = de.GridDensity(-8.0, 8.0, q_mass)
        for sigma in sigmas:
            value = de.jsd_grid(de.convolve_density(p, sigma), de.convolve_density(q, sigma))
            if i < equal_pairs:
                worst_equal = max(worst_equal, value)
            else:
                worst_unequal = min(worst_unequal, value)
    return [
        _upper("smoothed-equal-pairs-jsd", worst_equal, 1e-12),
        _lower("smoothed-unequal-pairs-jsd", worst_unequal, 1e-6),
    ]


def check_recon_equivalence(seed: int = 0, triples: int = 10,
                            trials: int = 1_000_000, z_tol: float = 4.0) -> CheckResult:
    """Re-noised mismatch reduces to clean mismatch plus a known constant."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x7265]))
    s = sched.linear_schedule(1000, 1e-4, 0.02)
    worst = 0.0
    for _ in range(triples):
        t = int(rng.integers(1, s.T + 1))
        x0 = rng.uniform(-2.0, 2.0, 2)
        x0_hat = rng.uniform(-2.0, 2.0, 2)
        _, _, z = de.recon_equivalence_check(s, t, x0, x0_hat, trials, rng)
        worst = max(worst, abs(z))
    return _upper("recon-equivalence-z-score", worst, z_tol)


def check_op_gradients(seed: int = 0, points: int = 10, tol: float = 1e-5) -> CheckResult:
    """Every registered op against central differences at random points."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x6772]))
    worst = 0.0
    for _ in range(points):
        x_val = rng.standard_normal((2, 3))
        other = Tensor(rng.standard_normal((2, 3)))
        right = Tensor(rng.standard_normal((3, 2)))
        cases = [
            lambda t: ad.tensor_sum(ad.add(t, other)),
            lambda t: ad.tensor_sum(ad.sub(t, other)),
            lambda t: ad.tensor_sum(ad.mul(t, other)),
            lambda t: ad.tensor_sum(ad.scale(t, -1.3)),
            lambda t: ad.tensor_sum(ad.square(t)),
            lambda t: ad.tensor_sum(ad.sigmoid(t)),
            lambda t: ad.tensor_sum(ad.softplus(t)),
            lambda t: ad.tensor_sum(ad.tanh(t)),
            lambda t: ad.tensor_sum(ad.silu(t)),
            lambda t: ad.tensor_sum(ad.leaky_relu(t)),
            lambda t: ad.tensor_sum(ad.sin(t)),
            lambda t: ad.tensor_sum(ad.cos(t)),
            lambda t: ad.tensor_sum(ad.matmul(t, right)),
            lambda t: ad.tensor_sum(ad.rows(t, 0, 1)),
            lambda t: ad.tensor_sum(ad.concat_cols([t, ad.square(t)])),
            ad.mean,
            ad.squared_l2_norm,
            lambda t: ad.tensor_sum(ad.mean(t, axis=1)),
        ]
        for f in cases:
            worst = max(worst, ad.finite_difference_check(f, Tensor(x_val, requires_grad=True)))
    return _upper("op-gradients-vs-finite-differences", worst, tol)


def _tiny_training_setup(seed: int):
    s = sched.power_schedule(8, 0.008, 12.0)
    models = nets.make_model_pair(input_dim=2, time_steps=8, seed=seed, g_width=5,
                                  g_depth=2, d_width=4, d_depth=2, time_dim=4,
                                  fourier_bands=1)
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x7473]))
    for name, p in models.params.items():
        if name.startswith("g.out"):
            p.data = 0.3 * rng.standard_normal(p.data.shape)
    x0 = rng.standard_normal((3, 2))
    t, t_prev = 6, 4
    x_prev, x_t, eps_fake = obj.draw_training_noises(s, x0, t, t_prev, rng)
    return s, models, x0, x_prev, x_t, eps_fake, t, t_prev


def check_loss_gradients(seed: int = 0, points: int = 5, tol: float = 1e-5) -> CheckResult:
    """Full generator and discriminator losses against central differences.

    Uses miniature networks so every parameter coordinate can be perturbed.
    """
    kind = ObjectiveKind.UFOGEN
    worst = 0.0
    for point in range(points):
        s, models, x0, x_prev, x_t, eps_fake, t, t_prev = _tiny_training_setup(seed + point)

        def swap(name, w):
            saved = models.params[name]
            models.params[name] = w
            return saved

        def gen_loss(name):
            def f(w):
                saved = swap(name, w)
                try:
                    x0_hat = nets.generator_forward(models, Tensor(x_t), t)
                    x_prev_hat = obj.parameterize_prev(kind, s, x0_hat, x_t, t,
                                                       eps_fake, t_prev)
                    logits = nets.discriminator_forward(models, x_prev_hat, t_prev)
                    adv = obj.generator_adversarial_loss(logits)
                    rec = obj.reconstruction_loss(kind, s, x0, x0_hat, x_prev,
                                                  x_prev_hat, t)
                    return ad.add(adv, rec)
                finally:
                    models.params[name] = saved
            return f

        def disc_loss(name):
            def f(w):
                saved = swap(name, w)
                try:
                    with ad.no_grad():
                        x0_hat = nets.generator_forward(models, Tensor(x_t), t)
                        fake = obj.parameterize_prev(kind, s, x0_hat, x_t, t,
                                                     eps_fake, t_prev)
                    both = Tensor(np.vstack([x_prev, fake.data]))
                    logits = nets.discriminator_forward(models, both, t_prev)
                    b = len(x0)
                    return obj.discriminator_loss(kind, ad.rows(logits, 0, b),
                                                  ad.rows(logits, b, 2 * b))
                finally:
                    models.params[name] = saved
            return f

        for name in models.params:
            f = gen_loss(name) if name.startswith("g.") else disc_loss(name)
            worst = max(worst, ad.finite_difference_check(f, models.params[name]))
    return _upper("training-loss-gradients-vs-finite-differences", worst, tol)


def check_marginal_consistency(seed: int = 0, spots: int = 16,
                               draws: int = 100_000) -> list[CheckResult]:
    """Composing single forward steps must land on the closed-form marginal."""
    s = sched.linear_schedule(1000, 1e-4, 0.02)
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x6D63]))
    x0 = np.array([1.0, -2.0])
    spot_times = set(np.linspace(1, s.T, spots).astype(int))
    x = np.tile(x0, (draws, 1))
    worst_mean = 0.0
    worst_var = 0.0
    for t in range(1, s.T + 1):
        x = sched.step_sample(s, x, t, rng.standard_normal(x.shape))
        if t in spot_times:
            ab = s.alpha_bar[t]
            se = math.sqrt((1.0 - ab) / draws)
            mean_err = np.abs(x.mean(0) - math.sqrt(ab) * x0).max()
            var_err = np.abs(x.var(0) / (1.0 - ab) - 1.0).max()
            worst_mean = max(worst_mean, mean_err / se)
            worst_var = max(worst_var, var_err)
    return [
        _upper("marginal-consistency-mean-sigmas", worst_mean, 4.0),
        _upper("marginal-consistency-variance-rel", worst_var, 0.02),
    ]


def run_all(seed: int = 0, break_kl: bool = False) -> list[CheckResult]:
    """The full derivation-verification suite, deterministic per seed."""
    results = [check_gaussian_kl(seed, kl_scale=1.01 if break_kl else 1.0)]
    results.extend(check_smoothed_identity(seed))
    results.append(check_recon_equivalence(seed))
    results.append(check_op_gradients(seed))
    results.append(check_loss_gradients(seed))
    results.extend(check_marginal_consistency(seed))
    return results

"""Closed-form Gaussian diffusion math for a T-step discrete noise schedule.

Conventions
-----------
Arrays are indexed by time step ``t`` in ``0..T`` with the 0 slot reserved:
``beta[0]`` is unused (set to 0) and ``alpha_bar[0] = 1``, so the forward
marginal at ``t = 0`` is the identity.  The forward chain is

    q(x_t | x_{t-1}) = N(sqrt(1 - beta_t) x_{t-1}, beta_t I)

whose marginal is q(x_t | x_0) = N(sqrt(alpha_bar_t) x_0, (1 - alpha_bar_t) I)
with alpha_bar_t = prod_{s<=t} (1 - beta_s).  Every Gaussian here is isotropic,
so distributions are carried as a mean vector plus one covariance scale.

Time pairs need not be adjacent: training and coarse sampling use gaps
``t_prev < t``, for which the conditional q(x_t | x_{t_prev}) and the reverse
posterior q(x_{t_prev} | x_t, x_0) follow from the alpha_bar ratio.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .config import ConfigError


@dataclass(frozen=True)
class NoiseSchedule:
    """Per-step variances and everything derived from them.

    ``posterior_mean_x0``, ``posterior_mean_xt`` and ``posterior_variance``
    are the adjacent-step reverse posterior coefficients: for ``1 <= t <= T``,
    q(x_{t-1} | x_t, x_0) has mean ``coef_x0[t] * x_0 + coef_xt[t] * x_t`` and
    isotropic variance ``posterior_variance[t]`` (which is 0 at t = 1).
    """

    beta: np.ndarray
    alpha: np.ndarray
    alpha_bar: np.ndarray
    posterior_mean_x0: np.ndarray
    posterior_mean_xt: np.ndarray
    posterior_variance: np.ndarray

    @property
    def T(self) -> int:
        return len(self.beta) - 1

    def _check_t(self, t: int, lo: int = 1) -> None:
        if not lo <= t <= self.T:
            raise IndexError(f"time index {t} outside [{lo}, {self.T}]")


@dataclass(frozen=True)
class GaussianParams:
    """Isotropic Gaussian: mean vector and a single covariance scale.

    The scale may be exactly 0 for the degenerate posteriors at t = 1 and at
    a coarse pair ending on step 0; KL computations require it positive.
    """

    mean: np.ndarray
    covariance_scale: float

    def __post_init__(self):
        if self.covariance_scale < 0:
            raise ValueError(f"covariance scale must be >= 0, got {self.covariance_scale}")


def linear_schedule(T: int, beta_min: float = 1e-4, beta_max: float = 0.02) -> NoiseSchedule:
    """Linearly interpolated beta from ``beta_min`` at t=1 to ``beta_max`` at t=T.

    The defaults are the standard 1000-step settings; pair with ``T=1000``.
    """
    if T < 1:
        raise ConfigError(f"schedule needs T >= 1, got {T}")
    if not (0.0 < beta_min <= beta_max < 1.0):
        raise ConfigError(f"need 0 < beta_min <= beta_max < 1, got ({beta_min}, {beta_max})")
    beta = np.zeros(T + 1)
    beta[1:] = np.linspace(beta_min, beta_max, T)
    return _from_betas(beta)


def _from_betas(beta: np.ndarray) -> NoiseSchedule:
    T = len(beta) - 1
    alpha = 1.0 - beta
    alpha_bar = np.cumprod(alpha)
    coef_x0 = np.zeros(T + 1)
    coef_xt = np.zeros(T + 1)
    var = np.zeros(T + 1)
    t = np.arange(1, T + 1)
    coef_x0[1:] = np.sqrt(alpha_bar[t - 1]) * beta[t] / (1.0 - alpha_bar[t])
    coef_xt[1:] = np.sqrt(alpha[t]) * (1.0 - alpha_bar[t - 1]) / (1.0 - alpha_bar[t])
    var[1:] = beta[t] * (1.0 - alpha_bar[t - 1]) / (1.0 - alpha_bar[t])
    return NoiseSchedule(beta, alpha, alpha_bar, coef_x0, coef_xt, var)


def power_schedule(T: int, alpha_bar_end: float = 0.008, exponent: float = 12.0,
                   beta_floor: float = 1e-4) -> NoiseSchedule:
    """Short-grid preset: log alpha_bar decays as (t/T)^exponent.

    Signal survives until roughly three quarters of the grid and then
    collapses to noise, so coarse-pair training still meets structured
    marginals at the levels that supervise the terminal map.  This is the
    desk-scale analog of running a long linear schedule where the noisy
    marginals of small data stay informative; a plain linear ramp over a
    short grid destroys the structure before the midpoint.
    """
    if T < 1:
        raise ConfigError(f"schedule needs T >= 1, got {T}")
    if not 0.0 < alpha_bar_end < 1.0:
        raise ConfigError(f"alpha_bar_end must be in (0, 1), got {alpha_bar_end}")
    if exponent <= 0:
        raise ConfigError(f"exponent must be > 0, got {exponent}")
    ts = np.arange(0, T + 1) / T
    target = np.exp(ts ** exponent * math.log(alpha_bar_end))
    beta = np.zeros(T + 1)
    beta[1:] = np.clip(1.0 - target[1:] / target[:-1], beta_floor, 1.0 - 1e-9)
    return _from_betas(beta)


def short_schedule(T: int = 4) -> NoiseSchedule:
    """Aggressive few-step preset for fast runs: beta from 0.3 to 0.9."""
    return linear_schedule(T, 0.3, 0.9)


def marginal_sample(s: NoiseSchedule, x0: np.ndarray, t: int, noise: np.ndarray) -> np.ndarray:
    """Draw from q(x_t | x_0) given standard-normal ``noise``; t = 0 is the identity."""
    if not 0 <= t <= s.T:
        raise IndexError(f"time index {t} outside [0, {s.T}]")
    if t == 0:
        return np.array(x0, dtype=np.float64, copy=True)
    ab = s.alpha_bar[t]
    return math.sqrt(ab) * x0 + math.sqrt(1.0 - ab) * noise


def step_sample(s: NoiseSchedule, x_prev: np.ndarray, t: int, noise: np.ndarray) -> np.ndarray:
    """Single forward step x_{t-1} -> x_t."""
    s._check_t(t)
    b = s.beta[t]
    return math.sqrt(1.0 - b) * x_prev + math.sqrt(b) * noise


def bridge_coeffs(s: NoiseSchedule, t_from: int, t_to: int) -> tuple[float, float]:
    """(signal, noise-std) of q(x_{t_to} | x_{t_from}) for t_from < t_to."""
    if not 0 <= t_from < t_to <= s.T:
        raise IndexError(f"need 0 <= t_from < t_to <= {s.T}, got ({t_from}, {t_to})")
    ratio = s.alpha_bar[t_to] / s.alpha_bar[t_from]
    return math.sqrt(ratio), math.sqrt(1.0 - ratio)


def bridge_sample(s: NoiseSchedule, x_from: np.ndarray, t_from: int, t_to: int,
                  noise: np.ndarray) -> np.ndarray:
    """Forward conditional across a (possibly coarse) gap; reduces to
    :func:`step_sample` when ``t_to == t_from + 1``."""
    c_sig, c_noise = bridge_coeffs(s, t_from, t_to)
    return c_sig * x_from + c_noise * noise


def posterior_coeffs(s: NoiseSchedule, t: int, t_prev: int | None = None) -> tuple[float, float, float]:
    """(coef_x0, coef_xt, variance) of q(x_{t_prev} | x_t, x_0).

    ``t_prev`` defaults to ``t - 1``, where the values equal the precomputed
    adjacent-step arrays; for coarse pairs they follow from the alpha_bar
    ratio of the bridged forward kernel.
    """
    s._check_t(t)
    if t_prev is None:
        t_prev = t - 1
    if not 0 <= t_prev < t:
        raise IndexError(f"need 0 <= t_prev < t, got ({t_prev}, {t})")
    ab_t = s.alpha_bar[t]
    ab_p = s.alpha_bar[t_prev]
    ratio = ab_t / ab_p
    gap_beta = 1.0 - ratio
    coef_x0 = math.sqrt(ab_p) * gap_beta / (1.0 - ab_t)
    coef_xt = math.sqrt(ratio) * (1.0 - ab_p) / (1.0 - ab_t)
    var = gap_beta * (1.0 - ab_p) / (1.0 - ab_t)
    return coef_x0, coef_xt, var


def posterior_params(s: NoiseSchedule, x_t: np.ndarray, x0: np.ndarray, t: int,
                     t_prev: int | None = None) -> GaussianParams:
    """Reverse posterior q(x_{t_prev} | x_t, x_0) as an isotropic Gaussian."""
    coef_x0, coef_xt, var = posterior_coeffs(s, t, t_prev)
    return GaussianParams(coef_x0 * np.asarray(x0) + coef_xt * np.asarray(x_t), max(var, 0.0))


def gaussian_kl(p: GaussianParams, q: GaussianParams, dim: int) -> float:
    """KL(p || q) between isotropic Gaussians in ``dim`` dimensions.

    Specialization of the general multivariate form
    0.5 * [log |S2|/|S1| - d + tr(S2^-1 S1) + (m2-m1)^T S2^-1 (m2-m1)]
    to S1 = s1*I, S2 = s2*I.
    """
    s1, s2 = p.covariance_scale, q.covariance_scale
    if s1 <= 0 or s2 <= 0:
        raise ValueError("gaussian_kl needs strictly positive covariance scales")
    mu1 = np.broadcast_to(np.asarray(p.mean, dtype=np.float64), (dim,))
    mu2 = np.broadcast_to(np.asarray(q.mean, dtype=np.float64), (dim,))
    diff = mu2 - mu1
    return 0.5 * (dim * math.log(s2 / s1) - dim + dim * s1 / s2 + float(diff @ diff) / s2)


def reconstruction_weight(s: NoiseSchedule, t: int) -> float:
    """Coefficient (1 - beta_t) / (2 beta_t) weighting the noisy-sample
    mismatch in the KL-derived reconstruction loss."""
    s._check_t(t)
    b = s.beta[t]
    return (1.0 - b) / (2.0 * b)


def gamma(s: NoiseSchedule, t: int, mode: str = "constant") -> float:
    """Time weight for the clean-sample reconstruction term.

    ``constant`` is 1; ``derived`` is alpha_bar_{t-1} (1 - beta_t) / (2 beta_t),
    the coefficient under which the clean-sample loss has the same expectation
    as the noisy-sample loss over the forward noise.
    """
    s._check_t(t)
    if mode == "constant":
        return 1.0
    if mode == "derived":
        return float(s.alpha_bar[t - 1]) * reconstruction_weight(s, t)
    raise ConfigError(f"gamma mode must be 'constant' or 'derived', got {mode!r}")

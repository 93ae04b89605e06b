"""Sample generation: one-step, coarse k-step, and full ancestral chains.

One-step generation is the headline path: draw pure noise at the terminal
index and emit the generator's clean prediction directly.  k-step sampling
walks an equally spaced coarse grid from T down to 0, re-noising each clean
prediction either through the forward marginal or through the reverse
posterior; the final segment returns the prediction without re-noising.
EMA weights are used by default.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from . import schedule as sched
from .autodiff import Tensor
from .config import ConfigError
from .networks import ModelPair, generator_forward


def one_step_sample(models: ModelPair, s: sched.NoiseSchedule, n: int,
                    rng: np.random.Generator, use_ema: bool = True) -> np.ndarray:
    """Draw x_T ~ N(0, I) and return the generator's clean prediction."""
    x_t = rng.standard_normal((n, models.arch.input_dim))
    with ad.no_grad():
        return generator_forward(models, Tensor(x_t), s.T, use_ema).data


def _coarse_grid(s: sched.NoiseSchedule, k: int) -> list[int]:
    if k < 1:
        raise ConfigError(f"need k >= 1, got {k}")
    if k > s.T:
        raise ConfigError(f"k = {k} exceeds schedule length {s.T}")
    if s.T % k != 0:
        raise ConfigError(f"k = {k} does not divide the schedule into equal segments (T = {s.T})")
    gap = s.T // k
    return [s.T - i * gap for i in range(k + 1)]


def multi_step_sample(models: ModelPair, s: sched.NoiseSchedule, k: int,
                      parameterization: str, n: int, rng: np.random.Generator,
                      use_ema: bool = True) -> np.ndarray:
    """Generate via k equal coarse segments from T down to 0.

    ``posterior`` re-noises through q(x_lo | x_hi, x0_hat); ``forward``
    re-noises through the marginal q(x_lo | x0_hat).  With k = 1 this is
    exactly :func:`one_step_sample` (same draws, same output).
    """
    if parameterization not in ("posterior", "forward"):
        raise ConfigError(f"parameterization must be posterior|forward, "
                          f"got {parameterization!r}")
    grid = _coarse_grid(s, k)
    x = rng.standard_normal((n, models.arch.input_dim))
    with ad.no_grad():
        for t_hi, t_lo in zip(grid[:-1], grid[1:]):
            x0_hat = generator_forward(models, Tensor(x), t_hi, use_ema).data
            if t_lo == 0:
                return x0_hat
            noise = rng.standard_normal(x.shape)
            if parameterization == "forward":
                x = sched.marginal_sample(s, x0_hat, t_lo, noise)
            else:
                params = sched.posterior_params(s, x, x0_hat, t_hi, t_lo)
                x = params.mean + np.sqrt(params.covariance_scale) * noise
    raise AssertionError("unreachable: grid always ends at 0")


def ddpm_ancestral_sample(models: ModelPair, s: sched.NoiseSchedule, n: int,
                          rng: np.random.Generator, use_ema: bool = True) -> np.ndarray:
    """Full T-step reverse chain using the posterior of the predicted clean
    sample with the schedule's posterior variance at every step."""
    x = rng.standard_normal((n, models.arch.input_dim))
    with ad.no_grad():
        for t in range(s.T, 0, -1):
            x0_hat = generator_forward(models, Tensor(x), t, use_ema).data
            params = sched.posterior_params(s, x, x0_hat, t)
            if t > 1:
                x = params.mean + np.sqrt(params.covariance_scale) * rng.standard_normal(x.shape)
            else:
                x = params.mean
    return x

"""Diffusion-GAN training lab for 2-D toy distributions.

Implements four training objectives over a shared discrete Gaussian noise
schedule -- a plain denoising-diffusion baseline, the conditional adversarial
variant, joint marginal/KL matching, and the clean-sample-matching hybrid that
enables one-step generation -- together with a minimal tape autodiff engine,
toy data and metrics, samplers, and a derivation-verification suite.
"""

__version__ = "0.1.0"

from . import autodiff, data_eval, networks, objectives, sampler, schedule, trainer

__all__ = [
    "autodiff",
    "schedule",
    "networks",
    "objectives",
    "trainer",
    "sampler",
    "data_eval",
    "__version__",
]

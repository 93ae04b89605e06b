"""Loss construction for the four training objectives.

Kinds
-----
``DDPM``    plain clean-sample regression (no discriminator), the baseline.
``DDGAN``   conditional adversarial matching of the reverse step; the
            discriminator also sees the noisier sample it was denoised from.
``SIDDM``   unconditional adversarial matching of the noisy marginal plus a
            KL-derived reconstruction of the noisy sample, weight
            (1 - beta_t) / (2 beta_t).
``UFOGEN``  like SIDDM but the generator re-noises its clean prediction
            through the forward marginal rather than the reverse posterior,
            and the reconstruction is taken at the clean sample with weight
            gamma_t; this is the variant that admits one-step sampling.

All adversarial terms are computed from logits through softplus, never
through materialized probabilities: -log sigmoid(z) == softplus(-z).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from . import autodiff as ad
from . import schedule as sched
from .autodiff import Tensor
from .networks import ModelPair, discriminator_forward, generator_forward


class ObjectiveKind(str, Enum):
    DDPM = "ddpm"
    DDGAN = "ddgan"
    SIDDM = "siddm"
    UFOGEN = "ufogen"

    @property
    def adversarial(self) -> bool:
        return self is not ObjectiveKind.DDPM

    @property
    def conditions_discriminator(self) -> bool:
        """Only the conditional variant feeds the noisier sample to D."""
        return self is ObjectiveKind.DDGAN

    @property
    def prev_parameterization(self) -> str:
        """How x'_{t-1} is produced from the predicted clean sample."""
        return "forward" if self is ObjectiveKind.UFOGEN else "posterior"


@dataclass(frozen=True)
class LossBreakdown:
    """Scalar loss components of one step.

    ``g_recon`` already carries its time weight (the KL-derived coefficient
    for SIDDM, gamma_t for UFOGEN); for adversarial objectives
    ``g_total = g_adv + lambda_kl * g_recon``, for DDPM ``g_total = g_recon``.
    """

    d_loss: float
    g_adv: float
    g_recon: float
    g_total: float

    def finite(self) -> bool:
        return all(map(math.isfinite, (self.d_loss, self.g_adv, self.g_recon, self.g_total)))


def parameterize_prev(kind: ObjectiveKind, s: sched.NoiseSchedule, x0_hat: Tensor,
                      x_t, t: int, noise: np.ndarray, t_prev: int | None = None) -> Tensor:
    """Draw x'_{t_prev} from the predicted clean sample, differentiably.

    Forward parameterization re-noises through q(x_{t_prev} | x_0 = x0_hat);
    posterior parameterization draws from q(x_{t_prev} | x_t, x_0 = x0_hat).
    ``t_prev`` defaults to ``t - 1``; ``t_prev = 0`` returns ``x0_hat``
    unchanged under either mode.
    """
    s._check_t(t)
    if t_prev is None:
        t_prev = t - 1
    if t_prev == 0:
        return x0_hat
    if kind.prev_parameterization == "forward":
        ab = s.alpha_bar[t_prev]
        const = math.sqrt(1.0 - ab) * noise
        return ad.scale(x0_hat, math.sqrt(ab)) + Tensor(const)
    coef_x0, coef_xt, var = sched.posterior_coeffs(s, t, t_prev)
    x_t_data = x_t.data if isinstance(x_t, Tensor) else np.asarray(x_t)
    const = coef_xt * x_t_data + math.sqrt(max(var, 0.0)) * noise
    return ad.scale(x0_hat, coef_x0) + Tensor(const)


def discriminator_loss(kind: ObjectiveKind, logits_real: Tensor, logits_fake: Tensor) -> Tensor:
    """Mean softplus(-real) + softplus(fake): the stable two-term logistic loss."""
    if not kind.adversarial:
        raise ValueError("the DDPM baseline has no discriminator loss")
    if logits_real.data.shape[0] != logits_fake.data.shape[0]:
        raise ad.ShapeError("real and fake batches must have equal size")
    return ad.mean(ad.softplus(ad.scale(logits_real, -1.0))) + ad.mean(ad.softplus(logits_fake))


def generator_adversarial_loss(logits_fake: Tensor) -> Tensor:
    """Non-saturating generator term: mean softplus(-fake logit)."""
    return ad.mean(ad.softplus(ad.scale(logits_fake, -1.0)))


def _mean_sq_mismatch(a: Tensor, b) -> Tensor:
    diff = ad.sub(a, b if isinstance(b, Tensor) else Tensor(np.asarray(b, dtype=np.float64)))
    return ad.mean(ad.squared_l2_norm(diff, axis=1))


def reconstruction_loss(kind: ObjectiveKind, s: sched.NoiseSchedule, x0, x0_hat: Tensor,
                        x_prev, x_prev_hat: Tensor | None, t: int,
                        gamma_mode: str = "constant") -> Tensor:
    """Weighted reconstruction term, mean over the batch.

    DDPM: ||x0 - x0_hat||^2.  SIDDM: the KL-derived noisy mismatch
    (1 - beta_t) ||x'_{t-1} - x_{t-1}||^2 / (2 beta_t).  UFOGEN: the
    clean-sample mismatch gamma_t ||x0 - x0_hat||^2.
    """
    if kind is ObjectiveKind.DDPM:
        return _mean_sq_mismatch(x0_hat, x0)
    if kind is ObjectiveKind.SIDDM:
        if x_prev_hat is None:
            raise ValueError("SIDDM reconstruction needs the re-noised prediction")
        return ad.scale(_mean_sq_mismatch(x_prev_hat, x_prev), sched.reconstruction_weight(s, t))
    if kind is ObjectiveKind.UFOGEN:
        return ad.scale(_mean_sq_mismatch(x0_hat, x0), sched.gamma(s, t, gamma_mode))
    raise ValueError(f"no reconstruction term for {kind}")


def draw_training_noises(s: sched.NoiseSchedule, x0: np.ndarray, t: int, t_prev: int,
                         rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """One training draw: (x_{t_prev}, x_t, fresh noise for the fake branch).

    Consumes exactly three standard-normal blocks from ``rng``, in this order.
    """
    eps_prev = rng.standard_normal(x0.shape)
    eps_step = rng.standard_normal(x0.shape)
    eps_fake = rng.standard_normal(x0.shape)
    x_prev = sched.marginal_sample(s, x0, t_prev, eps_prev)
    x_t = sched.bridge_sample(s, x_prev, t_prev, t, eps_step)
    return x_prev, x_t, eps_fake


def build_losses(kind: ObjectiveKind, s: sched.NoiseSchedule, models: ModelPair,
                 x0_batch: np.ndarray, t: int, rng: np.random.Generator,
                 t_prev: int | None = None, lambda_kl: float = 1.0,
                 gamma_mode: str = "constant", disc_time: str = "prev") -> LossBreakdown:
    """Evaluate all loss components for one sampled time pair, without updates.

    Follows the training recipe: draw x_{t_prev} and x_t from the forward
    process, predict the clean sample from x_t, re-noise it per the kind's
    parameterization, then score real/fake with the discriminator.
    ``disc_time`` selects whether D is conditioned on the index of its input
    (``prev``) or on the noisier index (``current``).
    """
    s._check_t(t)
    if t_prev is None:
        t_prev = t - 1
    x0 = np.asarray(x0_batch, dtype=np.float64)
    x_prev, x_t, eps_fake = draw_training_noises(s, x0, t, t_prev, rng)

    with ad.no_grad():
        x0_hat = generator_forward(models, Tensor(x_t), t)
        x_prev_hat = parameterize_prev(kind, s, x0_hat, x_t, t, eps_fake, t_prev)
        if kind.adversarial:
            t_disc = t_prev if disc_time == "prev" else t
            extra = Tensor(x_t) if kind.conditions_discriminator else None
            logits_real = discriminator_forward(models, Tensor(x_prev), t_disc, extra)
            logits_fake = discriminator_forward(models, x_prev_hat, t_disc, extra)
            d_loss = float(discriminator_loss(kind, logits_real, logits_fake).data)
            g_adv = float(generator_adversarial_loss(logits_fake).data)
        else:
            d_loss = 0.0
            g_adv = 0.0
        if kind is ObjectiveKind.DDGAN:
            g_recon = 0.0
        else:
            g_recon = float(reconstruction_loss(kind, s, x0, x0_hat, x_prev, x_prev_hat,
                                                t, gamma_mode).data)

    if kind.adversarial:
        g_total = g_adv + lambda_kl * g_recon
    else:
        g_total = g_recon
    return LossBreakdown(d_loss, g_adv, g_recon, g_total)

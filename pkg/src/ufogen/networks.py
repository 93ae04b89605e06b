"""Denoising generator and time-conditioned discriminator as small MLPs.

Both networks consume a sinusoidal embedding of the discrete time index.
Instead of concatenating inputs, the first layer is split into one weight
block per input stream (sample, optional conditioning sample, time embedding)
whose products are summed -- algebraically identical to concatenation and it
keeps the autodiff op set down to matmul/add.

The generator's output layer starts at zero so training begins from the
data-mean predictor.  A shadow copy of the generator parameters is maintained
by exponential moving average for use at sampling time; EMA values live
outside the autodiff graph.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor


@dataclass(frozen=True)
class TimeEmbedding:
    """Sinusoidal features of the normalized time index t / T."""

    dim: int = 64
    max_freq: float = 1000.0

    def __call__(self, t: int, total_steps: int) -> np.ndarray:
        half = self.dim // 2
        freqs = np.exp(np.linspace(0.0, math.log(self.max_freq), half))
        angle = (t / total_steps) * freqs
        return np.concatenate([np.sin(angle), np.cos(angle)])[None, :]


@dataclass(frozen=True)
class Architecture:
    """Layer widths and input arity for one generator/discriminator pair.

    Sample inputs are lifted through fixed sinusoidal features (octave
    frequencies starting at pi/2) before the first layer; without them the
    networks are too spectrally lazy to carve the tight modes of the toy
    mixtures in any reasonable number of steps.
    """

    input_dim: int
    time_steps: int
    g_width: int = 128
    g_depth: int = 4
    d_width: int = 128
    d_depth: int = 3
    time_dim: int = 64
    fourier_bands: int = 4
    d_takes_extra: bool = False
    leaky_slope: float = 0.2

    @property
    def feature_dim(self) -> int:
        return self.input_dim * (1 + 2 * self.fourier_bands)


class ModelPair:
    """Generator parameters, discriminator parameters, and the EMA shadow.

    Parameters are float64 autodiff tensors keyed ``g.*`` / ``d.*``; the EMA
    copy mirrors the ``g.*`` shapes as plain arrays and never enters a tape.
    """

    def __init__(self, arch: Architecture, params: dict[str, Tensor]):
        self.arch = arch
        self.params = params
        self.embed = TimeEmbedding(arch.time_dim)
        self.ema: dict[str, np.ndarray] = {
            k: v.data.copy() for k, v in params.items() if k.startswith("g.")
        }

    def generator_params(self) -> dict[str, Tensor]:
        return {k: v for k, v in self.params.items() if k.startswith("g.")}

    def discriminator_params(self) -> dict[str, Tensor]:
        return {k: v for k, v in self.params.items() if k.startswith("d.")}

    def clone(self) -> "ModelPair":
        twin = ModelPair(self.arch, {k: Tensor(v.data.copy(), requires_grad=True)
                                     for k, v in self.params.items()})
        twin.ema = {k: v.copy() for k, v in self.ema.items()}
        return twin


def _uniform_init(rng: np.random.Generator, fan_in: int, shape: tuple) -> np.ndarray:
    bound = 1.0 / math.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


def make_model_pair(input_dim: int, time_steps: int, seed: int = 0, **arch_kwargs) -> ModelPair:
    """Build and initialize a fresh pair for ``input_dim``-dimensional data."""
    arch = Architecture(input_dim=input_dim, time_steps=time_steps, **arch_kwargs)
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x6E65]))
    params: dict[str, Tensor] = {}

    def param(name: str, value: np.ndarray) -> None:
        params[name] = Tensor(value, requires_grad=True)

    # generator: (features(x_t), emb) -> widths g_width x g_depth -> x0 prediction
    feat = arch.feature_dim
    fan = feat + arch.time_dim
    param("g.in.x", _uniform_init(rng, fan, (feat, arch.g_width)))
    param("g.in.t", _uniform_init(rng, fan, (arch.time_dim, arch.g_width)))
    param("g.in.b", _uniform_init(rng, fan, (1, arch.g_width)))
    for i in range(1, arch.g_depth):
        param(f"g.h{i}.w", _uniform_init(rng, arch.g_width, (arch.g_width, arch.g_width)))
        param(f"g.h{i}.b", _uniform_init(rng, arch.g_width, (1, arch.g_width)))
    param("g.out.w", np.zeros((arch.g_width, input_dim)))
    param("g.out.b", np.zeros((1, input_dim)))

    # discriminator: (features(x), [features(x_cond),] emb) -> d_width x d_depth -> logit
    fan = feat * (2 if arch.d_takes_extra else 1) + arch.time_dim
    param("d.in.x", _uniform_init(rng, fan, (feat, arch.d_width)))
    if arch.d_takes_extra:
        param("d.in.xc", _uniform_init(rng, fan, (feat, arch.d_width)))
    param("d.in.t", _uniform_init(rng, fan, (arch.time_dim, arch.d_width)))
    param("d.in.b", _uniform_init(rng, fan, (1, arch.d_width)))
    for i in range(1, arch.d_depth):
        param(f"d.h{i}.w", _uniform_init(rng, arch.d_width, (arch.d_width, arch.d_width)))
        param(f"d.h{i}.b", _uniform_init(rng, arch.d_width, (1, arch.d_width)))
    param("d.out.w", _uniform_init(rng, arch.d_width, (arch.d_width, 1)))
    param("d.out.b", _uniform_init(rng, arch.d_width, (1, 1)))

    return ModelPair(arch, params)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float64))


def _featurize(x: Tensor, bands: int) -> Tensor:
    """[x, sin(w x), cos(w x), ...] over octave frequencies w = pi/2 * 2^k."""
    if bands == 0:
        return x
    parts = [x]
    freq = math.pi / 2.0
    for _ in range(bands):
        scaled = ad.scale(x, freq)
        parts.append(ad.sin(scaled))
        parts.append(ad.cos(scaled))
        freq *= 2.0
    return ad.concat_cols(parts)


def generator_forward(m: ModelPair, x_t, t: int, use_ema: bool = False) -> Tensor:
    """Predicted clean sample for a batch at time index ``t``.

    With ``use_ema`` the EMA shadow weights are used as constants, so no
    gradients flow.
    """
    arch = m.arch
    if not 0 <= t <= arch.time_steps:
        raise IndexError(f"time index {t} outside schedule range [0, {arch.time_steps}]")
    x_t = _as_tensor(x_t)
    if x_t.data.ndim != 2 or x_t.data.shape[1] != arch.input_dim:
        raise ad.ShapeError(f"generator expects (batch, {arch.input_dim}), got {x_t.data.shape}")
    if use_ema:
        weights = {k: Tensor._result(v, False) for k, v in m.ema.items()}
    else:
        weights = m.params
    emb = Tensor(m.embed(t, arch.time_steps))

    feats = _featurize(x_t, arch.fourier_bands)
    h = ad.matmul(feats, weights["g.in.x"]) + ad.matmul(emb, weights["g.in.t"]) + weights["g.in.b"]
    h = ad.silu(h)
    for i in range(1, arch.g_depth):
        h = ad.silu(ad.matmul(h, weights[f"g.h{i}.w"]) + weights[f"g.h{i}.b"])
    return ad.matmul(h, weights["g.out.w"]) + weights["g.out.b"]


def discriminator_forward(m: ModelPair, x, t: int, extra=None) -> Tensor:
    """Unconstrained real-vs-model logit for a batch at time index ``t``.

    ``extra`` carries the noisier conditioning sample and must be supplied
    exactly when the pair was built with ``d_takes_extra``.
    """
    arch = m.arch
    if not 0 <= t <= arch.time_steps:
        raise IndexError(f"time index {t} outside schedule range [0, {arch.time_steps}]")
    if arch.d_takes_extra and extra is None:
        raise ValueError("this discriminator conditions on the noisier sample; pass extra=")
    if not arch.d_takes_extra and extra is not None:
        raise ValueError("this discriminator takes no conditioning sample")
    x = _as_tensor(x)
    if x.data.ndim != 2 or x.data.shape[1] != arch.input_dim:
        raise ad.ShapeError(f"discriminator expects (batch, {arch.input_dim}), got {x.data.shape}")
    p = m.params
    emb = Tensor(m.embed(t, arch.time_steps))

    feats = _featurize(x, arch.fourier_bands)
    h = ad.matmul(feats, p["d.in.x"]) + ad.matmul(emb, p["d.in.t"]) + p["d.in.b"]
    if arch.d_takes_extra:
        h = h + ad.matmul(_featurize(_as_tensor(extra), arch.fourier_bands), p["d.in.xc"])
    h = ad.leaky_relu(h, arch.leaky_slope)
    for i in range(1, arch.d_depth):
        h = ad.leaky_relu(ad.matmul(h, p[f"d.h{i}.w"]) + p[f"d.h{i}.b"], arch.leaky_slope)
    return ad.matmul(h, p["d.out.w"]) + p["d.out.b"]


def ema_update(m: ModelPair, decay: float) -> None:
    """ema <- decay * ema + (1 - decay) * theta, elementwise over generator weights."""
    if not 0.0 <= decay < 1.0:
        raise ValueError(f"EMA decay must be in [0, 1), got {decay}")
    for k, shadow in m.ema.items():
        shadow *= decay
        shadow += (1.0 - decay) * m.params[k].data

"""Alternating discriminator/generator training with Adam, warm-up, gradient
clipping, EMA, coarse time sampling, and binary checkpoints.

One step performs one discriminator update followed by one generator update
on freshly sampled noises, sharing the sampled time pair and the fake-branch
noise between the two phases.  The whole run is a pure function of
(config, dataset, seed): every random draw comes from one generator stream in
a fixed order, so traces are reproducible and a resumed run continues the
uninterrupted trace exactly.
"""

from __future__ import annotations

import copy
import math
import struct
import zlib
from dataclasses import dataclass, fields
from typing import Callable, Optional

import numpy as np

from . import autodiff as ad
from . import data_eval
from . import networks as nets
from . import objectives as obj
from . import schedule as sched
from .autodiff import Tensor
from .config import ConfigError, format_config_text, parse_config_text


class DivergenceError(RuntimeError):
    """Training produced a non-finite loss or parameter.

    Carries the offending step index and, when available, the last healthy
    state snapshot.
    """

    def __init__(self, message: str, step: int, last_state: Optional["TrainState"] = None):
        super().__init__(message)
        self.step = step
        self.last_state = last_state


class CheckpointError(RuntimeError):
    """Checkpoint file is malformed, truncated, or inconsistent."""


@dataclass(frozen=True)
class TrainConfig:
    objective: obj.ObjectiveKind = obj.ObjectiveKind.UFOGEN
    lambda_kl: float = 1.0
    gamma_mode: str = "constant"
    step_size: int = 2
    schedule_steps: int = 8
    schedule_shape: str = "power"
    beta_min: float = 1e-4
    beta_max: float = 0.02
    alpha_bar_end: float = 0.008
    schedule_power: float = 12.0
    batch_size: int = 256
    lr_peak: float = 1e-4
    warmup_steps: int = 1000
    adam_beta1_g: float = 0.9
    adam_beta2_g: float = 0.999
    adam_beta1_d: float = 0.0
    adam_beta2_d: float = 0.999
    adam_eps: float = 1e-8
    grad_clip_g: float = 1.0
    ema_decay: float = 0.999
    total_steps: int = 8000
    seed: int = 0
    metrics_every: int = 500
    checkpoint_every: int = 0
    time_sampling: str = "coarse"
    disc_time: str = "prev"
    g_width: int = 128
    g_depth: int = 4
    d_width: int = 128
    d_depth: int = 3
    time_dim: int = 64
    fourier_bands: int = 4

    def validate(self) -> "TrainConfig":
        if not 1 <= self.step_size <= self.schedule_steps:
            raise ConfigError(f"need 1 <= step_size <= schedule_steps, got "
                              f"({self.step_size}, {self.schedule_steps})")
        if self.lambda_kl < 0:
            raise ConfigError(f"lambda_kl must be >= 0, got {self.lambda_kl}")
        if not 0.0 <= self.ema_decay < 1.0:
            raise ConfigError(f"ema_decay must be in [0, 1), got {self.ema_decay}")
        if self.lr_peak <= 0:
            raise ConfigError(f"lr_peak must be > 0, got {self.lr_peak}")
        if self.batch_size < 1 or self.total_steps < 0:
            raise ConfigError("batch_size must be >= 1 and total_steps >= 0")
        if self.metrics_every < 1:
            raise ConfigError("metrics_every must be >= 1")
        if self.gamma_mode not in ("constant", "derived"):
            raise ConfigError(f"gamma_mode must be constant|derived, got {self.gamma_mode!r}")
        if self.time_sampling not in ("coarse", "uniform_prev"):
            raise ConfigError(f"time_sampling must be coarse|uniform_prev, "
                              f"got {self.time_sampling!r}")
        if self.disc_time not in ("prev", "current"):
            raise ConfigError(f"disc_time must be prev|current, got {self.disc_time!r}")
        if self.schedule_shape not in ("linear", "power"):
            raise ConfigError(f"schedule_shape must be linear|power, "
                              f"got {self.schedule_shape!r}")
        if not (0.0 < self.beta_min <= self.beta_max < 1.0):
            raise ConfigError(f"need 0 < beta_min <= beta_max < 1, got "
                              f"({self.beta_min}, {self.beta_max})")
        if not 0.0 < self.alpha_bar_end < 1.0:
            raise ConfigError(f"alpha_bar_end must be in (0, 1), got {self.alpha_bar_end}")
        if self.schedule_power <= 0:
            raise ConfigError(f"schedule_power must be > 0, got {self.schedule_power}")
        return self

    def build_schedule(self) -> sched.NoiseSchedule:
        if self.schedule_shape == "linear":
            return sched.linear_schedule(self.schedule_steps, self.beta_min, self.beta_max)
        return sched.power_schedule(self.schedule_steps, self.alpha_bar_end,
                                    self.schedule_power)


# Dotted config keys <-> TrainConfig fields.  Network sizes live under
# ``model.``, everything else under ``trainer.``.
_MODEL_FIELDS = ("g_width", "g_depth", "d_width", "d_depth", "time_dim", "fourier_bands")
CONFIG_KEYS: dict[str, str] = {
    (f"model.{f.name}" if f.name in _MODEL_FIELDS else f"trainer.{f.name}"): f.name
    for f in fields(TrainConfig)
}
CONFIG_SCHEMA: dict[str, type] = {
    key: (str if fname == "objective" else type(getattr(TrainConfig(), fname)))
    for key, fname in CONFIG_KEYS.items()
}


def config_to_flat(cfg: TrainConfig) -> dict:
    out = {}
    for key, fname in CONFIG_KEYS.items():
        val = getattr(cfg, fname)
        out[key] = val.value if isinstance(val, obj.ObjectiveKind) else val
    return out


def config_from_flat(values: dict) -> TrainConfig:
    kwargs = {}
    for key, val in values.items():
        fname = CONFIG_KEYS[key]
        if fname == "objective":
            try:
                val = obj.ObjectiveKind(val)
            except ValueError:
                raise ConfigError(f"config key '{key}': unknown objective {val!r}") from None
        kwargs[fname] = val
    return TrainConfig(**kwargs).validate()


class AdamState:
    """First/second moment buffers and step counter for one parameter group."""

    def __init__(self, params: dict[str, Tensor], beta1: float, beta2: float, eps: float):
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in params.items()}

    def step(self, params: dict[str, Tensor], lr: float) -> None:
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for k, p in params.items():
            g = p.grad if p.grad is not None else np.zeros_like(p.data)
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * (g * g)
            update = lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)
            # Rebind rather than mutate: backward closures captured the old array.
            p.data = p.data - update

    def finite(self) -> bool:
        return all(np.isfinite(a).all() for d in (self.m, self.v) for a in d.values())


@dataclass
class TrainState:
    step: int
    models: nets.ModelPair
    opt_g: AdamState
    opt_d: AdamState
    rng: np.random.Generator
    cfg: TrainConfig
    schedule: sched.NoiseSchedule


@dataclass(frozen=True)
class MetricsRow:
    step: int
    objective: str
    d_loss: float
    g_adv: float
    g_recon: float
    g_total: float
    lr: float


def init_state(cfg: TrainConfig) -> TrainState:
    cfg.validate()
    s = cfg.build_schedule()
    models = nets.make_model_pair(
        input_dim=2, time_steps=cfg.schedule_steps, seed=cfg.seed,
        g_width=cfg.g_width, g_depth=cfg.g_depth,
        d_width=cfg.d_width, d_depth=cfg.d_depth, time_dim=cfg.time_dim,
        fourier_bands=cfg.fourier_bands,
        d_takes_extra=cfg.objective.conditions_discriminator,
    )
    opt_g = AdamState(models.generator_params(), cfg.adam_beta1_g, cfg.adam_beta2_g, cfg.adam_eps)
    opt_d = AdamState(models.discriminator_params(), cfg.adam_beta1_d, cfg.adam_beta2_d,
                      cfg.adam_eps)
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0x54524E]))
    return TrainState(0, models, opt_g, opt_d, rng, cfg, s)


def sample_time(cfg: TrainConfig, rng: np.random.Generator) -> tuple[int, int]:
    """Draw the (noisier, cleaner) index pair for one step.

    ``coarse`` draws t uniformly on 1..T and sets t_prev = max(0, t - S);
    ``uniform_prev`` draws t_prev uniformly on 0..T-1 and noises up by S.
    """
    T, S = cfg.schedule_steps, cfg.step_size
    if cfg.time_sampling == "coarse":
        t = int(rng.integers(1, T + 1))
        return t, max(0, t - S)
    t_prev = int(rng.integers(0, T))
    return min(t_prev + S, T), t_prev


def warmup_lr(step: int, cfg: TrainConfig) -> float:
    """Linear ramp from 0 to the peak over the warm-up span, then flat."""
    if step < 0:
        raise ValueError(f"step must be >= 0, got {step}")
    if cfg.warmup_steps <= 0:
        return cfg.lr_peak
    return cfg.lr_peak * min(1.0, step / cfg.warmup_steps)


def _zero_grads(params: dict[str, Tensor]) -> None:
    for p in params.values():
        p.grad = None


def _clip_global_norm(params: dict[str, Tensor], max_norm: float) -> None:
    total = 0.0
    for p in params.values():
        if p.grad is not None:
            total += float(np.sum(p.grad * p.grad))
    norm = math.sqrt(total)
    if norm > max_norm and norm > 0.0:
        factor = max_norm / norm
        for p in params.values():
            if p.grad is not None:
                p.grad = p.grad * factor  # rebind: the buffer may be shared


def _params_finite(params: dict[str, Tensor]) -> bool:
    return all(np.isfinite(p.data).all() for p in params.values())


def train_step(state: TrainState, cfg: TrainConfig, data_batch: np.ndarray) -> obj.LossBreakdown:
    """One discriminator update then one generator update on a fresh draw."""
    if len(data_batch) == 0:
        raise ValueError("empty data batch")
    kind = cfg.objective
    s = state.schedule
    step = state.step + 1
    lr = warmup_lr(step, cfg)
    x0 = np.asarray(data_batch, dtype=np.float64)

    t, t_prev = sample_time(cfg, state.rng)
    x_prev, x_t, eps_fake = obj.draw_training_noises(s, x0, t, t_prev, state.rng)
    t_disc = t_prev if cfg.disc_time == "prev" else t

    # The generator pass is recorded once and shared: the discriminator phase
    # sees its values detached, the generator phase backpropagates through it
    # against the already-updated discriminator.
    x0_hat = nets.generator_forward(state.models, Tensor(x_t), t)

    d_loss = 0.0
    if kind.adversarial:
        x_prev_hat = obj.parameterize_prev(kind, s, x0_hat, x_t, t, eps_fake, t_prev)
        b = len(x0)
        with ad.fresh_tape():
            both = Tensor(np.vstack([x_prev, x_prev_hat.data]))
            extra2 = Tensor(np.vstack([x_t, x_t])) if kind.conditions_discriminator else None
            logits_both = nets.discriminator_forward(state.models, both, t_disc, extra2)
            d_loss_t = obj.discriminator_loss(kind, ad.rows(logits_both, 0, b),
                                              ad.rows(logits_both, b, 2 * b))
            d_loss = float(d_loss_t.data)
            if not math.isfinite(d_loss):
                raise DivergenceError(f"non-finite discriminator loss at step {step}", step)
            phi = state.models.discriminator_params()
            _zero_grads(phi)
            ad.backward(d_loss_t)
        state.opt_d.step(phi, lr)
        if not (_params_finite(phi) and state.opt_d.finite()):
            raise DivergenceError(f"non-finite discriminator parameter at step {step}", step)

    g_adv = 0.0
    if kind.adversarial:
        extra = Tensor(x_t) if kind.conditions_discriminator else None
        logits = nets.discriminator_forward(state.models, x_prev_hat, t_disc, extra)
        g_adv_t = obj.generator_adversarial_loss(logits)
        if kind is obj.ObjectiveKind.DDGAN:
            g_recon = 0.0
            g_total_t = g_adv_t
        else:
            g_recon_t = obj.reconstruction_loss(kind, s, x0, x0_hat, x_prev, x_prev_hat,
                                                t, cfg.gamma_mode)
            g_recon = float(g_recon_t.data)
            g_total_t = g_adv_t + ad.scale(g_recon_t, cfg.lambda_kl)
        g_adv = float(g_adv_t.data)
    else:
        g_total_t = obj.reconstruction_loss(kind, s, x0, x0_hat, None, None, t)
        g_recon = float(g_total_t.data)
    g_total = float(g_total_t.data)
    if not math.isfinite(g_total):
        raise DivergenceError(f"non-finite generator loss at step {step}", step)

    theta = state.models.generator_params()
    _zero_grads(theta)
    if kind.adversarial:
        _zero_grads(state.models.discriminator_params())
    ad.backward(g_total_t)
    _clip_global_norm(theta, cfg.grad_clip_g)
    state.opt_g.step(theta, lr)
    if not (_params_finite(theta) and state.opt_g.finite()):
        raise DivergenceError(f"non-finite generator parameter at step {step}", step)
    nets.ema_update(state.models, cfg.ema_decay)

    state.step = step
    return obj.LossBreakdown(d_loss, g_adv, g_recon, g_total)


def _batch_source(data) -> Callable[[np.random.Generator, int], np.ndarray]:
    if isinstance(data, data_eval.ToySpec):
        return lambda rng, n: data_eval.sample_toy(data, n, rng)
    if isinstance(data, np.ndarray):
        arr = np.asarray(data, dtype=np.float64)

        def from_array(rng: np.random.Generator, n: int) -> np.ndarray:
            idx = rng.integers(0, len(arr), size=n)
            return arr[idx]
        return from_array
    if callable(data):
        return data
    raise TypeError(f"unsupported dataset type {type(data)!r}")


def run(cfg: TrainConfig, data, *, state: Optional[TrainState] = None,
        on_metrics: Optional[Callable[[MetricsRow], None]] = None) -> TrainState:
    """Train for ``cfg.total_steps`` steps (continuing from ``state`` if given).

    ``data`` may be a :class:`~ufogen.data_eval.ToySpec` (fresh mixture draws
    every step), a fixed ``(n, 2)`` array (random minibatches), or a callable
    ``(rng, n) -> array``.  Emits a metrics row every ``cfg.metrics_every``
    steps and at the final step.  On divergence, raises
    :class:`DivergenceError` carrying the last healthy snapshot.
    """
    cfg.validate()
    if state is None:
        state = init_state(cfg)
    batch_fn = _batch_source(data)
    snapshot: Optional[TrainState] = None
    try:
        while state.step < cfg.total_steps:
            batch = batch_fn(state.rng, cfg.batch_size)
            losses = train_step(state, cfg, batch)
            if state.step % cfg.metrics_every == 0 or state.step == cfg.total_steps:
                if on_metrics is not None:
                    on_metrics(MetricsRow(state.step, cfg.objective.value, losses.d_loss,
                                          losses.g_adv, losses.g_recon, losses.g_total,
                                          warmup_lr(state.step, cfg)))
                snapshot = copy.deepcopy(state)
    except DivergenceError as err:
        raise DivergenceError(str(err), err.step, snapshot) from None
    return state


# ----------------------------------------------------------------------
# checkpoint format
#
# little-endian:  magic "UFOG" | u32 version | u64 config-blob length |
# UTF-8 config text | u32 tensor count | per tensor: u16 name length,
# name UTF-8, u8 rank, u64 x rank extents, f64 x prod(extents) payload |
# u32 CRC32 of all preceding bytes.
# ----------------------------------------------------------------------

_MAGIC = b"UFOG"
_VERSION = 1
_RNG_KEY = "meta.rng_pcg64"


def _rng_to_words(rng: np.random.Generator) -> np.ndarray:
    st = rng.bit_generator.state
    if st.get("bit_generator") != "PCG64":
        raise CheckpointError(f"unsupported bit generator {st.get('bit_generator')!r}")
    mask = (1 << 64) - 1
    inner = st["state"]
    words = [inner["state"] & mask, (inner["state"] >> 64) & mask,
             inner["inc"] & mask, (inner["inc"] >> 64) & mask,
             int(st["has_uint32"]), int(st["uinteger"])]
    return np.array(words, dtype=np.uint64).view(np.float64)


def _rng_from_words(words: np.ndarray) -> np.random.Generator:
    w = np.ascontiguousarray(words, dtype=np.float64).view(np.uint64)
    if w.shape != (6,):
        raise CheckpointError(f"bad rng state vector of shape {w.shape}")
    rng = np.random.Generator(np.random.PCG64())
    rng.bit_generator.state = {
        "bit_generator": "PCG64",
        "state": {"state": int(w[0]) | (int(w[1]) << 64),
                  "inc": int(w[2]) | (int(w[3]) << 64)},
        "has_uint32": int(w[4]),
        "uinteger": int(w[5]),
    }
    return rng


def _state_tensors(state: TrainState) -> dict[str, np.ndarray]:
    tensors: dict[str, np.ndarray] = {}
    for k, p in state.models.params.items():
        tensors[f"param.{k}"] = p.data
    for k, a in state.models.ema.items():
        tensors[f"ema.{k}"] = a
    for name, opt in (("opt_g", state.opt_g), ("opt_d", state.opt_d)):
        for k, a in opt.m.items():
            tensors[f"{name}.m.{k}"] = a
        for k, a in opt.v.items():
            tensors[f"{name}.v.{k}"] = a
        tensors[f"meta.{name}_t"] = np.array(float(opt.t))
    tensors["meta.step"] = np.array(float(state.step))
    tensors[_RNG_KEY] = _rng_to_words(state.rng)
    return tensors


def save_checkpoint(state: TrainState, path) -> None:
    """Write the complete training state; the round trip is byte-exact."""
    blob = format_config_text(config_to_flat(state.cfg)).encode("utf-8")
    tensors = _state_tensors(state)
    buf = bytearray()
    buf += _MAGIC
    buf += struct.pack("<I", _VERSION)
    buf += struct.pack("<Q", len(blob))
    buf += blob
    buf += struct.pack("<I", len(tensors))
    for name in sorted(tensors):
        arr = np.asarray(tensors[name], dtype=np.float64, order="C")
        encoded = name.encode("utf-8")
        buf += struct.pack("<H", len(encoded))
        buf += encoded
        buf += struct.pack("<B", arr.ndim)
        buf += struct.pack(f"<{arr.ndim}Q", *arr.shape)
        buf += arr.tobytes()
    buf += struct.pack("<I", zlib.crc32(bytes(buf)))
    with open(path, "wb") as fh:
        fh.write(bytes(buf))


class _Reader:
    def __init__(self, raw: bytes):
        self.raw = raw
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.raw):
            raise CheckpointError("checkpoint truncated")
        out = self.raw[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def load_checkpoint(path) -> TrainState:
    """Parse and validate a checkpoint, rebuilding the full training state."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < len(_MAGIC) + 8 + 4:
        raise CheckpointError("checkpoint truncated")
    if zlib.crc32(raw[:-4]) != struct.unpack("<I", raw[-4:])[0]:
        raise CheckpointError("checkpoint CRC mismatch")
    r = _Reader(raw[:-4])
    if r.take(4) != _MAGIC:
        raise CheckpointError("bad checkpoint magic")
    (version,) = r.unpack("<I")
    if version != _VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    (blob_len,) = r.unpack("<Q")
    try:
        cfg_text = r.take(blob_len).decode("utf-8")
    except UnicodeDecodeError as err:
        raise CheckpointError(f"config blob is not UTF-8: {err}") from None
    try:
        cfg = config_from_flat(parse_config_text(cfg_text, CONFIG_SCHEMA))
    except ConfigError as err:
        raise CheckpointError(f"bad config blob: {err}") from None

    (count,) = r.unpack("<I")
    tensors: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = r.unpack("<H")
        name = r.take(name_len).decode("utf-8")
        (rank,) = r.unpack("<B")
        shape = r.unpack(f"<{rank}Q") if rank else ()
        size = int(np.prod(shape)) if rank else 1
        payload = r.take(8 * size)
        tensors[name] = np.frombuffer(payload, dtype="<f8").reshape(shape).copy()
    if r.pos != len(r.raw):
        raise CheckpointError("trailing bytes after tensor table")

    state = init_state(cfg)
    expected = _state_tensors(state)
    if set(expected) != set(tensors):
        missing = sorted(set(expected) ^ set(tensors))
        raise CheckpointError(f"tensor table mismatch: {missing[:4]}")
    for name, arr in tensors.items():
        if arr.shape != expected[name].shape:
            raise CheckpointError(f"tensor {name!r} has shape {arr.shape}, "
                                  f"expected {expected[name].shape}")

    for k in state.models.params:
        state.models.params[k].data = tensors[f"param.{k}"]
    for k in state.models.ema:
        state.models.ema[k] = tensors[f"ema.{k}"]
    for name, opt in (("opt_g", state.opt_g), ("opt_d", state.opt_d)):
        for k in opt.m:
            opt.m[k] = tensors[f"{name}.m.{k}"]
            opt.v[k] = tensors[f"{name}.v.{k}"]
        opt.t = int(tensors[f"meta.{name}_t"])
    state.step = int(tensors["meta.step"])
    state.rng = _rng_from_words(tensors[_RNG_KEY])
    return state

import math, sys, time
import numpy as np
from ufogen import trainer, data_eval, sampler, schedule as sched
from ufogen.objectives import ObjectiveKind

def power_schedule(T, ab_end, p, floor=1e-4):
    ts = np.arange(0, T + 1) / T
    ab_target = np.exp((ts ** p) * math.log(ab_end))
    beta = np.zeros(T + 1)
    beta[1:] = np.clip(1.0 - ab_target[1:] / ab_target[:-1], floor, 1 - 1e-6)
    alpha = 1.0 - beta
    ab = np.cumprod(alpha)
    t = np.arange(1, T + 1)
    c0 = np.zeros(T+1); ct = np.zeros(T+1); var = np.zeros(T+1)
    c0[1:] = np.sqrt(ab[t-1]) * beta[t] / (1 - ab[t])
    ct[1:] = np.sqrt(alpha[t]) * (1 - ab[t-1]) / (1 - ab[t])
    var[1:] = beta[t] * (1 - ab[t-1]) / (1 - ab[t])
    return sched.NoiseSchedule(beta, alpha, ab, c0, ct, var)

def probe(tag, p, gamma_mode, lr=4e-4, steps=8000, batch=128):
    cfg = trainer.TrainConfig(objective=ObjectiveKind.UFOGEN, schedule_steps=8, step_size=2,
                              gamma_mode=gamma_mode, lr_peak=lr, batch_size=batch,
                              total_steps=steps, metrics_every=10**9)
    state = trainer.init_state(cfg)
    state = trainer.TrainState(0, state.models, state.opt_g, state.opt_d, state.rng, cfg,
                               power_schedule(8, 0.008, p))
    spec = data_eval.ToySpec()
    batch_fn = trainer._batch_source(spec)
    t0 = time.perf_counter(); marks = []
    while state.step < cfg.total_steps:
        trainer.train_step(state, cfg, batch_fn(state.rng, cfg.batch_size))
        if state.step % 2000 == 0:
            x = sampler.one_step_sample(state.models, state.schedule, 4000, np.random.default_rng(7))
            rep = data_eval.mode_metrics(x, spec)
            marks.append(f"{state.step}:m{rep.modes_covered}/h{rep.high_quality_fraction:.3f}")
    print(f"{tag:26s} {' '.join(marks)} [{time.perf_counter()-t0:.0f}s]", flush=True)

probe("p12 const", 12, "constant")
probe("p12 derived", 12, "derived")
probe("p8 const", 8, "constant")

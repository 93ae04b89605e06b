import time
import numpy as np
from ufogen import trainer, data_eval, sampler
from ufogen.objectives import ObjectiveKind

spec = data_eval.ToySpec()

def probe(tag, **kw):
    cfg = trainer.TrainConfig(objective=ObjectiveKind.UFOGEN, metrics_every=10**9, **kw)
    state = trainer.init_state(cfg)
    batch_fn = trainer._batch_source(spec)
    t0=time.perf_counter(); marks=[]
    while state.step < cfg.total_steps:
        losses = trainer.train_step(state, cfg, batch_fn(state.rng, cfg.batch_size))
        if state.step % 3000 == 0:
            x = sampler.one_step_sample(state.models, state.schedule, 4000, np.random.default_rng(7))
            rep = data_eval.mode_metrics(x, spec)
            marks.append(f"{state.step}:m{rep.modes_covered}/h{rep.high_quality_fraction:.2f}")
    print(f"{tag:32s} {' '.join(marks)} [{time.perf_counter()-t0:.0f}s d={losses.d_loss:.2f}]", flush=True)

common = dict(schedule_steps=8, step_size=2, beta_min=0.08, beta_max=0.75, batch_size=128, total_steps=12000)
probe("ff const lr4e-4", gamma_mode="constant", lr_peak=4e-4, **common)
probe("ff derived lr4e-4", gamma_mode="derived", lr_peak=4e-4, **common)
probe("ff derived lr1e-3", gamma_mode="derived", lr_peak=1e-3, **common)
probe("ff const lr1e-3", gamma_mode="constant", lr_peak=1e-3, **common)

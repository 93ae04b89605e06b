import time
import numpy as np
from ufogen import trainer, data_eval, sampler, networks
from ufogen.objectives import ObjectiveKind

spec = data_eval.ToySpec()

def probe(tag, max_freq=None, **kw):
    cfg = trainer.TrainConfig(objective=ObjectiveKind.UFOGEN, metrics_every=10**9, **kw)
    state = trainer.init_state(cfg)
    if max_freq is not None:
        state.models.embed = networks.TimeEmbedding(state.models.arch.time_dim, max_freq)
    batch_fn = trainer._batch_source(spec)
    t0=time.perf_counter(); marks=[]
    while state.step < cfg.total_steps:
        losses = trainer.train_step(state, cfg, batch_fn(state.rng, cfg.batch_size))
        if state.step % 4000 == 0:
            x = sampler.one_step_sample(state.models, state.schedule, 4000, np.random.default_rng(7))
            rep = data_eval.mode_metrics(x, spec)
            marks.append(f"{state.step}:m{rep.modes_covered}/h{rep.high_quality_fraction:.2f}")
            print(f"  {tag} {marks[-1]}", flush=True)
    print(f"{tag:30s} {' '.join(marks)} [{time.perf_counter()-t0:.0f}s]", flush=True)

common = dict(schedule_steps=8, step_size=2, beta_min=0.08, beta_max=0.75, gamma_mode="derived", lr_peak=2e-4)
probe("A depth-long", batch_size=128, total_steps=24000, **common)
probe("B maxfreq8", batch_size=128, total_steps=16000, max_freq=8.0, **common)
probe("C batch256", batch_size=256, total_steps=12000, max_freq=8.0, **common)

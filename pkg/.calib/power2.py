import sys, time
import numpy as np
from ufogen import trainer, data_eval, sampler
from ufogen.objectives import ObjectiveKind

spec = data_eval.ToySpec()

def probe(tag, **kw):
    cfg = trainer.TrainConfig(objective=ObjectiveKind.UFOGEN, metrics_every=10**9, **kw)
    state = trainer.init_state(cfg)
    batch_fn = trainer._batch_source(spec)
    t0 = time.perf_counter(); marks=[]
    while state.step < cfg.total_steps:
        trainer.train_step(state, cfg, batch_fn(state.rng, cfg.batch_size))
        if state.step % 5000 == 0:
            x = sampler.one_step_sample(state.models, state.schedule, 4000, np.random.default_rng(7))
            rep = data_eval.mode_metrics(x, spec)
            marks.append(f"{state.step}:m{rep.modes_covered}/h{rep.high_quality_fraction:.3f}")
            print(f"  {tag} {marks[-1]}", flush=True)
    print(f"{tag:26s} {' '.join(marks)} [{time.perf_counter()-t0:.0f}s]", flush=True)

which = int(sys.argv[1])
if which == 1:
    probe("P1 der coarse b256", gamma_mode="derived", lr_peak=4e-4, batch_size=256, total_steps=30000)
elif which == 2:
    probe("P2 der uprev b256", gamma_mode="derived", lr_peak=4e-4, batch_size=256, total_steps=30000, time_sampling="uniform_prev")
elif which == 3:
    probe("P3 const uprev b256", gamma_mode="constant", lr_peak=4e-4, batch_size=256, total_steps=30000, time_sampling="uniform_prev")
elif which == 4:
    probe("P4 der uprev b512 lr1e-3", gamma_mode="derived", lr_peak=1e-3, batch_size=512, total_steps=15000, time_sampling="uniform_prev")

import sys, time
import numpy as np
from ufogen import trainer, data_eval, sampler
from ufogen.objectives import ObjectiveKind

spec = data_eval.ToySpec()
tag, kwstr = sys.argv[1], sys.argv[2]
kw = eval(kwstr)
cfg = trainer.TrainConfig(objective=ObjectiveKind.UFOGEN, metrics_every=10**9, **kw)
state = trainer.init_state(cfg)
batch_fn = trainer._batch_source(spec)
t0 = time.perf_counter()
while state.step < cfg.total_steps:
    trainer.train_step(state, cfg, batch_fn(state.rng, cfg.batch_size))
    if state.step % 2500 == 0:
        x1 = sampler.one_step_sample(state.models, state.schedule, 4000, np.random.default_rng(7))
        r1 = data_eval.mode_metrics(x1, spec)
        x4 = sampler.multi_step_sample(state.models, state.schedule, 4, "forward", 4000, np.random.default_rng(8))
        r4 = data_eval.mode_metrics(x4, spec)
        print(f"{tag} {state.step}: 1step m{r1.modes_covered}/h{r1.high_quality_fraction:.3f} "
              f"4step m{r4.modes_covered}/h{r4.high_quality_fraction:.3f}", flush=True)
print(f"{tag} done [{time.perf_counter()-t0:.0f}s]", flush=True)

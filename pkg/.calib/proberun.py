import sys, time
import numpy as np
from ufogen import trainer, data_eval, sampler, networks
from ufogen.objectives import ObjectiveKind

tag = sys.argv[1]
kw = eval(sys.argv[2])
max_freq = kw.pop("max_freq", None)
spec = data_eval.ToySpec()
cfg = trainer.TrainConfig(objective=ObjectiveKind.UFOGEN, metrics_every=10**9, **kw)
state = trainer.init_state(cfg)
if max_freq is not None:
    state.models.embed = networks.TimeEmbedding(state.models.arch.time_dim, max_freq)
batch_fn = trainer._batch_source(spec)
t0 = time.perf_counter()
while state.step < cfg.total_steps:
    trainer.train_step(state, cfg, batch_fn(state.rng, cfg.batch_size))
    if state.step % 5000 == 0:
        x = sampler.one_step_sample(state.models, state.schedule, 4000, np.random.default_rng(7))
        rep = data_eval.mode_metrics(x, spec)
        print(f"{tag} {state.step}: m{rep.modes_covered}/h{rep.high_quality_fraction:.3f}", flush=True)
print(f"{tag} done [{time.perf_counter()-t0:.0f}s]", flush=True)

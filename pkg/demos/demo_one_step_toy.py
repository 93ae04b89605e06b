"""Train the one-step-capable objective on the 25-Gaussian lattice and plot it.

Trains two models with identical settings except for the objective: the
clean-sample-matching hybrid (one-step capable) and the noisy-sample-matching
variant it improves on.  Renders a side-by-side scatter of their ONE-step
samples plus the four-step samples of each, the toy-scale counterpart of the
headline comparison.

Run:  python demos/demo_one_step_toy.py  (writes demos/out/one_step_toy.svg)
"""

import pathlib
import time

import numpy as np

from ufogen import data_eval, sampler, svgplot, trainer
from ufogen.objectives import ObjectiveKind

OUT = pathlib.Path(__file__).parent / "out"
OUT.mkdir(exist_ok=True)

spec = data_eval.ToySpec()
panels = []

for kind in (ObjectiveKind.UFOGEN, ObjectiveKind.SIDDM):
    cfg = trainer.TrainConfig(objective=kind, seed=0)
    print(f"=== training {kind.value} ({cfg.total_steps} steps) ===")
    t0 = time.time()
    state = trainer.run(cfg, spec, on_metrics=lambda r: print(
        f"  step {r.step:6d}  d {r.d_loss:7.4f}  adv {r.g_adv:7.4f} "
        f" recon {r.g_recon:8.4f}") if r.step % 5000 == 0 else None)
    print(f"  trained in {time.time() - t0:.0f}s")

    for k in (1, 4):
        rng = np.random.default_rng(7)
        if k == 1:
            samples = sampler.one_step_sample(state.models, state.schedule, 10_000, rng)
        else:
            mode = kind.prev_parameterization
            samples = sampler.multi_step_sample(state.models, state.schedule, k,
                                                mode, 10_000, rng)
        rep = data_eval.mode_metrics(samples, spec)
        print(f"  {kind.value} {k}-step: modes {rep.modes_covered}/25, "
              f"high-quality {rep.high_quality_fraction:.3f}")
        panels.append((samples, f"{kind.value} ({k} step{'s' if k > 1 else ''})"))

svgplot.write_scatter(OUT / "one_step_toy.svg", panels, spec.centers)
print(f"wrote {OUT / 'one_step_toy.svg'}")

"""Sweep the training denoising step size and score one-step samples.

The gap S between the noisy index t and the cleaner index max(0, t - S)
controls which noise levels the discriminator works at.  S = T degenerates
into a plain GAN on clean data (adversarial smoothing lost), tiny S leaves
the terminal map supervised at nearly pure noise; a quarter of the grid is
the reliable middle.  This is the toy-scale rendition of the step-size
ablation at scale.

Run:  python demos/demo_step_size_sweep.py
"""

import dataclasses
import pathlib

import numpy as np

from ufogen import data_eval, sampler, svgplot, trainer
from ufogen.objectives import ObjectiveKind

OUT = pathlib.Path(__file__).parent / "out"
OUT.mkdir(exist_ok=True)

spec = data_eval.ToySpec()
base = trainer.TrainConfig(objective=ObjectiveKind.UFOGEN, seed=0,
                           total_steps=12_000)
T = base.schedule_steps

panels = []
print(f"{'S':>4s} {'modes':>6s} {'high-quality':>13s}")
for S in (max(1, T // 8), T // 4, T // 2, T):
    cfg = dataclasses.replace(base, step_size=S)
    state = trainer.run(cfg, spec)
    samples = sampler.one_step_sample(state.models, state.schedule, 10_000,
                                      np.random.default_rng(7))
    rep = data_eval.mode_metrics(samples, spec)
    print(f"{S:4d} {rep.modes_covered:6d} {rep.high_quality_fraction:13.3f}")
    panels.append((samples, f"S = {S} (one step)"))

svgplot.write_scatter(OUT / "step_size_sweep.svg", panels, spec.centers)
print(f"wrote {OUT / 'step_size_sweep.svg'}")

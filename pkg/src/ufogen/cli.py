"""Operator command line: train, sample, eval, verify, plot, ablate.

Exit codes: 0 success, 1 verification failure, 2 configuration error,
3 training divergence, 4 I/O error.  Every command is deterministic given
its flags and seeds; output files contain no wall-clock fields and rerunning
a command overwrites them byte-identically.
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys
from pathlib import Path

import numpy as np

from . import data_eval as de
from . import sampler
from . import svgplot
from . import trainer
from . import verify
from .config import ConfigError, format_config_text, parse_config_text
from .objectives import ObjectiveKind

METRICS_HEADER = "step,objective,d_loss,g_adv,g_recon,g_total,lr"

FULL_SCHEMA = dict(trainer.CONFIG_SCHEMA)
FULL_SCHEMA["data.kind"] = str
FULL_SCHEMA["data.sigma_mode"] = float


def _load_config(path) -> tuple[trainer.TrainConfig, de.ToySpec, dict]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as err:
        raise ConfigError(f"cannot read config file: {err}") from None
    values = parse_config_text(text, FULL_SCHEMA)

    env_seed = os.environ.get("UFOGEN_SEED")
    if env_seed is not None:
        try:
            values["trainer.seed"] = int(env_seed)
        except ValueError:
            raise ConfigError(f"UFOGEN_SEED must be an integer, got {env_seed!r}") from None

    data_kind = values.pop("data.kind", "grid25")
    data_sigma = values.pop("data.sigma_mode", 0.05)
    cfg = trainer.config_from_flat(values)
    try:
        spec = de.ToySpec(kind=data_kind, sigma_mode=data_sigma)
    except ValueError as err:
        raise ConfigError(str(err)) from None
    resolved = dict(trainer.config_to_flat(cfg))
    resolved["data.kind"] = spec.kind
    resolved["data.sigma_mode"] = spec.sigma_mode
    return cfg, spec, resolved


def cmd_train(args) -> int:
    cfg, spec, resolved = _load_config(args.config)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "config.txt").write_text(format_config_text(resolved), encoding="utf-8")

    rows = [METRICS_HEADER]

    def record(row: trainer.MetricsRow) -> None:
        rows.append(f"{row.step},{row.objective},{row.d_loss:.8f},{row.g_adv:.8f},"
                    f"{row.g_recon:.8f},{row.g_total:.8f},{row.lr:.3e}")
        if args.quiet is False:
            print(rows[-1], flush=True)

    state = trainer.init_state(cfg)
    try:
        state = trainer.run(cfg, spec, state=state, on_metrics=record)
    except trainer.DivergenceError as err:
        (out_dir / "metrics.csv").write_text("\n".join(rows) + "\n", encoding="utf-8")
        if err.last_state is not None:
            trainer.save_checkpoint(err.last_state, out_dir / f"step_{err.last_state.step}.ufog")
        print(f"training diverged at step {err.step}: {err}", file=sys.stderr)
        return 3
    (out_dir / "metrics.csv").write_text("\n".join(rows) + "\n", encoding="utf-8")
    trainer.save_checkpoint(state, out_dir / f"step_{state.step}.ufog")
    return 0


def cmd_sample(args) -> int:
    state = trainer.load_checkpoint(args.checkpoint)
    rng = np.random.default_rng(np.random.SeedSequence([args.seed, 0x73616D]))
    use_ema = args.ema
    if args.steps == 1:
        samples = sampler.one_step_sample(state.models, state.schedule, args.n, rng, use_ema)
    else:
        mode = args.mode
        if mode == "auto":
            mode = state.cfg.objective.prev_parameterization
        samples = sampler.multi_step_sample(state.models, state.schedule, args.steps,
                                            mode, args.n, rng, use_ema)
    de.save_samples(args.out, samples, kind="model", seed=args.seed)
    return 0


def cmd_eval(args) -> int:
    samples, _ = de.load_samples(args.samples)
    try:
        spec = de.ToySpec(kind=args.kind, sigma_mode=args.sigma_mode)
        report = de.evaluate_samples(samples, spec, seed=args.seed)
    except ValueError as err:
        raise ConfigError(str(err)) from None
    line = report.csv_row()
    Path(args.out).write_text(
        "modes_covered,high_quality_fraction,mmd,sample_count\n" + line + "\n",
        encoding="utf-8")
    print(line)
    return 0


def cmd_verify(args) -> int:
    results = verify.run_all(seed=args.seed, break_kl=args.break_kl)
    lines = ["check,measured,tolerance,bound,verdict"]
    for r in results:
        lines.append(f"{r.name},{r.measured:.6e},{r.tolerance:.1e},{r.bound},{r.verdict()}")
    Path(args.out).write_text("\n".join(lines) + "\n", encoding="utf-8")
    width = max(len(r.name) for r in results)
    for r in results:
        rel = "<" if r.bound == "upper" else ">"
        print(f"{r.name:{width}s}  {r.measured:.3e} {rel} {r.tolerance:.1e}  {r.verdict()}")
    failed = [r.name for r in results if not r.passed]
    if failed:
        print(f"FAILED: {', '.join(failed)}", file=sys.stderr)
        return 1
    return 0


def cmd_plot(args) -> int:
    panels = []
    if args.samples is not None:
        pts, meta = de.load_samples(args.samples)
        panels.append((pts, args.title or meta.get("kind", "samples")))
    for path, title in args.panel or []:
        pts, _ = de.load_samples(path)
        panels.append((pts, title))
    if not panels:
        raise ConfigError("nothing to plot: pass a samples file or --panel")
    try:
        spec = de.ToySpec(kind=args.kind, sigma_mode=args.sigma_mode)
        centers = spec.centers if spec.kind == "grid25" else None
    except ValueError as err:
        raise ConfigError(str(err)) from None
    svgplot.write_scatter(args.out, panels, centers)
    return 0


def cmd_ablate(args) -> int:
    cfg, spec, resolved = _load_config(args.config)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "config.txt").write_text(format_config_text(resolved), encoding="utf-8")

    T = cfg.schedule_steps
    gaps = []
    for S in (max(1, T // 8), T // 4, T // 2, T):
        if S >= 1 and S not in gaps:
            gaps.append(S)
    lines = ["step_size,modes_covered,high_quality_fraction,mmd,sample_count"]
    for S in gaps:
        sweep_cfg = dataclasses.replace(cfg, step_size=S)
        state = trainer.run(sweep_cfg, spec)
        rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0x61626C]))
        samples = sampler.one_step_sample(state.models, state.schedule, args.n, rng)
        report = de.evaluate_samples(samples, spec, seed=cfg.seed)
        lines.append(f"{S},{report.csv_row()}")
        print(lines[-1], flush=True)
        de.save_samples(out_dir / f"samples_S{S}.tsv", samples, kind=spec.kind, seed=cfg.seed)
    (out_dir / "ablate.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ufogen",
                                     description="diffusion-GAN toy lab")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model from a config file")
    p.add_argument("config")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("sample", help="draw samples from a checkpoint")
    p.add_argument("checkpoint")
    p.add_argument("--n", type=int, default=10000)
    p.add_argument("--steps", type=int, default=1)
    p.add_argument("--mode", choices=("auto", "forward", "posterior"), default="auto")
    p.add_argument("--seed", type=int, default=0)
    ema = p.add_mutually_exclusive_group()
    ema.add_argument("--ema", dest="ema", action="store_true", default=True)
    ema.add_argument("--no-ema", dest="ema", action="store_false")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_sample)

    p = sub.add_parser("eval", help="score a sample file against the toy mixture")
    p.add_argument("samples")
    p.add_argument("--kind", default="grid25")
    p.add_argument("--sigma-mode", type=float, default=0.05)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("verify", help="run the derivation-verification suite")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--break-kl", action="store_true",
                   help="fault injection: scale the closed-form KL by 1.01")
    p.set_defaults(fn=cmd_verify)

    p = sub.add_parser("plot", help="render sample files as an SVG scatter")
    p.add_argument("samples", nargs="?")
    p.add_argument("--title")
    p.add_argument("--panel", nargs=2, action="append", metavar=("SAMPLES", "TITLE"))
    p.add_argument("--kind", default="grid25")
    p.add_argument("--sigma-mode", type=float, default=0.05)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_plot)

    p = sub.add_parser("ablate", help="sweep the denoising step size")
    p.add_argument("config")
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int, default=10000)
    p.set_defaults(fn=cmd_ablate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2
    except trainer.DivergenceError as err:
        print(f"training diverged at step {err.step}: {err}", file=sys.stderr)
        return 3
    except trainer.CheckpointError as err:
        print(f"checkpoint error: {err}", file=sys.stderr)
        return 4
    except OSError as err:
        print(f"i/o error: {err}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())

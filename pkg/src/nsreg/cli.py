"""Command-line entry point.

Each solve subcommand builds an :class:`~nsreg.harness.ExperimentSpec`
from an optional ``key=value`` config file and the command-line flags (flags
win), runs it and writes outputs to ``--out``. The exit status is 0 when the
stopping rule fired, 3 when the iteration cap was reached and 1 on errors.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

from . import io
from .harness import ExperimentSpec, run_experiment, sweep
from .penalties import DenoiseSettings, tv_denoise
from .solver import SolverConfig

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_CAP = 3

_SOLVE_COMMANDS = {
    "solve-integral": "Integral1D",
    "solve-poisson": "PoissonSource",
    "deblur": "Deblur",
    "deautoconv": "Deautoconv",
}

# flag name -> (ExperimentSpec / SolverConfig field, parser)
_FIELDS = {
    "delta": ("delta", float),
    "delta_rel": ("delta_rel", float),
    "seed": ("seed", int),
    "penalty": ("penalty", str),
    "beta": ("beta", float),
    "phantom": ("phantom", str),
    "psf": ("psf", str),
    "out": ("out_dir", str),
    "tau": ("tau", float),
    "mu0": ("mu0", float),
    "mu1": ("mu1", float),
    "alpha0": ("alpha0", float),
    "gamma0": ("gamma0", float),
    "gamma1": ("gamma1", float),
    "rho_hat": ("rho_hat", float),
    "max_iters": ("max_outer_iters", int),
    "fixed_step": ("fixed_step", float),
    "stop": ("stop", str),
}
_CONFIG_FIELDS = set(SolverConfig.__dataclass_fields__)


def _add_experiment_flags(p):
    p.add_argument("--config", help="key=value file; keys as the long flags")
    p.add_argument("--delta", type=float, help="absolute noise level")
    p.add_argument("--delta-rel", type=float, help="relative noise level")
    p.add_argument("--seed", type=int, help="noise seed (default 0)")
    p.add_argument("--penalty", choices=("l2", "l1", "tv"))
    p.add_argument("--beta", type=float)
    p.add_argument("--phantom", help="phantom file (CSV or PGM); default: committed fixture")
    p.add_argument("--tau", type=float)
    p.add_argument("--mu0", type=float)
    p.add_argument("--mu1", type=float)
    p.add_argument("--alpha0", type=float)
    p.add_argument("--gamma0", type=float)
    p.add_argument("--gamma1", type=float)
    p.add_argument("--rho-hat", type=float)
    p.add_argument("--max-iters", type=int)
    p.add_argument("--fixed-step", type=float, help="constant step (1.0 gives iterated Tikhonov)")
    p.add_argument("--stop", choices=("rule1", "discrepancy"))


def build_parser():
    parser = argparse.ArgumentParser(
        prog="nsreg", description="Nonstationary iterative regularization with convex penalties.")
    parser.add_argument("--log-level", default="WARNING")
    sub = parser.add_subparsers(dest="command", required=True)

    for name, problem in _SOLVE_COMMANDS.items():
        p = sub.add_parser(name, help=f"run the {problem} experiment")
        _add_experiment_flags(p)
        p.add_argument("--out", help="output directory")
        if problem == "Deblur":
            p.add_argument("--psf", choices=("gaussian", "motion"))

    p = sub.add_parser("denoise-tv", help="TV denoising of a signal or image")
    p.add_argument("input", help="CSV signal or grid, or an image file")
    p.add_argument("--lam", type=float, required=True, help="TV weight")
    p.add_argument("--max-inner", type=int, default=2500)
    p.add_argument("--inner-tol", type=float, default=1e-6)
    p.add_argument("--out", required=True, help="output file (.csv or .pgm)")

    p = sub.add_parser("sweep", help="run a grid of noise levels and seeds")
    p.add_argument("problem", choices=sorted(_SOLVE_COMMANDS))
    _add_experiment_flags(p)
    p.add_argument("--psf", choices=("gaussian", "motion"))
    p.add_argument("--deltas", required=True, help="comma-separated noise levels")
    p.add_argument("--relative", action="store_true", help="treat --deltas as relative levels")
    p.add_argument("--seeds", default="0", help="comma-separated seeds")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", required=True, help="output directory")
    return parser


def _collect(args):
    """Merge config file values and flags (flags win) into field values."""
    values = {}
    if getattr(args, "config", None):
        for key, raw in io.read_keyvalue(args.config).items():
            key = key.replace("-", "_")
            if key not in _FIELDS:
                raise ValueError(f"unknown config key {key!r}")
            field, conv = _FIELDS[key]
            values[field] = conv(raw)
    for key, (field, _) in _FIELDS.items():
        value = getattr(args, key, None)
        if value is not None:
            values[field] = value
    return values


def spec_from_values(problem, values):
    values = dict(values)
    overrides = {k: values.pop(k) for k in list(values) if k in _CONFIG_FIELDS}
    if "delta" not in values and "delta_rel" not in values:
        values["delta_rel" if problem == "Deblur" else "delta"] = (
            0.0125 if problem == "Deblur" else 1e-3)
    spec = ExperimentSpec(problem=problem, **values)
    if overrides:
        spec.config = SolverConfig(**{**spec.config.__dict__, **overrides})
    return spec


def _report(result, stream):
    m = result.metrics
    line = (f"{result.spec.problem} penalty={result.spec.penalty} n_delta={m.n_delta} "
            f"termination={m.termination} relative_l2={m.relative_l2:.4g}")
    if m.psnr_db is not None:
        line += f" psnr_db={m.psnr_db:.4f}"
    print(line + f" wall_time={m.wall_time_seconds:.3f}s", file=stream)


def _cmd_solve(args, stream):
    spec = spec_from_values(_SOLVE_COMMANDS[args.command], _collect(args))
    result = run_experiment(spec)
    _report(result, stream)
    return EXIT_OK if result.ok else EXIT_CAP


def _cmd_denoise(args, stream):
    path = Path(args.input)
    settings = DenoiseSettings(args.max_inner, args.inner_tol)
    b = io.read_signal_csv(path) if path.suffix.lower() == ".csv" else io.read_pgm(path)
    z = tv_denoise(b, args.lam, settings)
    out = Path(args.out)
    if out.suffix.lower() == ".pgm":
        if z.ndim != 2:
            raise ValueError("PGM output needs a 2D input")
        io.write_pgm(out, z, vmin=0.0, vmax=1.0)
    else:
        io.write_signal_csv(out, z)
    print(f"denoised {path} -> {out}", file=stream)
    return EXIT_OK


def _cmd_sweep(args, stream):
    problem = _SOLVE_COMMANDS[args.problem]
    base = _collect(args)
    base.pop("delta", None)
    base.pop("delta_rel", None)
    out = Path(base.pop("out_dir"))
    levels = [float(v) for v in args.deltas.split(",")]
    seeds = [int(v) for v in args.seeds.split(",")]
    key = "delta_rel" if args.relative else "delta"
    specs = []
    for level in levels:
        for seed in seeds:
            vals = {**base, key: level, "seed": seed,
                    "out_dir": str(out / f"{key}_{level:g}_seed_{seed}")}
            specs.append(spec_from_values(problem, vals))
    results = sweep(specs, jobs=args.jobs)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "summary.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([key, "seed", "n_delta", "termination", "relative_l2", "psnr_db",
                         "wall_time_seconds"])
        for spec, res in zip(specs, results):
            m = res.metrics
            writer.writerow([getattr(spec, key), spec.seed, m.n_delta, m.termination,
                             repr(m.relative_l2), "" if m.psnr_db is None else repr(m.psnr_db),
                             repr(m.wall_time_seconds)])
            _report(res, stream)
    return EXIT_OK if all(r.ok for r in results) else EXIT_CAP


def main(argv=None, stream=None):
    stream = stream or sys.stdout
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.WARNING))
    handlers = {"denoise-tv": _cmd_denoise, "sweep": _cmd_sweep}
    try:
        return handlers.get(args.command, _cmd_solve)(args, stream)
    except (ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())

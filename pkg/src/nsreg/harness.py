"""Experiment orchestration: noise, metrics, fixtures and full runs.

An :class:`ExperimentSpec` names one of the four test problems, a phantom
fixture, the noise model and the solver settings. :func:`run_experiment`
synthesizes data, runs the solver, computes metrics and (optionally) writes
reconstruction, trajectory and metrics files to an output directory.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
import logging
import math
from pathlib import Path
from typing import Optional

import numpy as np

from . import io
from .linalg import Signal
from .penalties import DenoiseSettings, ElasticNetL1, SquaredNorm, TV1D, TV2DIso
from .problems import (AutoconvOperator, BlurOperator, FredholmOperator, PoissonOperator,
                       autoconv_phantom, gaussian_psf, motion_psf, piecewise_constant,
                       poisson_phantom, shepp_logan, sparse_spikes)
from .solver import SolverConfig, Termination, run_linear, run_nonlinear

log = logging.getLogger(__name__)

PROBLEMS = ("Integral1D", "PoissonSource", "Deblur", "Deautoconv")
PENALTIES = ("l2", "l1", "tv")
FIXTURE_DIR = Path(__file__).resolve().parent / "fixtures"


# ---------------------------------------------------------------------------
# noise and metrics

def add_noise(y, delta, seed):
    """Return ``y + delta * e / ||e||`` with ``e`` standard normal.

    The norm is the one of ``y``'s inner product, so ``||result - y|| = delta``
    up to rounding. The generator is numpy's PCG64 seeded with ``seed``.
    """
    if not delta >= 0:
        raise ValueError(f"delta must be >= 0, got {delta}")
    if delta == 0:
        return y
    rng = np.random.Generator(np.random.PCG64(seed))
    e = y.like(rng.standard_normal(y.shape))
    return y + (delta / e.norm()) * e


def add_relative_noise(b, delta_rel, seed):
    """Gaussian noise with ``||e|| / ||b|| = delta_rel``.

    Returns
    -------
    noisy : Signal
    delta : float
        The induced absolute noise level ``delta_rel * ||b||``, to be passed
        to the stopping rule.
    """
    if not delta_rel >= 0:
        raise ValueError(f"delta_rel must be >= 0, got {delta_rel}")
    bnorm = b.norm()
    if bnorm == 0:
        raise ValueError("relative noise is undefined for zero data")
    delta = delta_rel * bnorm
    return add_noise(b, delta, seed), delta


def psnr(x_true, x_rec):
    """``20 log10(sqrt(mn) max(X) / ||X - X_rec||_F)`` in dB.

    Returns ``inf`` when the images coincide.
    """
    a = np.asarray(getattr(x_true, "values", x_true), dtype=float)
    b = np.asarray(getattr(x_rec, "values", x_rec), dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    err = np.linalg.norm(a - b)
    if err == 0:
        return math.inf
    return float(20.0 * np.log10(np.sqrt(a.size) * a.max() / err))


# ---------------------------------------------------------------------------
# fixtures

_FIXTURES = {
    "sparse_spikes.csv": "Integral1D sparse truth (N=400)",
    "piecewise_constant.csv": "Integral1D piecewise-constant truth (N=400)",
    "autoconv_piecewise.csv": "Deautoconv truth (N=400)",
    "poisson_rectangles.csv": "PoissonSource truth (N=120, interior grid)",
    "shepp_logan.csv": "Deblur truth (200 x 200)",
    "shepp_logan.pgm": "Deblur truth as 16-bit PGM",
    "psf_gaussian_15_30.csv": "15 x 15 Gaussian PSF, sigma 30",
    "psf_motion_30_40.csv": "motion PSF, length 30, angle 40 degrees",
}


def fixture_path(name):
    path = FIXTURE_DIR / name
    if not path.exists():
        raise FileNotFoundError(f"no fixture named {name!r} in {FIXTURE_DIR}")
    return path


def write_fixtures(directory=FIXTURE_DIR):
    """Regenerate every committed fixture file in ``directory``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    t = np.linspace(0.0, 1.0, 401)
    io.write_signal_csv(directory / "sparse_spikes.csv", sparse_spikes(t))
    io.write_signal_csv(directory / "piecewise_constant.csv", piecewise_constant(t))
    io.write_signal_csv(directory / "autoconv_piecewise.csv", autoconv_phantom(t))
    io.write_signal_csv(directory / "poisson_rectangles.csv", poisson_phantom(120), fmt="%.12g")
    sl = shepp_logan(200)
    io.write_signal_csv(directory / "shepp_logan.csv", sl, fmt="%.12g")
    io.write_pgm(directory / "shepp_logan.pgm", sl, maxval=65535, vmin=0.0, vmax=1.0)
    io.write_signal_csv(directory / "psf_gaussian_15_30.csv", gaussian_psf(15, 30.0))
    io.write_signal_csv(directory / "psf_motion_30_40.csv", motion_psf(30, 40))
    return sorted(_FIXTURES)


_DEFAULT_PHANTOM = {
    ("Integral1D", "l1"): "sparse_spikes.csv",
    ("Integral1D", "l2"): "piecewise_constant.csv",
    ("Integral1D", "tv"): "piecewise_constant.csv",
    ("PoissonSource", None): "poisson_rectangles.csv",
    ("Deblur", None): "shepp_logan.csv",
    ("Deautoconv", None): "autoconv_piecewise.csv",
}


def default_phantom(problem, penalty="tv"):
    key = (problem, penalty) if problem == "Integral1D" else (problem, None)
    return str(fixture_path(_DEFAULT_PHANTOM[key]))


def load_phantom(path):
    """Load a phantom from CSV (1D or 2D) or from an image file."""
    path = Path(path)
    if path.suffix.lower() == ".csv":
        return io.read_signal_csv(path)
    return io.read_pgm(path)


# ---------------------------------------------------------------------------
# experiment description

def default_beta(problem, penalty):
    if penalty == "l2":
        return None
    if problem == "Integral1D":
        return 10.0 if penalty == "l1" else 100.0
    if problem == "Deblur":
        return 1.0
    return 20.0


def default_config(problem, penalty="tv", beta=None):
    """Published parameter set for each problem."""
    beta = beta if beta is not None else default_beta(problem, penalty)
    if problem == "Integral1D":
        mu0 = 1.0 if penalty == "l2" else 1.0 / beta
        return SolverConfig(tau=1.01, mu0=mu0, mu1=1.0, alpha0=0.01, gamma0=0.6,
                            gamma1=0.99, rho_hat=2.5)
    if problem == "PoissonSource":
        mu0 = 0.4 if penalty == "l2" else 0.4 / beta
        return SolverConfig(tau=1.01, mu0=mu0, mu1=2.0, alpha0=1e-3, gamma0=0.5,
                            gamma1=0.95, rho_hat=2.0)
    if problem == "Deblur":
        return SolverConfig(tau=1.001, mu0=0.4, mu1=2.0, alpha0=1.0, gamma0=0.5,
                            gamma1=0.99, rho_hat=2.5)
    if problem == "Deautoconv":
        mu0 = 0.4 if penalty == "l2" else 0.4 / beta
        return SolverConfig(tau=1.01, mu0=mu0, mu1=1.0, alpha0=1.0, gamma0=0.5,
                            gamma1=0.99, rho_hat=3.0, max_outer_iters=200)
    raise ValueError(f"unknown problem {problem!r}")


_INNER = {
    "Integral1D": DenoiseSettings(2500, 1e-6),
    "PoissonSource": DenoiseSettings(400, 0.0),
    "Deblur": DenoiseSettings(200, 0.0),
    "Deautoconv": DenoiseSettings(1200, 1e-5),
}


def build_penalty(problem, penalty, beta=None, inner=None):
    beta = beta if beta is not None else default_beta(problem, penalty)
    if penalty == "l2":
        return SquaredNorm()
    if penalty == "l1":
        return ElasticNetL1(beta)
    if penalty == "tv":
        cls = TV2DIso if problem in ("PoissonSource", "Deblur") else TV1D
        return cls(beta, inner or _INNER[problem])
    raise ValueError(f"unknown penalty {penalty!r}")


@dataclass
class ExperimentSpec:
    """Everything needed to reproduce one run.

    Exactly one of ``delta`` (absolute noise level) and ``delta_rel``
    (relative noise level) must be set. ``phantom`` is a fixture path and
    defaults to the committed fixture for the problem. ``config`` defaults to
    the published parameters, see :func:`default_config`.
    """

    problem: str
    delta: Optional[float] = None
    delta_rel: Optional[float] = None
    seed: int = 0
    penalty: str = "tv"
    beta: Optional[float] = None
    config: Optional[SolverConfig] = None
    phantom: Optional[str] = None
    out_dir: Optional[str] = None
    psf: str = "gaussian"
    inner: Optional[DenoiseSettings] = None

    def __post_init__(self):
        if self.problem not in PROBLEMS:
            raise ValueError(f"problem must be one of {PROBLEMS}, got {self.problem!r}")
        if self.penalty not in PENALTIES:
            raise ValueError(f"penalty must be one of {PENALTIES}, got {self.penalty!r}")
        if (self.delta is None) == (self.delta_rel is None):
            raise ValueError("set exactly one of delta and delta_rel")
        level = self.delta if self.delta is not None else self.delta_rel
        if not level >= 0:
            raise ValueError("noise level must be >= 0")
        if self.psf not in ("gaussian", "motion"):
            raise ValueError("psf must be 'gaussian' or 'motion'")
        if self.phantom is None:
            self.phantom = default_phantom(self.problem, self.penalty)
        if not Path(self.phantom).exists():
            raise FileNotFoundError(f"phantom file {self.phantom} not found")
        if self.config is None:
            self.config = default_config(self.problem, self.penalty, self.beta)


@dataclass
class MetricsReport:
    l2_error: float
    relative_l2: float
    n_delta: int
    wall_time_seconds: float
    termination: str
    delta: float
    psnr_db: Optional[float] = None
    residual_norm: float = float("nan")

    def as_dict(self):
        return {k: v for k, v in asdict(self).items() if v is not None}


@dataclass
class ExperimentResult:
    spec: ExperimentSpec
    metrics: MetricsReport
    record: object
    truth: Signal
    data: Signal
    reconstruction: Signal = field(repr=False, default=None)

    @property
    def ok(self):
        return self.record.termination is not Termination.CAP_REACHED


def build_problem(spec, truth_values):
    """Forward operator (or nonlinear map) matching the phantom's grid."""
    shape = np.shape(truth_values)
    if spec.problem == "Integral1D":
        return FredholmOperator(shape[0] - 1)
    if spec.problem == "Deautoconv":
        return AutoconvOperator(shape[0] - 1)
    if spec.problem == "PoissonSource":
        if shape[0] != shape[1]:
            raise ValueError("Poisson phantom must be square")
        return PoissonOperator(shape[0] + 1)
    psf = gaussian_psf(15, 30.0) if spec.psf == "gaussian" else motion_psf(30, 40)
    return BlurOperator(psf, shape, psf_kind=spec.psf)


def _initial_xi(spec, penalty, problem):
    if spec.problem != "Deautoconv":
        return None
    # subgradient of the penalty at x = 1, so that the iteration starts from x_0 = 1
    if isinstance(penalty, SquaredNorm):
        level = 1.0
    elif isinstance(penalty, ElasticNetL1):
        level = 1.0 / penalty.beta + 1.0
    else:
        level = 1.0 / penalty.beta
    return problem.domain_signal(np.full(problem.domain_shape, level))


def run_experiment(spec):
    """Synthesize data, run the solver and compute metrics.

    Returns
    -------
    ExperimentResult
        ``result.ok`` is False if the iteration cap was reached; outputs are
        written either way when ``spec.out_dir`` is set.
    """
    truth_values = load_phantom(spec.phantom)
    problem = build_problem(spec, truth_values)
    truth = problem.domain_signal(truth_values)
    y = problem.apply(truth)
    if spec.delta is not None:
        ydelta, delta = add_noise(y, spec.delta, spec.seed), spec.delta
    else:
        ydelta, delta = add_relative_noise(y, spec.delta_rel, spec.seed)
    penalty = build_penalty(spec.problem, spec.penalty, spec.beta, spec.inner)
    xi0 = _initial_xi(spec, penalty, problem)
    runner = run_nonlinear if spec.problem == "Deautoconv" else run_linear
    record = runner(problem, ydelta, delta, penalty, spec.config, ground_truth=truth, xi0=xi0)

    x = record.final_x
    err = (x - truth).norm()
    tnorm = truth.norm()
    metrics = MetricsReport(
        l2_error=err,
        relative_l2=err / tnorm if tnorm > 0 else math.inf,
        n_delta=record.n_delta,
        wall_time_seconds=record.wall_time_seconds,
        termination=record.termination.value,
        delta=delta,
        psnr_db=psnr(truth, x) if spec.problem == "Deblur" else None,
        residual_norm=(problem.apply(x) - ydelta).norm(),
    )
    result = ExperimentResult(spec, metrics, record, truth, ydelta, x)
    if spec.out_dir is not None:
        write_outputs(result)
    return result


def write_outputs(result):
    """Reconstruction (CSV, plus PGM for 2D), trajectory CSV and metrics text."""
    out = Path(result.spec.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    x = result.reconstruction.values
    io.write_signal_csv(out / "reconstruction.csv", x)
    io.write_signal_csv(out / "data.csv", result.data.values)
    if x.ndim == 2:
        truth = result.truth.values
        io.write_pgm(out / "reconstruction.pgm", x, vmin=truth.min(), vmax=truth.max())
        io.write_pgm(out / "data.pgm", result.data.values)
    result.record.to_csv(out / "trajectory.csv")
    spec = result.spec
    meta = {"problem": spec.problem, "penalty": spec.penalty, "seed": spec.seed,
            "phantom": spec.phantom}
    meta.update({k: v for k, v in asdict(spec.config).items() if v is not None})
    io.write_keyvalue(out / "metrics.txt", {**meta, **result.metrics.as_dict()})


def sweep(specs, jobs=1):
    """Run several experiments, in parallel processes when ``jobs > 1``.

    Experiments that write outputs must use distinct output directories.
    """
    specs = list(specs)
    dirs = [s.out_dir for s in specs if s.out_dir is not None]
    if len(dirs) != len(set(dirs)):
        raise ValueError("sweep entries must use distinct output directories")
    if jobs <= 1:
        return [run_experiment(s) for s in specs]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(run_experiment, specs))


def with_overrides(spec, **changes):
    """Copy of ``spec`` with some fields replaced (config fields allowed)."""
    cfg_fields = set(SolverConfig.__dataclass_fields__)
    cfg_changes = {k: changes.pop(k) for k in list(changes) if k in cfg_fields}
    new = replace(spec, **changes)
    if cfg_changes:
        new.config = replace(new.config, **cfg_changes)
    return new

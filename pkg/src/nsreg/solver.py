"""Nonstationary iterative regularization with a convex penalty.

Each iteration is a two-step splitting:

    xi_{n+1} = xi_n - t_n A^* (alpha_n I + A A^*)^{-1} (A x_n - y)
    x_{n+1}  = argmin_x {Theta(x) - <xi_{n+1}, x>}

The first step touches only the forward operator, the second only the
penalty. With noisy data the loop is stopped by the preconditioned
discrepancy rule ``alpha_n <(alpha_n I + A A^*)^{-1} r_n, r_n> <= tau^2 delta^2``
and ``alpha_n`` follows a two-speed geometric schedule. For nonlinear
problems ``A`` is replaced by the derivative ``L(x_n)`` at each step.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
import csv
import logging
import math
import time
from typing import NamedTuple, Optional
import warnings

import numpy as np

from ._validation import check_interval, check_positive
from .linalg import ForwardOperator, Signal, inner

log = logging.getLogger(__name__)


class DegenerateStepError(ArithmeticError):
    """``A^* (alpha I + A A^*)^{-1} r`` vanished although ``r`` did not."""


class Termination(str, Enum):
    DISCREPANCY_SATISFIED = "DiscrepancySatisfied"
    CAP_REACHED = "CapReached"
    EXACT_DATA_RESIDUAL_ZERO = "ExactDataResidualZero"


@dataclass(frozen=True)
class SolverConfig:
    """Tunables of the outer iteration.

    Parameters
    ----------
    tau : float
        Discrepancy factor, ``> 1``.
    mu0, mu1 : float
        Step-size factor and step-size cap.
    alpha0 : float
        Initial regularization parameter.
    gamma0, gamma1 : float
        Fast and slow decay factors of ``alpha_n`` (``0 < gamma0 <= gamma1 <= 1``).
    rho_hat : float
        Switch to the slow factor once ``rho_n <= rho_hat``.
    max_outer_iters : int
        Safety cap on the number of outer iterations.
    fixed_step : float, optional
        Use this constant ``t_n`` instead of the adaptive step. Only meant for
        reproducing classical nonstationary iterated Tikhonov (``t = 1``).
    stop : {"rule1", "discrepancy"}
        ``rule1`` is the preconditioned rule; ``discrepancy`` stops at
        ``||r_n|| <= tau * delta`` and is provided for comparison only.
    exact_tol : float
        Residual norm treated as zero when ``delta = 0``.
    """

    tau: float = 1.01
    mu0: float = 0.1
    mu1: float = 1.0
    alpha0: float = 0.01
    gamma0: float = 0.5
    gamma1: float = 0.99
    rho_hat: float = 2.5
    max_outer_iters: int = 500
    fixed_step: Optional[float] = None
    stop: str = "rule1"
    exact_tol: float = 1e-12

    def __post_init__(self):
        if not self.tau > 1:
            raise ValueError(f"tau must be > 1, got {self.tau}")
        check_positive(self.mu0, "mu0")
        check_positive(self.mu1, "mu1")
        check_positive(self.alpha0, "alpha0")
        check_interval(self.gamma0, "gamma0", 0.0, 1.0)
        check_interval(self.gamma1, "gamma1", 0.0, 1.0)
        if self.gamma0 > self.gamma1:
            raise ValueError("gamma0 must not exceed gamma1")
        if not self.rho_hat > 1:
            raise ValueError(f"rho_hat must be > 1, got {self.rho_hat}")
        if self.max_outer_iters < 0:
            raise ValueError("max_outer_iters must be >= 0")
        if self.fixed_step is not None:
            check_positive(self.fixed_step, "fixed_step")
        if self.stop not in ("rule1", "discrepancy"):
            raise ValueError(f"unknown stop rule {self.stop!r}")
        check_positive(self.exact_tol, "exact_tol", strict=False)

    def check_penalty(self, c0, noisy=True):
        """Validate ``mu0`` against the penalty's convexity modulus.

        ``mu0 >= 4 c0`` breaks monotonicity even for exact data and is
        rejected. ``mu0 >= 4 c0 (1 - 1/tau)`` only voids the noisy-data
        guarantee and triggers a warning when ``noisy``; several published
        parameter sets live in that range.
        """
        if self.mu0 >= 4.0 * c0:
            raise ValueError(f"mu0={self.mu0} must be < 4*c0={4.0 * c0}")
        if not noisy:
            return
        bound = 4.0 * c0 * (1.0 - 1.0 / self.tau)
        if self.mu0 >= bound:
            warnings.warn(
                f"mu0={self.mu0} >= 4*c0*(1-1/tau)={bound:.4g}: Bregman monotonicity "
                "under noise is not guaranteed", RuntimeWarning, stacklevel=4)


class IterationLog(NamedTuple):
    n: int
    alpha: float
    t: float
    residual_norm: float
    rho: float
    bregman: float


@dataclass
class RunRecord:
    trajectory: list
    n_delta: int
    final_x: Signal
    termination: Termination
    final_xi: Signal = None
    wall_time_seconds: float = float("nan")

    def column(self, name):
        return np.array([getattr(row, name) for row in self.trajectory])

    @property
    def steps(self):
        """Step sizes actually taken (``t_0 .. t_{n_delta - 1}``)."""
        return self.column("t")[: self.n_delta]

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(IterationLog._fields)
            for row in self.trajectory:
                writer.writerow([row.n] + [repr(float(v)) for v in row[1:]])
            writer.writerow([f"# n_delta={self.n_delta}", f"termination={self.termination.value}",
                             f"wall_time_seconds={self.wall_time_seconds:.6f}"])


@dataclass
class IterateState:
    """Everything known at iteration ``n`` before the update is taken."""

    n: int
    x: Signal
    xi: Signal
    alpha: float
    residual: Signal
    precond_residual: Signal
    rho: float
    t: float = float("nan")
    quad: float = float("nan")
    op: ForwardOperator = None
    adjoint_v: Signal = None
    warm: object = field(default=None, repr=False)


# ---------------------------------------------------------------------------
# building blocks

def _quadratic_form(op, alpha, v):
    """Return ``A^* v`` and ``<(alpha I + A A^*) v, v>``.

    For ``v = (alpha I + A A^*)^{-1} r`` the second value is ``<v, r>``;
    evaluating it through ``v`` keeps ``t_n >= mu0`` exact in floating point
    even when ``v`` comes from an iterative solve.
    """
    asv = op.adjoint(v)
    nasv2 = inner(asv, asv)
    return asv, alpha * inner(v, v) + nasv2, nasv2


def step_size(op, alpha, residual, precond_residual, mu0, mu1):
    """``min{mu0 <(alpha I + AA^*)^{-1} r, r> / ||A^* (alpha I + AA^*)^{-1} r||^2, mu1}``.

    Raises
    ------
    DegenerateStepError
        If the denominator vanishes for a nonzero residual.
    """
    _, quad, nasv2 = _quadratic_form(op, alpha, precond_residual)
    if nasv2 == 0.0:
        raise DegenerateStepError(
            f"zero denominator in step size with ||r|| = {residual.norm():.3e}")
    return min(mu0 * quad / nasv2, mu1)


def rule1_check(alpha, residual, precond_residual, delta, tau):
    """Preconditioned discrepancy test ``alpha <v, r> <= tau^2 delta^2``."""
    check_positive(delta, "delta", strict=False)
    return alpha * inner(precond_residual, residual) <= tau * tau * delta * delta


def rule2_alpha_update(alpha, rho, gamma0, gamma1, rho_hat):
    """``gamma0 * alpha`` while ``rho > rho_hat``, else ``gamma1 * alpha``."""
    check_positive(alpha, "alpha")
    return gamma0 * alpha if rho > rho_hat else gamma1 * alpha


def _rho(alpha, quad, tau, delta):
    if delta == 0:
        return float("nan")
    return math.sqrt(max(alpha * quad, 0.0)) / (tau * delta)


# ---------------------------------------------------------------------------
# nonlinear operators

class NonlinearOperator:
    """Differentiable map ``F`` with derivative ``L(x)`` and its adjoint.

    Subclasses implement :meth:`apply`, :meth:`deriv_apply` and
    :meth:`deriv_adjoint` on signals. :meth:`derivative` packages the latter
    two as a :class:`ForwardOperator` whose preconditioner solve falls back to
    conjugate gradients.
    """

    domain_shape: tuple
    range_shape: tuple
    domain_weights = 1.0
    range_weights = 1.0
    cg = None

    def apply(self, x):
        raise NotImplementedError

    def deriv_apply(self, x, v):
        raise NotImplementedError

    def deriv_adjoint(self, x, w):
        raise NotImplementedError

    def domain_project(self, x):
        return x

    def domain_signal(self, values):
        return Signal(values, self.domain_weights)

    def range_signal(self, values):
        return Signal(values, self.range_weights)

    def derivative(self, x):
        return _Linearization(self, x)


class _Linearization(ForwardOperator):
    def __init__(self, F, x):
        super().__init__(F.domain_shape, F.range_shape, F.domain_weights,
                         F.range_weights, cg=F.cg)
        self._F = F
        self._x = x

    def _apply(self, v):
        return self._F.deriv_apply(self._x, self.domain_signal(v)).values

    def _adjoint(self, w):
        return self._F.deriv_adjoint(self._x, self.range_signal(w)).values


class LinearAsNonlinear(NonlinearOperator):
    """View a :class:`ForwardOperator` as a (trivially) nonlinear one."""

    def __init__(self, op):
        self.op = op
        self.domain_shape = op.domain_shape
        self.range_shape = op.range_shape
        self.domain_weights = op.domain_weights
        self.range_weights = op.range_weights

    def apply(self, x):
        return self.op.apply(x)

    def deriv_apply(self, x, v):
        return self.op.apply(v)

    def deriv_adjoint(self, x, w):
        return self.op.adjoint(w)

    def derivative(self, x):
        return self.op


def _linearize(problem, x):
    if isinstance(problem, ForwardOperator):
        return problem, problem.apply(x)
    return problem.derivative(x), problem.apply(x)


# ---------------------------------------------------------------------------
# iteration

def _evaluate(problem, x, xi, alpha, n, ydelta, delta, config, warm, t=float("nan")):
    op, fx = _linearize(problem, x)
    r = fx - ydelta
    if delta == 0 and r.norm() <= config.exact_tol:
        v = r.zeros_like()
        asv, quad = op.domain_signal(np.zeros(op.domain_shape)), 0.0
    else:
        v = op.precond_solve(alpha, r)
        asv, quad, _ = _quadratic_form(op, alpha, v)
    return IterateState(n=n, x=x, xi=xi, alpha=alpha, residual=r, precond_residual=v,
                        rho=_rho(alpha, quad, config.tau, delta), t=t, quad=quad,
                        op=op, adjoint_v=asv, warm=warm)


def init_state(problem, ydelta, delta, penalty, config, xi0=None):
    """State at ``n = 0``: ``x_0 = argmin {Theta(x) - <xi_0, x>}``."""
    if xi0 is None:
        xi0 = Signal(np.zeros(problem.domain_shape), problem.domain_weights)
    x0, warm = penalty.argmin_linear_warm(xi0, None)
    if not isinstance(problem, ForwardOperator):
        x0 = problem.domain_project(x0)
    return _evaluate(problem, x0, xi0, config.alpha0, 0, ydelta, delta, config, warm)


def is_stopped(state, delta, config):
    """Stopping test evaluated before each update."""
    if delta == 0:
        return state.residual.norm() <= config.exact_tol
    if config.stop == "discrepancy":
        return state.residual.norm() <= config.tau * delta
    return state.alpha * state.quad <= (config.tau * delta) ** 2


def iterate_once(state, problem, ydelta, penalty, config, delta=0.0):
    """One outer update; returns the state at ``n + 1``.

    A zero residual leaves ``x`` and ``xi`` unchanged.
    """
    if state.residual.norm() == 0.0:
        t = config.fixed_step if config.fixed_step is not None else config.mu1
        xi, x, warm = state.xi, state.x, state.warm
    else:
        if config.fixed_step is not None:
            t = config.fixed_step
        else:
            nasv2 = inner(state.adjoint_v, state.adjoint_v)
            if nasv2 == 0.0:
                raise DegenerateStepError(
                    f"zero denominator in step size with ||r|| = {state.residual.norm():.3e}")
            t = min(config.mu0 * state.quad / nasv2, config.mu1)
        # xi only ever moves along A^* applied to something
        xi = state.xi - t * state.adjoint_v
        x, warm = penalty.argmin_linear_warm(xi, state.warm)
        if not isinstance(problem, ForwardOperator):
            x = problem.domain_project(x)
    if delta > 0:
        alpha = rule2_alpha_update(state.alpha, state.rho, config.gamma0, config.gamma1,
                                   config.rho_hat)
    else:
        alpha = config.gamma0 * state.alpha
    state.t = t
    return _evaluate(problem, x, xi, alpha, state.n + 1, ydelta, delta, config, warm)


def _run(problem, ydelta, delta, penalty, config, xi0, ground_truth):
    check_positive(delta, "delta", strict=False)
    config.check_penalty(penalty.c0, noisy=delta > 0)
    start = time.perf_counter()
    state = init_state(problem, ydelta, delta, penalty, config, xi0)
    trajectory = []

    def log_row(s):
        breg = (penalty.bregman_distance(ground_truth, s.x, s.xi)
                if ground_truth is not None else float("nan"))
        trajectory.append(IterationLog(s.n, s.alpha, s.t, s.residual.norm(), s.rho, breg))

    termination = None
    while True:
        if is_stopped(state, delta, config):
            termination = (Termination.EXACT_DATA_RESIDUAL_ZERO if delta == 0
                           else Termination.DISCREPANCY_SATISFIED)
            break
        if state.n >= config.max_outer_iters:
            termination = Termination.CAP_REACHED
            break
        nxt = iterate_once(state, problem, ydelta, penalty, config, delta)
        log_row(state)
        log.debug("n=%d alpha=%.3e t=%.3e |r|=%.3e rho=%.3f", state.n, state.alpha,
                  state.t, state.residual.norm(), state.rho)
        state = nxt
    log_row(state)
    elapsed = time.perf_counter() - start
    if termination is Termination.CAP_REACHED:
        log.warning("stopping rule not met within %d iterations", config.max_outer_iters)
    return RunRecord(trajectory=trajectory, n_delta=state.n, final_x=state.x,
                     termination=termination, final_xi=state.xi,
                     wall_time_seconds=elapsed)


def run_linear(op, ydelta, delta, penalty, config, ground_truth=None, xi0=None):
    """Run the method for a linear operator until the stopping rule fires.

    Parameters
    ----------
    op : ForwardOperator
    ydelta : Signal
        Noisy data.
    delta : float
        Noise level ``||y - ydelta||``; ``0`` selects exact-data mode
        (geometric ``alpha`` with factor ``gamma0``, stop at zero residual).
    penalty : Penalty
    config : SolverConfig
    ground_truth : Signal, optional
        If given, the Bregman distance to it is logged each iteration.
    xi0 : Signal, optional
        Initial dual iterate, zero by default.

    Returns
    -------
    RunRecord
    """
    return _run(op, ydelta, delta, penalty, config, xi0, ground_truth)


def run_nonlinear(F, ydelta, delta, penalty, config, ground_truth=None, xi0=None):
    """Nonlinear variant: every step linearizes ``F`` at the current iterate."""
    return _run(F, ydelta, delta, penalty, config, xi0, ground_truth)

"""Finite-dimensional Hilbert-space primitives.

A :class:`Signal` is an immutable array of samples together with the
quadrature weights that turn the plain dot product into an approximation of
the L2 inner product. Forward operators act on signals and know how to solve
the regularized normal equation ``(alpha I + A A^*) v = r``.
"""

from __future__ import annotations

from dataclasses import dataclass
import logging

import numpy as np

from ._validation import as_finite_array, check_positive

log = logging.getLogger(__name__)


class ShapeMismatchError(ValueError):
    """Raised when two signals (or a signal and an operator) disagree on
    shape or quadrature weights."""


class CGConvergenceError(RuntimeError):
    """Conjugate gradients failed to reach the requested tolerance."""

    def __init__(self, residual, iterations):
        self.residual = residual
        self.iterations = iterations
        super().__init__(
            f"CG did not converge in {iterations} iterations "
            f"(relative residual {residual:.3e})"
        )


def trapezoid_weights(n_intervals, length=1.0):
    """Trapezoid-rule weights for ``n_intervals`` equal subintervals."""
    h = length / n_intervals
    w = np.full(n_intervals + 1, h)
    w[0] = w[-1] = h / 2
    w.flags.writeable = False
    return w


def _same_weights(a, b):
    if a is b:
        return True
    if np.isscalar(a) or np.isscalar(b):
        return np.isscalar(a) and np.isscalar(b) and a == b
    return a.shape == b.shape and np.array_equal(a, b)


class Signal:
    """Sampled element of a Hilbert space.

    Parameters
    ----------
    values : array_like
        1D or 2D array of real samples. Must be finite.
    weights : float or array_like, optional
        Quadrature weights. A scalar means uniform weights; an array must have
        the same shape as ``values``. Defaults to 1 (Euclidean inner product).
    """

    __slots__ = ("_values", "_weights")

    def __init__(self, values, weights=1.0):
        values = as_finite_array(values, name="values")
        if values.ndim not in (1, 2):
            raise ValueError(f"signals must be 1D or 2D, got ndim={values.ndim}")
        if not np.isscalar(weights):
            weights = np.asarray(weights, dtype=float)
            if weights.shape != values.shape:
                raise ShapeMismatchError(
                    f"weights shape {weights.shape} != values shape {values.shape}")
            if weights.flags.writeable:
                weights = weights.copy()
                weights.flags.writeable = False
        else:
            weights = float(weights)
        values = values.copy() if values.flags.writeable else values
        values.flags.writeable = False
        self._values = values
        self._weights = weights

    @property
    def values(self):
        return self._values

    @property
    def weights(self):
        return self._weights

    @property
    def shape(self):
        return self._values.shape

    def like(self, values):
        """New signal with the same weights."""
        return Signal(values, self._weights)

    def zeros_like(self):
        return Signal(np.zeros(self.shape), self._weights)

    def check_compatible(self, other):
        if self.shape != other.shape:
            raise ShapeMismatchError(f"shape {self.shape} != {other.shape}")
        if not _same_weights(self._weights, other._weights):
            raise ShapeMismatchError("quadrature weights differ")

    def __add__(self, other):
        self.check_compatible(other)
        return self.like(self._values + other._values)

    def __sub__(self, other):
        self.check_compatible(other)
        return self.like(self._values - other._values)

    def __neg__(self):
        return self.like(-self._values)

    def __mul__(self, scalar):
        return self.like(float(scalar) * self._values)

    __rmul__ = __mul__

    def norm(self):
        return float(np.sqrt(inner(self, self)))

    def __repr__(self):
        w = self._weights if np.isscalar(self._weights) else "array"
        return f"Signal(shape={self.shape}, weights={w})"


def inner(u, v):
    """Quadrature-weighted inner product of two signals."""
    u.check_compatible(v)
    return float(np.sum(u.weights * u.values * v.values))


@dataclass(frozen=True)
class CgSettings:
    tol_cg: float = 1e-10
    max_cg_iters: int = 2000

    def __post_init__(self):
        check_positive(self.tol_cg, "tol_cg")
        if self.max_cg_iters < 1:
            raise ValueError("max_cg_iters must be >= 1")


class ForwardOperator:
    """Bounded linear map between two weighted sample spaces.

    Subclasses implement ``_apply`` and ``_adjoint`` on raw arrays. The
    adjoint is taken with respect to the weighted inner products, so for a
    matrix ``M`` it is ``W_dom^{-1} M^T W_ran``. ``_precond_solve`` defaults
    to conjugate gradients and should be overridden when a closed form exists.

    Parameters
    ----------
    domain_shape, range_shape : tuple of int
    domain_weights, range_weights : float or ndarray
    norm_bound : float, optional
        Known upper bound on the operator norm.
    cg : CgSettings, optional
        Settings used by the default preconditioner solve.
    """

    def __init__(self, domain_shape, range_shape, domain_weights=1.0,
                 range_weights=1.0, norm_bound=None, cg=None):
        self.domain_shape = tuple(domain_shape)
        self.range_shape = tuple(range_shape)
        self.domain_weights = domain_weights
        self.range_weights = range_weights
        self._norm_bound = norm_bound
        self.cg = cg or CgSettings()

    # array-level hooks ---------------------------------------------------
    def _apply(self, x):
        raise NotImplementedError

    def _adjoint(self, y):
        raise NotImplementedError

    def _precond_solve(self, alpha, r):
        return cg_solve(self, alpha, self.range_signal(r), self.cg).values

    # signal-level API ----------------------------------------------------
    def domain_signal(self, values):
        return Signal(values, self.domain_weights)

    def range_signal(self, values):
        return Signal(values, self.range_weights)

    def _check(self, s, shape, weights, what):
        if s.shape != shape:
            raise ShapeMismatchError(f"{what} shape {s.shape} != expected {shape}")
        if not _same_weights(s.weights, weights):
            raise ShapeMismatchError(f"{what} quadrature weights do not match operator")

    def apply(self, x):
        self._check(x, self.domain_shape, self.domain_weights, "domain")
        return self.range_signal(self._apply(x.values))

    def adjoint(self, y):
        self._check(y, self.range_shape, self.range_weights, "range")
        return self.domain_signal(self._adjoint(y.values))

    def precond_solve(self, alpha, r):
        """Return ``(alpha I + A A^*)^{-1} r``."""
        check_positive(alpha, "alpha")
        self._check(r, self.range_shape, self.range_weights, "range")
        return self.range_signal(self._precond_solve(alpha, r.values))

    @property
    def norm_bound(self):
        if self._norm_bound is None:
            self._norm_bound = estimate_norm(self)
        return self._norm_bound

    def normal_apply(self, alpha, v):
        """Array-level ``(alpha I + A A^*) v``."""
        return alpha * v + self._apply(self._adjoint(v))


class MatrixOperator(ForwardOperator):
    """Operator given by a dense matrix acting on flattened samples."""

    def __init__(self, matrix, domain_weights=1.0, range_weights=1.0, **kwargs):
        matrix = np.asarray(matrix, dtype=float)
        super().__init__((matrix.shape[1],), (matrix.shape[0],),
                         domain_weights, range_weights, **kwargs)
        self.matrix = matrix
        self._wd = np.broadcast_to(np.asarray(domain_weights, float), self.domain_shape)
        self._wr = np.broadcast_to(np.asarray(range_weights, float), self.range_shape)

    def _apply(self, x):
        return self.matrix @ x

    def _adjoint(self, y):
        return (self.matrix.T @ (self._wr * y)) / self._wd


def cg_solve(op, alpha, r, settings=None):
    """Solve ``(alpha I + A A^*) v = r`` by conjugate gradients.

    The iteration runs in the weighted inner product of the range space, in
    which the system matrix is self-adjoint and positive definite. It always
    starts from zero. After the recursive residual drops below tolerance the
    true residual is recomputed; if it is still too large CG is restarted from
    the current iterate.

    Raises
    ------
    CGConvergenceError
        If ``max_cg_iters`` is exhausted.
    """
    settings = settings or CgSettings()
    check_positive(alpha, "alpha")
    w = r.weights
    b = r.values

    def dot(a, c):
        return float(np.sum(w * a * c))

    bnorm = np.sqrt(dot(b, b))
    if bnorm == 0.0:
        return r.zeros_like()
    target = settings.tol_cg * bnorm

    v = np.zeros_like(b)
    res = b.copy()
    it = 0
    while True:
        p = res.copy()
        rr = dot(res, res)
        while np.sqrt(rr) > target and it < settings.max_cg_iters:
            q = op.normal_apply(alpha, p)
            step = rr / dot(p, q)
            v += step * p
            res -= step * q
            rr_new = dot(res, res)
            p = res + (rr_new / rr) * p
            rr = rr_new
            it += 1
        res = b - op.normal_apply(alpha, v)
        true_norm = np.sqrt(dot(res, res))
        if true_norm <= target:
            return r.like(v)
        if it >= settings.max_cg_iters:
            raise CGConvergenceError(true_norm / bnorm, it)
        log.debug("CG restart at iteration %d, true residual %.3e", it, true_norm / bnorm)


def estimate_norm(op, iterations=30, seed=0):
    """Power-method estimate of ``||A||`` (diagnostics only)."""
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(op.domain_shape)
    wd = op.domain_weights
    nrm = 0.0
    for _ in range(iterations):
        x = x / np.sqrt(np.sum(wd * x * x))
        y = op._adjoint(op._apply(x))
        nrm = np.sqrt(np.sqrt(np.sum(wd * y * y)))
        x = y
        if nrm == 0.0:
            break
    return float(nrm)

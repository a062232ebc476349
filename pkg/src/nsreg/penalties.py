"""Strongly convex penalty functionals and the TV denoising inner solver.

Every penalty ``Theta`` exposes its value, its strong-convexity modulus
``c0`` and the map ``xi -> argmin_z {Theta(z) - <xi, z>}`` (the gradient of
the Fenchel conjugate), all with respect to the weighted inner product
carried by the signals.
"""

from __future__ import annotations

from dataclasses import dataclass
import math

import numpy as np

from ._validation import check_positive
from .linalg import inner


class InnerSolverError(RuntimeError):
    """The TV denoising subproblem produced an unusable iterate."""

    def __init__(self, message, objective_decrease=float("nan")):
        self.objective_decrease = objective_decrease
        super().__init__(f"{message} (objective decrease {objective_decrease:.3e})")


@dataclass(frozen=True)
class DenoiseSettings:
    """Termination of the dual FISTA loop.

    The loop stops after ``max_inner_iters`` iterations or once the relative
    change between successive primal iterates drops below ``inner_tol``
    (``inner_tol = 0`` disables the tolerance test).
    """

    max_inner_iters: int = 2500
    inner_tol: float = 1e-6

    def __post_init__(self):
        if self.max_inner_iters < 1:
            raise ValueError("max_inner_iters must be >= 1")
        check_positive(self.inner_tol, "inner_tol", strict=False)


# ---------------------------------------------------------------------------
# discrete total variation

def tv_value_1d(x):
    """``sum_i |x[i+1] - x[i]|``."""
    x = np.asarray(x, dtype=float)
    return float(np.abs(np.diff(x)).sum())


def tv_value_2d_iso(x):
    """Isotropic discrete TV with anisotropic terms on the last row/column."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 2 or min(x.shape) < 2:
        raise ValueError("tv_value_2d_iso needs a 2D grid with both dims >= 2")
    dv = x[:-1, :] - x[1:, :]
    dh = x[:, :-1] - x[:, 1:]
    interior = np.sqrt(dv[:, :-1] ** 2 + dh[:-1, :] ** 2).sum()
    return float(interior + np.abs(dv[:, -1]).sum() + np.abs(dh[-1, :]).sum())


def _tv(x):
    return tv_value_1d(x) if x.ndim == 1 else tv_value_2d_iso(x)


# dual-side difference operators: grad maps primal -> dual, div is its
# negative adjoint so that z = b - lam * div(p) / w.

def _grad_1d(x):
    return x[:-1] - x[1:]


def _div_1d(p):
    out = np.zeros(p.size + 1)
    out[:-1] += p
    out[1:] -= p
    return out


def _project_1d(p):
    return np.clip(p, -1.0, 1.0)


def _grad_2d(x):
    return x[:-1, :] - x[1:, :], x[:, :-1] - x[:, 1:]


def _div_2d(pq):
    p, q = pq
    m, n = q.shape[0], p.shape[1]
    out = np.zeros((m, n))
    out[:-1, :] += p
    out[1:, :] -= p
    out[:, :-1] += q
    out[:, 1:] -= q
    return out


def _project_2d(pq):
    p, q = pq
    p = p.copy()
    q = q.copy()
    # joint isotropic constraint where both differences exist
    pi, qi = p[:, :-1], q[:-1, :]
    scale = np.maximum(1.0, np.sqrt(pi ** 2 + qi ** 2))
    p[:, :-1] = pi / scale
    q[:-1, :] = qi / scale
    np.clip(p[:, -1], -1.0, 1.0, out=p[:, -1])
    np.clip(q[-1, :], -1.0, 1.0, out=q[-1, :])
    return p, q


def tv_objective(z, b, lam, weights=None):
    """``0.5 * sum w (z - b)^2 + lam * TV(z)``."""
    z = np.asarray(z, dtype=float)
    w = 1.0 if weights is None else weights
    return float(0.5 * np.sum(w * (z - b) ** 2) + lam * _tv(z))


def fgp_denoise(b, lam, settings=None, weights=None, dual=None):
    """Dual fast gradient projection for TV denoising.

    Minimizes ``0.5 * sum w (z - b)^2 + lam * TV(z)`` for 1D ``TV = sum |dz|``
    or the 2D isotropic TV of :func:`tv_value_2d_iso`.

    Returns
    -------
    z : ndarray
        Primal solution.
    dual : ndarray or tuple of ndarray
        Final dual variable, usable as a warm start.
    n_iter : int
    """
    settings = settings or DenoiseSettings()
    b = np.asarray(b, dtype=float)
    check_positive(lam, "lam")
    w = np.ones_like(b) if weights is None else np.broadcast_to(np.asarray(weights, float), b.shape)
    if np.any(w <= 0):
        raise ValueError("weights must be positive")

    if b.ndim == 1:
        if b.size < 2:
            return b.copy(), np.zeros(0), 0
        grad, div, project, lip = _grad_1d, _div_1d, _project_1d, 4.0
        zeros = np.zeros(b.size - 1)
        add = lambda a, c, s=1.0: a + s * c  # noqa: E731
    elif b.ndim == 2:
        if min(b.shape) < 2:
            raise ValueError("2D TV denoising needs both dims >= 2")
        grad, div, project, lip = _grad_2d, _div_2d, _project_2d, 8.0
        zeros = (np.zeros((b.shape[0] - 1, b.shape[1])), np.zeros((b.shape[0], b.shape[1] - 1)))
        add = lambda a, c, s=1.0: (a[0] + s * c[0], a[1] + s * c[1])  # noqa: E731
    else:
        raise ValueError("TV denoising supports 1D and 2D signals only")

    step = 1.0 / (lam * lip / np.min(w))
    p = zeros if dual is None else dual
    r = p
    t = 1.0
    z_prev = None
    n_iter = 0
    for n_iter in range(1, settings.max_inner_iters + 1):
        z_r = b - lam * div(r) / w
        p_new = project(add(r, grad(z_r), step))
        t_new = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
        r = add(p_new, add(p_new, p, -1.0), (t - 1.0) / t_new)
        p, t = p_new, t_new
        if settings.inner_tol > 0 and z_prev is not None:
            gap = np.linalg.norm(z_r - z_prev)
            if gap <= settings.inner_tol * max(np.linalg.norm(z_r), 1e-300):
                break
        z_prev = z_r
    z = b - lam * div(p) / w
    if not np.all(np.isfinite(z)):
        raise InnerSolverError("TV denoising produced non-finite values")
    return z, p, n_iter


def tv_denoise(b, lam, settings=None, weights=None):
    """Solve ``min_z 0.5 * ||z - b||_w^2 + lam * TV(z)`` (1D or 2D isotropic).

    ``weights`` defaults to 1 (plain Euclidean data term).
    """
    return fgp_denoise(b, lam, settings, weights)[0]


# ---------------------------------------------------------------------------
# penalties

class Penalty:
    """Base class. ``c0`` is the strong-convexity modulus."""

    c0: float

    def value(self, x):
        raise NotImplementedError

    def argmin_linear(self, xi):
        """``argmin_z {Theta(z) - <xi, z>}``."""
        return self.argmin_linear_warm(xi, None)[0]

    def argmin_linear_warm(self, xi, warm):
        """Same as :meth:`argmin_linear`, threading inner-solver state.

        Returns the minimizer and the state to pass on the next call.
        """
        return self.argmin_linear(xi), None

    def bregman_distance(self, xbar, x, xi):
        """``Theta(xbar) - Theta(x) - <xi, xbar - x>`` for ``xi`` a subgradient at ``x``."""
        return self.value(xbar) - self.value(x) - inner(xi, xbar - x)


class SquaredNorm(Penalty):
    """``Theta(x) = ||x||^2 / 2``."""

    c0 = 0.5

    def value(self, x):
        return 0.5 * inner(x, x)

    def argmin_linear(self, xi):
        return xi

    def __repr__(self):
        return "SquaredNorm()"


class ElasticNetL1(Penalty):
    """``Theta(x) = ||x||^2 / (2 beta) + ||x||_1`` (both weighted)."""

    def __init__(self, beta):
        self.beta = check_positive(beta, "beta")
        self.c0 = 1.0 / (2.0 * self.beta)

    def value(self, x):
        l1 = float(np.sum(x.weights * np.abs(x.values)))
        return inner(x, x) / (2.0 * self.beta) + l1

    def argmin_linear(self, xi):
        v = xi.values
        return xi.like(self.beta * np.sign(v) * np.maximum(np.abs(v) - 1.0, 0.0))

    def __repr__(self):
        return f"ElasticNetL1(beta={self.beta})"


class _TVPenalty(Penalty):
    """Common part of the TV penalties.

    ``Theta(x) = ||x||_w^2 / (2 beta) + s * TV(x)`` where ``TV`` acts on the
    raw samples. By default ``s`` is the mean quadrature weight of the signal,
    so that with uniform weights ``Theta`` is the Euclidean penalty
    ``|x|^2 / (2 beta) + TV(x)`` rescaled by that weight and the subproblem
    is TV denoising of ``beta * xi`` with parameter ``beta``.
    """

    ndim = None

    def __init__(self, beta, inner=None, tv_weight=None):
        self.beta = check_positive(beta, "beta")
        self.inner = inner or DenoiseSettings()
        self.tv_weight = None if tv_weight is None else check_positive(tv_weight, "tv_weight")
        self.c0 = 1.0 / (2.0 * self.beta)

    def _check_dim(self, x):
        if x.values.ndim != self.ndim:
            raise ValueError(f"{type(self).__name__} expects {self.ndim}D signals")

    def _scale(self, x):
        return float(np.mean(x.weights)) if self.tv_weight is None else self.tv_weight

    def value(self, x):
        self._check_dim(x)
        return inner(x, x) / (2.0 * self.beta) + self._scale(x) * _tv(x.values)

    def argmin_linear_warm(self, xi, warm):
        # argmin (1/2beta)||z - beta xi||_w^2 + s TV(z); the weights are
        # divided by their mean to keep the dual step well scaled
        self._check_dim(xi)
        w = xi.weights
        wbar = float(np.mean(w))
        wn = None if np.isscalar(w) else w / wbar
        lam = self.beta * self._scale(xi) / wbar
        z, dual, _ = fgp_denoise(self.beta * xi.values, lam, self.inner, wn, warm)
        return xi.like(z), dual

    def __repr__(self):
        return f"{type(self).__name__}(beta={self.beta}, tv_weight={self.tv_weight})"


class TV1D(_TVPenalty):
    """``Theta(x) = ||x||^2 / (2 beta) + tv_weight * sum |x[i+1] - x[i]|``."""

    ndim = 1


class TV2DIso(_TVPenalty):
    """``Theta(x) = ||x||^2 / (2 beta) + tv_weight * TV_iso(x)``."""

    ndim = 2


def bregman_distance(penalty, xbar, x, xi):
    return penalty.bregman_distance(xbar, x, xi)


__all__ = [
    "DenoiseSettings", "InnerSolverError", "Penalty", "SquaredNorm", "ElasticNetL1",
    "TV1D", "TV2DIso", "tv_value_1d", "tv_value_2d_iso", "tv_objective", "tv_denoise",
    "fgp_denoise", "bregman_distance",
]

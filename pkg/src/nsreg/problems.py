"""Forward operators and phantoms for the four test problems.

* :class:`FredholmOperator` -- first-kind integral equation on [0, 1] with a
  scaled Green's-function kernel, trapezoid quadrature.
* :class:`PoissonOperator` -- source-to-solution map of the Dirichlet
  Poisson problem on the unit square, 5-point stencil, DST diagonalization.
* :class:`BlurOperator` -- periodic 2D convolution with a PSF, FFT
  diagonalization.
* :class:`AutoconvOperator` -- nonlinear autoconvolution on [0, 1].
"""

from __future__ import annotations

import numpy as np

from ._validation import as_finite_array, check_positive
from .linalg import CgSettings, ForwardOperator, MatrixOperator, ShapeMismatchError, trapezoid_weights
from .penalties import DenoiseSettings, TV1D, TV2DIso
from .solver import NonlinearOperator
from . import spectral


def fredholm_kernel(s, t):
    """``k(s, t) = 40 s (1 - t)`` for ``s <= t`` and ``40 t (1 - s)`` otherwise."""
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    return np.where(s <= t, 40.0 * s * (1.0 - t), 40.0 * t * (1.0 - s))


class FredholmOperator(MatrixOperator):
    """``(A x)(s) = int_0^1 k(s, t) x(t) dt`` by the trapezoid rule.

    The kernel matrix has the quadrature weights folded into its columns.
    ``precond="eig"`` (default) solves ``(alpha I + A A^*) v = r`` through a
    one-off eigendecomposition of the symmetrized matrix; ``precond="cg"``
    uses conjugate gradients instead, which stalls for very small ``alpha``.
    """

    def __init__(self, n_intervals=400, precond="eig", cg=None):
        if precond not in ("eig", "cg"):
            raise ValueError(f"unknown precond {precond!r}")
        self.n_intervals = int(n_intervals)
        self.nodes = np.linspace(0.0, 1.0, self.n_intervals + 1)
        w = trapezoid_weights(self.n_intervals)
        s, t = np.meshgrid(self.nodes, self.nodes, indexing="ij")
        self.kernel_matrix = fredholm_kernel(s, t) * w[None, :]
        self.precond = precond
        super().__init__(self.kernel_matrix, w, w, cg=cg)
        if precond == "eig":
            # W^{1/2} K W^{-1/2} is symmetric with the same spectrum as K
            sw = np.sqrt(w)
            sym = sw[:, None] * self.kernel_matrix / sw[None, :]
            self._eigvals, vecs = np.linalg.eigh(0.5 * (sym + sym.T))
            self._left = vecs / sw[:, None]
            self._right = vecs.T * sw[None, :]
            self._norm_bound = float(np.abs(self._eigvals).max())

    def _adjoint(self, y):
        # symmetric kernel: the weighted adjoint is the operator itself
        return self.matrix @ y

    def _precond_solve(self, alpha, r):
        if self.precond == "cg":
            return super()._precond_solve(alpha, r)
        return self._left @ ((self._right @ r) / (alpha + self._eigvals ** 2))


def fredholm_apply(op, x):
    return op.apply(x)


class PoissonOperator(ForwardOperator):
    """Discrete ``(-Laplace)^{-1}`` on the ``(N-1) x (N-1)`` interior grid.

    Both spaces carry the uniform quadrature weight ``h^2``.
    """

    def __init__(self, grid_n=120):
        self.grid_n = int(grid_n)
        self.h = 1.0 / self.grid_n
        self.symbol = spectral.SineSymbol.from_grid(self.grid_n)
        m = self.grid_n - 1
        w = self.h * self.h
        super().__init__((m, m), (m, m), w, w,
                         norm_bound=float(self.symbol.eigenvalues.max()))

    def _apply(self, f):
        return spectral.sine_apply(self.symbol, f)

    _adjoint = _apply

    def _precond_solve(self, alpha, r):
        return spectral.sine_precond_solve(self.symbol, alpha, r)

    def stencil(self, u):
        """``4u_ij - u_{i+-1,j} - u_{i,j+-1}`` with zero boundary values."""
        p = np.pad(np.asarray(u, float), 1)
        return 4 * p[1:-1, 1:-1] - p[2:, 1:-1] - p[:-2, 1:-1] - p[1:-1, 2:] - p[1:-1, :-2]


def poisson_apply(op, f):
    return op.apply(f)


class BlurOperator(ForwardOperator):
    """Periodic convolution with a point spread function (Euclidean spaces)."""

    def __init__(self, psf, image_shape, psf_kind=None):
        self.psf = as_finite_array(psf, name="psf", ndim=2)
        self.psf_kind = psf_kind
        self.symbol = spectral.psf_to_symbol(self.psf, image_shape)
        super().__init__(image_shape, image_shape, 1.0, 1.0,
                         norm_bound=float(np.abs(self.symbol.eigenvalues).max()))

    def _apply(self, x):
        return spectral.fourier_apply(self.symbol, x)

    def _adjoint(self, y):
        return spectral.fourier_apply(self.symbol, y, adjoint=True)

    def _precond_solve(self, alpha, r):
        return spectral.fourier_precond_solve(self.symbol, alpha, r)


def blur_apply(op, x):
    return op.apply(x)


def gaussian_psf(size=15, sigma=30.0):
    """Centered ``size x size`` Gaussian kernel with unit sum."""
    size = int(size)
    if size < 1 or size % 2 == 0:
        raise ValueError("size must be a positive odd integer")
    check_positive(sigma, "sigma")
    half = size // 2
    i = np.arange(-half, half + 1)
    g = np.exp(-(i[:, None] ** 2 + i[None, :] ** 2) / (2.0 * sigma ** 2))
    return g / g.sum()


def motion_psf(length=30.0, angle_degrees=40.0):
    """Linear motion kernel, rasterized the way MATLAB's ``fspecial('motion')`` does.

    A line segment of the given length and angle (counter-clockwise from the
    x-axis) is drawn with anti-aliased unit width, mirrored about its center
    and normalized to unit mass. ``(30, 40)`` yields a 21 x 25 kernel.
    """
    if length < 1:
        raise ValueError("length must be >= 1")
    eps = np.finfo(float).eps
    half = (length - 1) / 2.0
    phi = np.deg2rad(np.mod(angle_degrees, 180.0))
    cosphi, sinphi = np.cos(phi), np.sin(phi)
    xsign = np.sign(cosphi) if cosphi != 0 else 1.0
    linewdt = 1.0
    sx = int(np.trunc(half * cosphi + linewdt * xsign - length * eps))
    sy = int(np.trunc(half * sinphi + linewdt - length * eps))
    xs = np.arange(0, sx + xsign, xsign)
    x, y = np.meshgrid(xs, np.arange(0, sy + 1))
    dist2line = y * cosphi - x * sinphi
    rad = np.sqrt(x ** 2 + y ** 2)
    last = (rad >= half) & (np.abs(dist2line) <= linewdt)
    with np.errstate(divide="ignore", invalid="ignore"):
        x2last = half - np.abs((x[last] + dist2line[last] * sinphi) / cosphi)
    dist2line[last] = np.sqrt(dist2line[last] ** 2 + x2last ** 2)
    dist2line = linewdt + eps - np.abs(dist2line)
    dist2line[dist2line < 0] = 0
    r, c = dist2line.shape
    h = np.zeros((2 * r - 1, 2 * c - 1))
    h[:r, :c] = np.rot90(dist2line, 2)
    h[r - 1:, c - 1:] = dist2line
    h /= h.sum() + eps * length * length
    if cosphi > 0:
        h = np.flipud(h)
    return h / h.sum()


def _autoconv_full(a, b):
    return np.convolve(a, b)[: a.size]


class AutoconvOperator(NonlinearOperator):
    """``F(x)(t) = int_0^t x(t - s) x(s) ds`` with trapezoid quadrature.

    On the uniform grid ``t_i = i h`` the trapezoid sum is
    ``h * [(x * x)_i - x_0 x_i]`` (discrete convolution). Its exact
    derivative is ``L(x) v = 2 h [(x * v)_i - (x_i v_0 + x_0 v_i) / 2]``.
    """

    def __init__(self, n_intervals=400, cg=None):
        self.n_intervals = int(n_intervals)
        self.h = 1.0 / self.n_intervals
        self.nodes = np.linspace(0.0, 1.0, self.n_intervals + 1)
        w = trapezoid_weights(self.n_intervals)
        self.domain_weights = self.range_weights = w
        self.domain_shape = self.range_shape = (self.n_intervals + 1,)
        self.cg = cg or CgSettings(tol_cg=1e-10, max_cg_iters=2000)

    def _check(self, s):
        if s.shape != self.domain_shape:
            raise ShapeMismatchError(f"expected length {self.domain_shape[0]}, got {s.shape}")

    def apply(self, x):
        self._check(x)
        xv = x.values
        return self.range_signal(self.h * (_autoconv_full(xv, xv) - xv[0] * xv))

    def deriv_apply(self, x, v):
        self._check(x)
        self._check(v)
        xv, vv = x.values, v.values
        out = 2.0 * self.h * (_autoconv_full(xv, vv) - 0.5 * (xv * vv[0] + xv[0] * vv))
        return self.range_signal(out)

    def deriv_adjoint(self, x, w):
        self._check(x)
        self._check(w)
        xv = x.values
        u = self.range_weights * w.values
        # transpose of the convolution part: correlation of u with x
        corr = np.correlate(u, xv, mode="full")[xv.size - 1:]
        mt = corr - 0.5 * xv[0] * u
        mt[0] -= 0.5 * float(u @ xv)
        return self.domain_signal(2.0 * self.h * mt / self.domain_weights)


def autoconv_apply(op, x):
    return op.apply(x)


def autoconv_deriv_apply(op, x, v):
    return op.deriv_apply(x, v)


def autoconv_deriv_adjoint(op, x, w):
    return op.deriv_adjoint(x, w)


# ---------------------------------------------------------------------------
# phantoms

def sparse_spikes(t):
    """Three narrow raised-cosine spikes on [0, 1], zero elsewhere."""
    t = np.asarray(t, dtype=float)
    x = np.zeros_like(t)
    half_width = 0.03
    for center, height in ((0.25, 10.0), (0.5, 6.0), (0.75, -8.0)):
        d = np.abs(t - center)
        x += np.where(d < half_width, 0.5 * height * (1.0 + np.cos(np.pi * d / half_width)), 0.0)
    return x


def piecewise_constant(t):
    """Four plateaus on [0, 1]."""
    t = np.asarray(t, dtype=float)
    return np.select([t < 0.15, t < 0.4, t < 0.65, t < 0.85],
                     [0.0, 1.0, 0.4, 1.4], default=0.0)


def autoconv_phantom(t):
    """Positive piecewise-constant function with four plateaus."""
    t = np.asarray(t, dtype=float)
    return np.select([t < 0.3, t < 0.55, t < 0.8], [1.0, 2.0, 0.5], default=1.5)


def poisson_phantom(grid_n=120):
    """Sum of two rectangle indicators sampled on the interior grid."""
    h = 1.0 / grid_n
    c = np.arange(1, grid_n) * h
    x, y = np.meshgrid(c, c, indexing="ij")
    f = np.zeros_like(x)
    f[(x >= 0.2) & (x <= 0.45) & (y >= 0.25) & (y <= 0.75)] = 1.0
    f[(x >= 0.6) & (x <= 0.85) & (y >= 0.15) & (y <= 0.45)] = 1.0
    return f


_SHEPP_LOGAN_MODIFIED = (
    # intensity, semi-axis a, semi-axis b, x0, y0, angle (degrees)
    (1.0, 0.69, 0.92, 0.0, 0.0, 0.0),
    (-0.8, 0.6624, 0.8740, 0.0, -0.0184, 0.0),
    (-0.2, 0.1100, 0.3100, 0.22, 0.0, -18.0),
    (-0.2, 0.1600, 0.4100, -0.22, 0.0, 18.0),
    (0.1, 0.2100, 0.2500, 0.0, 0.35, 0.0),
    (0.1, 0.0460, 0.0460, 0.0, 0.1, 0.0),
    (0.1, 0.0460, 0.0460, 0.0, -0.1, 0.0),
    (0.1, 0.0460, 0.0230, -0.08, -0.605, 0.0),
    (0.1, 0.0230, 0.0230, 0.0, -0.606, 0.0),
    (0.1, 0.0230, 0.0460, 0.06, -0.605, 0.0),
)


def shepp_logan(n=200):
    """Contrast-enhanced ten-ellipse Shepp-Logan phantom on ``[-1, 1]^2``."""
    ax = (np.arange(n) - (n - 1) / 2.0) / ((n - 1) / 2.0)
    x, y = np.meshgrid(ax, ax[::-1])
    img = np.zeros((n, n))
    for amp, a, b, x0, y0, deg in _SHEPP_LOGAN_MODIFIED:
        phi = np.deg2rad(deg)
        xr = (x - x0) * np.cos(phi) + (y - y0) * np.sin(phi)
        yr = (y - y0) * np.cos(phi) - (x - x0) * np.sin(phi)
        img[(xr / a) ** 2 + (yr / b) ** 2 <= 1.0] += amp
    # overlapping ellipses cancel only up to rounding
    return np.clip(np.round(img, 12), 0.0, 1.0)


# ---------------------------------------------------------------------------
# penalty helpers for each experiment

def integral_tv_penalty(beta=100.0):
    return TV1D(beta, DenoiseSettings(2500, 1e-6))


def poisson_tv_penalty(beta=20.0):
    return TV2DIso(beta, DenoiseSettings(400, 0.0))


def deblur_tv_penalty():
    return TV2DIso(1.0, DenoiseSettings(200, 0.0))


def autoconv_tv_penalty(beta=20.0):
    return TV1D(beta, DenoiseSettings(1200, 1e-5))

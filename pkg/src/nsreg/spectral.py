"""Closed-form solves for operators diagonalized by fast transforms.

Two structures are covered: periodic 2D convolution (diagonal in the DFT
basis) and the inverse of the Dirichlet 5-point Laplacian (diagonal in the
DST-I basis). DFT convention: forward unnormalized, inverse carries
``1/(mn)`` (numpy's default).
"""

from dataclasses import dataclass

import numpy as np
import scipy.fft

from ._validation import as_finite_array, check_positive
from .linalg import ShapeMismatchError

IMAG_TOL = 1e-6


@dataclass(frozen=True)
class FourierSymbol:
    """Eigenvalues of a block-circulant-with-circulant-blocks operator."""

    eigenvalues: np.ndarray

    def __post_init__(self):
        if self.eigenvalues.ndim != 2:
            raise ValueError("FourierSymbol needs a 2D eigenvalue array")
        if not np.all(np.isfinite(self.eigenvalues)):
            raise ValueError("FourierSymbol eigenvalues must be finite")

    @property
    def shape(self):
        return self.eigenvalues.shape


@dataclass(frozen=True)
class SineSymbol:
    """Eigenvalues ``h^2 / (4 - 2cos(p h pi) - 2cos(q h pi))`` of the discrete
    solution operator of ``-Laplace u = f`` with zero Dirichlet data."""

    eigenvalues: np.ndarray
    grid_n: int

    @classmethod
    def from_grid(cls, grid_n):
        if grid_n < 2:
            raise ValueError("grid_n must be >= 2")
        h = 1.0 / grid_n
        k = np.arange(1, grid_n)
        c = 2.0 - 2.0 * np.cos(k * h * np.pi)
        lam = h * h / (c[:, None] + c[None, :])
        lam.flags.writeable = False
        return cls(lam, grid_n)

    @property
    def shape(self):
        return self.eigenvalues.shape


def _square_interior(f):
    f = as_finite_array(f, name="f", ndim=2)
    if f.shape[0] != f.shape[1]:
        raise ShapeMismatchError(f"DST needs a square interior grid, got {f.shape}")
    return f


def dst2_forward(f):
    """``fhat[p,q] = sum_ij f[i,j] sin(i p h pi) sin(j q h pi)``, ``h = 1/N``
    for an ``(N-1) x (N-1)`` interior grid."""
    f = _square_interior(f)
    # scipy's DST-I carries a factor 2 per axis
    return scipy.fft.dstn(f, type=1) / 4.0


def dst2_inverse(fhat):
    """Inverse of :func:`dst2_forward`: ``u = 4 h^2 sum_pq fhat sin sin``."""
    fhat = _square_interior(fhat)
    h = 1.0 / (fhat.shape[0] + 1)
    return 4.0 * h * h * dst2_forward(fhat)


def psf_to_symbol(psf, image_shape):
    """Fourier symbol of periodic convolution with ``psf``.

    The kernel is zero-padded to ``image_shape`` and circularly shifted so that
    its center ``(k0 // 2, k1 // 2)`` lands on index ``(0, 0)``.
    """
    psf = as_finite_array(psf, name="psf", ndim=2)
    m, n = image_shape
    k0, k1 = psf.shape
    if k0 > m or k1 > n:
        raise ShapeMismatchError(f"PSF {psf.shape} larger than image {image_shape}")
    big = np.zeros((m, n))
    big[:k0, :k1] = psf
    big = np.roll(big, (-(k0 // 2), -(k1 // 2)), axis=(0, 1))
    return FourierSymbol(np.fft.fft2(big))


def _real_part(z, ref_norm):
    resid = np.max(np.abs(z.imag)) if z.size else 0.0
    if resid > IMAG_TOL * max(1.0, ref_norm):
        raise ValueError(f"imaginary residue {resid:.3e}: symbol is not real-representable")
    return z.real


def _check_shape(sym, x):
    if x.shape != sym.shape:
        raise ShapeMismatchError(f"signal shape {x.shape} != symbol shape {sym.shape}")


def fourier_apply(sym, x, adjoint=False):
    """``F^* Lambda F x`` (or the adjoint, with conjugated eigenvalues)."""
    x = as_finite_array(x, name="x")
    _check_shape(sym, x)
    lam = sym.eigenvalues.conj() if adjoint else sym.eigenvalues
    out = np.fft.ifft2(lam * np.fft.fft2(x))
    return _real_part(out, np.max(np.abs(x), initial=0.0))


def fourier_precond_solve(sym, alpha, r):
    """``(alpha I + A A^*)^{-1} r`` as ``ifft(fft(r) / (alpha + |Lambda|^2))``."""
    check_positive(alpha, "alpha")
    r = as_finite_array(r, name="r")
    _check_shape(sym, r)
    denom = alpha + np.abs(sym.eigenvalues) ** 2
    out = np.fft.ifft2(np.fft.fft2(r) / denom)
    return _real_part(out, np.max(np.abs(r), initial=0.0) / alpha)


def sine_apply(sym, f):
    """Discrete Poisson solution operator ``S^{-1} Lambda S f``."""
    f = _square_interior(f)
    _check_shape(sym, f)
    return dst2_inverse(sym.eigenvalues * dst2_forward(f))


def sine_precond_solve(sym, alpha, r):
    """``S^{-1} (alpha I + Lambda^2)^{-1} S r`` (the operator is symmetric)."""
    check_positive(alpha, "alpha")
    r = _square_interior(r)
    _check_shape(sym, r)
    return dst2_inverse(dst2_forward(r) / (alpha + sym.eigenvalues ** 2))

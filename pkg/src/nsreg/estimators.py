"""scikit-learn style wrappers.

:class:`IterativeReconstructor` fits a reconstruction to observed data for
a fixed forward operator; :class:`TVDenoiser` exposes the TV denoiser as a
stateless transformer. Both inherit ``get_params``/``set_params`` from
:class:`sklearn.base.BaseEstimator`, so they can be cloned and grid-searched.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import as_finite_array, check_positive
from .linalg import ForwardOperator, Signal
from .penalties import DenoiseSettings, SquaredNorm, tv_denoise
from .solver import SolverConfig, run_linear, run_nonlinear


class IterativeReconstructor(BaseEstimator):
    """Regularized reconstruction ``x`` from data ``y = A x + noise``.

    Parameters
    ----------
    operator : ForwardOperator or NonlinearOperator
    penalty : Penalty, optional
        Defaults to ``||x||^2 / 2``.
    tau, mu0, mu1, alpha0, gamma0, gamma1, rho_hat, max_outer_iters, stop
        Forwarded to :class:`~nsreg.solver.SolverConfig`.
    xi0 : array_like, optional
        Initial dual iterate (zero by default).

    Attributes
    ----------
    solution_ : ndarray
        Reconstruction at the stopping index.
    record_ : RunRecord
    n_iter_ : int
    """

    def __init__(self, operator=None, penalty=None, tau=1.01, mu0=0.1, mu1=1.0,
                 alpha0=0.01, gamma0=0.5, gamma1=0.99, rho_hat=2.5,
                 max_outer_iters=500, stop="rule1", xi0=None):
        self.operator = operator
        self.penalty = penalty
        self.tau = tau
        self.mu0 = mu0
        self.mu1 = mu1
        self.alpha0 = alpha0
        self.gamma0 = gamma0
        self.gamma1 = gamma1
        self.rho_hat = rho_hat
        self.max_outer_iters = max_outer_iters
        self.stop = stop
        self.xi0 = xi0

    def _config(self):
        return SolverConfig(tau=self.tau, mu0=self.mu0, mu1=self.mu1, alpha0=self.alpha0,
                            gamma0=self.gamma0, gamma1=self.gamma1, rho_hat=self.rho_hat,
                            max_outer_iters=self.max_outer_iters, stop=self.stop)

    def fit(self, y, delta=0.0):
        """Run the iteration on data ``y`` (array or Signal) with noise level ``delta``."""
        if self.operator is None:
            raise ValueError("operator must be set before fitting")
        op = self.operator
        if isinstance(y, Signal):
            y = y.values
        y = as_finite_array(y, name="y")
        if y.shape != op.range_shape:
            raise ValueError(f"y has shape {y.shape}, operator expects {op.range_shape}")
        check_positive(delta, "delta", strict=False)
        penalty = self.penalty if self.penalty is not None else SquaredNorm()
        xi0 = None if self.xi0 is None else op.domain_signal(self.xi0)
        runner = run_linear if isinstance(op, ForwardOperator) else run_nonlinear
        self.record_ = runner(op, op.range_signal(y), float(delta), penalty, self._config(),
                              xi0=xi0)
        self.solution_ = np.array(self.record_.final_x.values)
        self.n_iter_ = self.record_.n_delta
        self.termination_ = self.record_.termination
        return self

    def predict(self, x=None):
        """Forward model applied to ``x`` (default: the fitted solution)."""
        check_is_fitted(self, "solution_")
        x = self.solution_ if x is None else as_finite_array(x, name="x")
        return np.array(self.operator.apply(self.operator.domain_signal(x)).values)

    def transform(self, y, delta=0.0):
        """Fit to ``y`` and return the reconstruction."""
        return self.fit(y, delta).solution_


class TVDenoiser(TransformerMixin, BaseEstimator):
    """``argmin_z 0.5 ||z - b||^2 + lam * TV(z)`` for 1D signals or 2D images.

    ``transform`` treats its whole input as one signal (1D) or one image (2D).
    """

    def __init__(self, lam=0.1, max_inner_iters=2500, inner_tol=1e-6):
        self.lam = lam
        self.max_inner_iters = max_inner_iters
        self.inner_tol = inner_tol

    def fit(self, X, y=None):
        check_positive(self.lam, "lam")
        self.settings_ = DenoiseSettings(self.max_inner_iters, self.inner_tol)
        return self

    def transform(self, X):
        check_is_fitted(self, "settings_")
        X = as_finite_array(X, name="X")
        return tv_denoise(X, self.lam, self.settings_)

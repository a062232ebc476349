"""Nonstationary iterative regularization with convex penalties.

The solver alternates a preconditioned dual gradient step with a penalty
minimization, chooses its step size and regularization schedule adaptively
and stops by a preconditioned discrepancy rule. Forward operators for a
Fredholm integral equation, a Poisson source problem, periodic deblurring
and autoconvolution are included.
"""

from .linalg import (CGConvergenceError, CgSettings, ForwardOperator, MatrixOperator,
                     ShapeMismatchError, Signal, cg_solve, inner, trapezoid_weights)
from .penalties import (DenoiseSettings, ElasticNetL1, InnerSolverError, Penalty, SquaredNorm,
                        TV1D, TV2DIso, bregman_distance, tv_denoise)
from .solver import (DegenerateStepError, IterationLog, LinearAsNonlinear, NonlinearOperator,
                     RunRecord, SolverConfig, Termination, iterate_once, rule1_check,
                     rule2_alpha_update, run_linear, run_nonlinear, step_size)
from .problems import (AutoconvOperator, BlurOperator, FredholmOperator, PoissonOperator,
                       gaussian_psf, motion_psf)
from .harness import (ExperimentSpec, MetricsReport, add_noise, add_relative_noise, psnr,
                      run_experiment)
from .estimators import IterativeReconstructor, TVDenoiser

__version__ = "0.1.0"

"""
Normalized fractional Brownian motion, its log-correlated H -> 0 limit, and the
associated Gaussian multiplicative chaos measure.

Modules
-------
sampler     exact fBm sampling and the normalized field X^H
kernels     closed-form covariance kernels K_H, the limit kernel, bounds
pairing     test-function pairings: quadrature and Monte Carlo
gmc         the chaos measure, moment-scaling spectrum, Frisch-Parisi identity
cli         batch command-line driver
"""

__version__ = "0.1.0"

from .errors import (CovarianceError, DomainError, QuadratureError, SingularInputError,
                     SupportError)
from .gmc import (GmcMeasureSample, GmcParams, SpectrumEstimate, ball_mass, estimate_spectrum,
                  frisch_parisi_dim, gmc_sample, zeta_theory)
from .kernels import (ConeKernelSpec, DominatingBound, KernelDecomposition, cone_kernel,
                      dominating_bound, kernel_kh, kernel_kh_diag, kernel_limit,
                      stable_pow_ratio)
from .pairing import (ConvergenceReport, PairingEstimate, QuadratureSpec, TestFunction,
                      convergence_report, double_integral_kernel, eval_test_function,
                      mc_pairing_covariance, pair_path)
from .sampler import (HurstParam, PathEnsemble, RngSeedSpec, TimeGrid, fbm_covariance,
                      fgn_autocovariance, normalize_to_x, sample_fbm, sample_fbm_cholesky,
                      sample_fbm_circulant)

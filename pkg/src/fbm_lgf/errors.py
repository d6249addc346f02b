"""Exception types shared across the package."""

from __future__ import annotations


class DomainError(ValueError):
    """An argument lies outside the domain where a formula is defined."""


class SingularInputError(DomainError):
    """Kernel evaluated on t = 0, s = 0 or the diagonal t = s."""


class SupportError(ValueError):
    """A grid does not cover the effective support of a test function."""

    def __init__(self, message: str, uncovered_mass: float):
        super().__init__(f"{message} (uncovered mass ~ {uncovered_mass:.3e})")
        self.uncovered_mass = uncovered_mass


class CovarianceError(RuntimeError):
    """Covariance matrix could not be factorized even after regularization."""


class QuadratureError(RuntimeError):
    """Adaptive quadrature did not reach the requested tolerance."""

    def __init__(self, message: str, best: float, residual: float):
        super().__init__(f"{message}: best={best!r}, residual={residual:.3e}")
        self.best = best
        self.residual = residual

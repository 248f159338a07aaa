"""Exception hierarchy shared by every module."""


class AmmError(Exception):
    """Base class for all library errors."""


class DimensionError(AmmError, ValueError):
    """Vector or asset list does not match the AMM's dimension."""


class DomainError(AmmError, ValueError):
    """A coordinate lies outside the open positive orthant (or the def's domain)."""


class InfeasibleError(AmmError):
    """No state exists for the request, e.g. a trade that would exhaust an asset."""


class NonConformingError(AmmError):
    """Operation requires an AMM satisfying the axioms, e.g. a linear AMM was given."""


class OffManifoldError(AmmError, ValueError):
    """A state does not satisfy A(x) = 0 within tolerance."""

    def __init__(self, message: str, residual: float):
        super().__init__(message)
        self.residual = residual


class ConvergenceError(AmmError):
    """An iterative solver stopped before meeting its tolerances."""

    def __init__(self, message: str, best=None):
        super().__init__(message)
        self.best = best


class ConfigError(AmmError):
    """Invalid network configuration file."""

"""Exception hierarchy shared by all modules."""


class SlnError(Exception):
    """Base class for errors raised by this package."""


class ModelError(SlnError, ValueError):
    """Invalid model specification."""


class NotPositiveDefinite(ModelError):
    """Cholesky factorisation met a non-positive pivot."""


class DimensionMismatch(ModelError):
    """Shapes of the mean vector and covariance matrix disagree."""


class NotIid(ModelError):
    """Estimator requires an iid model (common mean, covariance sigma^2 I)."""


class DomainError(SlnError, ValueError):
    """Argument outside the mathematical domain of a function."""


class EmptyRegion(SlnError, ValueError):
    """Truncation region has zero probability (upper bound is -inf)."""


class NoConvergence(SlnError, RuntimeError):
    """An optimiser stopped before meeting its tolerance.

    The best iterate found is attached as ``best`` so callers can continue
    with it and flag the result.
    """

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class DimTooLarge(SlnError, ValueError):
    """Requested Sobol dimension exceeds the direction-number table."""


class Insufficient(SlnError, ValueError):
    """Not enough samples for the requested statistic."""


class ConfigError(SlnError, ValueError):
    """Unsupported combination of options (quantity, estimator, stream...)."""

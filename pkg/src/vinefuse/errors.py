"""Exception hierarchy shared by all modules."""


class VineFuseError(ValueError):
    """Base class for every error raised by this package."""


class InvalidParameterError(VineFuseError):
    """A copula parameter lies outside its family's admissible domain."""


class UnattainableDependenceError(VineFuseError):
    """A Kendall's tau cannot be produced by the requested family."""


class InvalidInputError(VineFuseError):
    """Malformed input: wrong shape, non-finite values, too few points, ..."""


class DegenerateDataError(VineFuseError):
    """Input without spread, e.g. a constant column."""


class InsufficientDataError(VineFuseError):
    """Too few observations to fit a model."""

    def __init__(self, message, label=None):
        super().__init__(message)
        self.label = label


class NumericalFailureError(VineFuseError):
    """An iterative numerical routine did not converge."""

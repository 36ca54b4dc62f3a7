"""Exception hierarchy shared by all modules."""


class WflabError(Exception):
    """Base class for all package errors."""


class PreconditionError(WflabError, ValueError):
    """An input violates a documented precondition."""


class GridTooCoarseError(PreconditionError):
    """The requested dyadic scale or synthesis depth exceeds the grid Nyquist scale."""


class InsufficientResolutionError(PreconditionError):
    """Too few dyadic scales are resolved for the estimator to be meaningful."""


class ParameterError(PreconditionError):
    """A numeric parameter lies outside its admissible range."""


class RegularityError(PreconditionError):
    """The regularity certificate of a metric is too low for the requested operation."""


class GridMismatchError(PreconditionError):
    """Two sampled objects live on incompatible grids."""


class ConstructionError(WflabError):
    """A discrete operator failed a structural check (e.g. indefinite mass matrix)."""


class NumericalDiagnostic(WflabError):
    """A numerical procedure did not reach its tolerance.

    Parameters
    ----------
    message : str
        Human readable description.
    history : sequence, optional
        Residual or step-size history useful for diagnosis.
    """

    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = list(history) if history is not None else []


class CacheMismatchError(WflabError):
    """A cache file does not belong to the requesting configuration."""

"""Numerical microlocal analysis of the Klein-Gordon causal propagator on rough ultrastatic spacetimes."""

__version__ = "0.1.0"

from .dyadic import DyadicPartition, PeriodicGrid, WeierstrassField, decompose, weierstrass_field, zygmund_norm
from .errors import (CacheMismatchError, ConstructionError, GridMismatchError, GridTooCoarseError,
                     InsufficientResolutionError, NumericalDiagnostic, ParameterError, PreconditionError,
                     RegularityError, WflabError)
from .spectral import MetricModel, SpectralBasis, assemble, eigensolve, solve

__all__ = [
    "DyadicPartition", "PeriodicGrid", "WeierstrassField", "decompose", "weierstrass_field", "zygmund_norm",
    "MetricModel", "SpectralBasis", "assemble", "eigensolve", "solve",
    "WflabError", "PreconditionError", "GridTooCoarseError", "InsufficientResolutionError", "ParameterError",
    "RegularityError", "GridMismatchError", "ConstructionError", "NumericalDiagnostic", "CacheMismatchError",
]

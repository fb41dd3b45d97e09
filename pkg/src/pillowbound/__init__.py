"""Boundary non-crossing probabilities of the Brownian pillow with trend."""

__version__ = "0.1.0"

from .errors import DimensionError, DomainError, SolverError
from .gridfn import CellField2D, GridFn1D, GridFn2D

__all__ = ["CellField2D", "DimensionError", "DomainError", "GridFn1D", "GridFn2D", "SolverError", "__version__"]

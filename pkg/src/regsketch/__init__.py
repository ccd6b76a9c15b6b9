"""Sketching-based solvers for regularized least squares, low-rank
approximation, canonical correlations, and general orthogonally-invariant
regularizers, with statistical-dimension-driven sketch sizing."""

from . import cca, genreg, la, lowrank, problems, ridge, sketch, statdim

__all__ = ["cca", "genreg", "la", "lowrank", "problems", "ridge", "sketch", "statdim"]
__version__ = "0.1.0"

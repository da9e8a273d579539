"""Spectral computations for two-interval transmission problems."""

__version__ = "0.1.0"

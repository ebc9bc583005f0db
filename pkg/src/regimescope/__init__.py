"""Regime-transition detection for particle swarms via persistent homology."""

__version__ = "0.1.0"

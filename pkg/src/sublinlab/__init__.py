"""Numerical laboratory for sub-linear expectations and G-normal limits."""

__version__ = "0.1.0"

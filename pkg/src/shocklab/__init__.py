"""Numerical laboratory for pointwise stability of viscous shock profiles."""

__version__ = "0.1.0"

"""Numerical laboratory for the thermal P(phi)_2 model on the Euclidean cylinder."""

__version__ = "0.1.0"

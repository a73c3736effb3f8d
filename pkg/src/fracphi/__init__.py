"""Numerical laboratory for renormalized stochastic quantization on fractal graphs."""

__version__ = "0.1.0"

"""Fourier-Chebyshev spectral computation of cavitation in 2-D nonlinear elasticity."""

__version__ = "0.1.0"

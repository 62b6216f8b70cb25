"""Spectral data and finite-gap approximation of closed curves in R^3 and S^3."""
from .potential import Potential, fourier, inverse_fourier, l2_norm, l2_distance, regauge
from .frame import integrate_frame, monodromy, picard_series

__version__ = "0.1.0"

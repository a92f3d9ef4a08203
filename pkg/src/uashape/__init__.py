"""Uncertainty-aware policy shaping with a simulated, ensemble-calibrated advisor."""

__version__ = "0.1.0"

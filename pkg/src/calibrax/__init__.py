"""Calibration curves from binomial-process likelihood, calibration metrics,
ground-truth simulation and benchmarking."""

__version__ = "0.1.0"

"""Pulse-level simulation and calibration of a direct CCZ gate on transmons with tunable couplers."""

__version__ = "0.1.0"

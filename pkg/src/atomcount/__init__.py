"""Desk-scale toolkit for shot-noise-limited dispersive atom-number measurement:
beat-note simulation, stochastic loss dynamics, recursive Bayesian number
filtering, optical-pumping calibration and closed-form measurement budgeting.
"""

__version__ = "0.1.0"

from . import bayes, budget, calib, dynamics, homodyne, physics  # noqa: F401

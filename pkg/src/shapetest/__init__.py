"""Multiscale tests that a Gaussian regression mean satisfies a shape constraint.

Positivity, monotonicity (local means or local gradients), convexity and
differential inequalities ``(R F)^(r) >= 0``, each calibrated by Monte Carlo
under the least-favorable null so that the level is exact at any sample size.
"""

from .calibration import NullCalibration, calibrate
from .cones import ConeSpec, DesignGrid
from .directions import ShapeModel, TestConfig
from .exceptions import CalibrationError, DegenerateResidualError, DirectionError, ShapeTestError
from .testkit import TestReport, combined_monotonicity_test, evaluate_test, smoothness_test

__all__ = [
    "CalibrationError",
    "ConeSpec",
    "DegenerateResidualError",
    "DesignGrid",
    "DirectionError",
    "NullCalibration",
    "ShapeModel",
    "ShapeTestError",
    "TestConfig",
    "TestReport",
    "calibrate",
    "combined_monotonicity_test",
    "evaluate_test",
    "smoothness_test",
]

__version__ = "0.1.0"

class ShapeTestError(ValueError):
    """Invalid input or configuration."""


class DegenerateResidualError(ShapeTestError):
    """The residual after projecting on the nuisance space is zero."""


class CalibrationError(ShapeTestError):
    """Monte Carlo calibration failed or does not match the data."""


class DirectionError(ShapeTestError):
    """A test direction could not be built (degenerate block polynomial)."""

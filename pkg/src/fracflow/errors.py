"""Exception types shared across the package."""


class FracflowError(Exception):
    """Base class for all package-specific errors."""


# -- geometry ---------------------------------------------------------------

class NotConvex(FracflowError):
    """Polygon has a concave vertex beyond tolerance (or is clockwise)."""


class DegenerateEdge(FracflowError):
    """Two consecutive points are closer than 1e-12 x diameter."""


class NotSimple(FracflowError):
    """Closed polygon is self-intersecting (winds more than once)."""


class NonUnitDirection(FracflowError):
    """Direction vector is not unit length."""


class SolverFailure(FracflowError):
    """Inner-radius linear program did not converge."""


class PointNotOnBoundary(FracflowError):
    """Evaluation point is not a vertex of the curve."""


# -- nonlocal operators -----------------------------------------------------

class WindowTooLarge(FracflowError):
    """Singular window m exceeds N/8 for the given curve."""


class SeedRequired(FracflowError):
    """Monte Carlo estimate requested without an RNG seed."""


class CalibrationMissing(FracflowError):
    """Boundary perimeter prefactor has not been calibrated."""


# -- flow -------------------------------------------------------------------

class StepCollapse(FracflowError):
    """Adaptive time step fell below 1e-12."""


class CurveDegenerate(FracflowError):
    """Curve lost validity during a step and could not be repaired."""


class NumericalBreakdown(FracflowError):
    """Convexity repairs exceeded the allowed fraction of steps."""


class PastExtinction(FracflowError):
    """Shrinking-circle solution queried beyond its extinction time."""


class GridMismatch(FracflowError):
    """Two trajectories do not share a common time grid."""


class NotContained(FracflowError):
    """Inner curve is not inside the outer curve at the start."""


# -- diagnostics ------------------------------------------------------------

class CenterOutside(FracflowError):
    """Reference point for the support scalar lies outside the curve."""


class AlphaTooLarge(FracflowError):
    """Support offset alpha is not strictly below min support."""


class WindowTooShort(FracflowError):
    """Derivative check needs at least three consecutive states."""


class ResamplingInsideWindow(FracflowError):
    """Derivative check window contains a resampling event."""


class RenormalizationInsideWindow(FracflowError):
    """Volume-rate check window must have renormalization off."""


# -- cli --------------------------------------------------------------------

class ConfigInvalid(FracflowError):
    """Config file failed validation; message names the offending key."""

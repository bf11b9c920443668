"""Volume-preserving fractional mean curvature flow of convex plane curves."""

from . import errors
from .geometry import (
    ConvexCurve,
    RadiiReport,
    barycenter,
    build_curve,
    circle_points,
    ellipse_points,
    enclosed_area,
    radii_report,
    resample,
    rounded_polygon_points,
    width,
)
from .nonlocal_ops import (
    FractionalOrder,
    KernelPolicy,
    PerSEstimate,
    a2_all,
    h_s_all,
    h_s_boundary,
    h_s_region,
    h_s_tangential_derivative,
    isoperimetric_ratio,
    laplace_all,
    nonlocal_a2,
    nonlocal_laplace,
    per_s_boundary,
    per_s_region,
)
from .flow import (
    ContainmentReport,
    FlowConfig,
    FlowEvent,
    FlowState,
    RunResult,
    SpeedConditionReport,
    SpeedFunction,
    check_conditions,
    comparison_containment,
    forcing,
    make_state,
    run,
    shrinking_circle,
    speed_function,
    step,
)
from .diagnostics import (
    DerivativeCheck,
    DiagnosticsObserver,
    DiagnosticsRecord,
    RecordContext,
    check_eqh,
    check_eqper,
    check_volume_rate,
    record,
    sphere_deviation,
    sphere_deviation_stop,
    support_scalar,
    tso_w,
    write_checks_csv,
    write_records_csv,
)
from .calibration import UNIT_CIRCLE_HS, UNIT_DISK_PER_S, unit_circle_hs

__version__ = "0.1.0"

"""Volume-preserving fractional curvature flow of convex plane curves.

Explicit Euler time stepping of x' = (-Phi(H_s) + phi) nu, where phi is the
arc-weighted mean of Phi(H_s), so the discrete normal speed integrates to
zero by construction.  The module owns the speed-function registry, the
step-size control, volume renormalization, periodic arc-length resampling,
convexity repair, and the closed-form shrinking-circle comparison solution.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import ConvexHull

from .calibration import unit_circle_hs
from .errors import (
    CurveDegenerate,
    DegenerateEdge,
    GridMismatch,
    NotContained,
    NotConvex,
    NotSimple,
    NumericalBreakdown,
    PastExtinction,
    StepCollapse,
)
from .geometry import (
    DEFAULT_TOL_CONVEX,
    ConvexCurve,
    build_curve,
    resample,
)
from .nonlocal_ops import DEFAULT_POLICY, KernelPolicy, _order, h_s_all

# abort threshold for convexity repairs: more than this fraction of steps
# (with a small grace floor early on) means the scheme is broken, not dented
_REPAIR_FRACTION = 0.01
_REPAIR_FLOOR = 5

_MIN_DT = 1e-12


# -- speed functions ----------------------------------------------------------


_SPEED_KINDS = ("identity", "power", "exponential", "log1p")


@dataclass(frozen=True)
class SpeedFunction:
    """Monotone speed profile Phi applied pointwise to H_s.

    The registry is closed: identity Phi(a) = a, power Phi(a) = a**p with
    p > 0, exponential Phi(a) = exp(a), and log1p Phi(a) = log(1 + a).
    Keeping the set finite lets the growth conditions below be checked
    rather than assumed.
    """

    kind: str
    p: float = 1.0

    def __post_init__(self):
        if self.kind not in _SPEED_KINDS:
            raise ValueError(
                f"unknown speed kind {self.kind!r}; choose from {_SPEED_KINDS}")
        if self.kind == "power" and not self.p > 0:
            raise ValueError(f"power exponent must be positive, got {self.p}")

    def evaluate(self, a):
        a = np.asarray(a, dtype=float)
        if self.kind == "identity":
            return a + 0.0
        if self.kind == "power":
            return a ** self.p
        if self.kind == "exponential":
            return np.exp(a)
        return np.log1p(a)

    def derivative(self, a):
        a = np.asarray(a, dtype=float)
        if self.kind == "identity":
            return np.ones_like(a)
        if self.kind == "power":
            return self.p * a ** (self.p - 1.0)
        if self.kind == "exponential":
            return np.exp(a)
        return 1.0 / (1.0 + a)

    def _log_slope(self, a):
        # Phi'(a)/Phi(a) in closed form; avoids overflow for exponential
        a = np.asarray(a, dtype=float)
        if self.kind == "identity":
            return 1.0 / a
        if self.kind == "power":
            return self.p / a
        if self.kind == "exponential":
            return np.ones_like(a)
        return 1.0 / ((1.0 + a) * np.log1p(a))

    def label(self):
        return f"power(p={self.p:g})" if self.kind == "power" else self.kind


def speed_function(kind, p=None):
    """Construct a registry speed; p is only meaningful for kind='power'."""
    if kind == "power":
        return SpeedFunction("power", p=1.0 if p is None else float(p))
    if p is not None:
        raise ValueError(f"speed kind {kind!r} takes no exponent")
    return SpeedFunction(kind)


@dataclass(frozen=True)
class SpeedConditionReport:
    """Structural checks on a speed function, reported rather than asserted.

    grows_unbounded:    Phi(1e6) > 1e3 * Phi(1)
    derivative_positive: Phi' > 0 on a log-spaced grid of positive arguments
    ratio_diverges:     a^2 Phi'(a)/Phi(a) strictly increasing over
                        a in {1e2, 1e3, 1e4}
    """

    speed: SpeedFunction
    grows_unbounded: bool
    derivative_positive: bool
    ratio_diverges: bool
    ratio_samples: tuple

    @property
    def all_pass(self):
        return (self.grows_unbounded and self.derivative_positive
                and self.ratio_diverges)


def check_conditions(speed):
    """Evaluate the three growth conditions for a registry speed."""
    with np.errstate(over="ignore"):
        # exponential overflows to inf at the top of the grid; inf compares
        # correctly in both checks, so only the warning needs silencing
        grows = bool(speed.evaluate(1e6) > 1e3 * speed.evaluate(1.0))
        grid = np.geomspace(1e-3, 1e6, 64)
        positive = bool(np.all(speed.derivative(grid) > 0.0))
        samples = np.array([1e2, 1e3, 1e4])
        ratio = samples**2 * speed._log_slope(samples)
        diverges = bool(np.all(np.diff(ratio) > 0.0))
    return SpeedConditionReport(
        speed=speed,
        grows_unbounded=grows,
        derivative_positive=positive,
        ratio_diverges=diverges,
        ratio_samples=tuple(float(r) for r in ratio),
    )


# -- configuration and state ---------------------------------------------------


@dataclass(frozen=True)
class FlowConfig:
    """Immutable parameters of one flow run."""

    s: float
    speed: SpeedFunction
    n_points: int
    t_end: float
    cfl: float = 0.2
    renormalize_volume: bool = True
    resample_every: int = 25          # 0 disables resampling
    policy: KernelPolicy = DEFAULT_POLICY
    tol_convex: float = DEFAULT_TOL_CONVEX
    max_repair_fraction: float = _REPAIR_FRACTION
    forcing_enabled: bool = True
    rng_seed: int | None = None

    def __post_init__(self):
        _order(self.s)
        if not 0.0 < self.cfl <= 1.0:
            raise ValueError(f"cfl must lie in (0, 1], got {self.cfl}")
        if not self.t_end > 0.0:
            raise ValueError(f"t_end must be positive, got {self.t_end}")
        if self.resample_every < 0:
            raise ValueError("resample_every must be >= 0")
        if self.n_points < 16:
            raise ValueError("n_points must be at least 16")
        if not self.forcing_enabled and self.renormalize_volume:
            raise ValueError(
                "renormalize_volume requires the forcing term; an unforced "
                "run shrinks and must not be rescaled")


@dataclass(frozen=True)
class FlowEvent:
    """One renormalization, resampling, or convexity repair."""

    kind: str
    step: int
    time: float
    detail: float = 0.0


@dataclass(frozen=True)
class FlowState:
    """Curve plus the cached fields the next step needs.

    h_s_cache holds H_s at every vertex of ``curve``; forcing is the
    arc-weighted mean of Phi(H_s) computed from that cache, so the discrete
    speed -Phi(H_s) + forcing has exactly zero weighted sum.  event_log
    lists the events generated by the step that produced this state.
    area0 is the enclosed area of the seed, the target of renormalization.
    """

    curve: ConvexCurve
    time: float
    h_s_cache: np.ndarray
    forcing: float
    step_count: int
    area0: float
    event_log: tuple = field(default_factory=tuple)


def forcing(curve, s, speed, h_s=None, policy=None):
    """Arc-weighted mean of Phi(H_s) over the curve."""
    if h_s is None:
        h_s = h_s_all(curve, s, policy=policy)
    phi = speed.evaluate(h_s)
    return float(np.sum(curve.weights * phi) / np.sum(curve.weights))


def make_state(curve, config, time=0.0, step_count=0, area0=None):
    """Initial FlowState with a fresh H_s cache."""
    h = h_s_all(curve, config.s, policy=config.policy)
    f = forcing(curve, config.s, config.speed, h_s=h)
    return FlowState(curve=curve, time=float(time), h_s_cache=h, forcing=f,
                     step_count=int(step_count),
                     area0=curve.area if area0 is None else float(area0))


# -- stepping ------------------------------------------------------------------


def _polygon_area(points):
    x, y = points[:, 0], points[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def _dilate_about_centroid(points, scale):
    area = _polygon_area(points)
    q = np.roll(points, -1, axis=0)
    cr = points[:, 0] * q[:, 1] - q[:, 0] * points[:, 1]
    center = ((points + q) * cr[:, None]).sum(axis=0) / (6.0 * area)
    return center + scale * (points - center)


def _repair_convexity(points, n, tol_convex):
    """Project a dented polygon back to a convex one.

    Convex hull of the vertices, resampled piecewise-linearly to n points
    equidistant in arc length (staying on the hull edges keeps convexity),
    then dilated about the centroid so the enclosed area matches the dented
    polygon's shoelace area.
    """
    area_target = _polygon_area(points)
    if not area_target > 0.0:
        raise CurveDegenerate("polygon area collapsed during repair")
    try:
        hull = ConvexHull(points)
    except Exception as exc:
        raise CurveDegenerate(f"convex hull failed: {exc}") from exc
    hp = points[hull.vertices]
    closed = np.vstack([hp, hp[:1]])
    seg = np.hypot(*(np.diff(closed, axis=0).T))
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    targets = cum[-1] * np.arange(n) / n
    new_pts = np.column_stack([np.interp(targets, cum, closed[:, 0]),
                               np.interp(targets, cum, closed[:, 1])])
    scale = np.sqrt(area_target / _polygon_area(new_pts))
    new_pts = _dilate_about_centroid(new_pts, scale)
    try:
        return build_curve(new_pts, tol_convex=tol_convex)
    except (NotConvex, NotSimple, DegenerateEdge) as exc:
        raise CurveDegenerate(f"convexity repair failed: {exc}") from exc


def step(state, config, t_target=None):
    """Advance one explicit Euler step.

    dt = cfl * (min edge)^(1+s) / max(1, max_i Phi'(H_i) |H_i|), the
    stability scaling for an operator of order 1+s.  If t_target is given
    and the stable step would overshoot it, the step is shortened to land
    on t_target exactly (bitwise), so separate runs asked for the same
    snapshot times produce directly comparable grids.

    Order of operations after the move: convexity repair if the update
    dented the polygon, scheduled arc-length resampling, then volume
    renormalization last so the post-step area matches the seed area to
    machine precision whenever renormalization is on.
    """
    curve = state.curve
    sv = _order(config.s)
    h = state.h_s_cache
    phi = config.speed.evaluate(h)
    v = -phi + (state.forcing if config.forcing_enabled else 0.0)

    dphi = config.speed.derivative(h)
    gain = float(np.max(dphi * np.abs(h)))
    dt_stable = config.cfl * float(np.min(curve.edge_lengths))**(1.0 + sv) \
        / max(1.0, gain)
    if dt_stable < _MIN_DT:
        raise StepCollapse(
            f"stable step {dt_stable:.3e} below {_MIN_DT:.0e} at "
            f"t={state.time:.6g} (min edge "
            f"{float(np.min(curve.edge_lengths)):.3e})")
    if t_target is not None and dt_stable >= t_target - state.time:
        dt = t_target - state.time
        new_time = float(t_target)
    else:
        dt = dt_stable
        new_time = state.time + dt

    new_pts = curve.points + dt * v[:, None] * curve.normals
    step_no = state.step_count + 1
    events = []

    try:
        new_curve = build_curve(new_pts, tol_convex=config.tol_convex)
    except (NotConvex, NotSimple) as exc:
        del exc
        new_curve = _repair_convexity(new_pts, config.n_points,
                                      config.tol_convex)
        events.append(FlowEvent("convexity_repair", step_no, new_time))
    except DegenerateEdge as exc:
        raise CurveDegenerate(str(exc)) from exc

    if (config.resample_every and new_curve.n >= 16
            and step_no % config.resample_every == 0):
        new_curve = resample(new_curve, config.n_points,
                             tol_convex=config.tol_convex)
        events.append(FlowEvent("resample", step_no, new_time))

    if config.renormalize_volume:
        drift = (new_curve.area - state.area0) / state.area0
        scaled = _dilate_about_centroid(new_curve.points,
                                        np.sqrt(state.area0 / new_curve.area))
        try:
            new_curve = build_curve(scaled, tol_convex=config.tol_convex)
        except (NotConvex, NotSimple, DegenerateEdge) as exc:
            raise CurveDegenerate(
                f"renormalization broke the curve: {exc}") from exc
        events.append(FlowEvent("renormalize", step_no, new_time,
                                detail=drift))

    h_new = h_s_all(new_curve, config.s, policy=config.policy)
    f_new = forcing(new_curve, config.s, config.speed, h_s=h_new)
    return FlowState(curve=new_curve, time=new_time, h_s_cache=h_new,
                     forcing=f_new, step_count=step_no, area0=state.area0,
                     event_log=tuple(events))


# -- full runs -----------------------------------------------------------------


@dataclass
class RunResult:
    """Snapshots, events and the final state of one run."""

    snapshots: list
    snapshot_times: np.ndarray
    events: tuple
    final_state: FlowState
    total_steps: int
    repairs: int


def run(seed_curve, config, observer=None, snapshot_times=None,
        snapshot_stride=0, stop_when=None):
    """Integrate the flow from seed_curve until t_end or a stop condition.

    observer(state) is called on the initial state and after every step;
    diagnostics recording hooks in there.  snapshot_times (strictly inside
    (0, t_end]) are landed on exactly via step shortening; snapshot_stride
    keeps every k-th step additionally (0: only seed, landed times, final).
    stop_when(state) -> bool ends the run early when it returns True.

    Raises NumericalBreakdown when convexity repairs exceed
    max_repair_fraction of steps (grace floor of a few steps).
    """
    state = make_state(seed_curve, config)
    pending = []
    if snapshot_times is not None:
        pending = sorted(float(t) for t in snapshot_times)
        if pending and pending[0] < 0.0:
            raise ValueError("snapshot times must be nonnegative")
        if pending and pending[-1] > config.t_end * (1.0 + 1e-12):
            raise ValueError("snapshot times must not exceed t_end")
    while pending and pending[0] <= state.time:
        pending.pop(0)

    snapshots = [state]
    snap_times = [state.time]
    events = []
    repairs = 0
    if observer is not None:
        observer(state)

    while state.time < config.t_end:
        t_next = pending[0] if pending else config.t_end
        state = step(state, config, t_target=min(t_next, config.t_end))
        events.extend(state.event_log)
        repairs += sum(1 for ev in state.event_log
                       if ev.kind == "convexity_repair")
        if repairs > max(_REPAIR_FLOOR,
                         config.max_repair_fraction * state.step_count):
            raise NumericalBreakdown(
                f"{repairs} convexity repairs in {state.step_count} steps")
        if observer is not None:
            observer(state)
        landed = bool(pending) and state.time == pending[0]
        if landed:
            pending.pop(0)
        if landed or (snapshot_stride > 0
                      and state.step_count % snapshot_stride == 0):
            snapshots.append(state)
            snap_times.append(state.time)
        if stop_when is not None and stop_when(state):
            break

    if snapshots[-1] is not state:
        snapshots.append(state)
        snap_times.append(state.time)
    return RunResult(snapshots=snapshots,
                     snapshot_times=np.array(snap_times),
                     events=tuple(events),
                     final_state=state,
                     total_steps=state.step_count,
                     repairs=repairs)


# -- comparison solutions ------------------------------------------------------


def shrinking_circle(R0, s, t):
    """Radius at time t of an unforced circle, R' = -c_s R^(-s).

    c_s is the calibrated H_s value of the unit circle; separation of
    variables gives R(t) = (R0^(1+s) - (1+s) c_s t)^(1/(1+s)) up to the
    extinction time R0^(1+s)/((1+s) c_s).
    """
    sv = _order(s)
    if not R0 > 0.0:
        raise ValueError(f"R0 must be positive, got {R0}")
    c = unit_circle_hs(sv)
    extinction = R0**(1.0 + sv) / ((1.0 + sv) * c)
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr >= extinction):
        raise PastExtinction(
            f"t >= extinction time {extinction:.6g} for R0={R0}, s={sv}")
    radius = (R0**(1.0 + sv) - (1.0 + sv) * c * t_arr)**(1.0 / (1.0 + sv))
    return float(radius) if np.isscalar(t) else radius


@dataclass(frozen=True)
class ContainmentReport:
    """Per-time polygon containment of one trajectory inside another."""

    times: np.ndarray
    contained: np.ndarray
    first_violation: int | None

    @property
    def all_contained(self):
        return self.first_violation is None


def _containment_margin(inner_curve, outer_curve):
    # smallest signed distance of inner vertices to outer edge half-planes;
    # nonnegative means contained, boundary touching gives ~0
    p = outer_curve.points
    e = np.roll(p, -1, axis=0) - p
    u = e / np.hypot(e[:, 0], e[:, 1])[:, None]
    w = np.column_stack([-u[:, 1], u[:, 0]])        # inward edge normals
    offs = np.einsum("nk,nk->n", p, w)
    return float(np.min(inner_curve.points @ w.T - offs[None, :]))


def comparison_containment(inner, outer, tol=1e-9):
    """Check inner[t] subset of outer[t] on a shared snapshot grid.

    inner and outer are sequences of FlowState with matching times
    (GridMismatch otherwise).  The initial state must be contained
    (NotContained otherwise); later violations are reported, not raised.
    Touching boundaries count as contained within tol * outer diameter.
    """
    if len(inner) != len(outer):
        raise GridMismatch(
            f"trajectories have {len(inner)} vs {len(outer)} snapshots")
    t_in = np.array([st.time for st in inner])
    t_out = np.array([st.time for st in outer])
    scale = max(t_in[-1], t_out[-1], 1.0)
    if np.max(np.abs(t_in - t_out)) > 1e-9 * scale:
        i = int(np.argmax(np.abs(t_in - t_out)))
        raise GridMismatch(
            f"snapshot times differ at index {i}: {t_in[i]!r} vs {t_out[i]!r}")

    contained = np.empty(len(inner), dtype=bool)
    for k, (ci, co) in enumerate(zip(inner, outer)):
        diam = 2.0 * np.max(np.hypot(*(co.curve.points
                                       - co.curve.points.mean(axis=0)).T))
        contained[k] = _containment_margin(ci.curve, co.curve) >= -tol * diam
    if not contained[0]:
        raise NotContained("inner curve is not inside outer at the start")
    bad = np.nonzero(~contained)[0]
    first = int(bad[0]) if bad.size else None
    return ContainmentReport(times=t_in, contained=contained,
                             first_violation=first)

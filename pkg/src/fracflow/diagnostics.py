"""Per-step measurements and finite-difference cross-checks for flow runs.

Each record aggregates every monitored quantity of one state; derivative
checks compare centered finite differences of tracked quantities across
three consecutive states against the model rates implied by the evolution
equations.  Checks are reports, never assertions: discrepancies are
recorded even when large.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    AlphaTooLarge,
    CenterOutside,
    RenormalizationInsideWindow,
    ResamplingInsideWindow,
    WindowTooShort,
)
from .geometry import barycenter, radii_report
from .nonlocal_ops import (
    _check_index,
    _order,
    a2_all,
    h_s_boundary,
    isoperimetric_ratio,
    laplace_all,
    per_s_boundary,
)

# CSV schema; order is the on-disk contract
RECORD_COLUMNS = (
    "time", "area", "per_s", "iso_ratio", "rho_in", "rho_out",
    "radius_ratio", "hs_min", "hs_max", "hs_spread", "phi_max", "forcing",
    "max_w", "sphere_dev", "vol_drift", "repairs",
)
CHECK_COLUMNS = ("time", "quantity", "fd_rate", "model_rate",
                 "rel_discrepancy")


@dataclass(frozen=True)
class DiagnosticsRecord:
    """One row of run diagnostics.

    vol_drift is the pre-correction relative area drift logged by the
    renormalization of this step; for runs without renormalization it is
    the cumulative relative drift against the seed area.  repairs counts
    convexity repairs cumulatively.  pinch_ratio (not part of the CSV row)
    is max_i of H_s,i / (diam^((1-s)/2) * ((1-s) a2_i)^(1/2)), a
    scale-invariant balance of curvature against its tangential variation.
    stale lists fields forward-filled from the previous record when
    expensive sweeps run on a stride.
    """

    time: float
    area: float
    per_s: float
    iso_ratio: float
    rho_in: float
    rho_out: float
    radius_ratio: float
    hs_min: float
    hs_max: float
    hs_spread: float
    phi_max: float
    forcing: float
    max_w: float
    sphere_dev: float
    vol_drift: float
    repairs: int
    pinch_ratio: float = float("nan")
    min_width: float = float("nan")
    max_width: float = float("nan")
    stale: tuple = ()

    def csv_row(self):
        vals = []
        for name in RECORD_COLUMNS:
            v = getattr(self, name)
            vals.append(int(v) if name == "repairs" else float(v))
        return vals


@dataclass(frozen=True)
class DerivativeCheck:
    """Finite-difference rate vs model rate for one tracked quantity."""

    quantity: str
    time: float
    fd_rate: float
    model_rate: float
    rel_discrepancy: float

    def csv_row(self):
        return [self.time, self.quantity, self.fd_rate, self.model_rate,
                self.rel_discrepancy]


# -- pointwise quantities -------------------------------------------------------


def support_scalar(curve, x0, i):
    """Support value <x_i - x0, nu_i> for an interior reference point x0."""
    x0 = np.asarray(x0, dtype=float)
    _check_index(curve, i)
    if _interior_margin(curve, x0) <= 0.0:
        raise CenterOutside(f"reference point {x0} is not inside the curve")
    return float(np.dot(curve.points[i] - x0, curve.normals[i]))


def _interior_margin(curve, x0):
    # smallest signed distance to the edge support lines; > 0 iff interior
    p = curve.points
    e = np.roll(p, -1, axis=0) - p
    u = e / np.hypot(e[:, 0], e[:, 1])[:, None]
    w = np.column_stack([-u[:, 1], u[:, 0]])        # inward edge normals
    return float(np.min(x0 @ w.T - np.einsum("nk,nk->n", p, w)))


def _support_all(curve, x0):
    return np.einsum("nk,nk->n", curve.points - x0[None, :], curve.normals)


def tso_w(curve, s, x0, alpha, i, h_s=None, policy=None):
    """W = H_s/(u - alpha) at vertex i, u the support value about x0.

    alpha must stay below u at every vertex, not just at i, since the
    quantity is only meaningful while the whole curve sees a positive
    denominator.
    """
    x0 = np.asarray(x0, dtype=float)
    _check_index(curve, i)
    if _interior_margin(curve, x0) <= 0.0:
        raise CenterOutside(f"reference point {x0} is not inside the curve")
    u = _support_all(curve, x0)
    gap = u - alpha
    if np.min(gap) <= 0.0:
        j = int(np.argmin(gap))
        raise AlphaTooLarge(
            f"u - alpha = {gap[j]:.3e} <= 0 at vertex {j} (alpha={alpha})")
    hi = h_s_boundary(curve, s, i, policy=policy) if h_s is None \
        else float(h_s[i])
    return hi / float(gap[i])


def sphere_deviation(curve):
    """Max relative radial deviation from the barycenter.

    max_i | |x_i - c| - rbar | / rbar with c the area centroid and rbar the
    mean vertex distance from it; zero exactly for a circle about c.
    """
    c = barycenter(curve)
    r = np.hypot(*(curve.points - c[None, :]).T)
    rbar = float(np.mean(r))
    return float(np.max(np.abs(r - rbar)) / rbar)


# -- derivative checks ----------------------------------------------------------


def _window_mid(window):
    if len(window) < 3:
        raise WindowTooShort(
            f"need at least 3 consecutive states, got {len(window)}")
    return len(window) // 2


def _velocity(state, config):
    phi = config.speed.evaluate(state.h_s_cache)
    if config.forcing_enabled:
        return -phi + state.forcing
    return -phi


def _rel_disc(fd, model):
    scale = max(abs(fd), abs(model))
    return abs(fd - model) / scale if scale > 0.0 else 0.0


def check_eqper(window, config, per_values=None):
    """Centered d/dt Per_s vs the quadrature of H_s V at the middle state.

    per_values optionally supplies precomputed Per_s for each window state
    (records already hold them during a run); otherwise they are computed.
    """
    k = _window_mid(window)
    lo, mid, hi = window[k - 1], window[k], window[k + 1]
    if per_values is None:
        per_lo = per_s_boundary(lo.curve, config.s, policy=config.policy)
        per_hi = per_s_boundary(hi.curve, config.s, policy=config.policy)
    else:
        per_lo, per_hi = per_values[k - 1], per_values[k + 1]
    fd = (per_hi - per_lo) / (hi.time - lo.time)
    v = _velocity(mid, config)
    model = float(np.sum(mid.curve.weights * mid.h_s_cache * v))
    return DerivativeCheck(quantity="per_s", time=mid.time, fd_rate=fd,
                           model_rate=model,
                           rel_discrepancy=_rel_disc(fd, model))


def _identity_broken(states, what="resampled"):
    for st in states:
        for ev in st.event_log:
            if ev.kind in ("resample", "convexity_repair"):
                raise ResamplingInsideWindow(
                    f"curve was {what} at step {ev.step}; vertex identity "
                    "does not survive the window")


def check_eqh(window, i, config):
    """Centered d/dt H_s at vertex i vs the evolution identity.

    The rate of H_s/(2s(1-s)) equals -laplace(V) - V a2 pointwise; vertex
    identity must hold across the window, so windows containing a
    resampling (or a convexity repair, which resamples) are rejected.
    """
    k = _window_mid(window)
    lo, mid, hi = window[k - 1], window[k], window[k + 1]
    _check_index(mid.curve, i)
    _identity_broken(window[k:k + 2])
    sv = _order(config.s)
    fd = (hi.h_s_cache[i] - lo.h_s_cache[i]) / (hi.time - lo.time)
    fd /= 2.0 * sv * (1.0 - sv)
    v = _velocity(mid, config)
    lap = laplace_all(mid.curve, config.s, v, policy=config.policy)[i]
    a2 = a2_all(mid.curve, config.s, policy=config.policy)[i]
    model = -lap - v[i] * a2
    return DerivativeCheck(quantity="h_s", time=mid.time, fd_rate=float(fd),
                           model_rate=float(model),
                           rel_discrepancy=_rel_disc(fd, model))


def check_volume_rate(window, config):
    """Centered area rate vs the (exactly zero) quadrature of V.

    Requires renormalization off inside the window: the correction dilation
    would show up as a spurious area rate.
    """
    k = _window_mid(window)
    lo, mid, hi = window[k - 1], window[k], window[k + 1]
    for st in window[k:k + 2]:
        for ev in st.event_log:
            if ev.kind == "renormalize":
                raise RenormalizationInsideWindow(
                    f"renormalization at step {ev.step} inside the window")
    fd = (hi.curve.area - lo.curve.area) / (hi.time - lo.time)
    v = _velocity(mid, config)
    model = float(np.sum(mid.curve.weights * v))
    return DerivativeCheck(quantity="area", time=mid.time, fd_rate=float(fd),
                           model_rate=model,
                           rel_discrepancy=_rel_disc(fd, model))


# -- record assembly ------------------------------------------------------------


@dataclass
class RecordContext:
    """Mutable bookkeeping shared by all records of one run.

    The W reference frame (x0, alpha) is fixed at the first recorded state:
    x0 is the inscribed-circle center there and alpha a quarter of the
    inscribed radius.  full_every > 1 runs the O(N^2) sweeps and the
    radii solvers only on that stride of records, forward-filling between.
    """

    full_every: int = 1
    x0: np.ndarray | None = None
    alpha: float | None = None
    repairs_cum: int = 0
    records_made: int = 0
    last: DiagnosticsRecord | None = None

    def note_state(self, state):
        for ev in state.event_log:
            if ev.kind == "convexity_repair":
                self.repairs_cum += 1


def record(state, config, context):
    """Assemble the DiagnosticsRecord of one state."""
    curve = state.curve
    h = state.h_s_cache
    sv = _order(config.s)
    fresh = (context.last is None or context.full_every <= 1
             or context.records_made % context.full_every == 0)

    hs_min = float(np.min(h))
    hs_max = float(np.max(h))
    hs_mean = float(np.mean(h))
    phi_max = float(np.max(config.speed.evaluate(h)))

    drift = None
    for ev in state.event_log:
        if ev.kind == "renormalize":
            drift = ev.detail
    if drift is None:
        drift = (curve.area - state.area0) / state.area0

    stale = ()
    if fresh:
        rr = radii_report(curve)
        if context.x0 is None:
            context.x0 = rr.inner_center
            context.alpha = rr.inner_radius / 4.0
        per = per_s_boundary(curve, config.s, policy=config.policy)
        iso = per * per / curve.area**(2.0 - sv)
        a2 = a2_all(curve, config.s, policy=config.policy)
        pinch = float(np.max(
            h / np.sqrt(rr.diameter**(1.0 - sv) * (1.0 - sv) * a2)))
        rho_in, rho_out = rr.inner_radius, rr.outer_radius
        w_min, w_max = rr.min_width, rr.max_width
    else:
        prev = context.last
        per, iso = prev.per_s, prev.iso_ratio
        rho_in, rho_out = prev.rho_in, prev.rho_out
        pinch = prev.pinch_ratio
        w_min, w_max = prev.min_width, prev.max_width
        stale = ("per_s", "iso_ratio", "rho_in", "rho_out", "radius_ratio",
                 "pinch_ratio")

    u = _support_all(curve, context.x0)
    gap = u - context.alpha
    if np.min(gap) <= 0.0:
        j = int(np.argmin(gap))
        raise AlphaTooLarge(
            f"u - alpha = {gap[j]:.3e} <= 0 at vertex {j} "
            f"(alpha={context.alpha})")
    max_w = float(np.max(h / gap))

    rec = DiagnosticsRecord(
        time=state.time,
        area=curve.area,
        per_s=per,
        iso_ratio=iso,
        rho_in=rho_in,
        rho_out=rho_out,
        radius_ratio=rho_out / rho_in,
        hs_min=hs_min,
        hs_max=hs_max,
        hs_spread=(hs_max - hs_min) / hs_mean,
        phi_max=phi_max,
        forcing=state.forcing,
        max_w=max_w,
        sphere_dev=sphere_deviation(curve),
        vol_drift=float(drift),
        repairs=context.repairs_cum,
        pinch_ratio=pinch,
        min_width=w_min,
        max_width=w_max,
        stale=stale,
    )
    context.records_made += 1
    context.last = rec
    return rec


class DiagnosticsObserver:
    """Streaming observer for flow runs: records plus derivative checks.

    Pass as the run() observer.  eqper checks use the per_s values already
    in the records, so they cost nothing extra; eqh checks run every
    eqh_every steps (0 disables) up to time eqh_until, tracking the vertex
    of maximal H_s at each window start, and silently skip windows broken
    by resampling.  Volume-rate checks run only when renormalization is
    off.
    """

    def __init__(self, config, full_every=1, eqh_every=0, eqh_until=None,
                 eqh_phase=None):
        self.config = config
        self.context = RecordContext(full_every=full_every)
        self.eqh_every = eqh_every
        self.eqh_until = eqh_until
        # default phase keeps eqh windows off the resample steps, which
        # would otherwise be skipped as broken whenever the two periods
        # coincide
        if eqh_phase is None:
            eqh_phase = eqh_every // 2
        self.eqh_phase = eqh_phase
        self.records = []
        self.checks = []
        self._buf = []          # rolling (state, record) triple

    def __call__(self, state):
        self.context.note_state(state)
        rec = record(state, self.config, self.context)
        self.records.append(rec)
        self._buf.append((state, rec))
        if len(self._buf) > 3:
            self._buf.pop(0)
        if len(self._buf) == 3:
            self._window_checks()

    def _window_checks(self):
        (s0, r0), (s1, r1), (s2, r2) = self._buf
        window = (s0, s1, s2)
        if not (r0.stale or r2.stale):
            self.checks.append(check_eqper(
                window, self.config,
                per_values=(r0.per_s, r1.per_s, r2.per_s)))
        if not self.config.renormalize_volume:
            try:
                self.checks.append(check_volume_rate(window, self.config))
            except RenormalizationInsideWindow:
                pass
        if self.eqh_every and (
                s1.step_count % self.eqh_every == self.eqh_phase) and (
                self.eqh_until is None or s1.time <= self.eqh_until):
            i = int(np.argmax(s0.h_s_cache))
            try:
                self.checks.append(check_eqh(window, i, self.config))
            except ResamplingInsideWindow:
                pass

    def checks_for(self, quantity):
        return [c for c in self.checks if c.quantity == quantity]


def sphere_deviation_stop(target):
    """Stop predicate for run(): halt once sphere_deviation < target."""
    def stop(state):
        return sphere_deviation(state.curve) < target
    return stop


# -- CSV emission ---------------------------------------------------------------


def write_records_csv(records, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(RECORD_COLUMNS)
        for rec in records:
            w.writerow([_fmt(v) for v in rec.csv_row()])


def write_checks_csv(checks, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CHECK_COLUMNS)
        for chk in checks:
            w.writerow([_fmt(v) for v in chk.csv_row()])


def _fmt(v):
    if isinstance(v, float):
        return format(v, ".17g")
    return v

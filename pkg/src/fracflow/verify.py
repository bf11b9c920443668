"""End-to-end verification battery.

Eleven numbered criteria exercise the whole stack: quadrature
cross-checks, scaling laws, Monte Carlo agreement, operator limits,
dissipation, volume conservation, convergence to circles, geometric
bounds, the pointwise evolution identity, closed-form comparisons, and
blowup guards.  Each criterion prints one PASS/FAIL line; `fast` keeps
every tolerance but shrinks resolutions and sample counts to finish in
minutes, `full` runs the budgeted resolutions (about twenty minutes)
and includes criterion 4.

Criterion 4 compares the extrapolated s->1 operator limits against
their stated targets; see its detail line for the outcome analysis.
"""

import sys
import traceback
from dataclasses import dataclass, field

import numpy as np

from .calibration import UNIT_CIRCLE_HS
from .diagnostics import DiagnosticsObserver
from .errors import FracflowError
from .flow import (
    FlowConfig,
    comparison_containment,
    run,
    shrinking_circle,
    speed_function,
)
from .geometry import barycenter, build_curve, circle_points, ellipse_points, resample
from .nonlocal_ops import (
    a2_all,
    h_s_all,
    h_s_region,
    isoperimetric_ratio,
    laplace_all,
    per_s_boundary,
    per_s_region,
)

# standard battery horizons: identity converges by t=2.5 on the 2:1
# ellipse; the superlinear speeds cross sphere_deviation 5e-3 at
# t=0.372 (power p=2) and t=0.102 (exponential), frozen with margin
_T_END = {"identity": 2.5, "power2": 0.45, "exponential": 0.125}

# first-order volume drift of the unrenormalized scheme, measured as
# |area(1) - area(0)| / (area(0) * mean dt) on the standard ellipse at
# n=512 and frozen with a factor-2 cushion
_DRIFT_K = 0.5


@dataclass
class CriterionResult:
    number: int
    name: str
    passed: "bool | None"   # None: skipped at this level
    detail: str

    @property
    def line(self):
        tag = "SKIP" if self.passed is None else (
            "PASS" if self.passed else "FAIL")
        return f"{tag} criterion {self.number} ({self.name}): {self.detail}"


@dataclass
class Battery:
    """Shared expensive artifacts for the criteria.

    Standard runs and seed curves are cached so that the criteria that
    read the same flow (5, 6, 7, 8, 9, 11) pay for it once.
    """

    level: str = "fast"
    _cache: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.level not in ("fast", "full"):
            raise ValueError(f"level must be fast or full, got {self.level!r}")

    @property
    def full(self):
        return self.level == "full"

    @property
    def n_run(self):
        return 512 if self.full else 256

    @property
    def n_quad(self):
        return 1024 if self.full else 512

    @property
    def mc_samples(self):
        return 1_000_000 if self.full else 200_000

    def seed_ellipse(self, n):
        key = ("ellipse", n)
        if key not in self._cache:
            dense = build_curve(ellipse_points(max(4 * n, 2048), a=2.0, b=1.0))
            self._cache[key] = resample(dense, n)
        return self._cache[key]

    def standard_config(self, speed_label, n=None):
        kind = "power" if speed_label == "power2" else speed_label
        speed = speed_function(kind, p=2.0 if speed_label == "power2" else None)
        return FlowConfig(s=0.5, speed=speed, n_points=n or self.n_run,
                          t_end=_T_END[speed_label])

    def standard_run(self, speed_label):
        key = ("run", speed_label)
        if key not in self._cache:
            config = self.standard_config(speed_label)
            observer = DiagnosticsObserver(
                config, full_every=1, eqh_every=25,
                eqh_until=0.15 * config.t_end)
            result = run(self.seed_ellipse(config.n_points), config,
                         observer=observer)
            self._cache[key] = (config, result, observer)
        return self._cache[key]

    def drift_run(self):
        """Identity flow with renormalization off, to t=1."""
        if "drift" not in self._cache:
            config = FlowConfig(s=0.5, speed=speed_function("identity"),
                                n_points=self.n_run, t_end=1.0,
                                renormalize_volume=False)
            result = run(self.seed_ellipse(config.n_points), config)
            self._cache["drift"] = (config, result)
        return self._cache["drift"]


SPEED_LABELS = ("identity", "power2", "exponential")


def _mean_radius(curve):
    c = barycenter(curve)
    return float(np.mean(np.linalg.norm(curve.points - c, axis=1)))


def criterion_1(b):
    """Region and boundary curvature formulas agree."""
    worst = 0.0
    n = b.n_quad
    shapes = {
        "circle": build_curve(circle_points(n)),
        "ellipse": b.seed_ellipse(n),
    }
    for name, curve in shapes.items():
        idx = range(0, n, n // 8)
        for s in (0.25, 0.5, 0.75):
            hb = h_s_all(curve, s)
            for i in idx:
                hr = h_s_region(curve, s, curve.points[i])
                rel = abs(hr - hb[i]) / abs(hb[i])
                worst = max(worst, rel)
    ok = worst <= 1e-3
    return CriterionResult(
        1, "region vs boundary curvature", ok,
        f"max rel difference {worst:.3e} over 2 shapes x 3 orders x 8 "
        f"vertices at n={n} (tol 1e-3)")


def criterion_2(b):
    """Homogeneity in the radius: H_s, Per_s, and the scale-invariant ratio."""
    n = 512
    worst_h = worst_p = worst_i = 0.0
    unit = build_curve(circle_points(n))
    for s in (0.25, 0.5, 0.75):
        h1 = h_s_all(unit, s)
        p1 = per_s_boundary(unit, s)
        i1 = isoperimetric_ratio(unit, s)
        for radius in (0.5, 2.0, 5.0):
            curve = build_curve(circle_points(n, radius=radius))
            worst_h = max(worst_h, float(np.max(np.abs(
                h_s_all(curve, s) * radius**s / h1 - 1.0))))
            worst_p = max(worst_p, abs(
                per_s_boundary(curve, s) / (p1 * radius**(2.0 - s)) - 1.0))
            worst_i = max(worst_i, abs(isoperimetric_ratio(curve, s) / i1 - 1.0))
    ok = worst_h <= 1e-4 and worst_p <= 1e-4 and worst_i <= 1e-4
    return CriterionResult(
        2, "radius scaling laws", ok,
        f"rel errors: H_s scaling {worst_h:.2e}, Per_s scaling {worst_p:.2e},"
        f" ratio invariance {worst_i:.2e} (tol 1e-4)")


def criterion_3(b):
    """Boundary Per_s quadrature agrees with the region Monte Carlo."""
    n = b.n_quad
    shapes = (
        ("disk", build_curve(circle_points(n)), 7),
        ("ellipse", b.seed_ellipse(n), 11),
    )
    parts = []
    ok = True
    for name, curve, seed in shapes:
        bnd = per_s_boundary(curve, 0.5)
        mc = per_s_region(curve, 0.5, mc_samples=b.mc_samples, rng_seed=seed)
        z = (bnd - mc.estimate) / mc.stderr
        ok = ok and abs(z) <= 3.0
        parts.append(f"{name}: z={z:+.2f} ({mc.samples} samples)")
    return CriterionResult(
        3, "Monte Carlo perimeter cross-check", ok,
        "; ".join(parts) + " (tol 3 sigma)")


def s1_limit_values(n=2048, ladder=(0.9, 0.99, 0.999)):
    """Extrapolated s->1 limits of the scaled operators on the unit circle.

    Returns (laplace cos-coefficient, a2 mean), both extrapolated to
    s=1 along the ladder.
    """
    curve = build_curve(circle_points(n))
    f = curve.points[:, 0].copy()
    w = curve.weights
    norm = float(np.sum(w * f * f))
    lap_vals, a2_vals = [], []
    for s in ladder:
        scale = 2.0 * s * (1.0 - s)
        lap = scale * laplace_all(curve, s, f)
        lap_vals.append(float(np.sum(w * lap * (-f)) / norm))
        a2_vals.append(scale * float(np.sum(w * a2_all(curve, s)) / np.sum(w)))
    eps = [1.0 - s for s in ladder]
    return _neville(eps, lap_vals), _neville(eps, a2_vals)


def criterion_4(b):
    """Extrapolated s->1 operator limits against their stated targets."""
    if not b.full:
        return CriterionResult(
            4, "s->1 operator limits", None,
            "runs at full level only (needs n=2048 and an s ladder)")
    lap_lim, a2_lim = s1_limit_values()
    target = np.pi
    lap_off = abs(lap_lim - target) / target
    a2_off = abs(a2_lim - target) / target
    ok = lap_off <= 0.03 and a2_off <= 0.03
    return CriterionResult(
        4, "s->1 operator limits", ok,
        f"extrapolated: laplace coeff {lap_lim:.7f}, a2 {a2_lim:.7f}; "
        f"stated target pi off by {lap_off:.1%}/{a2_off:.1%} (tol 3%); "
        f"both sit at the planar analytic limit 2 "
        f"(off {abs(lap_lim - 2.0) / 2.0:.1e}/{abs(a2_lim - 2.0) / 2.0:.1e})")


def _neville(eps, vals):
    eps = np.asarray(eps, dtype=float)
    table = np.asarray(vals, dtype=float).copy()
    k = len(table)
    for level in range(1, k):
        for i in range(k - level):
            table[i] = (eps[i + level] * table[i]
                        - eps[i] * table[i + 1]) / (eps[i + level] - eps[i])
    return float(table[0])


def criterion_5(b):
    """Per_s decreases along the standard run, with negative measured rate."""
    _, _, observer = b.standard_run("identity")
    per = np.array([r.per_s for r in observer.records])
    rel_changes = np.diff(per) / per[:-1]
    worst_rise = float(np.max(rel_changes))
    checks = observer.checks_for("per_s")
    # sign test: the measured rate may carry discretization noise, but a
    # genuine violation shows up at the scale of the model rate
    bad = [c for c in checks if c.fd_rate > 0.05 * abs(c.model_rate)]
    ok = worst_rise <= 1e-6 and len(checks) > 0 and not bad
    return CriterionResult(
        5, "perimeter dissipation", ok,
        f"max per-step rel change {worst_rise:+.3e} (tol 1e-6); "
        f"{len(checks)} dissipation windows, {len(bad)} with positive rate")


def criterion_6(b):
    """Volume: renormalized runs hold area; bare drift is first order."""
    config, result, observer = b.standard_run("identity")
    area0 = result.final_state.area0
    worst = max(abs(r.area - area0) / area0 for r in observer.records)
    dconfig, dresult = b.drift_run()
    darea0 = dresult.final_state.area0
    drift = abs(dresult.final_state.curve.area - darea0) / darea0
    dt_mean = dresult.final_state.time / dresult.total_steps
    bound = _DRIFT_K * dt_mean
    ok = worst <= 1e-12 and drift <= bound
    return CriterionResult(
        6, "volume conservation", ok,
        f"renormalized max rel deviation {worst:.2e} (tol 1e-12); bare "
        f"drift {drift:.2e} over unit time vs first-order bound "
        f"{bound:.2e} (K={_DRIFT_K}, mean dt {dt_mean:.2e})")


def criterion_7(b):
    """All three admissible speeds drive the ellipse to a round circle."""
    parts = []
    ok = True
    for label in SPEED_LABELS:
        _, result, observer = b.standard_run(label)
        final = observer.records[-1]
        curve = result.final_state.curve
        r_target = np.sqrt(result.final_state.area0 / np.pi)
        r_off = abs(_mean_radius(curve) / r_target - 1.0)
        good = (final.sphere_dev < 1e-2 and final.hs_spread < 5e-2
                and r_off <= 1e-3)
        ok = ok and good
        parts.append(f"{label}: sphere_dev {final.sphere_dev:.1e}, spread "
                     f"{final.hs_spread:.1e}, radius off {r_off:.1e}")
    return CriterionResult(
        7, "convergence to circles", ok,
        "; ".join(parts) + " (tols 1e-2 / 5e-2 / 1e-3)")


def criterion_8(b):
    """Curvature and radius bounds hold at every recorded step."""
    worst_hs = np.inf    # margin of hs_min above the outer-radius bound
    worst_in = np.inf    # rho_in - min_width/3
    worst_out = -np.inf  # rho_out - max_width/sqrt(2)
    count = 0
    for label in SPEED_LABELS:
        config, _, observer = b.standard_run(label)
        s = config.s
        for r in observer.records:
            bound = 2.0 * np.pi * (1.0 - s) * (2.0 * r.rho_out) ** (-s)
            worst_hs = min(worst_hs, (r.hs_min - bound) / abs(r.hs_min))
            worst_in = min(worst_in, r.rho_in - r.min_width / 3.0)
            worst_out = max(worst_out, r.rho_out - r.max_width / np.sqrt(2.0))
            count += 1
    ok = worst_hs >= -1e-3 and worst_in >= -1e-9 and worst_out <= 1e-9
    return CriterionResult(
        8, "pointwise curvature and radius bounds", ok,
        f"{count} records: min H_s margin {worst_hs:+.3f} (tol -1e-3), "
        f"inradius vs width/3 margin {worst_in:+.2e}, circumradius vs "
        f"width/sqrt2 margin {worst_out:+.2e}")


def criterion_9(b):
    """Pointwise evolution identity during the early flow."""
    config, _, observer = b.standard_run("identity")
    checks = [c for c in observer.checks_for("h_s")
              if c.time <= 0.15 * config.t_end]
    worst = max((c.rel_discrepancy for c in checks), default=np.inf)
    ok = len(checks) > 0 and worst <= 0.10
    return CriterionResult(
        9, "evolution identity residual", ok,
        f"{len(checks)} windows at the maximal-curvature vertex, worst "
        f"rel discrepancy {worst:.2e} (tol 0.10)")


def criterion_10(b):
    """Closed-form shrinking circle and containment of comparison runs."""
    s = 0.5
    n = b.n_run
    speed = speed_function("identity")
    # extinction time of the unit circle under the continuum flow
    ext = 1.0 / ((1.0 + s) * UNIT_CIRCLE_HS[s])
    t_half = 0.5 * ext
    grid = np.linspace(0.1, 1.0, 10) * t_half
    config = FlowConfig(s=s, speed=speed, n_points=n, t_end=t_half,
                        renormalize_volume=False, forcing_enabled=False)
    result = run(build_curve(circle_points(n)), config,
                 snapshot_times=grid)
    worst = 0.0
    for t, snap in zip(result.snapshot_times, result.snapshots):
        want = shrinking_circle(1.0, s, t)
        worst = max(worst, abs(_mean_radius(snap.curve) / want - 1.0))

    t_cmp = 0.1
    cgrid = np.linspace(0.0, t_cmp, 6)
    inner_cfg = FlowConfig(s=s, speed=speed, n_points=n, t_end=t_cmp)
    inner = run(build_curve(circle_points(n, radius=0.5)), inner_cfg,
                snapshot_times=cgrid)
    outer = run(b.seed_ellipse(n),
                FlowConfig(s=s, speed=speed, n_points=n, t_end=t_cmp),
                snapshot_times=cgrid)
    report = comparison_containment(inner.snapshots, outer.snapshots)
    ok = worst <= 1e-3 and report.all_contained
    return CriterionResult(
        10, "closed-form and containment comparisons", ok,
        f"shrinking circle worst radius error {worst:.2e} over 10 "
        f"snapshots (tol 1e-3); containment over {len(report.times)} "
        f"shared times: {'holds' if report.all_contained else 'violated'}")


def criterion_11(b):
    """No blowup: W, speed, and radius ratio stay near early-run levels."""
    parts = []
    ok = True
    for label in SPEED_LABELS:
        config, _, observer = b.standard_run(label)
        recs = observer.records
        t_early = 0.1 * config.t_end
        early = [r for r in recs if r.time <= t_early]
        w_ratio = max(r.max_w for r in recs) / max(r.max_w for r in early)
        phi_ratio = max(r.phi_max for r in recs) / max(r.phi_max for r in early)
        rr_ratio = max(r.radius_ratio for r in recs) / recs[0].radius_ratio
        good = w_ratio <= 1.2 and phi_ratio <= 1.2 and rr_ratio <= 1.05
        ok = ok and good
        parts.append(f"{label}: W x{w_ratio:.3f}, speed x{phi_ratio:.3f}, "
                     f"radius ratio x{rr_ratio:.3f}")
    return CriterionResult(
        11, "no blowup along runs", ok,
        "; ".join(parts) + " (tols 1.2 / 1.2 / 1.05)")


CRITERIA = (criterion_1, criterion_2, criterion_3, criterion_4, criterion_5,
            criterion_6, criterion_7, criterion_8, criterion_9, criterion_10,
            criterion_11)


def run_battery(level="fast", stream=None):
    """Run all criteria, print one line each, return an exit code.

    0 if nothing failed (skips allowed), 4 otherwise.
    """
    stream = stream or sys.stdout
    battery = Battery(level=level)
    failed = 0
    for fn in CRITERIA:
        try:
            res = fn(battery)
        except (FracflowError, FloatingPointError) as exc:
            number = int(fn.__name__.rsplit("_", 1)[-1])
            res = CriterionResult(
                number, fn.__doc__.splitlines()[0].rstrip("."), False,
                f"aborted: {type(exc).__name__}: {exc}")
            traceback.print_exc(file=sys.stderr)
        print(res.line, file=stream)
        if res.passed is False:
            failed += 1
    total = len(CRITERIA)
    print(f"{total - failed}/{total} criteria satisfied at level "
          f"{level}", file=stream)
    return 0 if failed == 0 else 4

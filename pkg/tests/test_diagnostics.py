import csv

import numpy as np
import pytest

from fracflow.calibration import UNIT_CIRCLE_HS
from fracflow.diagnostics import (
    CHECK_COLUMNS,
    RECORD_COLUMNS,
    DiagnosticsObserver,
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
from fracflow.errors import (
    AlphaTooLarge,
    CenterOutside,
    RenormalizationInsideWindow,
    ResamplingInsideWindow,
    WindowTooShort,
)
from fracflow.flow import FlowConfig, make_state, run, speed_function, step
from fracflow.geometry import build_curve, circle_points, ellipse_points, resample


def identity_config(**kw):
    base = dict(s=0.5, speed=speed_function("identity"), n_points=256,
                t_end=0.01)
    base.update(kw)
    return FlowConfig(**base)


@pytest.fixture(scope="module")
def ellipse_256():
    return resample(build_curve(ellipse_points(2048, a=2.0, b=1.0)), 256)


@pytest.fixture(scope="module")
def states_256(ellipse_256):
    """First 30 states of the standard flow, for window checks."""
    config = identity_config(t_end=1.0)
    states = [make_state(ellipse_256, config)]
    for _ in range(30):
        states.append(step(states[-1], config))
    return config, states


class TestScalars:
    def test_sphere_deviation_frozen_values(self):
        # frozen at n=512 for the 2:1 ellipse on both vertex layouts
        theta = build_curve(ellipse_points(512, a=2.0, b=1.0))
        arc = resample(build_curve(ellipse_points(4096, a=2.0, b=1.0)), 512)
        assert sphere_deviation(theta) == pytest.approx(0.351476608, abs=1e-6)
        assert sphere_deviation(arc) == pytest.approx(0.366414480, abs=1e-6)
        circle = build_curve(circle_points(512))
        assert sphere_deviation(circle) < 1e-12

    def test_support_scalar_circle(self, unit_circle_512):
        # support from x0 = (d, 0): u_i = 1 - d cos(theta_i) on the unit
        # circle, up to the polygon normal error
        x0 = np.array([0.3, 0.0])
        for i in (0, 50, 300):
            want = 1.0 - 0.3 * unit_circle_512.points[i, 0]
            assert support_scalar(unit_circle_512, x0, i) == pytest.approx(
                want, abs=1e-4)

    def test_support_center_outside(self, unit_circle_512):
        with pytest.raises(CenterOutside):
            support_scalar(unit_circle_512, np.array([2.0, 0.0]), 0)

    def test_tso_w_circle(self, unit_circle_1024):
        # W = H_s / (u - alpha); centered frame with alpha = 1/4 gives
        # the unit-circle constant over 3/4
        w = tso_w(unit_circle_1024, 0.5, np.zeros(2), 0.25, 0)
        assert w == pytest.approx(UNIT_CIRCLE_HS[0.5] / 0.75, rel=1e-5)

    def test_tso_w_alpha_too_large(self, unit_circle_1024):
        with pytest.raises(AlphaTooLarge) as exc:
            tso_w(unit_circle_1024, 0.5, np.zeros(2), 1.01, 0)
        assert "vertex" in str(exc.value)


class TestWindowChecks:
    def test_eqper_negative_rate(self, states_256):
        config, states = states_256
        chk = check_eqper(states[3:6], config)
        assert chk.quantity == "per_s"
        assert chk.fd_rate < 0 and chk.model_rate < 0
        assert chk.rel_discrepancy < 0.05

    def test_eqh_small_discrepancy(self, states_256):
        config, states = states_256
        i = int(np.argmax(states[3].h_s_cache))
        chk = check_eqh(states[3:6], i, config)
        assert chk.quantity == "h_s"
        assert chk.rel_discrepancy < 0.10

    def test_window_too_short(self, states_256):
        config, states = states_256
        with pytest.raises(WindowTooShort):
            check_eqper(states[:2], config)

    def test_resampling_breaks_identity_window(self, ellipse_256):
        config = identity_config(t_end=1.0, resample_every=5)
        states = [make_state(ellipse_256, config)]
        for _ in range(6):
            states.append(step(states[-1], config))
        # states[5] carries the resample event; windows touching it on
        # the leading edge are rejected
        i = int(np.argmax(states[4].h_s_cache))
        with pytest.raises(ResamplingInsideWindow):
            check_eqh(states[4:7], i, config)

    def test_renormalization_breaks_volume_window(self, states_256):
        config, states = states_256
        with pytest.raises(RenormalizationInsideWindow):
            check_volume_rate(states[3:6], config)

    def test_volume_rate_on_unforced_flow(self):
        curve = build_curve(circle_points(256))
        config = FlowConfig(s=0.5, speed=speed_function("identity"),
                            n_points=256, t_end=1.0,
                            renormalize_volume=False, forcing_enabled=False)
        states = [make_state(curve, config)]
        for _ in range(4):
            states.append(step(states[-1], config))
        chk = check_volume_rate(states[:3], config)
        assert chk.quantity == "area"
        assert chk.fd_rate < 0  # the circle shrinks
        assert chk.rel_discrepancy < 1e-2


class TestRecord:
    def test_fields_on_seed(self, ellipse_256):
        config = identity_config()
        state = make_state(ellipse_256, config)
        ctx = RecordContext()
        rec = record(state, config, ctx)
        assert rec.time == 0.0
        assert rec.area == pytest.approx(2 * np.pi, rel=1e-3)
        assert rec.rho_in == pytest.approx(1.0, rel=5e-3)
        assert rec.rho_out == pytest.approx(2.0, rel=5e-3)
        assert rec.radius_ratio == pytest.approx(2.0, rel=1e-2)
        assert rec.hs_min < rec.hs_max
        assert rec.hs_spread == pytest.approx(
            (rec.hs_max - rec.hs_min) / np.mean(state.h_s_cache), rel=1e-12)
        assert rec.min_width == pytest.approx(2.0, rel=5e-3)
        assert rec.max_width == pytest.approx(4.0, rel=5e-3)
        assert rec.vol_drift == 0.0
        assert rec.repairs == 0
        assert rec.stale == ()
        assert np.isfinite(rec.pinch_ratio) and rec.pinch_ratio > 0

    def test_stale_forward_fill(self, ellipse_256):
        config = identity_config()
        state = make_state(ellipse_256, config)
        ctx = RecordContext(full_every=5)
        recs = []
        for _ in range(6):
            ctx.note_state(state)
            recs.append(record(state, config, ctx))
            state = step(state, config)
        assert recs[0].stale == ()
        assert recs[5].stale == ()
        for r in recs[1:5]:
            assert "per_s" in r.stale
            assert r.per_s == recs[0].per_s  # forward-filled
        assert recs[5].per_s != recs[0].per_s


class TestObserver:
    def test_records_and_checks(self, ellipse_256):
        config = identity_config(t_end=0.004, resample_every=5)
        obs = DiagnosticsObserver(config, full_every=1, eqh_every=4,
                                  eqh_until=1.0)
        result = run(ellipse_256, config, observer=obs)
        assert len(obs.records) == result.total_steps + 1
        assert len(obs.checks_for("per_s")) > 0
        eqh = obs.checks_for("h_s")
        assert len(eqh) > 0
        # phase 2 of 4 dodges the resample steps (multiples of 5)
        assert all(c.rel_discrepancy < 0.10 for c in eqh)

    def test_stop_predicate_threshold(self, ellipse_256):
        config = identity_config(t_end=50.0)
        stop = sphere_deviation_stop(0.35)
        result = run(ellipse_256, config, stop_when=stop)
        final = result.final_state
        assert sphere_deviation(final.curve) <= 0.35
        assert final.time < 50.0


class TestCsv:
    def test_round_trip(self, ellipse_256, tmp_path):
        config = identity_config(t_end=0.002)
        obs = DiagnosticsObserver(config, full_every=1)
        run(ellipse_256, config, observer=obs)
        rpath = tmp_path / "records.csv"
        cpath = tmp_path / "checks.csv"
        write_records_csv(obs.records, rpath)
        write_checks_csv(obs.checks, cpath)

        with open(rpath, newline="") as fh:
            rows = list(csv.reader(fh))
        assert tuple(rows[0]) == RECORD_COLUMNS
        assert len(rows) == len(obs.records) + 1
        got = [float(v) for v in rows[1]]
        want = obs.records[0].csv_row()
        for g, w in zip(got, want):
            assert g == float(w)  # %.17g round-trips doubles exactly

        with open(cpath, newline="") as fh:
            rows = list(csv.reader(fh))
        assert tuple(rows[0]) == CHECK_COLUMNS
        assert len(rows) == len(obs.checks) + 1
        assert rows[1][1] in ("per_s", "area", "h_s")

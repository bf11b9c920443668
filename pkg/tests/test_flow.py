import numpy as np
import pytest

from fracflow.calibration import UNIT_CIRCLE_HS
from fracflow.errors import (
    CurveDegenerate,
    GridMismatch,
    NotContained,
    PastExtinction,
    StepCollapse,
)
from fracflow.flow import (
    FlowConfig,
    _repair_convexity,
    check_conditions,
    comparison_containment,
    forcing,
    make_state,
    run,
    shrinking_circle,
    speed_function,
    step,
)
from fracflow.geometry import build_curve, circle_points, ellipse_points, resample


def identity_config(**kw):
    base = dict(s=0.5, speed=speed_function("identity"), n_points=256,
                t_end=0.01)
    base.update(kw)
    return FlowConfig(**base)


@pytest.fixture(scope="module")
def ellipse_256():
    return resample(build_curve(ellipse_points(2048, a=2.0, b=1.0)), 256)


class TestSpeedFunctions:
    def test_registry_values(self):
        h = np.array([0.5, 1.0, 2.0])
        np.testing.assert_allclose(speed_function("identity").evaluate(h), h)
        np.testing.assert_allclose(
            speed_function("power", p=2.0).evaluate(h), h**2)
        np.testing.assert_allclose(
            speed_function("exponential").evaluate(h), np.exp(h))
        np.testing.assert_allclose(
            speed_function("log1p").evaluate(h), np.log1p(h))

    def test_derivatives_match_fd(self):
        h = np.linspace(0.3, 4.0, 7)
        eps = 1e-6
        for kind, p in (("identity", None), ("power", 2.0),
                        ("power", 0.7), ("exponential", None),
                        ("log1p", None)):
            sp = speed_function(kind, p=p)
            fd = (sp.evaluate(h + eps) - sp.evaluate(h - eps)) / (2 * eps)
            np.testing.assert_allclose(sp.derivative(h), fd, rtol=1e-7)

    def test_factory_validation(self):
        with pytest.raises(ValueError):
            speed_function("cosine")
        with pytest.raises(ValueError):
            speed_function("power", p=-1.0)
        with pytest.raises(ValueError):
            speed_function("identity", p=2.0)

    def test_admissibility_conditions(self):
        for kind, p in (("identity", None), ("power", 2.0),
                        ("exponential", None)):
            rep = check_conditions(speed_function(kind, p=p))
            assert rep.all_pass, (kind, rep)
        # log1p grows too slowly to dominate large curvature
        rep = check_conditions(speed_function("log1p"))
        assert not rep.grows_unbounded
        assert rep.derivative_positive and rep.ratio_diverges
        assert not rep.all_pass
        # sublinear powers fail the growth condition the same way
        assert not check_conditions(speed_function("power", p=0.4)).all_pass


class TestForcing:
    def test_zero_mean_speed(self, ellipse_256):
        phi = forcing(ellipse_256, 0.5, speed_function("identity"))
        from fracflow.nonlocal_ops import h_s_all
        v = -h_s_all(ellipse_256, 0.5) + phi
        total = np.sum(ellipse_256.weights * v)
        assert abs(total) < 1e-12 * ellipse_256.perimeter

    def test_circle_is_stationary(self):
        curve = build_curve(circle_points(256))
        config = identity_config(t_end=1e-3, resample_every=0)
        state = make_state(curve, config)
        for _ in range(5):
            state = step(state, config)
        drift = np.max(np.abs(state.curve.points - curve.points))
        assert drift < 1e-12


class TestStep:
    def test_area_renormalized_exactly(self, ellipse_256):
        config = identity_config(t_end=0.01)
        state = make_state(ellipse_256, config)
        for _ in range(20):
            state = step(state, config)
        assert state.curve.area == pytest.approx(state.area0, rel=1e-13)

    def test_translation_equivariance(self, ellipse_256):
        config = identity_config(t_end=0.005)
        s1 = make_state(ellipse_256, config)
        shifted = build_curve(ellipse_256.points + np.array([3.0, 4.0]))
        s2 = make_state(shifted, config)
        for _ in range(30):
            s1 = step(s1, config)
            s2 = step(s2, config)
        np.testing.assert_allclose(
            s2.curve.points - np.array([3.0, 4.0]), s1.curve.points,
            atol=1e-10)

    def test_step_collapse_on_tiny_curve(self):
        curve = build_curve(circle_points(64, radius=1e-9))
        config = FlowConfig(s=0.5, speed=speed_function("identity"),
                            n_points=64, t_end=1.0)
        state = make_state(curve, config)
        with pytest.raises(StepCollapse):
            step(state, config)

    def test_landing_is_exact(self, ellipse_256):
        config = identity_config(t_end=1.0)
        state = make_state(ellipse_256, config)
        target = 5e-4
        while state.time < target:
            state = step(state, config, t_target=target)
        assert state.time == target  # bitwise, not approx

    def test_event_log_schedule(self, ellipse_256):
        # each state carries only its own step's events; collect across steps
        config = identity_config(t_end=0.02, resample_every=25)
        state = make_state(ellipse_256, config)
        events = []
        for _ in range(60):
            state = step(state, config)
            events.extend(state.event_log)
        resamples = [e.step for e in events if e.kind == "resample"]
        assert resamples == [25, 50]
        renorms = [e.step for e in events if e.kind == "renormalize"]
        assert len(renorms) == 60


class TestRun:
    def test_snapshot_times_bitwise(self, ellipse_256):
        # the seed state is always snapshot zero; requested times follow
        # and are landed on exactly, not within a tolerance
        grid = [1e-4, 7e-4, 1.3e-3]
        config = identity_config(t_end=2e-3)
        result = run(ellipse_256, config, snapshot_times=grid)
        assert [s.time for s in result.snapshots[1:4]] == grid

    def test_observer_sees_every_state(self, ellipse_256):
        config = identity_config(t_end=0.003)
        seen = []
        result = run(ellipse_256, config, observer=seen.append)
        assert len(seen) == result.total_steps + 1
        assert seen[0].step_count == 0
        assert seen[-1].time == config.t_end

    def test_stop_predicate(self, ellipse_256):
        config = identity_config(t_end=50.0)
        from fracflow.diagnostics import sphere_deviation_stop
        result = run(ellipse_256, config,
                     stop_when=sphere_deviation_stop(0.35))
        assert result.final_state.time < 50.0


class TestShrinkingCircle:
    def test_closed_form_properties(self):
        s = 0.5
        c = UNIT_CIRCLE_HS[s]
        assert shrinking_circle(1.0, s, 0.0) == pytest.approx(1.0, rel=1e-14)
        # dR/dt = -c R^(-s)
        eps = 1e-7
        fd = (shrinking_circle(1.0, s, eps) - 1.0) / eps
        assert fd == pytest.approx(-c, rel=1e-5)
        with pytest.raises(PastExtinction):
            shrinking_circle(1.0, s, 1.0 / ((1.0 + s) * c) + 1e-9)

    def test_unforced_run_tracks_closed_form(self):
        s = 0.5
        curve = build_curve(circle_points(256))
        t_end = 0.3 / ((1.0 + s) * UNIT_CIRCLE_HS[s])
        config = FlowConfig(s=s, speed=speed_function("identity"),
                            n_points=256, t_end=t_end,
                            renormalize_volume=False, forcing_enabled=False)
        result = run(curve, config)
        final = result.final_state.curve
        r = np.mean(np.linalg.norm(final.points - final.points.mean(axis=0),
                                   axis=1))
        assert r == pytest.approx(shrinking_circle(1.0, s, t_end), rel=1e-3)


class TestContainment:
    def _trajectory(self, radius, times):
        config = identity_config(t_end=float(times[-1]) or 1e-3, n_points=64)
        curve = build_curve(circle_points(64, radius=radius))
        return run(curve, config, snapshot_times=times).snapshots

    def test_grid_mismatch(self):
        inner = self._trajectory(0.5, [1e-4, 2e-4])
        outer = self._trajectory(1.0, [1e-4])
        with pytest.raises(GridMismatch):
            comparison_containment(inner, outer)

    def test_not_contained_at_start(self):
        inner = self._trajectory(2.0, [1e-4])
        outer = self._trajectory(1.0, [1e-4])
        with pytest.raises(NotContained):
            comparison_containment(inner, outer)

    def test_containment_holds(self):
        times = [0.0, 1e-4, 2e-4]
        inner = self._trajectory(0.5, times)
        outer = self._trajectory(1.0, times)
        report = comparison_containment(inner, outer)
        assert report.all_contained
        assert report.first_violation is None
        assert list(report.contained) == [True, True, True]


class TestRepair:
    def test_repair_restores_convexity_and_area(self):
        dented = circle_points(128)
        dented[5] *= 0.97            # small inward dent
        curve = _repair_convexity(dented, 128, 1e-10)
        assert curve.n == 128        # already a valid convex curve
        x, y = dented[:, 0], dented[:, 1]
        dent_area = 0.5 * np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y)
        assert curve.area == pytest.approx(dent_area, rel=1e-12)

    def test_repair_degenerate_input(self):
        line = np.column_stack([np.linspace(0, 1, 64), np.zeros(64)])
        with pytest.raises(CurveDegenerate):
            _repair_convexity(line, 64, 1e-10)


class TestConfigValidation:
    def test_field_checks(self):
        sp = speed_function("identity")
        with pytest.raises(ValueError, match="cfl"):
            FlowConfig(s=0.5, speed=sp, n_points=256, t_end=1.0, cfl=1.5)
        with pytest.raises(ValueError, match="t_end"):
            FlowConfig(s=0.5, speed=sp, n_points=256, t_end=0.0)
        with pytest.raises(ValueError, match="n_points"):
            FlowConfig(s=0.5, speed=sp, n_points=8, t_end=1.0)
        with pytest.raises(ValueError, match="renormalize"):
            FlowConfig(s=0.5, speed=sp, n_points=256, t_end=1.0,
                       forcing_enabled=False, renormalize_volume=True)

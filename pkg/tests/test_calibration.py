import numpy as np
import pytest
from scipy.special import gamma

from fracflow.calibration import UNIT_CIRCLE_HS, UNIT_DISK_PER_S, unit_circle_hs
from fracflow.geometry import build_curve, circle_points
from fracflow.nonlocal_ops import h_s_all, per_s_boundary


def closed_form(s):
    # 2^(1-s) (1-s) sqrt(pi) Gamma((1-s)/2) / Gamma(1 - s/2)
    return (2.0**(1.0 - s) * (1.0 - s) * np.sqrt(np.pi)
            * gamma((1.0 - s) / 2.0) / gamma(1.0 - s / 2.0))


def test_frozen_table_matches_closed_form():
    for s, value in UNIT_CIRCLE_HS.items():
        assert value == pytest.approx(closed_form(s), rel=1e-14)


def test_unit_circle_hs_function():
    for s in (0.1, 0.25, 0.5, 0.75, 0.9):
        assert unit_circle_hs(s) == pytest.approx(closed_form(s), rel=1e-14)
    # endpoint limits: the full circle perimeter at s->0, and 2 at s->1
    assert unit_circle_hs(1e-9) == pytest.approx(2 * np.pi, rel=1e-6)
    assert unit_circle_hs(1 - 1e-9) == pytest.approx(2.0, rel=1e-6)


def test_curvature_quadrature_hits_table(unit_circle_1024):
    # the correction remainder scales like h^(2-s), so the tolerance
    # tracks the order; s=0.5 sits at 2.5e-7 on this grid
    for s, tol in ((0.25, 5e-6), (0.5, 1e-6), (0.75, 2e-5)):
        h = h_s_all(unit_circle_1024, s)
        assert np.max(np.abs(h / UNIT_CIRCLE_HS[s] - 1.0)) < tol


def test_perimeter_quadrature_hits_disk_table():
    # the frozen disk values come from the region double integral; the
    # boundary reduction must land on them
    curve = build_curve(circle_points(2048))
    for s in (0.25, 0.5, 0.75):
        rel = abs(per_s_boundary(curve, s) / UNIT_DISK_PER_S[s] - 1.0)
        assert rel < 2e-5

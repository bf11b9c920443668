import numpy as np
import pytest

from fracflow.geometry import build_curve, circle_points, ellipse_points, resample


@pytest.fixture(scope="session")
def unit_circle_512():
    return build_curve(circle_points(512))


@pytest.fixture(scope="session")
def unit_circle_1024():
    return build_curve(circle_points(1024))


@pytest.fixture(scope="session")
def ellipse_arc_512():
    # canonical 2:1 ellipse on an equal-arc grid
    return resample(build_curve(ellipse_points(4096, a=2.0, b=1.0)), 512)


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)

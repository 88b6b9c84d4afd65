import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from billoc.geometry import (
    BilliardShape,
    arclength_of_theta,
    area,
    boundary_point,
    contains,
    curvature,
    position,
    speed,
    theta_of_arclength,
)

lams = st.floats(0.0, 0.5)
thetas = st.floats(-20.0, 20.0)


def test_shape_validation():
    with pytest.raises(ValueError):
        BilliardShape(0.6)
    with pytest.raises(ValueError):
        BilliardShape(-0.1)
    with pytest.raises(ValueError):
        BilliardShape(float("nan"))


def test_circle_limits():
    sh = BilliardShape(0.0)
    assert sh.perimeter == pytest.approx(2 * math.pi, abs=1e-14)
    assert sh.area == pytest.approx(math.pi, abs=1e-14)


@pytest.mark.parametrize(
    "lam, theta, pos, kappa",
    [
        (0.0, 0.0, (1.0, 0.0), 1.0),
        (0.25, math.pi, (-0.75, 0.0), 0.0),
        (0.15, math.pi / 2, (-0.15, 1.0), None),
    ],
)
def test_boundary_point_examples(lam, theta, pos, kappa):
    bp = boundary_point(BilliardShape(lam), theta)
    np.testing.assert_allclose(bp.position, pos, atol=1e-14)
    if kappa is not None:
        assert bp.curvature == pytest.approx(kappa, abs=1e-12)


@settings(max_examples=200, deadline=None)
@given(lams, thetas)
def test_frame_is_orthonormal(lam, theta):
    bp = boundary_point(BilliardShape(lam), theta)
    assert abs(np.linalg.norm(bp.tangent) - 1) < 1e-12
    assert abs(np.linalg.norm(bp.inward_normal) - 1) < 1e-12
    assert abs(bp.tangent @ bp.inward_normal) < 1e-12
    assert 0.0 <= bp.theta < 2 * math.pi
    assert 0.0 <= bp.arclength <= BilliardShape(lam).perimeter


def test_inward_normal_points_inside():
    sh = BilliardShape(0.3)
    for th in np.linspace(0, 2 * np.pi, 50, endpoint=False):
        bp = boundary_point(sh, th)
        x, y = bp.position + 1e-4 * bp.inward_normal
        assert contains(sh, x, y)


def test_arclength_circle():
    assert arclength_of_theta(BilliardShape(0.0), 1.3) == pytest.approx(1.3, abs=1e-14)


def test_arclength_roundtrip(rng):
    sh = BilliardShape(0.25)
    th = rng.uniform(0, 2 * np.pi, 100)
    back = theta_of_arclength(sh, arclength_of_theta(sh, th))
    assert np.max(np.abs(back - th)) < 1e-10


@pytest.mark.parametrize("lam", [0.0, 0.1, 0.25, 0.4, 0.5])
def test_perimeter_against_quadrature(lam):
    sh = BilliardShape(lam)
    L, _ = quad(lambda t: math.sqrt(1 + 4 * lam * math.cos(t) + 4 * lam * lam), 0, 2 * math.pi,
                epsabs=1e-14, epsrel=1e-14, limit=200)
    assert arclength_of_theta(sh, 0.0) == 0.0
    assert arclength_of_theta(sh, 2 * math.pi) == pytest.approx(L, rel=1e-12)
    assert sh.perimeter == pytest.approx(L, rel=1e-12)


@pytest.mark.parametrize("lam", [0.15, 0.25, 0.35])
def test_arclength_matches_quadrature_pointwise(lam):
    sh = BilliardShape(lam)
    for th in (0.3, 1.7, 3.0, 4.4, 6.0):
        ref, _ = quad(lambda t: speed(sh, t), 0, th, epsabs=1e-14, epsrel=1e-14)
        assert float(arclength_of_theta(sh, th)) == pytest.approx(ref, rel=1e-12)


def test_arclength_monotone():
    sh = BilliardShape(0.45)
    s = arclength_of_theta(sh, np.linspace(0, 2 * np.pi, 10001))
    assert np.all(np.diff(s) > 0)


@pytest.mark.parametrize("lam", [0.1, 0.25, 0.5])
def test_perimeter_polygon(lam):
    sh = BilliardShape(lam)
    x, y = position(sh, np.linspace(0, 2 * np.pi, 1_000_001))
    poly = np.sum(np.hypot(np.diff(x), np.diff(y)))
    assert abs(poly - sh.perimeter) / sh.perimeter < 1e-6


def test_area_circle():
    assert area(BilliardShape(0.0)) == pytest.approx(math.pi)


@pytest.mark.parametrize("lam", [0.5, 0.15])
def test_area_monte_carlo(lam):
    sh = BilliardShape(lam)
    rng = np.random.default_rng(7)
    x0, x1, y0, y1 = -1.0, 1.6, -1.4, 1.4
    hits = 0
    n = 10_000_000
    for _ in range(10):
        x = rng.uniform(x0, x1, n // 10)
        y = rng.uniform(y0, y1, n // 10)
        hits += int(np.count_nonzero(contains(sh, x, y)))
    mc = hits / n * (x1 - x0) * (y1 - y0)
    assert abs(mc - sh.area) / sh.area < 1e-3
    assert sh.area == pytest.approx(math.pi * (1 + 2 * lam * lam), rel=1e-15)


def test_curvature_sign_regimes():
    th = np.linspace(0, 2 * np.pi, 20001)
    assert np.all(curvature(BilliardShape(0.2), th) > 0)
    k = curvature(BilliardShape(0.25), th)
    assert np.all(k >= -1e-12)
    assert abs(float(curvature(BilliardShape(0.25), math.pi))) < 1e-14
    assert np.count_nonzero(np.abs(k) < 1e-6) <= 3
    assert float(curvature(BilliardShape(0.3), math.pi)) < 0


def test_curvature_against_finite_differences():
    sh = BilliardShape(0.35)
    th = np.linspace(0.1, 6.0, 40)
    h = 1e-4
    x, y = position(sh, th)
    xp, yp = position(sh, th + h)
    xm, ym = position(sh, th - h)
    dx, dy = (xp - xm) / (2 * h), (yp - ym) / (2 * h)
    ddx, ddy = (xp - 2 * x + xm) / h ** 2, (yp - 2 * y + ym) / h ** 2
    k_fd = (dx * ddy - dy * ddx) / (dx * dx + dy * dy) ** 1.5
    np.testing.assert_allclose(curvature(sh, th), k_fd, atol=1e-6)


@settings(max_examples=100, deadline=None)
@given(lams, thetas)
def test_reflection_symmetry(lam, theta):
    sh = BilliardShape(lam)
    a = boundary_point(sh, theta).position
    b = boundary_point(sh, -theta).position
    assert a[1] == pytest.approx(-b[1], abs=1e-12)
    assert a[0] == pytest.approx(b[0], abs=1e-12)


def test_contains_basic():
    sh = BilliardShape(0.25)
    assert contains(sh, 0.0, 0.0)
    assert not contains(sh, 1.3, 0.0)
    assert contains(sh, 1.24, 0.0)
    assert not contains(sh, -0.76, 0.0)

import numpy as np
import pytest
from hypothesis import given, strategies as st

from nlneumann import (Ball, Box, ConvexPolygon, CornerPoint, HalfSpace, ImplicitSDF, Interval, NotConvex,
                       closest_point, dist_to_closure, enumerate_normal_cone, normal, normal_cone,
                       signed_distance, truncated_distance)

coord = st.floats(-5, 5, allow_nan=False)


def presets():
    return [Interval(0, 1), Box([0, 0], [1, 1]), Ball([0, 0], 1.0), Ball([0.2, -0.1, 0.3], 0.7),
            ConvexPolygon([[0, 0], [2, 0], [1, 1.5]]), HalfSpace([0, 0], [0, -1])]


def test_dist_examples():
    assert dist_to_closure(Interval(0, 1), 1.5) == pytest.approx(0.5)
    assert dist_to_closure(Ball([0, 0], 1), [2, 0]) == pytest.approx(1.0)
    assert dist_to_closure(Ball([0, 0], 1), [0.3, 0.2]) == 0.0


def test_signed_distance_examples():
    b = Ball([0, 0], 1)
    assert signed_distance(b, [0.5, 0]) == pytest.approx(0.5)
    assert signed_distance(b, [1.2, 0]) == pytest.approx(-0.2)
    # half-space {x2 > 0}: outward normal -e2
    hs = HalfSpace([0, 0], [0, -1])
    assert signed_distance(hs, [0.4, -0.3]) == pytest.approx(-0.3)


def test_signed_distance_is_clamped_away_from_boundary():
    b = Ball([0, 0], 1)
    far = signed_distance(b, np.array([[50.0, 0], [5.0, 0], [0, 0]]))
    assert np.all(np.abs(far) <= 1.5 * b.band + 1e-12)


def test_truncated_distance():
    b = Ball([0, 0], 1)
    assert truncated_distance(b, [0, 0]) == 0
    assert truncated_distance(b, [1.4, 0]) == pytest.approx(0.4)
    assert truncated_distance(b, [8, 0]) == 1.0


def test_normals():
    assert np.allclose(normal(Ball([0, 0], 1), [2, 0]), [1, 0])
    assert np.allclose(normal(Box([0, 0], [1, 1]), [0.5, 1.3]), [0, 1])
    sdf = ImplicitSDF("sqrt(x1^2 + x2^2) - 1", 2, ([-1, -1], [1, 1]), convex=True)
    assert np.allclose(normal(sdf, [0, 3]), [0, 1], atol=1e-5)


def test_corner_normal_raises():
    with pytest.raises(CornerPoint):
        normal(Box([0, 0], [1, 1]), [1, 1])


def test_normal_cone():
    sq = Box([0, 0], [1, 1])
    ext = normal_cone(sq, [1, 1])
    assert {tuple(np.round(g, 12)) for g in ext} == {(1.0, 0.0), (0.0, 1.0)}
    (g,) = normal_cone(sq, [1, 0.5])
    assert np.allclose(g, [1, 0])
    p = np.array([0.6, 0.8])
    (g,) = normal_cone(Ball([0, 0], 1), p)
    assert np.allclose(g, p)
    rays = enumerate_normal_cone(sq, [1, 1], n_rays=64)
    assert rays.shape == (64, 2)
    assert np.allclose(np.linalg.norm(rays, axis=1), 1)
    assert np.all(rays >= -1e-12)


def test_normal_cone_needs_convexity():
    sdf = ImplicitSDF("x1^2 + x2^2 - 1", 2, ([-1, -1], [1, 1]), convex=False)
    with pytest.raises(NotConvex):
        normal_cone(sdf, [1, 0])


@pytest.mark.parametrize("dom", presets(), ids=lambda d: type(d).__name__)
def test_lipschitz_and_zero_on_closure(dom):
    rng = np.random.default_rng(0)
    x = rng.uniform(-3, 3, size=(500, dom.dim))
    y = rng.uniform(-3, 3, size=(500, dom.dim))
    dx, dy = dom.dist_to_closure(x), dom.dist_to_closure(y)
    assert np.all(dx >= 0)
    assert np.all(np.abs(dx - dy) <= np.linalg.norm(x - y, axis=1) + 1e-12)
    assert np.all((dx == 0) == dom.contains(x))


@pytest.mark.parametrize("dom", presets(), ids=lambda d: type(d).__name__)
def test_convexity_of_distance(dom):
    rng = np.random.default_rng(1)
    x = rng.uniform(-3, 3, size=(500, dom.dim))
    y = rng.uniform(-3, 3, size=(500, dom.dim))
    mid = dom.dist_to_closure(0.5 * (x + y))
    assert np.all(mid <= 0.5 * (dom.dist_to_closure(x) + dom.dist_to_closure(y)) + 1e-12)


@pytest.mark.parametrize("dom", presets(), ids=lambda d: type(d).__name__)
def test_exterior_normals_unit_and_projection(dom):
    rng = np.random.default_rng(2)
    y = dom.sample_exterior(200, rng, width=2.0)
    n = dom.normal_field(y)
    assert np.allclose(np.linalg.norm(n, axis=1), 1.0)
    p = y - dom.dist_to_closure(y)[:, None] * n
    assert np.all(np.abs(dom.signed_distance(p)) <= 1e-10 * dom.diameter)
    # projection is a contraction
    z = dom.sample_exterior(200, rng, width=2.0)
    py, pz = closest_point(dom, y), closest_point(dom, z)
    assert np.all(np.linalg.norm(py - pz, axis=1) <= np.linalg.norm(y - z, axis=1) + 1e-12)


@pytest.mark.parametrize("dom", presets(), ids=lambda d: type(d).__name__)
def test_signed_and_plain_distance_agree_in_band(dom):
    rng = np.random.default_rng(3)
    y = dom.sample_exterior(200, rng, width=0.9 * dom.band)
    assert np.allclose(-dom.signed_distance(y), dom.dist_to_closure(y), atol=1e-12)


def test_implicit_sdf_warns_on_false_convexity_claim():
    with pytest.warns(UserWarning):
        ImplicitSDF("min(sqrt((x1-1)^2+x2^2), sqrt((x1+1)^2+x2^2)) - 0.8", 2, ([-1.8, -0.8], [1.8, 0.8]),
                    convex=True)


@given(st.tuples(coord, coord))
def test_ball_distance_property(p):
    b = Ball([0.5, -0.5], 1.3)
    x = np.array(p)
    r = np.linalg.norm(x - b.center)
    assert b.dist_to_closure(x) == pytest.approx(max(r - 1.3, 0.0), abs=1e-12)


@given(st.tuples(coord, coord), st.tuples(coord, coord))
def test_polygon_lipschitz_property(p, q):
    poly = ConvexPolygon([[0, 0], [2, 0], [2, 1], [0.5, 1.5]])
    x, y = np.array(p), np.array(q)
    assert abs(poly.dist_to_closure(x) - poly.dist_to_closure(y)) <= np.linalg.norm(x - y) + 1e-12

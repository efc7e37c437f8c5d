import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from nlneumann import (Ball, ClosureRequired, DeltaTooLarge, FunctionClosure, Grid, LevyModel, NonIntegrable,
                       ObliqueField, apply_nonlocal, apply_nonlocal_all, build_quadrature,
                       check_exterior_integrability, default_c_alpha, far_operator)
from nlneumann.levy import ClampClosure

from oracles import fractional_1d, fractional_c, gauss, gauss_d2, gauss_d4


def gauss_closure():
    return FunctionClosure(lambda p: np.exp(-np.sum(p * p, axis=-1)))


def test_default_constant_matches_gamma_formula():
    for dim in (1, 2, 3):
        for alpha in (0.3, 1.0, 1.7):
            assert default_c_alpha(dim, alpha) == pytest.approx(fractional_c(dim, alpha), rel=1e-14)
    assert default_c_alpha(1, 1.0) == pytest.approx(1 / math.pi)


def test_small_jump_moment_closed_form():
    m = LevyModel("fractional", 1, alpha=1.0)
    assert m.small_second_moment(0.01)[0, 0] == pytest.approx(2 * m.c_alpha * 0.01, rel=1e-12)
    m = LevyModel("fractional", 1, alpha=0.6)
    d = 0.02
    assert m.small_second_moment(d)[0, 0] == pytest.approx(2 * m.c_alpha * d ** 1.4 / 1.4, rel=1e-12)


def test_small_jump_moment_2d_is_isotropic():
    m = LevyModel("fractional", 2, alpha=1.5)
    S = m.small_second_moment(0.05)
    # int_{|z|<d} z z^T c|z|^{-2-a} dz = c pi d^{2-a}/(2-a) I in 2-D
    assert np.allclose(S, m.c_alpha * math.pi * 0.05 ** 0.5 / 0.5 * np.eye(2), rtol=1e-10)


def unit_cp():
    return LevyModel("compound_poisson", 1, density=lambda z: np.ones(np.atleast_2d(z).shape[0]),
                     support=([1.0], [2.0]), support_cells=32)


def test_compound_poisson_weights_and_moment():
    m = unit_cp()
    # cell centroids 1 + (2k+1)/64 fall on nodes, so interpolation is exact
    g = Grid([-3], [3], 1 / 64, cell_centered=False)
    T = build_quadrature(m, g, delta=0.5)
    assert T.w.sum() == pytest.approx(1.0, rel=1e-12)
    assert np.all(T.w >= 0)
    assert np.allclose(T.sigma_small, 0)
    i = int(np.argmin(np.abs(g.points[:, 0] - g.points[g.n // 2, 0])))
    x0 = g.points[i, 0]
    u = (g.points[:, 0] - x0) ** 2
    assert apply_nonlocal(T, u, ClampClosure(g), i) == pytest.approx(7 / 3, rel=1e-12)


def test_tempered_tail_mass_decreases():
    m = LevyModel("tempered", 1, alpha=1.2, tempering=0.5)
    assert m.tail_mass(20.0) < m.tail_mass(10.0)
    assert m.tail_mass(80.0) < 1e-12


def test_constants_are_annihilated():
    for dim, h in ((1, 1 / 64), (2, 1 / 8)):
        m = LevyModel("fractional", dim, alpha=1.0)
        g = Grid(-2 * np.ones(dim), 2 * np.ones(dim), h)
        T = build_quadrature(m, g)
        v = apply_nonlocal_all(T, np.full(g.n, 3.0), FunctionClosure(lambda p: np.full(p.shape[0], 3.0)))
        assert np.max(np.abs(v)) < 1e-10


def test_gaussian_at_origin_matches_oracle():
    m = LevyModel("fractional", 1, alpha=1.0, tail="fold")
    h = 1 / 256
    g = Grid([-8], [8], h, cell_centered=False)
    i = int(np.argmin(np.abs(g.points[:, 0])))
    T = build_quadrature(m, g, rows=[i], delta=0.1 * math.sqrt(h))
    val = apply_nonlocal(T, np.exp(-g.points[:, 0] ** 2), gauss_closure(), i)
    ref = fractional_1d(gauss, gauss_d2, gauss_d4, 0.0, 1.0, m.c_alpha)
    assert abs(val - ref) <= 1e-3 * abs(ref)


@pytest.mark.parametrize("alpha", [0.5, 1.0, 1.5])
def test_consistency_rate(alpha):
    # without the quadratic correction the h-dependent errors dominate the quadrature floor
    m = LevyModel("fractional", 1, alpha=alpha, tail="fold", radial_nodes=64, moment_correction=False)
    errs, hs = [], [1 / 32, 1 / 64, 1 / 128]
    ref = fractional_1d(gauss, gauss_d2, gauss_d4, 0.0, alpha, m.c_alpha)
    for h in hs:
        g = Grid([-8], [8], h, cell_centered=False)
        i = int(np.argmin(np.abs(g.points[:, 0])))
        T = build_quadrature(m, g, rows=[i], delta=math.sqrt(h))
        errs.append(abs(apply_nonlocal(T, np.exp(-g.points[:, 0] ** 2), gauss_closure(), i) - ref))
    slope = np.polyfit(np.log(hs), np.log(errs), 1)[0]
    assert slope >= min(1.0, 2 - alpha) - 0.05


def test_monotone_far_weights():
    m = LevyModel("fractional", 2, alpha=1.2)
    g = Grid([-2, -2], [2, 2], 1 / 8)
    rows = np.arange(0, g.n, 7)
    T = build_quadrature(m, g, rows=rows)
    J, _ = far_operator(T, ClampClosure(g))
    C = J.tocoo()
    off = C.col != rows[C.row]
    assert np.all(C.data[off] >= -1e-14)
    assert np.all(np.linalg.eigvalsh(T.diffusion) >= -1e-14)


def test_perturbation_monotonicity():
    m = LevyModel("fractional", 1, alpha=0.8)
    g = Grid([-3], [3], 1 / 32)
    T = build_quadrature(m, g)
    rng = np.random.default_rng(0)
    u = rng.normal(size=g.n)
    base = apply_nonlocal_all(T, u, ClampClosure(g))
    for j in rng.choice(g.n, 10, replace=False):
        v = u.copy()
        v[j] += 1.0
        new = apply_nonlocal_all(T, v, ClampClosure(g))
        mask = np.arange(g.n) != j
        assert np.all(new[mask] >= base[mask] - 1e-12)


def test_translation_equivariance():
    m = LevyModel("fractional", 1, alpha=1.3, tail="fold")
    h = 1 / 128
    g = Grid([-8], [8], h, cell_centered=False)
    c = 0.5
    i = int(np.argmin(np.abs(g.points[:, 0])))
    j = int(np.argmin(np.abs(g.points[:, 0] - c)))
    T = build_quadrature(m, g, rows=[i, j])
    x = g.points[:, 0]
    a = apply_nonlocal_all(T, np.exp(-x ** 2), gauss_closure())[0]
    b = apply_nonlocal_all(T, np.exp(-(x - c) ** 2), FunctionClosure(lambda p: np.exp(-(p[:, 0] - c) ** 2)))[1]
    # the landing set inside the box shifts with x, which moves the correction slightly
    assert a == pytest.approx(b, rel=1e-6)


def test_scaling_law():
    alpha, s = 1.5, 2.0
    m = LevyModel("fractional", 1, alpha=alpha, tail="fold")
    h = 1 / 512
    g = Grid([-8], [8], h, cell_centered=False)
    x = g.points[:, 0]
    x0 = 0.25
    i = int(np.argmin(np.abs(x - x0)))
    k = int(np.argmin(np.abs(x - s * x0)))
    T = build_quadrature(m, g, rows=[i, k], delta=0.1 * math.sqrt(h))
    us = apply_nonlocal_all(T, np.exp(-(s * x) ** 2), FunctionClosure(lambda p: np.exp(-(s * p[:, 0]) ** 2)))[0]
    u1 = apply_nonlocal_all(T, np.exp(-x ** 2), gauss_closure())[1]
    assert us == pytest.approx(s ** alpha * u1, rel=2e-3)


def test_delta_too_large_and_nonintegrable():
    m = LevyModel("fractional", 1, alpha=1.0)
    g = Grid([-1], [1], 1 / 256)
    with pytest.raises(DeltaTooLarge):
        build_quadrature(m, g, delta=0.5)
    with pytest.raises(DeltaTooLarge):
        build_quadrature(m, Grid([-3], [3], 0.5), delta=1.0)
    with pytest.raises(NonIntegrable):
        LevyModel("fractional", 1, alpha=2.0)


def test_closure_required():
    m = LevyModel("fractional", 1, alpha=1.0)
    g = Grid([-1], [1], 1 / 32)
    T = build_quadrature(m, g)
    with pytest.raises(ClosureRequired):
        apply_nonlocal_all(T, np.zeros(g.n), None)


def test_integrability_report():
    b = Ball([0, 0], 1)
    fld = ObliqueField.normal(b, g=1.0)
    assert check_exterior_integrability(LevyModel("fractional", 2, alpha=1.5), fld, b).ok
    rep = check_exterior_integrability(LevyModel("fractional", 2, alpha=0.5), fld, b)
    assert not rep.ok and rep.tag == "BC3"
    compact = ObliqueField.normal(b, g=0.0)
    assert check_exterior_integrability(LevyModel("fractional", 2, alpha=0.5), compact, b).ok


@given(st.floats(0.2, 1.9), st.floats(1e-3, 0.5))
def test_small_moment_formula_property(alpha, delta):
    m = LevyModel("fractional", 1, alpha=alpha)
    expected = 2 * m.c_alpha * delta ** (2 - alpha) / (2 - alpha)
    assert m.small_second_moment(delta)[0, 0] == pytest.approx(expected, rel=1e-10)


@given(st.floats(0.2, 1.9))
def test_far_weights_nonnegative_property(alpha):
    m = LevyModel("fractional", 2, alpha=alpha)
    z, w, _ = m.base_nodes(0.05)
    assert np.all(w >= 0)
    assert w.sum() == pytest.approx(m.mass(0.05, m.trunc_radius), rel=1e-9)

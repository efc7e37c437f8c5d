"""Acceptance criteria 1-10, one test each (criterion 8 has two parts)."""

import math

import numpy as np
import pytest

from nlneumann import (Ball, Box, Interval, JumpProcessConfig, LevyModel, Linear, Nonlinearity, ObliqueField,
                       Problem, SolverConfig, build_quadrature, apply_nonlocal_all, continuation_in_kappa,
                       FunctionClosure, integrate_flow, integrate_flow_batch, observed_orders, project,
                       simulate_value, solve, solve_direct, theta_time)
from nlneumann.grid import Grid

from oracles import fractional_1d


@pytest.mark.parametrize("mode", ["direct", "penalized"])
def test_c1_constant_solution(mode, criterion):
    pr = Problem(Interval(0, 1), Nonlinearity.fractional(1, a=1, lam=1, f=1), h=1 / 64,
                 levy=LevyModel("fractional", 1, alpha=1.0))
    sol = solve(pr, SolverConfig(bc_mode=mode))
    err = float(np.max(np.abs(sol.values[sol.closure_mask] - 1)))
    criterion(1, err <= 1e-7, f"[{mode}] max|u_h - 1| = {err:.2e} (tol 1e-7)")
    assert err <= 1e-7


def _random_linear(rng, dim):
    lam0 = rng.uniform(0.5, 2.0)
    f = f"{rng.uniform(-2, 2):.4f} + {rng.uniform(-1, 1):.4f}*sin({rng.uniform(1, 6):.3f}*x1)"
    if dim == 2:
        f += f" + {rng.uniform(-1, 1):.4f}*x2^2"
    b = ", ".join(f"{rng.uniform(-1, 1):.3f}*x{d + 1}" for d in range(dim))
    A = f"{rng.uniform(0, 0.5):.3f}" if dim == 1 else f"{rng.uniform(0, 0.5):.3f}, 0; 0, {rng.uniform(0, 0.5):.3f}"
    rec = Linear(dim, a=rng.uniform(0, 1.5), A=A, b=b, lam=f"{lam0:.4f} + {rng.uniform(0, 1):.3f}*x1^2", f=f)
    return Nonlinearity([rec], float(f"{lam0:.4f}"))


def test_c2_sup_bound(criterion):
    rng = np.random.default_rng(2024)
    worst = -np.inf
    for k in range(10):
        dim = 1 if k < 7 else 2
        nl = _random_linear(rng, dim)
        dom = Interval(0, 1) if dim == 1 else Ball([0, 0], 1)
        # small alpha in 2-D pushes the default box margin past 10 and the grid past 5e4 nodes
        alpha = rng.uniform(0.3, 1.7) if dim == 1 else rng.uniform(0.9, 1.7)
        mode = "direct" if k % 2 == 0 else "penalized"
        sol = solve(Problem(dom, nl, h=1 / 32 if dim == 1 else 1 / 8, levy=LevyModel("fractional", dim, alpha=alpha)),
                    SolverConfig(bc_mode=mode))
        worst = max(worst, float(np.max(np.abs(sol.values))) - sol.M_F / nl.lambda0)
    criterion(2, worst <= 1e-6, f"max over 10 configs of ||u_h|| - M_F/lambda0 = {worst:.3e} (tol 1e-6)")
    assert worst <= 1e-6


def test_c3_comparison(criterion):
    worst = -np.inf
    cases = [(Interval(0, 1), 1 / 64, "sin(5*x1)", "sin(5*x1) + 0.2*x1"),
             (Ball([0, 0], 1), 1 / 12, "x1*x2", "x1*x2 + 0.05 + 0.1*x2^2")]
    for dom, h, f1, f2 in cases:
        d = dom.dim
        lev = LevyModel("fractional", d, alpha=1.2)
        fld = ObliqueField.rotational(dom, 0.3, g=0.2) if d == 2 else ObliqueField.normal(dom, g=0.2)
        sols = [solve_direct(Problem(dom, Nonlinearity.linear(d, a=1, A=0.1, lam=1, f=f), h=h, levy=lev, field=fld))
                for f in (f1, f2)]
        worst = max(worst, float(np.max(sols[0].values - sols[1].values)))
    criterion(3, worst <= 1e-6, f"max(u1 - u2) = {worst:.3e} over 1-D and 2-D ball pairs (tol 1e-6)")
    assert worst <= 1e-6


def test_c4_closed_form_order(criterion):
    hs = [np.pi / 64, np.pi / 128, np.pi / 256]
    errs = []
    for h in hs:
        sol = solve_direct(Problem(Interval(0, np.pi), Nonlinearity.linear(1, A=1, lam=1, f="cos(x1)"), h=h))
        m = sol.closure_mask
        errs.append(float(np.max(np.abs(sol.values[m] - np.cos(sol.grid.points[m, 0]) / 2))))
    pair, slope = observed_orders(hs, errs)
    ok = min(pair.min(), slope) >= 1.9
    criterion(4, ok, f"errors {['%.2e' % e for e in errs]}, orders {np.round(pair, 4).tolist()} (need >= 1.9)")
    assert ok


def test_c5_fractional_quadrature(criterion):
    h = 1 / 512
    xs = np.array([-1.3, -0.5, 0.0, 0.7, 2.1])
    worst = 0.0
    for alpha in (0.5, 1.0, 1.5):
        m = LevyModel("fractional", 1, alpha=alpha, tail="fold")
        g = Grid([-8], [8], h)
        rows = [int(np.argmin(np.abs(g.points[:, 0] - x))) for x in xs]
        T = build_quadrature(m, g, rows=rows, delta=0.1 * math.sqrt(h))
        v = apply_nonlocal_all(T, np.exp(-g.points[:, 0] ** 2), FunctionClosure(lambda p: np.exp(-p[:, 0] ** 2)))
        ref = np.array([fractional_1d(lambda t: math.exp(-t * t), lambda t: (4 * t * t - 2) * math.exp(-t * t),
                                      lambda t: (16 * t ** 4 - 48 * t * t + 12) * math.exp(-t * t),
                                      g.points[r, 0], alpha, m.c_alpha) for r in rows])
        worst = max(worst, float(np.max(np.abs(v - ref) / np.abs(ref))))
    criterion(5, worst <= 1e-3, f"max relative error {worst:.2e} at h=1/512 (tol 1e-3)")
    assert worst <= 1e-3


def test_c6_penalization(criterion):
    h = np.pi / 64
    mk = lambda: Problem(Interval(0, np.pi), Nonlinearity.linear(1, a=1, A=1, lam=1, f="cos(x1)"), h=h,
                         levy=LevyModel("fractional", 1, alpha=1.0))
    sp_ = continuation_in_kappa(mk())
    sd = solve_direct(mk())
    m = sp_.closure_mask
    deltas = [t["delta"] for t in sp_.kappa_trace if t.get("delta") is not None]
    decreasing = all(b < a for a, b in zip(deltas, deltas[1:]))
    diff = float(np.max(np.abs(sp_.values[m] - sd.values[m])))
    bound = 5 * (deltas[-1] + 2 * h)
    ok = decreasing and diff <= bound
    criterion(6, ok, f"Delta_j {np.round(deltas, 4).tolist()} strictly decreasing: {decreasing}; "
                     f"sup|u_kappa - u_direct| = {diff:.4f} <= {bound:.4f}: {diff <= bound}")
    assert diff <= bound
    assert decreasing, "kappa-trace increments are not strictly decreasing"


def test_c7_extension_identity(criterion):
    b = Ball([0, 0], 1)
    h = 1 / 16
    sol = solve_direct(Problem(b, Nonlinearity.fractional(2, a=1, lam=1, f=0), h=h,
                               levy=LevyModel("fractional", 2, alpha=1.5), field=ObliqueField.normal(b, g=1.0)))
    g = sol.grid
    ext = g.sd < 0
    P, _ = project(b, g.points[ext])
    err = float(np.max(np.abs(sol.values[ext] - sol.at(P) - g.dbar[ext])))
    criterion(7, err <= 3 * h, f"max |u(y) - u(P_y) - dbar(y)| = {err:.2e} (tol 3h = {3 * h:.4f})")
    assert err <= 3 * h


def test_c8_flow_correctness(criterion):
    rng = np.random.default_rng(8)
    worst_t = worst_p = 0.0
    for dom in (Ball([0, 0], 1), Box([0, 0], [1, 1])):
        y = dom.sample_exterior(200, rng, width=2.0)
        fld = ObliqueField.normal(dom)
        t, x, _, status = integrate_flow_batch(fld, dom, y)
        assert np.all(status == 0)
        P, _ = project(dom, y)
        worst_t = max(worst_t, float(np.max(np.abs(t - dom.dist_to_closure(y)))))
        worst_p = max(worst_p, float(np.max(np.linalg.norm(x - P, axis=1))))

    # Gronwall: |X_x(t) - X_y(t)| <= exp(L t) |x - y| along both recorded flows
    b = Ball([0, 0], 1)
    fld = ObliqueField.rotational(b, 0.8)
    L = fld.L_gamma
    x0 = b.sample_exterior(100, rng, width=1.5)
    y0 = x0 + rng.normal(scale=0.05, size=x0.shape)
    y0 = np.where(b.signed_distance(y0)[:, None] < 0, y0, x0 * 1.05)
    gron = 0.0
    for x, y in zip(x0, y0):
        px = integrate_flow(fld, b, x, record_path=True).path
        py = integrate_flow(fld, b, y, record_path=True).path
        tx = np.array([s for s, _ in px])
        ty = np.array([s for s, _ in py])
        Xx = np.array([p for _, p in px])
        Xy = np.array([p for _, p in py])
        common = tx[tx <= ty[-1]]
        Yc = np.stack([np.interp(common, ty, Xy[:, d]) for d in range(2)], axis=1)
        Xc = Xx[: common.size]
        excess = np.linalg.norm(Xc - Yc, axis=1) - np.exp(L * common) * np.linalg.norm(x - y)
        gron = max(gron, float(np.max(excess)))
    ok = worst_t <= 1e-9 and worst_p <= 1e-9 and gron <= 1e-6
    criterion(8, ok, f"|tau - dbar| = {worst_t:.1e}, |endpoint - P| = {worst_p:.1e} (tol 1e-9); "
                     f"Gronwall excess {gron:.1e} on 100 pairs (L = {L:g})")
    assert ok


def test_c9_oblique_mc(criterion):
    dom = Ball([0, 0], 1)
    fld = ObliqueField.rotational(dom, 0.3, g=1.0)
    nl = Nonlinearity.fractional(2, a=1, lam=1, f=0)
    lev = LevyModel("fractional", 2, alpha=1.0)
    h = 1 / 32
    sol = solve_direct(Problem(dom, nl, h=h, levy=lev, field=fld, delta=h))
    pts = np.array([[0.0, 0.0], [0.5, 0.0], [0.0, -0.7], [-0.4, 0.4], [0.3, 0.6]])
    cfg = JumpProcessConfig(n_paths=200000, estimator="killing", delta=h, time_step=0.02, rng_seed=9)
    zs = []
    for x in pts:
        est, se = simulate_value(nl, lev, fld, dom, x, cfg)
        zs.append((float(sol.at(x)[0]) - est) / se)
    worst = float(np.max(np.abs(zs)))
    criterion(9, worst <= 3, f"z-scores {np.round(zs, 2).tolist()} with 2e5 paths (need |z| <= 3)")
    assert worst <= 3


def test_c10_theta_derivative(criterion):
    dom = Ball([0, 0], 1)
    fld = ObliqueField.rotational(dom, 0.3)
    rng = np.random.default_rng(10)
    r = rng.uniform(0.92, 0.98, 50)
    a = rng.uniform(0, 2 * np.pi, 50)
    y = np.stack([r * np.cos(a), r * np.sin(a)], -1)
    gm = fld.gamma(y)
    e = 1e-5
    d = (theta_time(fld, dom, 0.1, y + e * gm) - theta_time(fld, dom, 0.1, y - e * gm)) / (2 * e)
    err = float(np.max(np.abs(d - 2)))
    criterion(10, err <= 1e-3, f"max |gamma.D theta - 2| = {err:.1e} at 50 band points (tol 1e-3)")
    assert err <= 1e-3

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nlneumann import (Ball, Box, Discretization, Interval, LevyModel, Linear, MonotonicityViolation,
                       NoConvergence, Nonlinearity, ObliqueField, Problem, SolverConfig, StiffPenalty,
                       continuation_in_kappa, definition_semantics_probe, discretize_residual, fill_exterior,
                       observed_orders, solve, solve_direct, solve_fixed_point)

from oracles import cos_neumann_exact

DIRECT = SolverConfig(bc_mode="direct")
PEN = SolverConfig(bc_mode="penalized")


def cos_problem(h, **kw):
    return Problem(Interval(0, np.pi), Nonlinearity.linear(1, A=1, lam=1, f="cos(x1)"), h=h, **kw)


def frac_problem(f=1.0, h=1 / 32, alpha=1.0, **kw):
    return Problem(Interval(0, 1), Nonlinearity.fractional(1, a=1, lam=1, f=f), h=h,
                   levy=LevyModel("fractional", 1, alpha=alpha), **kw)


# ----------------------------------------------------------------- residual
def test_zero_data_zero_residual():
    pr = frac_problem(f=0.0)
    for cfg in (DIRECT, PEN):
        R = discretize_residual(pr, cfg, np.zeros(pr.grid.n))
        assert np.max(np.abs(R)) == 0.0


@pytest.mark.parametrize("cfg", [DIRECT, PEN], ids=["direct", "penalized"])
def test_sup_level_is_supersolution(cfg):
    pr = Problem(Interval(0, 1), Nonlinearity.linear(1, a=0.5, A="0.1", b="x1 - 0.5", lam="1 + x1^2",
                                                     f="sin(3*x1)", lambda0=1.0),
                 h=1 / 32, levy=LevyModel("fractional", 1, alpha=0.7))
    disc = Discretization(pr, cfg)
    from nlneumann import compute_MF
    mf = compute_MF(pr.nl, pr.grid, where="all" if cfg.bc_mode == "penalized" else "closure")
    R = discretize_residual(pr, cfg, np.full(pr.grid.n, mf / pr.nl.lambda0), disc=disc)
    assert np.min(R) >= -1e-12


def test_residual_of_exact_solution_is_second_order():
    errs, hs = [], []
    for n in (64, 128, 256):
        pr = cos_problem(np.pi / n)
        disc = Discretization(pr, DIRECT)
        g = pr.grid
        u = fill_exterior(pr, cos_neumann_exact(g.points[:, 0]), disc=disc)
        R = discretize_residual(pr, DIRECT, u, disc=disc)
        # away from the first cell, where the reflected ghost value is only
        # consistent in the finite-volume sense
        away = g.sd > 1.01 * g.h[0]
        errs.append(np.max(np.abs(R[away])))
        hs.append(g.h[0])
    _, slope = observed_orders(hs, errs)
    assert slope >= 1.9


def test_monotonicity_violation_detected():
    dom = Box([0, 0], [1, 1])
    nl = Nonlinearity.linear(2, A="1, 1.5; 1.5, 4", lam=1, f=1)
    with pytest.raises(MonotonicityViolation):
        solve_direct(Problem(dom, nl, h=1 / 8))


# ----------------------------------------------------------------- constants
@pytest.mark.parametrize("cfg", [DIRECT, PEN], ids=["direct", "penalized"])
@pytest.mark.parametrize("model", ["fractional", "tempered", "cp"])
def test_constant_data_exact(cfg, model):
    if model == "cp":
        lev = LevyModel("compound_poisson", 1, density=lambda z: np.exp(-np.abs(z[:, 0])),
                        support=([-3.0], [3.0]))
    else:
        lev = LevyModel(model, 1, alpha=1.3)
    c = -0.8
    pr = Problem(Interval(0, 1), Nonlinearity.linear(1, a=2.0, A=0.3, b="x1", lam=2.5, f=2.5 * c),
                 h=1 / 32, levy=lev)
    sol = solve(pr, SolverConfig(bc_mode=cfg.bc_mode, flatten=False))
    assert np.max(np.abs(sol.values - c)) <= 1e-8


def test_flattening_costs_order_kappa_on_constants():
    # the far-field blend to lambda0*u drops f, so constants are only exact up to O(kappa)
    lev = LevyModel("compound_poisson", 1, density=lambda z: np.exp(-np.abs(z[:, 0])), support=([-3.0], [3.0]))
    pr = Problem(Interval(0, 1), Nonlinearity.linear(1, a=2.0, lam=2.5, f=-2.0), h=1 / 32, levy=lev)
    errs = []
    for kmin in (4.0 ** -5, 4.0 ** -7):
        sol = continuation_in_kappa(pr, SolverConfig(kappa_schedule=(1.0, kmin)))
        errs.append(np.max(np.abs(sol.values[sol.closure_mask] + 0.8)))
    assert errs[1] < errs[0] / 8


def test_constant_exact_in_2d_ball():
    pr = Problem(Ball([0, 0], 1), Nonlinearity.fractional(2, a=1, lam=2, f=3.0), h=1 / 8,
                 levy=LevyModel("fractional", 2, alpha=1.5))
    assert np.max(np.abs(solve_direct(pr).values - 1.5)) <= 1e-9


def test_fractional_constant_solution():
    for cfg in (DIRECT, PEN):
        sol = solve(frac_problem(), cfg)
        assert np.max(np.abs(sol.values - 1.0)) <= 1e-7


# ----------------------------------------------------------------- comparison and bounds
@settings(max_examples=8, deadline=None)
@given(st.floats(-2, 2), st.floats(0, 1.5), st.floats(0.3, 1.7))
def test_comparison_property(shift, bump, alpha):
    f1 = f"{shift} + sin(4*x1)"
    f2 = f"{shift + bump} + sin(4*x1) + {bump}*x1^2"
    lev = LevyModel("fractional", 1, alpha=alpha)
    u1 = solve_direct(Problem(Interval(0, 1), Nonlinearity.linear(1, a=1, lam=1, f=f1), h=1 / 32, levy=lev))
    u2 = solve_direct(Problem(Interval(0, 1), Nonlinearity.linear(1, a=1, lam=1, f=f2), h=1 / 32, levy=lev))
    assert np.all(u1.values <= u2.values + 1e-8)


def test_oblique_comparison_in_g():
    b = Ball([0, 0], 1)
    nl = Nonlinearity.linear(2, A=0.5, lam=1, f=0)
    sols = [solve_direct(Problem(b, nl, h=1 / 8, field=ObliqueField.rotational(b, 0.3, g=g))) for g in (0.2, 0.5)]
    assert np.all(sols[0].values <= sols[1].values + 1e-8)


@settings(max_examples=6, deadline=None)
@given(st.floats(0.5, 3), st.floats(-2, 2), st.floats(0, 1), st.sampled_from(["direct", "penalized"]))
def test_sup_bound_property(lam, f0, a, mode):
    nl = Nonlinearity.linear(1, a=a, A=0.2, b="1 - 2*x1", lam=f"{lam} + x1", f=f"{f0}*cos(5*x1)", lambda0=lam)
    sol = solve(Problem(Interval(0, 1), nl, h=1 / 32, levy=LevyModel("fractional", 1, alpha=1.2)),
                SolverConfig(bc_mode=mode))
    bound, s, ok = sol.sup_bound(nl.lambda0)
    assert ok and s <= bound + 1e-6


# ----------------------------------------------------------------- penalization
def test_far_exterior_penalty_relation():
    g0 = 0.3
    pr = Problem(Interval(0, 1), Nonlinearity.linear(1, A=1, lam=1, f="cos(x1)"), h=1 / 16, margin=5.0,
                 field=ObliqueField.normal(Interval(0, 1), g=g0))
    kappa = 0.25
    cfg = SolverConfig(bc_mode="penalized", kappa_schedule=(kappa,))
    sol = solve_fixed_point(pr, cfg, kappa=kappa)
    disc = Discretization(pr, cfg)
    assert disc.flatten_radius is not None
    x = sol.grid.points[:, 0]
    u = sol.values
    h = sol.grid.h[0]
    far = np.nonzero(np.abs(x - 0.5) > disc.flatten_radius + 1.0 + 1e-12)[0]
    far = far[(far > 0) & (far < len(x) - 1)]
    assert far.size > 0
    for i in far:
        if x[i] < 0:  # gamma = -1, upwind toward the domain
            val = pr.nl.lambda0 * u[i] + (-(u[i + 1] - u[i]) / h - g0) / kappa
        else:
            val = pr.nl.lambda0 * u[i] + ((u[i] - u[i - 1]) / h - g0) / kappa
        assert abs(val) <= 1e-8 * (1 + abs(u[i]) / kappa)


def test_penalized_and_direct_agree():
    pr = cos_problem(np.pi / 64)
    sp_ = continuation_in_kappa(pr, SolverConfig(kappa_schedule=tuple(4.0 ** -k for k in range(9))))
    sd = solve_direct(cos_problem(np.pi / 64))
    m = sp_.closure_mask
    assert np.max(np.abs(sp_.values[m] - sd.values[m])) < 5 * (sp_.kappa_trace[-1]["delta"] + 2 * np.pi / 64)
    deltas = [t["delta"] for t in sp_.kappa_trace[1:]]
    assert deltas[-1] < max(deltas)


def test_kappa_schedule_validation():
    with pytest.raises(ValueError):
        SolverConfig(kappa_schedule=(1.0, 1.0))
    with pytest.raises(ValueError):
        SolverConfig(kappa_schedule=(1.0, -0.5))


# ----------------------------------------------------------------- explicit iteration
def test_explicit_matches_direct_and_decreases():
    pr = frac_problem(f="1 + x1^2", h=1 / 16)
    ref = solve_direct(pr)
    cfg = SolverConfig(bc_mode="direct", method="explicit", tol_residual=1e-12)
    sol = solve_direct(frac_problem(f="1 + x1^2", h=1 / 16), cfg)
    assert np.max(np.abs(sol.values - ref.values)) < 1e-9
    res = [r for _, r, _ in sol.residual_history]
    assert all(b <= a * (1 + 1e-12) for a, b in zip(res, res[1:]))


def test_explicit_no_convergence_and_stiff_penalty():
    with pytest.raises(NoConvergence) as err:
        solve_direct(frac_problem(f="x1", h=1 / 16), SolverConfig(bc_mode="direct", method="explicit", max_iters=5))
    assert len(err.value.history) == 6
    with pytest.raises(StiffPenalty):
        continuation_in_kappa(cos_problem(np.pi / 16),
                              SolverConfig(method="explicit", kappa_schedule=(1e-16,)))


def test_bellman_howard_matches_explicit():
    recs = [Linear(1, a=1.0, lam=1, f="cos(3*x1)"), Linear(1, A=0.5, b="1", lam=2, f="x1")]
    mk = lambda: Problem(Interval(0, 1), Nonlinearity.bellman(recs, 1.0), h=1 / 16,
                         levy=LevyModel("fractional", 1, alpha=1.0))
    a = solve_direct(mk())
    b = solve_direct(mk(), SolverConfig(bc_mode="direct", method="explicit", tol_residual=1e-11))
    assert np.max(np.abs(a.values - b.values)) < 1e-9
    assert a.final_residual < 1e-10


# ----------------------------------------------------------------- direct extension
def test_projection_identity_g_zero():
    b = Ball([0, 0], 1)
    sol = solve_direct(Problem(b, Nonlinearity.linear(2, A=1, lam=1, f="x1 + x2^2"), h=1 / 16))
    g = sol.grid
    ext = g.sd < 0
    P = b.closest_point(g.points[ext])
    assert np.max(np.abs(sol.values[ext] - sol.at(P))) < 1e-12


def test_extension_identity_g_one():
    b = Ball([0, 0], 1)
    sol = solve_direct(Problem(b, Nonlinearity.fractional(2, a=1, lam=1, f=0), h=1 / 16,
                               levy=LevyModel("fractional", 2, alpha=1.5), field=ObliqueField.normal(b, g=1.0)))
    g = sol.grid
    ext = g.sd < 0
    err = np.abs(sol.values[ext] - sol.at(b.closest_point(g.points[ext])) - g.dbar[ext])
    assert err.max() <= 3 * (1 / 16)


# ----------------------------------------------------------------- probe
def test_probe_interior_and_exterior():
    pr = cos_problem(np.pi / 64)
    sol = solve_direct(pr)
    rep = definition_semantics_probe(sol, pr, [1.0], gradient=[0.0], hessian=[[5.0]], side="above")
    assert rep.node_class == "interior" and rep.holds
    rep = definition_semantics_probe(sol, pr, [1.0], gradient=[0.0], hessian=[[-5.0]], side="below")
    assert rep.node_class == "interior" and rep.holds
    rep = definition_semantics_probe(sol, pr, [-0.4], gradient=[0.5], hessian=[[50.0]], side="above")
    assert rep.node_class == "exterior" and rep.holds


def test_probe_square_corner():
    dom = Box([0, 0], [1, 1])
    pr = Problem(dom, Nonlinearity.linear(2, A=1, lam=1, f="x1*x2"), h=1 / 16)
    sol = solve_direct(pr)
    rep = definition_semantics_probe(sol, pr, [1.0, 1.0], gradient=[0.2, 0.2], hessian=40 * np.eye(2),
                                     side="above")
    assert rep.node_class == "boundary" and rep.holds


def test_observed_orders():
    hs = np.array([0.1, 0.05, 0.025])
    pair, slope = observed_orders(hs, 3 * hs ** 2)
    assert np.allclose(pair, 2) and slope == pytest.approx(2)


def test_modes_agree_with_nonzero_flux():
    mk = lambda: Problem(Interval(0, 1), Nonlinearity.linear(1, A=1, lam=1, f="x1"), h=1 / 64,
                         field=ObliqueField.normal(Interval(0, 1), g=0.4))
    sd = solve_direct(mk())
    sp_ = continuation_in_kappa(mk(), SolverConfig(kappa_schedule=tuple(4.0 ** -k for k in range(8))))
    m = sp_.closure_mask
    # the flux pushes the solution up near both ends
    assert sd.at([0.0])[0] > sd.at([0.5])[0] and sp_.at([1.0])[0] > sp_.at([0.5])[0]
    assert np.max(np.abs(sp_.values[m] - sd.values[m])) < 0.05

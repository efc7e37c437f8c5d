"""Monotone finite-difference solver for the nonlocal problem with exterior conditions.

Two ways of imposing ``gamma.Du = g`` outside the domain are provided.

* ``penalized``: every box node carries
  ``F + (1/kappa) dtilde(x) (gamma.D u - g)`` with ``dtilde = min(dbar, 1)``,
  and kappa is driven to zero by continuation.
* ``direct``: nodes in the closed domain carry ``F``; every exterior node
  carries the extension relation ``u(y) = G(y) + u(P_y)``, where ``P_y`` is
  the landing point of the flow of ``-gamma`` and ``G`` the integral of g
  along it. ``u(P_y)`` is read by multilinear interpolation.

Each linear record assembles to a sparse matrix ``M`` and a vector ``r``
with residual ``M u - r``. Off-diagonal entries of ``M`` are nonpositive
(checked), which is the monotonicity of the scheme.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field as dc_field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import (MonotonicityViolation, NoConvergence, NoTouchingPoint, StiffPenalty)
from .flow import ObliqueField
from .grid import CLASS_NAMES, Grid
from .levy import ClampClosure, ExtensionClosure, build_quadrature, far_operator
from .nonlinearity import compute_MF

__all__ = [
    "SolverConfig",
    "Problem",
    "Solution",
    "Discretization",
    "discretize_residual",
    "solve_fixed_point",
    "solve_direct",
    "continuation_in_kappa",
    "solve",
    "fill_exterior",
    "definition_semantics_probe",
    "observed_orders",
]

DEFAULT_KAPPAS = tuple(4.0 ** -k for k in range(6))


@dataclass
class SolverConfig:
    """Solver settings.

    ``method="direct"`` solves each linear system exactly (Howard policy
    iteration for Bellman F); ``method="explicit"`` runs the damped sweep
    ``u <- u - rho R(u)``, whose fixed point is the same.
    """

    bc_mode: str = "penalized"
    kappa_schedule: tuple = DEFAULT_KAPPAS
    method: str = "direct"
    rho: float | str = "auto"
    tol_residual: float = 1e-8
    max_iters: int = 100000
    tol_kappa: float | None = None
    rho_min: float = 1e-12
    howard_max: int = 100
    check_monotone: bool = True
    flatten: bool = True

    def __post_init__(self):
        if self.bc_mode not in ("penalized", "direct"):
            raise ValueError("bc_mode must be 'penalized' or 'direct'")
        if self.method not in ("direct", "explicit"):
            raise ValueError("method must be 'direct' or 'explicit'")
        ks = np.asarray(self.kappa_schedule, dtype=float)
        if ks.size == 0 or np.any(ks <= 0) or np.any(np.diff(ks) >= 0):
            raise ValueError("kappa_schedule must be positive and strictly decreasing")
        self.kappa_schedule = tuple(float(k) for k in ks)
        if self.tol_kappa is None:
            self.tol_kappa = 10.0 * self.tol_residual

    def describe(self):
        return {"bc_mode": self.bc_mode, "kappa_schedule": list(self.kappa_schedule),
                "method": self.method, "rho": self.rho, "tol_residual": self.tol_residual,
                "max_iters": self.max_iters, "tol_kappa": self.tol_kappa, "rho_min": self.rho_min,
                "flatten": self.flatten}


@dataclass
class Problem:
    """Domain, nonlinearity, jump model and exterior condition on a grid of spacing ``h``."""

    domain: object
    nl: object
    h: float
    levy: object = None
    field: ObliqueField | None = None
    margin: float | None = None
    box: tuple | None = None
    cell_centered: bool = True
    delta: float | None = None
    flow_kw: dict = dc_field(default_factory=dict)
    _grid: Grid | None = dc_field(default=None, repr=False)

    def __post_init__(self):
        if self.field is None:
            self.field = ObliqueField.normal(self.domain)
        if self.margin is None:
            self.margin = self.default_margin()

    def default_margin(self):
        """max(1, twice the radius holding 90% of the far jump mass)."""
        if self.levy is None or not self.nl.uses_nonlocal:
            return 1.0
        d = self.effective_delta()
        total = self.levy.mass(d, self.levy.trunc_radius)
        if not np.isfinite(total) or total <= 0:
            return 1.0
        lo, hi = d, self.levy.trunc_radius
        for _ in range(60):
            mid = math.sqrt(lo * hi)
            if self.levy.mass(mid, self.levy.trunc_radius) > 0.1 * total:
                lo = mid
            else:
                hi = mid
        return max(1.0, 2.0 * hi)

    def effective_delta(self):
        if self.delta is not None:
            return float(self.delta)
        if self.levy is not None and self.levy.delta is not None:
            return float(self.levy.delta)
        if self.levy is None:
            return None
        return self.levy.default_delta(float(np.min(np.broadcast_to(self.h, (self.domain.dim,)))))

    @property
    def grid(self):
        if self._grid is None:
            self._grid = Grid.for_domain(self.domain, self.h, margin=self.margin,
                                         cell_centered=self.cell_centered, box=self.box)
        return self._grid


@dataclass
class Solution:
    values: np.ndarray
    grid: Grid
    mode: str
    residual_history: list
    kappa_trace: list
    metadata: dict
    converged: bool = True
    final_residual: float = 0.0
    M_F: float | None = None

    @property
    def closure_mask(self):
        return self.grid.sd >= 0

    def sup_bound(self, lambda0):
        """(bound M_F/lambda0, sup|u|, flag) for g = 0 runs."""
        b = self.M_F / lambda0
        s = float(np.max(np.abs(self.values)))
        return b, s, s <= b + max(1e-6, 10 * self.metadata.get("tol_residual", 0.0))

    def at(self, x):
        return self.grid.interpolate(self.values, np.atleast_2d(x))


class Discretization:
    """Assembled operators for one problem and mode; kappa enters only the penalty."""

    def __init__(self, problem, config):
        self.problem = problem
        self.config = config
        self.grid = problem.grid
        grid, dom = self.grid, problem.domain
        self.mode = config.bc_mode
        nl = problem.nl
        if self.mode == "penalized":
            self.f_rows = np.arange(grid.n)
            self.ext_rows = np.zeros(0, dtype=int)
        else:
            self.f_rows = np.nonzero(grid.sd >= 0)[0]
            self.ext_rows = np.nonzero(grid.sd < 0)[0]
        if self.f_rows.size == 0:
            raise ValueError("no grid node lies in the closed domain; refine h")
        xs = grid.points[self.f_rows]
        self.center = 0.5 * (grid.lo + grid.hi)
        self.flatten_radius = None
        if self.mode == "penalized" and config.flatten:
            half = float(np.min(0.5 * (grid.hi - grid.lo)))
            dlo, dhi = dom.bounding_box()
            corners = np.array(np.meshgrid(*zip(dlo, dhi), indexing="ij")).reshape(dom.dim, -1).T
            r_dom = float(np.max(np.linalg.norm(corners - self.center, axis=-1)))
            # only when the blend ring stays clear of the domain's bounding ball
            if half - 2.0 > r_dom:
                self.flatten_radius = half - 2.0
                nl = nl.with_flattening(self.flatten_radius, self.center)
        self.nl = nl
        self.theta = nl.blend(xs)
        self.coeffs = [r.coefficients(xs) for r in nl.records]

        # nonlocal part
        self.table = None
        self.J = None
        self.cJ = None
        self.closure = None
        t0 = time.perf_counter()
        if self.mode == "direct":
            self.closure = ExtensionClosure(grid, problem.field, dom, **problem.flow_kw)
        else:
            self.closure = ClampClosure(grid)
        if problem.levy is not None and nl.uses_nonlocal:
            self.table = build_quadrature(problem.levy, grid, dom, rows=self.f_rows,
                                          delta=problem.effective_delta())
            self.J, self.cJ = far_operator(self.table, self.closure)
        self.t_nonlocal = time.perf_counter() - t0

        # extension rows (direct mode)
        self.E = None
        self.G = None
        if self.ext_rows.size:
            G, idx, wts = self.closure.stencil(grid.points[self.ext_rows])
            k = self.ext_rows.size
            rows = np.concatenate([np.arange(k), np.repeat(np.arange(k), idx.shape[1])])
            cols = np.concatenate([self.ext_rows, idx.ravel()])
            vals = np.concatenate([np.ones(k), -wts.ravel()])
            self.E = sp.csr_matrix((vals, (rows, cols)), shape=(k, grid.n))
            self.G = G

        # penalty data (penalized mode)
        self.dtilde = dom.truncated_distance(xs) if self.mode == "penalized" else None
        if self.mode == "penalized":
            self.gamma = np.atleast_2d(problem.field.gamma(xs))
            self.gvals = np.asarray(problem.field.g(xs), dtype=float)
        self._base = [self._assemble_record(k) for k in range(len(nl.records))]
        self._cache = {}

    def _assemble_record(self, k):
        grid = self.grid
        c = self.coeffs[k]
        rows = self.f_rows
        one_m = 1.0 - self.theta
        D = c["A"].copy()
        beta = c["b"].copy()
        a = c["a"]
        if self.table is not None and a != 0.0:
            D = D + 0.5 * a * self.table.diffusion
            beta = beta - a * self.table.compensator
        D = D * one_m[:, None, None]
        beta = beta * one_m[:, None]
        R1, C1, V1 = grid.second_order_entries(rows, D)
        R2, C2, V2 = grid.upwind_entries(rows, beta)
        loc = np.arange(rows.size)
        pos = np.empty(grid.n, dtype=int)
        pos[rows] = loc
        L = sp.csr_matrix((np.concatenate([V1, V2]), (pos[np.concatenate([R1, R2])], np.concatenate([C1, C2]))),
                          shape=(rows.size, grid.n))
        rhs = one_m * c["f"]
        if self.J is not None and a != 0.0:
            L = L + sp.diags(a * one_m) @ self.J
            rhs = rhs + a * one_m * self.cJ
        lam = one_m * c["lam"] + self.theta * self.nl.lambda0
        M = sp.csr_matrix((lam, (loc, rows)), shape=(rows.size, grid.n)) - L
        return M.tocsr(), rhs

    def system(self, kappa=None):
        """List of ``(M_k, r_k)`` over records on the full node set."""
        key = kappa if self.mode == "penalized" else None
        if key in self._cache:
            return self._cache[key]
        grid = self.grid
        out = []
        for M_f, r_f in self._base:
            if self.mode == "penalized":
                if kappa is None:
                    raise ValueError("penalized mode needs kappa")
                cpen = self.dtilde / kappa
                R, C, V = grid.upwind_entries(self.f_rows, -cpen[:, None] * self.gamma)
                P = sp.csr_matrix((V, (R, C)), shape=(grid.n, grid.n))
                M = (M_f - P).tocsr()
                r = r_f + cpen * self.gvals
            else:
                blocks = sp.vstack([M_f, self.E]).tocsr()
                perm = np.concatenate([self.f_rows, self.ext_rows])
                inv = np.empty(grid.n, dtype=int)
                inv[perm] = np.arange(grid.n)
                M = blocks[inv]
                r = np.concatenate([r_f, self.G])[inv]
            M.sum_duplicates()
            M.eliminate_zeros()
            out.append((M.tocsr(), r))
        if self.config.check_monotone:
            for M, _ in out:
                check_monotone(M)
        self._cache[key] = out
        return out

    def residual(self, u, kappa=None):
        sys = self.system(kappa)
        vals = np.stack([M @ u - r for M, r in sys])
        return vals.max(axis=0)

    def describe(self):
        d = {"mode": self.mode, "grid": self.grid.describe(), "f_rows": int(self.f_rows.size),
             "ext_rows": int(self.ext_rows.size), "flatten_radius": self.flatten_radius,
             "closure": self.closure.mode, "t_nonlocal": self.t_nonlocal}
        if self.table is not None:
            d["quadrature"] = self.table.describe()
        return d


def check_monotone(M, tol=1e-12):
    """Raise ``MonotonicityViolation`` if an off-diagonal entry is positive."""
    C = M.tocoo()
    off = C.row != C.col
    if not np.any(off):
        return
    diag = np.abs(M.diagonal())
    scale = float(diag.max()) if diag.size else 1.0
    bad = C.data[off] > tol * max(scale, 1.0)
    if np.any(bad):
        k = np.nonzero(bad)[0][0]
        node = int(C.row[off][k])
        raise MonotonicityViolation(
            f"node {node} depends negatively on node {int(C.col[off][k])} "
            f"(coefficient {C.data[off][k]:.3g})", node=node)


def discretize_residual(problem, config, u, kappa=None, disc=None):
    """Residual R_h(u) on every grid node (builds the discretization when not given)."""
    disc = disc or Discretization(problem, config)
    if config.bc_mode == "penalized" and kappa is None:
        kappa = config.kappa_schedule[-1]
    return disc.residual(np.asarray(u, dtype=float), kappa)


def _sup(v):
    return float(np.max(np.abs(v))) if v.size else 0.0


DIRECT_NNZ = 400000


def _local_part(M, grid):
    """Entries of M within one cell of the row node, plus all of every short row.

    Dropping nonpositive long-range couplings keeps an M-matrix, so its LU
    is a safe preconditioner; short rows (extension relations) are kept whole.
    """
    C = M.tocoo()
    mi = grid._multi
    near = np.max(np.abs(mi[C.row] - mi[C.col]), axis=1) <= 1
    short = np.diff(M.indptr) <= 2 ** grid.dim + 1
    keep = near | short[C.row]
    return sp.csc_matrix((C.data[keep], (C.row[keep], C.col[keep])), shape=M.shape)


def _linear_solve(M, r, x0=None, grid=None):
    M = M.tocsr()
    if grid is None or M.nnz <= DIRECT_NNZ:
        lu = spla.splu(M.tocsc())
        u = lu.solve(r)
        # one step of iterative refinement guards against cancellation
        return u + lu.solve(r - M @ u)
    lu = spla.splu(_local_part(M, grid))
    pre = spla.LinearOperator(M.shape, lu.solve)
    scale = max(float(np.max(np.abs(r))), 1e-300)
    u, info = spla.gmres(M, r, x0=x0, M=pre, rtol=1e-14, atol=1e-13 * scale, restart=60, maxiter=50)
    if info != 0 and _sup(M @ u - r) > 1e-10 * scale:
        lu = spla.splu(M.tocsc())
        u = lu.solve(r)
    return u


def _solve_system(sys, config, u0, history, kappa, grid=None):
    """Solve max_k (M_k u - r_k) = 0 at one kappa; returns u and final residual."""
    tol = config.tol_residual
    n = sys[0][0].shape[0]
    u = np.zeros(n) if u0 is None else np.array(u0, dtype=float)
    if config.method == "explicit":
        return _explicit(sys, config, u, history, kappa)
    if len(sys) == 1:
        M, r = sys[0]
        u = _linear_solve(M, r, u, grid)
        res = _sup(M @ u - r)
        history.append((len(history), res, kappa))
        return u, res
    # Howard policy iteration
    vals = np.stack([M @ u - r for M, r in sys])
    policy = vals.argmax(axis=0)
    res = math.inf
    for it in range(config.howard_max):
        rows_M, rows_r = [], []
        for k, (M, r) in enumerate(sys):
            sel = (policy == k).astype(float)
            rows_M.append(sp.diags(sel) @ M)
            rows_r.append(sel * r)
        Mp = sum(rows_M[1:], rows_M[0]).tocsr()
        rp = np.sum(rows_r, axis=0)
        u = _linear_solve(Mp, rp, u, grid)
        vals = np.stack([M @ u - r for M, r in sys])
        res = _sup(vals.max(axis=0))
        history.append((len(history), res, kappa))
        new = vals.argmax(axis=0)
        # keep the current choice on ties so the iteration terminates
        keep = vals[policy, np.arange(n)] >= vals.max(axis=0) - 1e-14 * (1 + np.abs(u))
        new = np.where(keep, policy, new)
        if np.array_equal(new, policy):
            return u, res
        policy = new
    raise NoConvergence(f"policy iteration did not settle in {config.howard_max} steps",
                        history=history, values=u)


def _explicit(sys, config, u, history, kappa):
    diag = np.max(np.stack([M.diagonal() for M, _ in sys]), axis=0)
    if config.rho == "auto":
        rho = 1.0 / float(diag.max())
    else:
        rho = float(config.rho)
    if rho < config.rho_min:
        raise StiffPenalty(f"auto step {rho:.3g} below rho_min {config.rho_min:g}; refine the kappa schedule")
    R = np.stack([M @ u - r for M, r in sys]).max(axis=0)
    res = _sup(R)
    history.append((len(history), res, kappa))
    for _ in range(config.max_iters):
        if res <= config.tol_residual:
            return u, res
        u = u - rho * R
        R = np.stack([M @ u - r for M, r in sys]).max(axis=0)
        res = _sup(R)
        history.append((len(history), res, kappa))
    if res <= config.tol_residual:
        return u, res
    raise NoConvergence(f"damped iteration stopped at residual {res:.3g} after {config.max_iters} sweeps",
                        history=history, values=u)


def _metadata(problem, config, disc):
    md = {"domain": problem.domain.describe(), "nonlinearity": problem.nl.describe(),
          "field": problem.field.describe(), "h": problem.h, "margin": problem.margin,
          "delta": problem.effective_delta(), "tol_residual": config.tol_residual}
    md.update({f"solver.{k}": v for k, v in config.describe().items()})
    md.update({f"disc.{k}": v for k, v in disc.describe().items()})
    if problem.levy is not None:
        md.update({f"levy.{k}": v for k, v in problem.levy.describe().items()})
    return md


def solve_fixed_point(problem, config, warm_start=None, kappa=None, disc=None):
    """Solve at a single kappa (penalized) or the direct-extension system."""
    disc = disc or Discretization(problem, config)
    if config.bc_mode == "penalized" and kappa is None:
        kappa = config.kappa_schedule[-1]
    history = []
    u, res = _solve_system(disc.system(kappa), config, warm_start, history, kappa, disc.grid)
    mf = compute_MF(disc.nl, disc.grid, where="all" if config.bc_mode == "penalized" else "closure")
    return Solution(values=u, grid=disc.grid, mode=config.bc_mode, residual_history=history,
                    kappa_trace=[], metadata=_metadata(problem, config, disc), converged=True,
                    final_residual=res, M_F=mf)


def solve_direct(problem, config=None, warm_start=None):
    """Direct-extension solve; exterior nodes follow the transport extension."""
    config = config or SolverConfig(bc_mode="direct")
    if config.bc_mode != "direct":
        config = SolverConfig(**{**config.__dict__, "bc_mode": "direct"})
    return solve_fixed_point(problem, config, warm_start)


def continuation_in_kappa(problem, config=None, warm_start=None):
    """Penalized solves over the kappa schedule with warm starts.

    ``kappa_trace`` lists ``{"kappa", "delta"}`` with delta the sup change
    over closed-domain nodes relative to the previous kappa.
    """
    config = config or SolverConfig()
    if config.bc_mode != "penalized":
        raise ValueError("continuation needs penalized mode")
    disc = Discretization(problem, config)
    mask = disc.grid.sd >= 0
    history, trace = [], []
    u = warm_start
    prev = None
    for kappa in config.kappa_schedule:
        u, res = _solve_system(disc.system(kappa), config, u, history, kappa, disc.grid)
        entry = {"kappa": kappa, "residual": res}
        if prev is not None:
            entry["delta"] = _sup(u[mask] - prev[mask])
        trace.append(entry)
        prev = u.copy()
        if "delta" in entry and entry["delta"] < config.tol_kappa:
            break
    mf = compute_MF(disc.nl, disc.grid, where="all")
    md = _metadata(problem, config, disc)
    return Solution(values=u, grid=disc.grid, mode="penalized", residual_history=history,
                    kappa_trace=trace, metadata=md, converged=True, final_residual=res, M_F=mf)


def solve(problem, config):
    if config.bc_mode == "direct":
        return solve_direct(problem, config)
    return continuation_in_kappa(problem, config)


def fill_exterior(problem, u_closure, disc=None):
    """Extend values given on closed-domain nodes to all nodes by the extension rows."""
    config = SolverConfig(bc_mode="direct", check_monotone=False)
    disc = disc or Discretization(problem, config)
    grid = disc.grid
    u = np.zeros(grid.n)
    u[disc.f_rows] = np.asarray(u_closure, dtype=float)[disc.f_rows] if np.size(u_closure) == grid.n \
        else np.asarray(u_closure, dtype=float)
    if disc.E is None:
        return u
    ext = disc.ext_rows
    E_ext = disc.E[:, ext]
    E_f = disc.E[:, disc.f_rows]
    return _assign(u, ext, spla.spsolve(E_ext.tocsc(), disc.G - E_f @ u[disc.f_rows]))


def _assign(u, idx, vals):
    u = u.copy()
    u[idx] = vals
    return u


def observed_orders(hs, errors):
    """Pairwise orders log(e_i/e_{i+1}) / log(h_i/h_{i+1}) and the least-squares slope."""
    hs = np.asarray(hs, dtype=float)
    e = np.asarray(errors, dtype=float)
    pair = np.log(e[:-1] / e[1:]) / np.log(hs[:-1] / hs[1:])
    slope = np.polyfit(np.log(hs), np.log(e), 1)[0]
    return pair, float(slope)


# viscosity-definition probe -------------------------------------------------------------
@dataclass
class ProbeReport:
    node: int
    point: np.ndarray
    node_class: str
    side: str
    value: float
    tolerance: float
    holds: bool
    detail: dict


def definition_semantics_probe(solution, problem, center, gradient=None, hessian=None, side="above",
                               radius=None, c_probe=1.0, n_rays=64, kappa=None):
    """Test the viscosity inequality at the discrete touching point of ``u - phi``.

    ``phi(x) = u(x0) + p.(x - x0) + 1/2 (x - x0)^T Q (x - x0)``. With
    ``side="above"`` phi touches from above (maximum of ``u - phi``) and the
    subsolution inequality is checked; ``"below"`` checks the supersolution
    one. The inequality depends on the class of the touching node:
    the equation in the domain, ``min(F, inf_n Dphi.n - g) <= 0`` on the
    boundary (cone enumerated at corners), ``Dphi.gamma - g <= 0`` outside.
    Tolerance is ``c_probe * h`` times the size of the data involved.
    """
    grid = solution.grid
    dom = problem.domain
    u = solution.values
    x0 = np.atleast_1d(np.asarray(center, dtype=float))
    i0 = int(np.argmin(np.linalg.norm(grid.points - x0, axis=-1)))
    x0 = grid.points[i0]
    dim = grid.dim
    p = np.zeros(dim) if gradient is None else np.asarray(gradient, dtype=float)
    Q = np.eye(dim) if hessian is None else np.asarray(hessian, dtype=float)
    sgn = 1.0 if side == "above" else -1.0
    if radius is None:
        radius = 4.0 * grid.spacing
    dx = grid.points - x0
    near = np.nonzero(np.linalg.norm(dx, axis=-1) <= radius + 1e-12)[0]
    phi = u[i0] + dx[near] @ p + 0.5 * np.einsum("mi,ij,mj->m", dx[near], Q, dx[near])
    diff = sgn * (u[near] - phi)
    k = int(np.argmax(diff))
    node = int(near[k])
    if np.linalg.norm(dx[node]) >= radius - 0.5 * grid.spacing and np.linalg.norm(dx[node]) > 0:
        raise NoTouchingPoint(f"u - phi has no interior {'max' if sgn > 0 else 'min'} within radius {radius}")
    x = grid.points[node]
    Dphi = p + Q @ (x - x0)
    h = grid.spacing
    scale = 1.0 + float(np.max(np.abs(u))) + float(np.abs(Q).max()) + float(np.abs(p).max())
    tol = c_probe * h * scale
    field = problem.field
    sd = float(grid.sd[node])
    band = 0.5 * float(np.max(grid.h))

    def equation_value():
        l = _probe_nonlocal(solution, problem, node, Dphi, Q)
        return float(problem.nl.evaluate(x[None, :], u[node], Dphi, Q, l)[0]), l

    g = float(np.asarray(field.g(x[None, :]))[0])
    detail = {}
    if sd > band:
        cls_ = "interior"
        val, l = equation_value()
        detail["nonlocal"] = l
    elif sd >= -band:
        cls_ = "boundary"
        F, l = equation_value()
        P = dom.closest_point(x)
        if field.kind == "normal":
            try:
                from .geometry import enumerate_normal_cone
                cone = enumerate_normal_cone(dom, P, n_rays=n_rays)
            except Exception:
                cone = np.atleast_2d(dom.normal_field(P[None, :]))
            dirs = np.atleast_2d(cone)
        else:
            dirs = np.atleast_2d(field.gamma(P[None, :]))
        bc = dirs @ Dphi - g
        bc_val = float(bc.min()) if sgn > 0 else float(bc.max())
        val = min(F, bc_val) if sgn > 0 else max(F, bc_val)
        detail.update(F=F, bc=bc_val, nonlocal_=l)
    else:
        cls_ = "exterior"
        gam = np.atleast_2d(field.gamma(x[None, :]))[0]
        val = float(gam @ Dphi - g)
    holds = sgn * val <= tol
    return ProbeReport(node=node, point=x, node_class=cls_, side=side, value=val, tolerance=tol,
                       holds=bool(holds), detail=detail)


def _probe_nonlocal(solution, problem, node, Dphi, Q):
    """I_delta[phi] + I^delta[u] at a node: phi's curvature for small jumps, u for far ones."""
    if problem.levy is None or not problem.nl.uses_nonlocal:
        return 0.0
    grid = solution.grid
    from .levy import apply_nonlocal_all
    table = build_quadrature(problem.levy, grid, problem.domain, rows=[node],
                             delta=problem.effective_delta())
    closure = (ExtensionClosure(grid, problem.field, problem.domain) if solution.mode == "direct"
               else ClampClosure(grid))
    full = apply_nonlocal_all(table, solution.values, closure)[0]
    # swap the discrete small-jump and compensator terms of u for those of phi
    H = grid.hessian(solution.values, [node])[0]
    Gu = grid.central_gradient(solution.values, [node])[0]
    D = table.diffusion[0]
    comp = table.compensator[0]
    return float(full - 0.5 * np.sum(D * H) + comp @ Gu + 0.5 * np.sum(D * Q) - comp @ Dphi)


def node_classes(grid):
    return [CLASS_NAMES[int(c)] for c in grid.node_class]

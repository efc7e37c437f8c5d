"""Jump measures, jump maps and the split quadrature of the nonlocal operator.

The operator

    I[u](x) = int u(x + j(x,z)) - u(x) - 1_{|z|<1} Du(x).j(x,z) dmu(z)

is split at |z| = delta. Small jumps become the diffusion term
``1/2 Tr(Sigma_delta D^2 u)`` built from the exact second moment; jumps with
``delta <= |z| < R_z`` become a finite sum of nonnegative weights times
``u(landing) - u(x)`` minus the compensator drift on ``delta <= |z| < 1``.
Jumps beyond ``R_z`` are either dropped or folded into a zeroth order term.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field as dc_field

import numpy as np
import scipy.sparse as sp
from scipy import integrate, special

from .errors import ClosureRequired, DeltaTooLarge, NonIntegrable

__all__ = [
    "LevyModel",
    "QuadratureTable",
    "build_quadrature",
    "apply_nonlocal",
    "apply_nonlocal_all",
    "far_operator",
    "check_exterior_integrability",
    "default_c_alpha",
    "ClampClosure",
    "ExtensionClosure",
    "FunctionClosure",
]


def default_c_alpha(dim, alpha):
    """Normalizing constant making the operator equal to -(-Delta)^{alpha/2}.

    With this choice the symbol is -|xi|^alpha, and the diffusion limit
    alpha -> 2 recovers the Laplacian on quadratics.
    """
    a = float(alpha)
    return (a * 2.0 ** (a - 1.0) * special.gamma((dim + a) / 2.0)
            / (math.pi ** (dim / 2.0) * special.gamma(1.0 - a / 2.0)))


def sphere_area(dim):
    """Surface measure of the unit sphere in R^dim (2 for dim = 1)."""
    return 2.0 * math.pi ** (dim / 2.0) / special.gamma(dim / 2.0)


def _angular_rule(dim, n_ang):
    """Unit directions and weights (summing to 1) exact for degree-2 moments."""
    if dim == 1:
        return np.array([[1.0], [-1.0]]), np.array([0.5, 0.5])
    if dim == 2:
        n = max(4, 2 * ((n_ang + 1) // 2))
        th = 2.0 * math.pi * (np.arange(n) + 0.5) / n
        return np.stack([np.cos(th), np.sin(th)], axis=-1), np.full(n, 1.0 / n)
    if dim == 3:
        n_phi = max(4, 2 * ((n_ang + 1) // 2))
        n_t = max(2, n_phi // 2)
        ct, wt = np.polynomial.legendre.leggauss(n_t)
        phi = 2.0 * math.pi * (np.arange(n_phi) + 0.5) / n_phi
        st = np.sqrt(1.0 - ct ** 2)
        dirs = np.stack([
            (st[:, None] * np.cos(phi)[None, :]).ravel(),
            (st[:, None] * np.sin(phi)[None, :]).ravel(),
            np.repeat(ct, n_phi),
        ], axis=-1)
        w = (np.repeat(wt, n_phi) / 2.0) / n_phi
        return dirs, w
    raise ValueError("isotropic quadrature supports dimensions 1 to 3")


@dataclass
class LevyModel:
    """Jump measure ``mu`` and jump map ``j``.

    ``measure`` is one of ``"fractional"`` (density c |z|^{-N-alpha}),
    ``"tempered"`` (density c e^{-beta |z|} |z|^{-N-alpha}) or
    ``"compound_poisson"`` (a finite density supported in the box
    ``support``). ``jump_map`` is ``"identity"`` or ``"affine"`` with
    ``j(x, z) = sigma(x) z``.
    """

    measure: str = "fractional"
    dim: int = 1
    alpha: float = 1.0
    c_alpha: float | None = None
    tempering: float = 1.0
    density: object = None
    support: tuple | None = None
    support_cells: int = 64
    jump_map: str = "identity"
    sigma: object = None
    c_j: float = 1.0
    delta: float | None = None
    trunc_radius: float = 50.0
    radial_nodes: int | None = None
    angular_nodes: int = 16
    tail: str = "drop"
    delta_safety: float = 64.0
    moment_correction: bool = True
    _cp_cache: dict = dc_field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if self.measure not in ("fractional", "tempered", "compound_poisson"):
            raise ValueError(f"unknown measure {self.measure!r}")
        if self.measure != "compound_poisson":
            if not 0.0 < self.alpha < 2.0:
                raise NonIntegrable(f"alpha = {self.alpha} outside (0, 2)")
            if self.c_alpha is None:
                self.c_alpha = default_c_alpha(self.dim, self.alpha)
            if self.c_alpha <= 0:
                raise ValueError("c_alpha must be positive")
        elif self.density is None or self.support is None:
            raise ValueError("compound Poisson measure needs density and support")
        if self.jump_map not in ("identity", "affine"):
            raise ValueError(f"unknown jump map {self.jump_map!r}")
        if self.jump_map == "affine" and self.sigma is None:
            raise ValueError("affine jump map needs sigma")
        if self.tail not in ("drop", "fold"):
            raise ValueError("tail must be 'drop' or 'fold'")
        if self.radial_nodes is None:
            self.radial_nodes = 16 if self.dim == 1 else 4

    @property
    def isotropic(self):
        return self.measure != "compound_poisson"

    # radial integrals for the isotropic measures ----------------------------
    def _radial_moment(self, a, b, p):
        """|S^{N-1}| int_a^b r^p rho(r) r^{N-1} dr for the isotropic densities."""
        S = sphere_area(self.dim)
        c, al = self.c_alpha, self.alpha
        if a >= b:
            return 0.0
        if self.measure == "fractional":
            e = p - al
            if abs(e) < 1e-14:
                return S * c * math.log(b / a) if np.isfinite(b) else math.inf
            if not np.isfinite(b):
                return S * c * (-a ** e / e) if e < 0 else math.inf
            return S * c * (b ** e - a ** e) / e
        beta = self.tempering

        def f(r):
            return r ** (p - al - 1.0) * math.exp(-beta * r)

        if a == 0.0:
            if p - al - 1.0 <= -1.0:
                return math.inf
            val, _ = integrate.quad(lambda r: math.exp(-beta * r), 0.0, b, weight="alg",
                                    wvar=(p - al - 1.0, 0.0)) if np.isfinite(b) else (
                special.gamma(p - al) * beta ** (al - p), 0.0)
            return S * c * val
        val, _ = integrate.quad(f, a, b, limit=200, epsabs=0.0, epsrel=1e-12)
        return S * c * val

    def mass(self, a, b=math.inf):
        """mu{a <= |z| < b}."""
        if self.isotropic:
            return self._radial_moment(a, b, 0.0)
        t = self._cp_table()
        r = np.linalg.norm(t["centroid"], axis=-1)
        return float(t["mass"][(r >= a) & (r < b)].sum())

    def small_second_moment(self, delta):
        """Sigma_delta = int_{|z|<delta} z z^T dmu for the identity map."""
        if self.isotropic:
            return self._radial_moment(0.0, delta, 2.0) / self.dim * np.eye(self.dim)
        t = self._cp_table()
        r = np.linalg.norm(t["centroid"], axis=-1)
        sel = r < delta
        return np.einsum("k,kij->ij", t["mass"][sel], t["second"][sel]) if sel.any() else np.zeros(
            (self.dim, self.dim))

    def tail_mass(self, radius=None):
        R = self.trunc_radius if radius is None else radius
        return self.mass(R, math.inf)

    def levy_integral(self):
        """int min(|z|^2, 1) dmu; finite for a Levy measure."""
        if self.isotropic:
            return self._radial_moment(0.0, 1.0, 2.0) + self.mass(1.0)
        t = self._cp_table()
        r2 = np.einsum("kii->k", t["second"])
        return float(np.sum(t["mass"] * np.minimum(r2, 1.0)))

    def first_moment_tail(self, delta):
        """int_{|z|>=delta} |z| dmu (inf when the first moment diverges)."""
        if self.isotropic:
            return self._radial_moment(delta, math.inf, 1.0)
        t = self._cp_table()
        r = np.linalg.norm(t["centroid"], axis=-1)
        return float(np.sum(t["mass"][r >= delta] * r[r >= delta]))

    def default_delta(self, h):
        return max(h, 0.1 * math.sqrt(h))

    def describe(self):
        out = {"measure": self.measure, "dim": self.dim, "jump_map": self.jump_map,
               "delta": self.delta, "trunc_radius": self.trunc_radius, "tail": self.tail,
               "radial_nodes": self.radial_nodes, "angular_nodes": self.angular_nodes,
               "moment_correction": self.moment_correction}
        if self.isotropic:
            out.update(alpha=self.alpha, c_alpha=self.c_alpha,
                       c_alpha_rule="standard normalization (symbol -|xi|^alpha)")
            if self.measure == "tempered":
                out["tempering"] = self.tempering
        return out

    # compound Poisson cell table ---------------------------------------------
    def _cp_table(self):
        if "table" in self._cp_cache:
            return self._cp_cache["table"]
        lo, hi = (np.broadcast_to(np.asarray(s, dtype=float), (self.dim,)) for s in self.support)
        n = self.support_cells
        edges = [np.linspace(lo[d], hi[d], n + 1) for d in range(self.dim)]
        gx, gw = np.polynomial.legendre.leggauss(4)
        # sub-quadrature points inside each cell, per axis
        pts_ax, wts_ax = [], []
        for d in range(self.dim):
            a, b = edges[d][:-1], edges[d][1:]
            pts_ax.append(0.5 * (a + b)[:, None] + 0.5 * (b - a)[:, None] * gx[None, :])
            wts_ax.append(0.5 * (b - a)[:, None] * gw[None, :])
        mesh_c = np.meshgrid(*[np.arange(n)] * self.dim, indexing="ij")
        cells = np.stack([m.ravel() for m in mesh_c], axis=-1)
        mesh_q = np.meshgrid(*[np.arange(4)] * self.dim, indexing="ij")
        qs = np.stack([m.ravel() for m in mesh_q], axis=-1)
        P = np.stack([pts_ax[d][cells[:, d][:, None], qs[None, :, d]] for d in range(self.dim)], axis=-1)
        W = np.prod(np.stack([wts_ax[d][cells[:, d][:, None], qs[None, :, d]]
                              for d in range(self.dim)], axis=-1), axis=-1)
        dens = np.asarray(self.density(P.reshape(-1, self.dim)), dtype=float).reshape(W.shape)
        if np.any(dens < 0):
            raise ValueError("compound Poisson density must be nonnegative")
        mw = dens * W
        mass = mw.sum(axis=1)
        keep = mass > 0
        mass, mw, P = mass[keep], mw[keep], P[keep]
        centroid = np.einsum("kq,kqd->kd", mw, P) / mass[:, None]
        second = np.einsum("kq,kqd,kqe->kde", mw, P, P) / mass[:, None, None]
        table = {"mass": mass, "centroid": centroid, "second": second}
        self._cp_cache["table"] = table
        return table

    def base_nodes(self, delta):
        """Far nodes ``z_k``, weights ``w_k`` and the within-cell covariance left out.

        The last item is ``sum_k (int_cell z z^T dmu - w_k z_k z_k^T)``, a PSD
        matrix that is added to the diffusion so quadratic moments are exact.
        """
        R = self.trunc_radius
        if self.isotropic:
            edges = [delta]
            r = delta
            while r * 2.0 < R:
                r *= 2.0
                edges.append(r)
            edges.append(R)
            if delta < 1.0 < R:
                edges.append(1.0)
            edges = np.unique(np.asarray(edges))
            dirs, aw = _angular_rule(self.dim, self.angular_nodes)
            Z, Wt = [], []
            for a, b in zip(edges[:-1], edges[1:]):
                sub = np.geomspace(a, b, self.radial_nodes + 1)
                for s0, s1 in zip(sub[:-1], sub[1:]):
                    m = self._radial_moment(s0, s1, 0.0)
                    m2 = self._radial_moment(s0, s1, 2.0)
                    rad = math.sqrt(m2 / m)
                    Z.append(rad * dirs)
                    Wt.append(m * aw)
            return np.concatenate(Z), np.concatenate(Wt), np.zeros((self.dim, self.dim))
        t = self._cp_table()
        r = np.linalg.norm(t["centroid"], axis=-1)
        sel = (r >= delta) & (r < R)
        z, w = t["centroid"][sel], t["mass"][sel]
        var = np.einsum("k,kij->ij", w, t["second"][sel]) - np.einsum("k,ki,kj->ij", w, z, z)
        return z, w, 0.5 * (var + var.T)

    def sigma_at(self, x):
        """Jump matrix field at points ``x`` (identity map gives None)."""
        if self.jump_map == "identity":
            return None
        s = np.asarray(self.sigma(np.atleast_2d(x)), dtype=float)
        if s.ndim == 2:
            s = s[:, None, None] * np.eye(self.dim)
        return s


# exterior closures -----------------------------------------------------------
class ClampClosure:
    """Constant extrapolation: a landing outside the box reads the nearest box value."""

    mode = "clamp"

    def __init__(self, grid):
        self.grid = grid

    def stencil(self, pts):
        idx, wts = self.grid.interp_stencil(np.clip(pts, self.grid.lo, self.grid.hi))
        return np.zeros(pts.shape[0]), idx, wts


class ExtensionClosure:
    """Transport extension: value g-integral plus interpolated u at the landing point."""

    mode = "extension"

    def __init__(self, grid, field, domain, **flow_kw):
        self.grid, self.field, self.domain, self.flow_kw = grid, field, domain, flow_kw

    def stencil(self, pts):
        from .flow import extension_data

        _, p, g_int = extension_data(self.field, self.domain, pts, **self.flow_kw)
        idx, wts = self.grid.interp_stencil(p)
        return np.asarray(g_int, dtype=float), idx, wts


class FunctionClosure:
    """Known exterior values from a function of position (used in tests and oracles)."""

    mode = "function"

    def __init__(self, func):
        self.func = func

    def stencil(self, pts):
        vals = np.asarray(self.func(pts), dtype=float)
        return vals, np.zeros((pts.shape[0], 1), dtype=int), np.zeros((pts.shape[0], 1))


def _closure_values(closure, pts, u):
    if closure is None:
        raise ClosureRequired(f"{pts.shape[0]} landing(s) outside the computational box and no closure set")
    if hasattr(closure, "stencil"):
        c, idx, wts = closure.stencil(pts)
        return c + np.sum(wts * u[idx], axis=-1)
    return np.asarray(closure(pts), dtype=float)


# quadrature table ---------------------------------------------------------------
@dataclass
class QuadratureTable:
    """Split quadrature of the nonlocal operator at a set of grid rows.

    ``diffusion`` is the matrix multiplying ``1/2 D^2 u`` (small-jump second
    moment, plus the within-cell covariance, minus the multilinear
    interpolation bias when moment correction is on). ``z`` and ``w`` are the
    far nodes and their weights (jump ``j(x_i, z_k)`` per row for affine maps).
    """

    model: LevyModel
    grid: object
    rows: np.ndarray
    z: np.ndarray
    w: np.ndarray
    sigma_small: np.ndarray
    diffusion: np.ndarray
    compensator: np.ndarray
    tail_mass: float
    delta: float
    trunc_radius: float
    jump_sigma: np.ndarray | None = None
    clipped_correction: int = 0
    _row_pos: dict = dc_field(default_factory=dict, repr=False)

    def __post_init__(self):
        self._row_pos = {int(r): k for k, r in enumerate(self.rows)}

    @property
    def far_mass(self):
        return float(self.w.sum())

    def position(self, i):
        try:
            return self._row_pos[int(i)]
        except KeyError:
            raise KeyError(f"node {i} not in quadrature table") from None

    def jumps(self, pos):
        """Jump vectors j(x_i, z_k) for table positions ``pos``, shape (len(pos), K, N)."""
        pos = np.atleast_1d(pos)
        if self.jump_sigma is None:
            return np.broadcast_to(self.z, (pos.size,) + self.z.shape)
        return np.einsum("rij,kj->rki", self.jump_sigma[pos], self.z)

    def landings(self, pos):
        pos = np.atleast_1d(pos)
        return self.grid.points[self.rows[pos]][:, None, :] + self.jumps(pos)

    def describe(self):
        return {"delta": self.delta, "trunc_radius": self.trunc_radius, "far_nodes": int(self.z.shape[0]),
                "far_mass": self.far_mass, "tail_mass": self.tail_mass,
                "clipped_correction_rows": self.clipped_correction}


def build_quadrature(model, grid, domain=None, rows=None, delta=None):
    """Quadrature table for ``model`` at ``rows`` of ``grid`` (default every node)."""
    h = grid.spacing
    if delta is None:
        delta = model.delta if model.delta is not None else model.default_delta(h)
    delta = float(delta)
    if delta <= 0:
        raise ValueError("delta must be positive")
    if delta >= 1.0:
        raise DeltaTooLarge(f"delta = {delta} must be below 1")
    if delta > model.delta_safety * h:
        raise DeltaTooLarge(f"delta = {delta:.4g} exceeds {model.delta_safety:g} h = {model.delta_safety * h:.4g}")
    if model.trunc_radius < 1.0:
        raise ValueError("trunc_radius must be at least 1")
    li = model.levy_integral()
    if not np.isfinite(li):
        raise NonIntegrable("int min(|z|^2,1) dmu is infinite")
    rows = np.arange(grid.n) if rows is None else np.asarray(rows, dtype=int)
    z, w, var = model.base_nodes(delta)
    sig0 = model.small_second_moment(delta)
    near = np.linalg.norm(z, axis=-1) < 1.0
    comp0 = (w[near, None] * z[near]).sum(axis=0)
    xs = grid.points[rows]
    S = model.sigma_at(xs)
    if S is not None:
        norms = np.linalg.norm(S, ord=2, axis=(1, 2))
        if np.any(norms > model.c_j * (1 + 1e-12)):
            warnings.warn(f"jump map bound |sigma| = {norms.max():.3g} exceeds c_j = {model.c_j}")
        sigma_small = np.einsum("rij,jk,rlk->ril", S, sig0, S)
        diff = np.einsum("rij,jk,rlk->ril", S, sig0 + var, S)
        comp = np.einsum("rij,j->ri", S, comp0)
    else:
        sigma_small = np.broadcast_to(sig0, (rows.size,) + sig0.shape).copy()
        diff = np.broadcast_to(sig0 + var, (rows.size,) + sig0.shape).copy()
        comp = np.broadcast_to(comp0, (rows.size, grid.dim)).copy()
    table = QuadratureTable(model=model, grid=grid, rows=rows, z=z, w=w, sigma_small=sigma_small,
                            diffusion=diff, compensator=comp, tail_mass=model.tail_mass(),
                            delta=delta, trunc_radius=model.trunc_radius, jump_sigma=S)
    if model.moment_correction:
        _interp_correction(table)
    return table


def _interp_correction(table, chunk=4096):
    """Remove the second-order bias of multilinear interpolation at landings.

    For a quadratic, interpolating at fractional offset theta in a cell of
    width h overshoots by theta (1 - theta) h^2 / 2 times the second
    derivative, so the far sum carries an extra 1/2 Tr(B D^2 u) with
    B_dd = sum_k w_k theta_kd (1 - theta_kd) h_d^2. Subtracting B keeps the
    scheme exact on quadratics; it is capped to keep the diffusion PSD.
    """
    grid = table.grid
    clipped = 0
    for start in range(0, table.rows.size, chunk):
        pos = np.arange(start, min(start + chunk, table.rows.size))
        L = table.landings(pos)
        inside = grid.in_box(L)
        B = np.zeros((pos.size, grid.dim))
        for d in range(grid.dim):
            s = (L[..., d] - grid.axes[d][0]) / grid.h[d]
            th = s - np.floor(s)
            val = th * (1 - th) * grid.h[d] ** 2 * inside
            B[:, d] = val @ table.w
        D = table.diffusion[pos]
        diag = np.einsum("rii->ri", D)
        cap = np.minimum(B, diag)
        clipped += int(np.sum(np.any(B > diag, axis=1)))
        idx = np.arange(grid.dim)
        D[:, idx, idx] = diag - cap
        table.diffusion[pos] = D
    table.clipped_correction = clipped
    if clipped:
        warnings.warn(f"interpolation correction capped at {clipped} rows to keep the diffusion PSD")


def _tail_points(table, pos):
    R = table.trunc_radius
    dirs = np.concatenate([np.eye(table.grid.dim), -np.eye(table.grid.dim)])
    x = table.grid.points[table.rows[pos]]
    return x[:, None, :] + R * dirs[None, :, :]


def apply_nonlocal(table, u, closure, i):
    """Discrete nonlocal operator at grid node ``i``.

    ``1/2 Tr(D Sigma) + sum_k w_k (u*(x_i + j_k) - u(x_i)) - c . D_h u`` with
    central differences; ``u*`` interpolates inside the box and calls the
    closure (a callable of positions or an object with ``stencil``) outside.
    """
    return float(apply_nonlocal_all(table, u, closure, positions=[table.position(i)])[0])


def apply_nonlocal_all(table, u, closure, positions=None, chunk=2048):
    """Vectorized ``apply_nonlocal`` over table positions (default all rows)."""
    grid = table.grid
    u = np.asarray(u, dtype=float)
    positions = np.arange(table.rows.size) if positions is None else np.asarray(positions)
    out = np.empty(positions.size)
    for start in range(0, positions.size, chunk):
        pos = positions[start:start + chunk]
        rows = table.rows[pos]
        H = grid.hessian(u, rows)
        G = grid.central_gradient(u, rows)
        val = 0.5 * np.einsum("rij,rij->r", table.diffusion[pos], H)
        val -= np.einsum("ri,ri->r", table.compensator[pos], G)
        L = table.landings(pos)
        flat = L.reshape(-1, grid.dim)
        vals = np.empty(flat.shape[0])
        inside = grid.in_box(flat)
        if inside.any():
            vals[inside] = grid.interpolate(u, flat[inside])
        if (~inside).any():
            vals[~inside] = _closure_values(closure, flat[~inside], u)
        vals = vals.reshape(L.shape[:2])
        val += (vals - u[rows][:, None]) @ table.w
        if table.model.tail == "fold" and table.tail_mass > 0:
            T = _tail_points(table, pos)
            tf = T.reshape(-1, grid.dim)
            tv = np.empty(tf.shape[0])
            ins = grid.in_box(tf)
            if ins.any():
                tv[ins] = grid.interpolate(u, tf[ins])
            if (~ins).any():
                tv[~ins] = _closure_values(closure, tf[~ins], u)
            val += table.tail_mass * (tv.reshape(T.shape[:2]).mean(axis=1) - u[rows])
        out[start:start + pos.size] = val
    return out


def far_operator(table, closure, chunk=1024):
    """Sparse form ``J u + c`` of the far-jump sum (and folded tail) at all table rows.

    Row r of ``J`` holds interpolation weights of landings times ``w_k`` and
    ``-sum_k w_k`` on the diagonal, so off-diagonal entries are nonnegative.
    ``closure`` must expose ``stencil``.
    """
    grid = table.grid
    nrow = table.rows.size
    R, C, V = [], [], []
    const = np.zeros(nrow)
    diag = np.full(nrow, -table.far_mass)
    fold = table.model.tail == "fold" and table.tail_mass > 0
    if fold:
        diag -= table.tail_mass
    for start in range(0, nrow, chunk):
        pos = np.arange(start, min(start + chunk, nrow))
        L = table.landings(pos)
        K = L.shape[1]
        flat = L.reshape(-1, grid.dim)
        wflat = np.tile(table.w, pos.size)
        rflat = np.repeat(pos, K)
        sets = [(flat, wflat, rflat)]
        if fold:
            T = _tail_points(table, pos)
            nt = T.shape[1]
            sets.append((T.reshape(-1, grid.dim), np.full(pos.size * nt, table.tail_mass / nt),
                         np.repeat(pos, nt)))
        for pts, wt, rr in sets:
            inside = grid.in_box(pts)
            if inside.any():
                idx, iw = grid.interp_stencil(pts[inside])
                R.append(np.repeat(rr[inside], idx.shape[1]))
                C.append(idx.ravel())
                V.append((iw * wt[inside, None]).ravel())
            if (~inside).any():
                if closure is None or not hasattr(closure, "stencil"):
                    raise ClosureRequired("landings outside the box need a closure with a stencil")
                c, idx, iw = closure.stencil(pts[~inside])
                R.append(np.repeat(rr[~inside], idx.shape[1]))
                C.append(idx.ravel())
                V.append((iw * wt[~inside, None]).ravel())
                np.add.at(const, rr[~inside], wt[~inside] * c)
    R.append(np.arange(nrow))
    C.append(table.rows)
    V.append(diag)
    J = sp.csr_matrix((np.concatenate(V), (np.concatenate(R), np.concatenate(C))), shape=(nrow, grid.n))
    return J, const


# integrability report ---------------------------------------------------------------
@dataclass
class IntegrabilityReport:
    ok: bool
    g_compact: bool
    first_moment_tail: float
    levy_integral: float
    message: str
    tag: str = "BC3"

    def as_rows(self):
        return [("levy_integral", self.levy_integral), ("first_moment_tail", self.first_moment_tail),
                ("g_compact", int(self.g_compact)), ("ok", int(self.ok))]


def check_exterior_integrability(model, field, domain, delta=None, n_samples=32, seed=0):
    """Check that exterior values growing like |x| are integrable against the far measure.

    With compactly supported g the extension is bounded and the check passes
    trivially. Otherwise the extension grows linearly and the far first
    moment int_{|z|>=delta} |j(x,z)| dmu must be finite at sampled x in the
    closed domain.
    """
    li = model.levy_integral()
    d = delta if delta is not None else (model.delta or 0.1)
    fm = model.first_moment_tail(d)
    if model.jump_map == "affine" and np.isfinite(fm):
        rng = np.random.default_rng(seed)
        lo, hi = domain.bounding_box()
        pts = rng.uniform(lo, hi, size=(n_samples, domain.dim))
        pts = pts[domain.contains(pts)] if np.any(domain.contains(pts)) else pts
        S = model.sigma_at(pts)
        fm *= float(np.max(np.linalg.norm(S, ord=2, axis=(1, 2))))
    if field is not None and field.g_compact:
        return IntegrabilityReport(True, True, fm, li, "g has compact support")
    ok = bool(np.isfinite(fm) and np.isfinite(li))
    msg = ("first moment of the far measure is finite" if ok else
           "first moment of the far measure diverges while g is not compactly supported")
    return IntegrabilityReport(ok, False, fm, li, msg)

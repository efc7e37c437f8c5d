"""Exterior characteristic flow dX/dt = -gamma(X) and the transport extension.

Points outside the closed domain are carried back to the boundary along
``-gamma``; the running integral of ``g`` along the way plus the boundary
value at the landing point gives the exterior value of a solution.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import NoHit, NotConvex, StepTooLarge, ValidationError
from .expressions import as_scalar_field, as_vector_field, constant, is_zero_field
from .geometry import Ball, _as_points, _unit

__all__ = [
    "ObliqueField",
    "FlowResult",
    "integrate_flow",
    "integrate_flow_batch",
    "project",
    "transport_extension",
    "extension_data",
    "theta_time",
    "check_field",
]

# integrator status codes for batched calls
OK, NO_HIT, STEP_TOO_LARGE = 0, 1, 2


@dataclass
class ObliqueField:
    """Direction field gamma and flux g of the exterior condition gamma.Du = g."""

    gamma: object
    g: object = dc_field(default_factory=lambda: constant(0.0))
    L_gamma: float = 1.0
    L_g: float = 0.0
    nu: float = 1.0
    growth_c: float | None = None
    g_compact: bool = False
    gamma_bound: float = 1.0
    kind: str = "custom"
    one_sided: bool = False
    radial_symmetry: object = dc_field(default=None, repr=False)
    _radial_table: object = dc_field(default=None, repr=False, compare=False)

    @classmethod
    def normal(cls, domain, g=0.0, **kw):
        """gamma = n, the outward normal extended to R^N."""
        gfield = as_scalar_field(g, domain.dim)
        kw.setdefault("g_compact", is_zero_field(gfield))
        kw.setdefault("one_sided", not domain.smooth)
        kw.setdefault("L_gamma", 0.0 if domain.convex else 1.0)
        return cls(gamma=domain.normal_field, g=gfield, nu=1.0, gamma_bound=1.0,
                   kind="normal", **kw)

    @classmethod
    def rotational(cls, domain, tangential, g=0.0, **kw):
        """Planar field normalized(n + s t) with t the normal turned by +90 degrees."""
        if domain.dim != 2:
            raise ValueError("rotational field is planar")
        s = float(tangential)

        def gamma(x):
            n = np.atleast_2d(domain.normal_field(x))
            t = np.stack([-n[:, 1], n[:, 0]], axis=-1)
            return _unit(n + s * t)

        gfield = as_scalar_field(g, domain.dim)
        kw.setdefault("g_compact", is_zero_field(gfield))
        nu = 1.0 / np.sqrt(1.0 + s * s)
        out = cls(gamma=gamma, g=gfield, nu=nu, gamma_bound=1.0, kind="oblique",
                  L_gamma=kw.pop("L_gamma", 2.0), **kw)
        # on a disc with constant g the flow commutes with rotations about the center
        if isinstance(domain, Ball) and getattr(gfield, "constant_value", None) is not None:
            out.radial_symmetry = domain
        return out

    @classmethod
    def from_expressions(cls, gamma, g, dim, **kw):
        gam = as_vector_field(gamma, dim)
        return cls(gamma=gam, g=as_scalar_field(g, dim), **kw)

    @property
    def g_is_zero(self):
        return is_zero_field(self.g)

    def describe(self):
        return {"kind": self.kind, "nu": self.nu, "L_gamma": self.L_gamma, "L_g": self.L_g,
                "growth_c": self.growth_c, "g_compact": self.g_compact,
                "gamma_bound": self.gamma_bound}


@dataclass
class FlowResult:
    tau: float
    endpoint: np.ndarray
    g_integral: float
    converged: bool
    path: list | None = None


def check_field(field, domain, n_samples=400, seed=0):
    """Sampled check of gamma.n >= nu on the boundary and of the bound on |gamma|."""
    rng = np.random.default_rng(seed)
    pts = domain.sample_boundary(n_samples, rng)
    gam = np.atleast_2d(field.gamma(pts))
    nrm = np.atleast_2d(domain.normal_field(pts))
    dots = np.sum(gam * nrm, axis=-1)
    mags = np.linalg.norm(gam, axis=-1)
    return {
        "min_gamma_dot_n": float(dots.min()),
        "nu": field.nu,
        "bc1_ok": bool(dots.min() >= field.nu - 1e-12),
        "max_gamma": float(mags.max()),
        "bound_ok": bool(mags.max() <= field.gamma_bound * (1 + 1e-12)),
    }


def _rk4(field, x, q, s):
    s = s[:, None]
    k1 = -field.gamma(x)
    q1 = field.g(x)
    x2 = x + 0.5 * s * k1
    k2 = -field.gamma(x2)
    q2 = field.g(x2)
    x3 = x + 0.5 * s * k2
    k3 = -field.gamma(x3)
    q3 = field.g(x3)
    x4 = x + s * k3
    k4 = -field.gamma(x4)
    q4 = field.g(x4)
    xn = x + s / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    qn = q + s[:, 0] / 6.0 * (q1 + 2 * q2 + 2 * q3 + q4)
    return xn, qn, np.linalg.norm(k1, axis=-1)


def _refine_event(field, x0, q0, s_hi, event, tol):
    """Illinois false position on the step length for event(x) = 0.

    On entry event(x0) < 0 and event(rk4(x0, s_hi)) >= 0. Returns the step,
    state and integral at a point with event in [-tol, 0].
    """
    n = x0.shape[0]
    lo = np.zeros(n)
    hi = s_hi.copy()
    f_lo = event(x0)
    x_hi, _, _ = _rk4(field, x0, q0, hi)
    f_hi = event(x_hi)
    best_x, best_q = x0.copy(), q0.copy()
    done = f_lo >= -tol
    side = np.zeros(n, dtype=int)
    for it in range(200):
        idx = np.nonzero(~done)[0]
        if idx.size == 0:
            break
        a, b, fa, fb = lo[idx], hi[idx], f_lo[idx], f_hi[idx]
        with np.errstate(invalid="ignore", divide="ignore"):
            trial = a - fa * (b - a) / (fb - fa)
        bad = ~np.isfinite(trial) | (trial <= a) | (trial >= b) | (it % 4 == 3)
        trial = np.where(bad, 0.5 * (a + b), trial)
        xt, qt, _ = _rk4(field, x0[idx], q0[idx], trial)
        ft = event(xt)
        below = ft <= 0
        ib = idx[below]
        lo[ib] = trial[below]
        f_lo[ib] = ft[below]
        best_x[ib] = xt[below]
        best_q[ib] = qt[below]
        f_hi[ib] = np.where(side[ib] == -1, 0.5 * f_hi[ib], f_hi[ib])
        side[ib] = -1
        ia = idx[~below]
        hi[ia] = trial[~below]
        f_hi[ia] = ft[~below]
        f_lo[ia] = np.where(side[ia] == 1, 0.5 * f_lo[ia], f_lo[ia])
        side[ia] = 1
        accepted = np.zeros(idx.size, dtype=bool)
        accepted[below] = ft[below] >= -tol
        narrow = (hi[idx] - lo[idx]) <= 1e-15 * np.maximum(1.0, hi[idx])
        done[idx] = accepted | narrow
    return lo, best_x, best_q


def _march(field, y, event, dist, tmax, step, step_fraction, step_floor, event_tol,
           max_backtrack, band, record_path=False):
    """Integrate -gamma from each row of ``y`` until event(x) >= 0."""
    m = y.shape[0]
    x = y.copy()
    q = np.zeros(m)
    t = np.zeros(m)
    status = np.full(m, OK)
    active = event(x) < 0
    backtrack = np.zeros(m, dtype=int)
    gb = max(field.gamma_bound, 1e-300)
    path = [(0.0, y[0].copy())] if record_path else None
    while np.any(active):
        idx = np.nonzero(active)[0]
        xa = x[idx]
        da = dist(xa)
        if step is not None:
            s = np.full(idx.size, float(step))
        else:
            s = np.maximum(step_fraction * da, step_floor) / gb
        xn, qn, speed = _rk4(field, xa, q[idx], s)
        stalled = speed < 1e-12
        if np.any(stalled):
            status[idx[stalled]] = NO_HIT
            active[idx[stalled]] = False
            keep = ~stalled
            idx, xa, da, s, xn, qn = idx[keep], xa[keep], da[keep], s[keep], xn[keep], qn[keep]
        en = event(xn)
        hit = en >= 0
        if np.any(hit):
            hi = idx[hit]
            s_star, xe, qe = _refine_event(field, xa[hit], q[hi], s[hit], event, event_tol)
            x[hi] = xe
            q[hi] = qe
            t[hi] += s_star
            active[hi] = False
        go = ~hit
        gi = idx[go]
        x[gi] = xn[go]
        q[gi] = qn[go]
        t[gi] += s[go]
        if record_path and active[0]:
            path.append((float(t[0]), x[0].copy()))
        dn = dist(xn[go])
        grew = (dn > da[go] * (1 + 1e-12)) & (dn < band)
        backtrack[gi] = np.where(grew, backtrack[gi] + 1, 0)
        too_large = backtrack[gi] >= max_backtrack
        status[gi[too_large]] = STEP_TOO_LARGE
        active[gi[too_large]] = False
        late = t[gi] > tmax[gi]
        status[gi[late]] = NO_HIT
        active[gi[late]] = False
    if record_path:
        path.append((float(t[0]), x[0].copy()))
    return t, x, q, status, path


def _guard(field, domain, y, safety):
    r = np.linalg.norm(y, axis=-1)
    if field.growth_c:
        return field.growth_c * (1.0 + r) * safety
    return 10.0 * (domain.length_scale + r) / max(field.nu, 1e-12)


def integrate_flow_batch(field, domain, y, step=None, event_tol=None, safety=4.0,
                         step_fraction=0.05, step_floor=None, max_backtrack=8):
    """Vectorized flow to the closed domain.

    Returns ``(tau, endpoint, g_integral, status)`` with status codes
    ``OK``, ``NO_HIT`` or ``STEP_TOO_LARGE`` per row. Points already in the
    closure get ``tau = 0`` and themselves as endpoint.
    """
    y, _ = _as_points(y, domain.dim)
    scale = domain.length_scale
    tol = event_tol if event_tol is not None else 1e-10 * scale
    floor = step_floor if step_floor is not None else 2.5e-3 * min(1.0, scale)

    def event(x):
        return domain._sd(x)

    def dist(x):
        return np.maximum(-domain._sd(x), 0.0)

    t, x, q, status, _ = _march(field, y, event, dist, _guard(field, domain, y, safety), step,
                                step_fraction, floor, tol, max_backtrack, band=0.05 * scale)
    return t, x, q, status


def integrate_flow(field, domain, y, step=None, event_tol=None, safety=4.0, record_path=False,
                   step_fraction=0.05, step_floor=None, max_backtrack=8):
    """Flow a single exterior point back to the boundary; see ``FlowResult``."""
    y, _ = _as_points(y, domain.dim)
    if y.shape[0] != 1:
        raise ValueError("integrate_flow takes one point; use integrate_flow_batch")
    scale = domain.length_scale
    tol = event_tol if event_tol is not None else 1e-10 * scale
    floor = step_floor if step_floor is not None else 2.5e-3 * min(1.0, scale)

    def event(x):
        return domain._sd(x)

    def dist(x):
        return np.maximum(-domain._sd(x), 0.0)

    t, x, q, status, path = _march(field, y, event, dist, _guard(field, domain, y, safety), step,
                                   step_fraction, floor, tol, max_backtrack, band=0.05 * scale,
                                   record_path=record_path)
    if status[0] == NO_HIT:
        raise NoHit(f"flow from {y[0]} did not reach the domain (BC2)", point=y[0])
    if status[0] == STEP_TOO_LARGE:
        raise StepTooLarge(f"distance increased near the boundary from {y[0]}")
    return FlowResult(tau=float(t[0]), endpoint=x[0], g_integral=float(q[0]), converged=True,
                      path=path)


def project(domain, y):
    """Closed-form landing point and hitting time for gamma = n on convex domains."""
    if not domain.convex:
        raise NotConvex("projection shortcut needs a convex domain")
    pts, single = _as_points(y, domain.dim)
    p = domain._closest(pts)
    tau = np.maximum(domain._dist(pts), 0.0)
    if single:
        return p[0], float(tau[0])
    return p, tau


_GL_X, _GL_W = np.polynomial.legendre.leggauss(16)


def _segment_integral(g, y, p):
    # integral of g over the straight path from y to p, parametrized by arclength
    length = np.linalg.norm(p - y, axis=-1)
    s = 0.5 * (_GL_X + 1.0)
    pts = y[:, None, :] + s[None, :, None] * (p - y)[:, None, :]
    vals = g(pts.reshape(-1, y.shape[1])).reshape(y.shape[0], -1)
    return 0.5 * length * (vals @ _GL_W)


def extension_data(field, domain, y, **flow_kw):
    """Landing points and g-integrals for many exterior points.

    Uses the projection shortcut for gamma = n on convex domains and the
    batched flow otherwise. Raises ``NoHit`` naming the first failing row.
    """
    y, _ = _as_points(y, domain.dim)
    if field.kind == "normal" and domain.convex:
        p, tau = project(domain, y) if y.shape[0] > 1 else (domain._closest(y), domain._dist(y))
        p = np.atleast_2d(p)
        if field.g_is_zero:
            g_int = np.zeros(y.shape[0])
        else:
            g_int = _segment_integral(field.g, y, p)
        return np.atleast_1d(tau), p, g_int
    if field.radial_symmetry is domain and domain.dim == 2 and not flow_kw:
        return _radial_lookup(field, domain, y)
    tau, p, g_int, status = integrate_flow_batch(field, domain, y, **flow_kw)
    bad = np.nonzero(status != OK)[0]
    if bad.size:
        raise NoHit(f"flow from {y[bad[0]]} did not reach the domain (BC2)", point=y[bad[0]],
                    node=int(bad[0]))
    return tau, p, g_int


class _RadialFlowTable:
    """Hitting time and landing angle along one ray, for rotation-equivariant flows.

    The flow from ``c + r (cos a, sin a)`` lands at angle ``a + phi(r)`` after
    time ``tau(r)``; both are integrated once on a ray with nodes clustered
    at the boundary and interpolated by cubic splines in ``r - R``.
    """

    def __init__(self, field, domain, reach):
        c, R = domain.center, domain.radius
        d = np.concatenate([[0.0], np.geomspace(1e-9 * R, reach, 1500)])
        ys = c + np.stack([R + d[1:], np.zeros(d.size - 1)], axis=-1)
        tau, p, _, status = integrate_flow_batch(field, domain, ys, event_tol=1e-13 * R,
                                                 step_fraction=0.05)
        if np.any(status != OK):
            k = int(np.nonzero(status != OK)[0][0])
            raise NoHit(f"flow from {ys[k]} did not reach the domain (BC2)", point=ys[k])
        ang = np.unwrap(np.concatenate([[0.0], np.arctan2(p[:, 1] - c[1], p[:, 0] - c[0])]))
        tau = np.concatenate([[0.0], tau])
        self.reach = reach
        self.phi = CubicSpline(d, ang)
        self.tau = CubicSpline(d, tau)
        self.g = float(field.g.constant_value)

    def __call__(self, domain, y):
        c, R = domain.center, domain.radius
        v = y - c
        r = np.sqrt(np.einsum("ij,ij->i", v, v))
        d = np.maximum(r - R, 0.0)
        a = np.arctan2(v[:, 1], v[:, 0]) + self.phi(d)
        p = c + R * np.stack([np.cos(a), np.sin(a)], axis=-1)
        tau = self.tau(d)
        return tau, p, self.g * tau


def _radial_lookup(field, domain, y):
    reach = float(np.max(np.linalg.norm(y - domain.center, axis=-1))) - domain.radius
    tab = field._radial_table
    if tab is None or reach > tab.reach:
        tab = _RadialFlowTable(field, domain, max(2.0 * reach, 64.0 * domain.radius))
        field._radial_table = tab
    return tab(domain, y)


def transport_extension(field, domain, boundary_values, y, **flow_kw):
    """Exterior value: integral of g along the flow plus the boundary value at landing."""
    pts, single = _as_points(y, domain.dim)
    out = np.empty(pts.shape[0])
    inside = domain._dist(pts) <= 0
    if np.any(inside):
        out[inside] = boundary_values(pts[inside])
    if np.any(~inside):
        _, p, g_int = extension_data(field, domain, pts[~inside], **flow_kw)
        out[~inside] = g_int + np.asarray(boundary_values(p), dtype=float)
    return float(out[0]) if single else out


def _check_band(field, domain, delta, n_samples=200, seed=1):
    rng = np.random.default_rng(seed)
    b = domain.sample_boundary(n_samples, rng)
    n = np.atleast_2d(domain.normal_field(b))
    s = rng.uniform(-delta, delta, size=n_samples)
    pts = b - s[:, None] * n
    dots = np.sum(np.atleast_2d(field.gamma(pts)) * np.atleast_2d(domain.normal_field(pts)), axis=-1)
    if dots.min() <= 0.5 * field.nu:
        raise ValidationError("BC1", f"gamma.n = {dots.min():.3g} <= nu/2 in the band of width {delta}")


def theta_time(field, domain, delta, y, check_band=True, event_tol=None, step=None,
               step_fraction=0.05, step_floor=None, safety=4.0):
    """Twice the time for -gamma to reach the inner level set {d = delta}.

    This is the Lipschitz barrier ``w`` with ``gamma.Dw = 2`` in
    ``{d <= delta}`` and ``w = 0`` on ``{d = delta}``.
    """
    if check_band:
        _check_band(field, domain, delta)
    pts, single = _as_points(y, domain.dim)
    if np.any(domain._sd(pts) > delta + 1e-12 * domain.length_scale):
        raise ValueError("theta_time points must satisfy d(y) <= delta")
    scale = domain.length_scale
    tol = event_tol if event_tol is not None else 1e-12 * scale
    floor = step_floor if step_floor is not None else 2.5e-3 * min(1.0, scale)

    def event(x):
        return domain._sd(x) - delta

    def dist(x):
        return np.maximum(delta - domain._sd(x), 0.0)

    t, _, _, status, _ = _march(field, pts, event, dist, _guard(field, domain, pts, safety), step,
                                step_fraction, floor, tol, 8, band=0.05 * scale)
    if np.any(status != OK):
        k = int(np.nonzero(status != OK)[0][0])
        raise NoHit(f"flow from {pts[k]} did not reach the level set d = {delta}", point=pts[k])
    w = 2.0 * t
    return float(w[0]) if single else w

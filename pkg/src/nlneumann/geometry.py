"""Domains with distance, normal, normal-cone and projection queries.

Sign conventions: ``dist_to_closure`` is the Euclidean distance to the
closed domain (zero inside), ``signed_distance`` is positive inside and
negative outside, and normals point outward. Every query accepts either a
single point of shape ``(N,)`` or a batch of shape ``(M, N)``.
"""

from __future__ import annotations

import math
import warnings

import numpy as np

from .errors import CornerPoint, NotConvex
from .expressions import as_scalar_field

__all__ = [
    "Domain",
    "Interval",
    "Box",
    "Ball",
    "ConvexPolygon",
    "HalfSpace",
    "ImplicitSDF",
    "dist_to_closure",
    "signed_distance",
    "truncated_distance",
    "normal",
    "normal_cone",
    "enumerate_normal_cone",
    "closest_point",
]


def _as_points(x, dim):
    arr = np.asarray(x, dtype=float)
    single = arr.ndim <= 1
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(1, -1) if arr.shape[0] == dim else arr.reshape(-1, 1)
        single = arr.shape[0] == 1
    if arr.shape[-1] != dim:
        raise ValueError(f"expected points of dimension {dim}, got shape {np.shape(x)}")
    return arr, single


def _unit(v):
    nrm = np.sqrt(np.einsum("...i,...i->...", v, v))[..., None]
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(nrm > 0, v / np.where(nrm > 0, nrm, 1.0), 0.0)


def _smooth_clamp(s, r0):
    # identity on |s| <= r0, quintic blend to a plateau of 1.5*r0 at |s| = 2*r0
    t = np.abs(s) / r0
    u = np.clip(t - 1.0, 0.0, 1.0)
    blend = r0 * (1.0 + u - u**3 + 0.5 * u**4)
    return np.where(t <= 1.0, s, np.sign(s) * blend)


class Domain:
    """Base class; subclasses implement the exact distance primitives."""

    dim: int
    convex: bool = True
    smooth: bool = True
    bounded: bool = True

    def __init__(self, band=None):
        self._band = band

    # primitives (batched, shape (M, N) -> ...)
    def _dist(self, x):
        raise NotImplementedError

    def _closest(self, x):
        raise NotImplementedError

    def _sd(self, x):
        raise NotImplementedError

    def _inner_normal_field(self, x):
        raise NotImplementedError

    def bounding_box(self):
        raise NotImplementedError

    @property
    def diameter(self):
        lo, hi = self.bounding_box()
        return float(np.linalg.norm(np.asarray(hi) - np.asarray(lo)))

    @property
    def length_scale(self):
        return self.diameter if self.bounded else 4.0

    @property
    def band(self):
        return self._band if self._band is not None else 0.25 * self.length_scale

    # public queries
    def dist_to_closure(self, x):
        pts, single = _as_points(x, self.dim)
        d = np.maximum(self._dist(pts), 0.0)
        return float(d[0]) if single else d

    def signed_distance(self, x):
        pts, single = _as_points(x, self.dim)
        d = _smooth_clamp(self._sd(pts), self.band)
        return float(d[0]) if single else d

    def truncated_distance(self, x):
        pts, single = _as_points(x, self.dim)
        d = np.minimum(np.maximum(self._dist(pts), 0.0), 1.0)
        return float(d[0]) if single else d

    def contains(self, x, tol=0.0):
        """Membership in the closure, up to ``tol`` in distance."""
        pts, single = _as_points(x, self.dim)
        inside = self._dist(pts) <= tol
        return bool(inside[0]) if single else inside

    def closest_point(self, x):
        pts, single = _as_points(x, self.dim)
        p = self._closest(pts)
        return p[0] if single else p

    def normal_field(self, x):
        """Outward unit normal extended to all of R^N.

        Outside the closure this is the gradient of the distance; inside it
        is minus the gradient of the signed distance to the nearest face.
        """
        pts, single = _as_points(x, self.dim)
        d = self._dist(pts)
        out = np.empty_like(pts)
        # below this distance x - P(x) is dominated by rounding
        ext = d > 1e-9 * self.length_scale
        if np.any(ext):
            out[ext] = _unit(pts[ext] - self._closest(pts[ext]))
        if np.any(~ext):
            out[~ext] = self._inner_normal_field(pts[~ext])
        return out[0] if single else out

    def _boundary_tol(self):
        return 1e-9 * self.length_scale

    def _active_normals(self, p):
        """Outward normals of the faces active at boundary point ``p``."""
        return [self._inner_normal_field(p[None, :])[0]]

    def normal(self, x):
        pts, single = _as_points(x, self.dim)
        d = self._dist(pts)
        out = np.empty_like(pts)
        for k in range(pts.shape[0]):
            if d[k] > 0:
                out[k] = _unit(pts[k] - self._closest(pts[k : k + 1])[0])
            else:
                gens = self._active_normals(pts[k])
                if len(gens) != 1:
                    raise CornerPoint(f"point {pts[k]} is a non-smooth boundary point")
                out[k] = gens[0]
        return out[0] if single else out

    def normal_cone(self, x):
        """Extreme generators of the normal cone at a boundary point."""
        if not self.convex:
            raise NotConvex("normal cone is only described for convex domains")
        p = np.asarray(x, dtype=float).reshape(self.dim)
        return [np.asarray(g, dtype=float) for g in self._active_normals(p)]

    def sample_boundary(self, n, rng):
        raise NotImplementedError

    def sample_exterior(self, n, rng, width=1.0):
        """Random points at distance in (0, width] from the closure."""
        b = self.sample_boundary(n, rng)
        nrm = self.normal_field(b)
        if nrm.ndim == 1:
            nrm = nrm[None, :]
        t = rng.uniform(0.05, 1.0, size=n) * width
        return b + t[:, None] * nrm

    def describe(self):
        return {"shape": type(self).__name__, "dim": self.dim, "convex": self.convex}


class Interval(Domain):
    def __init__(self, a, b, band=None):
        super().__init__(band)
        if not b > a:
            raise ValueError("Interval needs a < b")
        self.a, self.b = float(a), float(b)
        self.dim = 1

    def bounding_box(self):
        return np.array([self.a]), np.array([self.b])

    def _dist(self, x):
        return np.maximum(np.maximum(self.a - x[:, 0], x[:, 0] - self.b), 0.0)

    def _closest(self, x):
        return np.clip(x, self.a, self.b)

    def _sd(self, x):
        return np.minimum(x[:, 0] - self.a, self.b - x[:, 0])

    def _inner_normal_field(self, x):
        left = (x[:, 0] - self.a) < (self.b - x[:, 0])
        return np.where(left, -1.0, 1.0)[:, None]

    def sample_boundary(self, n, rng):
        return rng.choice([self.a, self.b], size=n)[:, None]

    def describe(self):
        return {**super().describe(), "a": self.a, "b": self.b}


class Box(Domain):
    smooth = False

    def __init__(self, lo, hi, band=None):
        super().__init__(band)
        self.lo = np.asarray(lo, dtype=float).ravel()
        self.hi = np.asarray(hi, dtype=float).ravel()
        if self.lo.shape != self.hi.shape or np.any(self.hi <= self.lo):
            raise ValueError("Box needs lo < hi componentwise")
        self.dim = self.lo.size
        self.smooth = self.dim == 1

    def bounding_box(self):
        return self.lo.copy(), self.hi.copy()

    def _dist(self, x):
        excess = np.maximum(np.maximum(self.lo - x, x - self.hi), 0.0)
        return np.linalg.norm(excess, axis=-1)

    def _closest(self, x):
        return np.clip(x, self.lo, self.hi)

    def _sd(self, x):
        inner = np.min(np.minimum(x - self.lo, self.hi - x), axis=-1)
        return np.where(inner >= 0, inner, -self._dist(x))

    def _inner_normal_field(self, x):
        gaps = np.concatenate([x - self.lo, self.hi - x], axis=-1)
        k = np.argmin(gaps, axis=-1)
        out = np.zeros_like(x)
        axis = k % self.dim
        sign = np.where(k < self.dim, -1.0, 1.0)
        out[np.arange(x.shape[0]), axis] = sign
        return out

    def _active_normals(self, p):
        tol = self._boundary_tol()
        gens = []
        for i in range(self.dim):
            if abs(p[i] - self.lo[i]) <= tol:
                e = np.zeros(self.dim)
                e[i] = -1.0
                gens.append(e)
            if abs(p[i] - self.hi[i]) <= tol:
                e = np.zeros(self.dim)
                e[i] = 1.0
                gens.append(e)
        if not gens:
            raise ValueError(f"{p} is not on the boundary")
        return gens

    def sample_boundary(self, n, rng):
        pts = rng.uniform(self.lo, self.hi, size=(n, self.dim))
        axis = rng.integers(0, self.dim, size=n)
        side = rng.integers(0, 2, size=n)
        pts[np.arange(n), axis] = np.where(side == 0, self.lo[axis], self.hi[axis])
        return pts

    def describe(self):
        return {**super().describe(), "lo": self.lo.tolist(), "hi": self.hi.tolist()}


class Ball(Domain):
    def __init__(self, center, radius, band=None):
        super().__init__(band)
        self.center = np.atleast_1d(np.asarray(center, dtype=float)).ravel()
        self.radius = float(radius)
        if self.radius <= 0:
            raise ValueError("Ball radius must be positive")
        self.dim = self.center.size

    def bounding_box(self):
        return self.center - self.radius, self.center + self.radius

    @property
    def diameter(self):
        return 2.0 * self.radius

    def _r(self, x):
        d = x - self.center
        return np.sqrt(np.einsum("...i,...i->...", d, d))

    def _dist(self, x):
        return np.maximum(self._r(x) - self.radius, 0.0)

    def _closest(self, x):
        r = self._r(x)
        scale = np.where(r > self.radius, self.radius / np.where(r > 0, r, 1.0), 1.0)
        return self.center + (x - self.center) * scale[:, None]

    def _sd(self, x):
        return self.radius - self._r(x)

    def _inner_normal_field(self, x):
        v = _unit(x - self.center)
        # the center has no preferred direction; pick e_1
        zero = np.linalg.norm(v, axis=-1) == 0
        if np.any(zero):
            v[zero] = 0.0
            v[zero, 0] = 1.0
        return v

    def normal_field(self, x):
        pts, single = _as_points(x, self.dim)
        out = self._inner_normal_field(pts)
        return out[0] if single else out

    def sample_boundary(self, n, rng):
        v = _unit(rng.normal(size=(n, self.dim)))
        return self.center + self.radius * v

    def describe(self):
        return {**super().describe(), "center": self.center.tolist(), "radius": self.radius}


class ConvexPolygon(Domain):
    """Convex polygon in the plane; vertices in either orientation."""

    smooth = False

    def __init__(self, vertices, band=None):
        super().__init__(band)
        v = np.asarray(vertices, dtype=float)
        if v.ndim != 2 or v.shape[1] != 2 or v.shape[0] < 3:
            raise ValueError("ConvexPolygon needs at least three 2-D vertices")
        area = 0.5 * np.sum(v[:, 0] * np.roll(v[:, 1], -1) - np.roll(v[:, 0], -1) * v[:, 1])
        if area < 0:
            v = v[::-1].copy()
        self.vertices = v
        self.dim = 2
        e = np.roll(v, -1, axis=0) - v
        self._edges = e
        self._normals = _unit(np.stack([e[:, 1], -e[:, 0]], axis=-1))
        cross = e[:, 0] * np.roll(e, -1, axis=0)[:, 1] - e[:, 1] * np.roll(e, -1, axis=0)[:, 0]
        if np.any(cross <= 0):
            raise ValueError("vertices do not describe a strictly convex polygon")

    def bounding_box(self):
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    def _edge_offsets(self, x):
        # signed distance to each edge line, positive outside
        return np.einsum("mkd,kd->mk", x[:, None, :] - self.vertices[None], self._normals)

    def _segment_closest(self, x):
        rel = x[:, None, :] - self.vertices[None]
        t = np.einsum("mkd,kd->mk", rel, self._edges) / np.sum(self._edges**2, axis=-1)
        t = np.clip(t, 0.0, 1.0)
        proj = self.vertices[None] + t[..., None] * self._edges[None]
        dist = np.linalg.norm(x[:, None, :] - proj, axis=-1)
        k = np.argmin(dist, axis=-1)
        idx = np.arange(x.shape[0])
        return proj[idx, k], dist[idx, k]

    def _dist(self, x):
        outside = np.any(self._edge_offsets(x) > 0, axis=-1)
        _, dist = self._segment_closest(x)
        return np.where(outside, dist, 0.0)

    def _closest(self, x):
        outside = np.any(self._edge_offsets(x) > 0, axis=-1)
        proj, _ = self._segment_closest(x)
        return np.where(outside[:, None], proj, x)

    def _sd(self, x):
        off = self._edge_offsets(x)
        outside = np.any(off > 0, axis=-1)
        _, dist = self._segment_closest(x)
        return np.where(outside, -dist, -np.max(off, axis=-1))

    def _inner_normal_field(self, x):
        k = np.argmax(self._edge_offsets(x), axis=-1)
        return self._normals[k]

    def _active_normals(self, p):
        tol = self._boundary_tol()
        off = self._edge_offsets(p[None, :])[0]
        active = np.nonzero(np.abs(off) <= tol)[0]
        if active.size == 0:
            raise ValueError(f"{p} is not on the boundary")
        if active.size == 1:
            return [self._normals[active[0]]]
        # a vertex touches edges k-1 and k; order the extremes along the arc
        k = active
        if set(k.tolist()) == {0, len(self.vertices) - 1}:
            k = np.array([len(self.vertices) - 1, 0])
        return [self._normals[k[0]], self._normals[k[1]]]

    def sample_boundary(self, n, rng):
        lengths = np.linalg.norm(self._edges, axis=-1)
        k = rng.choice(len(lengths), size=n, p=lengths / lengths.sum())
        t = rng.uniform(size=n)
        return self.vertices[k] + t[:, None] * self._edges[k]

    def describe(self):
        return {**super().describe(), "vertices": self.vertices.tolist()}


class HalfSpace(Domain):
    """``{x : (x - point) . normal < 0}`` with outward unit ``normal``."""

    bounded = False

    def __init__(self, point, normal, band=None):
        super().__init__(band)
        self.point = np.atleast_1d(np.asarray(point, dtype=float)).ravel()
        nv = np.atleast_1d(np.asarray(normal, dtype=float)).ravel()
        self.outward = nv / np.linalg.norm(nv)
        self.dim = self.point.size

    def bounding_box(self):
        raise ValueError("a half-space is unbounded; give the computational box explicitly")

    @property
    def diameter(self):
        return math.inf

    def _s(self, x):
        return (x - self.point) @ self.outward

    def _dist(self, x):
        return np.maximum(self._s(x), 0.0)

    def _closest(self, x):
        return x - np.maximum(self._s(x), 0.0)[:, None] * self.outward

    def _sd(self, x):
        return -self._s(x)

    def _inner_normal_field(self, x):
        return np.broadcast_to(self.outward, x.shape).copy()

    def sample_boundary(self, n, rng):
        v = rng.normal(size=(n, self.dim))
        v -= (v @ self.outward)[:, None] * self.outward
        return self.point + v

    def describe(self):
        return {**super().describe(), "point": self.point.tolist(), "normal": self.outward.tolist()}


class ImplicitSDF(Domain):
    """Domain ``{phi < 0}`` for a user level-set function ``phi``.

    ``phi`` follows the usual SDF convention (negative inside) and should be
    Lipschitz with constant ``lipschitz``; distances are ``max(phi, 0) / L``,
    exact when ``phi`` is a true signed distance. ``convex`` is a user
    assertion that is spot-checked on random segments.
    """

    def __init__(self, phi, dim, bounds, lipschitz=1.0, convex=False, smooth=True,
                 band=None, fd_step=None, check_samples=200, seed=0):
        super().__init__(band)
        self.dim = int(dim)
        self.phi = as_scalar_field(phi, self.dim)
        self.lipschitz = float(lipschitz)
        lo, hi = bounds
        self._lo = np.asarray(lo, dtype=float).ravel()
        self._hi = np.asarray(hi, dtype=float).ravel()
        self.convex = bool(convex)
        self.smooth = bool(smooth)
        self.fd_step = fd_step if fd_step is not None else 1e-6 * self.diameter
        if self.convex and check_samples:
            self._spot_check_convexity(check_samples, np.random.default_rng(seed))

    def bounding_box(self):
        return self._lo.copy(), self._hi.copy()

    def _spot_check_convexity(self, n, rng):
        span = self._hi - self._lo
        a = rng.uniform(self._lo - 0.5 * span, self._hi + 0.5 * span, size=(n, self.dim))
        b = rng.uniform(self._lo - 0.5 * span, self._hi + 0.5 * span, size=(n, self.dim))
        mid = self._dist(0.5 * (a + b))
        bound = 0.5 * (self._dist(a) + self._dist(b))
        if np.any(mid > bound + 1e-9 * self.diameter):
            warnings.warn("ImplicitSDF declared convex but distance fails the midpoint test",
                          stacklevel=3)

    def _dist(self, x):
        return np.maximum(self.phi(x), 0.0) / self.lipschitz

    def _sd(self, x):
        return -self.phi(x) / self.lipschitz

    def _grad(self, x):
        h = self.fd_step
        g = np.empty_like(x)
        for i in range(self.dim):
            e = np.zeros(self.dim)
            e[i] = h
            g[:, i] = (self.phi(x + e) - self.phi(x - e)) / (2 * h)
        return g

    def _inner_normal_field(self, x):
        return _unit(self._grad(x))

    def _closest(self, x):
        p = x.copy()
        out = self.phi(p) > 0
        for _ in range(50):
            if not np.any(out):
                break
            q = p[out]
            g = self._grad(q)
            val = self.phi(q)
            step = val / np.maximum(np.sum(g * g, axis=-1), 1e-300)
            q = q - step[:, None] * g
            p[out] = q
            out_idx = np.nonzero(out)[0]
            done = np.abs(val) <= 1e-13 * self.diameter
            out[out_idx[done]] = False
        return p

    def normal(self, x):
        pts, single = _as_points(x, self.dim)
        n = _unit(self._grad(pts))
        return n[0] if single else n

    def sample_boundary(self, n, rng):
        c = 0.5 * (self._lo + self._hi)
        v = _unit(rng.normal(size=(n, self.dim)))
        far = c + v * self.diameter
        return self._closest(far)

    def describe(self):
        return {**super().describe(), "phi": getattr(self.phi, "source", repr(self.phi)),
                "lipschitz": self.lipschitz}


def dist_to_closure(domain, x):
    return domain.dist_to_closure(x)


def signed_distance(domain, x):
    return domain.signed_distance(x)


def truncated_distance(domain, x):
    return domain.truncated_distance(x)


def normal(domain, x):
    return domain.normal(x)


def normal_cone(domain, x):
    return domain.normal_cone(x)


def closest_point(domain, x):
    return domain.closest_point(x)


def enumerate_normal_cone(domain, x, n_rays=64):
    """Unit vectors spanning the normal cone, for inf/sup over the cone."""
    gens = domain.normal_cone(x)
    if len(gens) == 1:
        return np.asarray(gens)
    if len(gens) == 2:
        a, b = gens
        ang = math.acos(float(np.clip(a @ b, -1.0, 1.0)))
        t = np.linspace(0.0, 1.0, n_rays)[:, None]
        if ang < 1e-12:
            return np.asarray([a])
        # slerp between the two extremes
        return (np.sin((1 - t) * ang) * a + np.sin(t * ang) * b) / math.sin(ang)
    g = np.asarray(gens)
    rays = [g, _unit(g.mean(axis=0, keepdims=True))]
    per = max(2, n_rays // max(1, len(gens) * (len(gens) - 1) // 2))
    t = np.linspace(0.0, 1.0, per)[:, None]
    for i in range(len(gens)):
        for j in range(i + 1, len(gens)):
            rays.append(_unit((1 - t) * g[i] + t * g[j]))
    return np.concatenate(rays, axis=0)

"""Nonlinearities F(x, u, p, X, l) built from linear records.

A linear record is

    F(x, u, p, X, l) = -a l - Tr(A(x) X) - b(x).p + lambda(x) u - f(x),

where ``l`` stands for the nonlocal term I[u](x). A Bellman nonlinearity is
the pointwise maximum of finitely many records. Far from the domain the
equation can be flattened to ``lambda0 u`` by a smooth radial blend.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field, replace

import numpy as np

from .expressions import as_matrix_field, as_scalar_field, as_vector_field

__all__ = ["Linear", "Nonlinearity", "evaluate", "compute_MF", "verify_assumptions", "blend_weight"]


def _smoothstep(t):
    t = np.clip(t, 0.0, 1.0)
    return t * t * t * (10.0 - 15.0 * t + 6.0 * t * t)


def blend_weight(x, center, radius):
    """0 inside |x - center| <= radius, 1 beyond radius + 1, C^2 quintic in between."""
    if radius is None:
        return np.zeros(np.atleast_2d(x).shape[0])
    r = np.linalg.norm(np.atleast_2d(x) - center, axis=-1)
    return _smoothstep(r - radius)


@dataclass
class Linear:
    """Linear record with coefficient fields (callables of points)."""

    dim: int
    a: float = 0.0
    A: object = None
    b: object = None
    lam: object = None
    f: object = None

    def __post_init__(self):
        self.a = float(self.a)
        self.A = as_matrix_field(0.0 if self.A is None else self.A, self.dim)
        self.b = as_vector_field(["0"] * self.dim if self.b is None else self.b, self.dim)
        self.lam = as_scalar_field(1.0 if self.lam is None else self.lam, self.dim)
        self.f = as_scalar_field(0.0 if self.f is None else self.f, self.dim)

    def coefficients(self, x):
        x = np.atleast_2d(x)
        A = np.asarray(self.A(x), dtype=float)
        return {
            "a": self.a,
            "A": np.broadcast_to(A, (x.shape[0], self.dim, self.dim)),
            "b": np.broadcast_to(np.asarray(self.b(x), dtype=float), (x.shape[0], self.dim)),
            "lam": np.asarray(self.lam(x), dtype=float),
            "f": np.asarray(self.f(x), dtype=float),
        }

    def evaluate(self, x, u, p, X, l):
        c = self.coefficients(x)
        m = c["lam"].shape[0]
        p = np.broadcast_to(np.asarray(p, dtype=float), (m, self.dim))
        X = np.broadcast_to(np.asarray(X, dtype=float), (m, self.dim, self.dim))
        return (-c["a"] * np.asarray(l, dtype=float) - np.einsum("mij,mij->m", c["A"], X)
                - np.einsum("mi,mi->m", c["b"], p) + c["lam"] * np.asarray(u, dtype=float) - c["f"])


@dataclass
class Nonlinearity:
    """Linear (one record) or Bellman (max over records) nonlinearity.

    ``flatten_radius`` and ``flatten_center`` switch on the far-field blend
    of F toward ``lambda0 u``.
    """

    records: list
    lambda0: float
    kind: str = "linear"
    flatten_radius: float | None = None
    flatten_center: np.ndarray | None = None
    dim: int = dc_field(init=False)

    def __post_init__(self):
        if not self.records:
            raise ValueError("need at least one record")
        if self.lambda0 <= 0:
            raise ValueError("lambda0 must be positive")
        self.dim = self.records[0].dim
        if self.kind not in ("linear", "bellman"):
            raise ValueError("kind must be 'linear' or 'bellman'")
        if self.kind == "linear" and len(self.records) != 1:
            raise ValueError("a linear nonlinearity has exactly one record")
        if self.flatten_center is None:
            self.flatten_center = np.zeros(self.dim)

    @classmethod
    def linear(cls, dim, a=0.0, A=None, b=None, lam=1.0, f=0.0, lambda0=None):
        rec = Linear(dim, a, A, b, lam, f)
        if lambda0 is None:
            lambda0 = getattr(rec.lam, "constant_value", None)
            if lambda0 is None:
                raise ValueError("lambda0 required when lambda is not constant")
        return cls([rec], float(lambda0), "linear")

    @classmethod
    def fractional(cls, dim, a=1.0, lam=1.0, f=0.0, lambda0=None):
        """Preset a (-Delta)^{alpha/2} u + lambda u = f (pair with a fractional LevyModel)."""
        return cls.linear(dim, a=a, lam=lam, f=f, lambda0=lambda0)

    @classmethod
    def bellman(cls, records, lambda0):
        return cls(list(records), float(lambda0), "bellman")

    @property
    def is_linear(self):
        return self.kind == "linear"

    @property
    def uses_nonlocal(self):
        return any(r.a != 0.0 for r in self.records)

    def with_flattening(self, radius, center=None):
        return replace(self, flatten_radius=radius,
                       flatten_center=self.flatten_center if center is None else np.asarray(center, float))

    def blend(self, x):
        return blend_weight(x, self.flatten_center, self.flatten_radius)

    def evaluate_records(self, x, u, p, X, l):
        vals = np.stack([r.evaluate(x, u, p, X, l) for r in self.records])
        th = self.blend(x)
        if np.any(th > 0):
            vals = (1.0 - th) * vals + th * self.lambda0 * np.asarray(u, dtype=float)
        return vals

    def evaluate(self, x, u, p, X, l):
        return self.evaluate_records(x, u, p, X, l).max(axis=0)

    def describe(self):
        out = {"kind": self.kind, "records": len(self.records), "lambda0": self.lambda0,
               "flatten_radius": self.flatten_radius}
        for k, r in enumerate(self.records):
            out[f"a[{k}]"] = r.a
        return out


def evaluate(nl, x, u, p, X, l):
    """F at points ``x``; scalars broadcast. Single point in gives a float out."""
    xs = np.atleast_2d(np.asarray(x, dtype=float))
    if xs.shape[-1] != nl.dim:
        xs = xs.reshape(-1, nl.dim)
    single = np.asarray(x).ndim <= 1 and xs.shape[0] == 1
    p = np.asarray(p, dtype=float)
    if p.ndim == 0:
        p = np.full(nl.dim, float(p))
    X = np.asarray(X, dtype=float)
    if X.ndim == 0:
        X = float(X) * np.eye(nl.dim)
    out = nl.evaluate(xs, u, p, X, l)
    return float(out[0]) if single else out


def compute_MF(nl, grid, where="closure"):
    """max |F(x, 0, 0, 0, 0)| over grid nodes in the closed domain (or all nodes)."""
    if where == "closure":
        sel = grid.sd >= 0
    elif where == "all":
        sel = np.ones(grid.n, dtype=bool)
    else:
        raise ValueError("where must be 'closure' or 'all'")
    x = grid.points[sel]
    if x.shape[0] == 0:
        raise ValueError("no grid nodes in the selected set")
    zero_p = np.zeros(nl.dim)
    zero_X = np.zeros((nl.dim, nl.dim))
    return float(np.max(np.abs(nl.evaluate(x, 0.0, zero_p, zero_X, 0.0))))


def _random_psd(rng, m, dim):
    G = rng.normal(size=(m, dim, dim))
    return np.einsum("mij,mkj->mik", G, G)


def verify_assumptions(nl, samples, n_trials=100, seed=0):
    """Sampled checks of properness, ellipticity in X and monotonicity/Lipschitz in l.

    ``samples`` are points. Returns ``{name: {"pass": bool, "margin": float}}``
    where the margin is the worst observed slack (negative means violated).
    """
    rng = np.random.default_rng(seed)
    x = np.atleast_2d(np.asarray(samples, dtype=float))
    idx = rng.integers(0, x.shape[0], size=n_trials)
    xs = x[idx]
    dim = nl.dim
    u = rng.normal(size=n_trials)
    du = rng.uniform(0.1, 2.0, size=n_trials)
    p = rng.normal(size=(n_trials, dim))
    X = rng.normal(size=(n_trials, dim, dim))
    X = 0.5 * (X + np.swapaxes(X, 1, 2))
    l = rng.normal(size=n_trials)
    base = nl.evaluate(xs, u, p, X, l)

    slope = (nl.evaluate(xs, u + du, p, X, l) - base) / du
    a2 = float(np.min(slope - nl.lambda0))

    P = _random_psd(rng, n_trials, dim)
    ell_x = float(np.min(base - nl.evaluate(xs, u, p, X + P, l)))

    dl = rng.uniform(0.1, 2.0, size=n_trials)
    drop = base - nl.evaluate(xs, u, p, X, l + dl)
    ell_l = float(np.min(drop))
    lip = max(abs(r.a) for r in nl.records)
    a4_lip = float(np.min(lip * dl - np.abs(drop)))
    tol = 1e-10
    return {
        "A2": {"pass": a2 >= -tol, "margin": a2},
        "ellipticity_X": {"pass": ell_x >= -tol, "margin": ell_x},
        "ellipticity_l": {"pass": ell_l >= -tol, "margin": ell_l},
        "A4": {"pass": ell_l >= -tol and a4_lip >= -tol, "margin": min(ell_l, a4_lip),
               "lipschitz": lip},
    }


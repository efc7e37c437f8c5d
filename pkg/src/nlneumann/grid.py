"""Tensor grid over a computational box, node classification and stencils.

Stencil helpers return COO triplets ``(rows, cols, vals)`` for linear maps
``u -> L u`` restricted to a set of rows. Neighbour indices are clipped at
the box walls, i.e. values are extrapolated by the nearest box value.
"""

from __future__ import annotations

import itertools

import numpy as np

INTERIOR, BOUNDARY, EXTERIOR = 0, 1, 2
CLASS_NAMES = {INTERIOR: "interior", BOUNDARY: "boundary", EXTERIOR: "exterior"}


class Grid:
    """Uniform tensor grid on ``[lo, hi]``.

    With ``cell_centered=True`` nodes sit at cell midpoints, so a domain
    whose faces lie on multiples of ``h`` from ``lo`` has its boundary
    halfway between nodes.
    """

    def __init__(self, lo, hi, h, cell_centered=True):
        self.lo = np.atleast_1d(np.asarray(lo, dtype=float))
        self.hi = np.atleast_1d(np.asarray(hi, dtype=float))
        self.dim = self.lo.size
        h = np.broadcast_to(np.asarray(h, dtype=float), (self.dim,)).copy()
        cells = np.maximum(np.rint((self.hi - self.lo) / h).astype(int), 1)
        self.h = (self.hi - self.lo) / cells
        self.cell_centered = bool(cell_centered)
        if self.cell_centered:
            self.axes = [self.lo[d] + (np.arange(cells[d]) + 0.5) * self.h[d] for d in range(self.dim)]
        else:
            self.axes = [self.lo[d] + np.arange(cells[d] + 1) * self.h[d] for d in range(self.dim)]
        self.shape = tuple(a.size for a in self.axes)
        self.n = int(np.prod(self.shape))
        mesh = np.meshgrid(*self.axes, indexing="ij")
        self.points = np.stack([m.ravel() for m in mesh], axis=-1)
        self._multi = np.stack(np.unravel_index(np.arange(self.n), self.shape), axis=-1)
        self.sd = None
        self.dbar = None
        self.node_class = None

    @classmethod
    def for_domain(cls, domain, h, margin=1.0, cell_centered=True, box=None):
        """Box around the domain's bounding box, padded by ``margin`` rounded up to whole cells."""
        if box is not None:
            lo, hi = (np.atleast_1d(np.asarray(b, dtype=float)) for b in box)
        else:
            dlo, dhi = domain.bounding_box()
            h_arr = np.broadcast_to(np.asarray(h, dtype=float), (domain.dim,))
            m = np.ceil(margin / h_arr - 1e-9) * h_arr
            cells = np.rint((dhi - dlo) / h_arr)
            # stretch h slightly so the domain extent is a whole number of cells
            h_arr = np.where(cells > 0, (dhi - dlo) / np.maximum(cells, 1), h_arr)
            m = np.ceil(margin / h_arr - 1e-9) * h_arr
            lo, hi = dlo - m, dhi + m
            h = h_arr
        grid = cls(lo, hi, h, cell_centered=cell_centered)
        grid.classify(domain)
        return grid

    def classify(self, domain):
        self.sd = domain.signed_distance(self.points)
        self.dbar = domain.dist_to_closure(self.points)
        band = 0.5 * float(np.max(self.h))
        cls_ = np.full(self.n, INTERIOR)
        cls_[np.abs(self.sd) <= band] = BOUNDARY
        cls_[self.dbar > band] = EXTERIOR
        self.node_class = cls_
        self.in_closure = self.dbar <= 1e-12 * max(1.0, float(np.max(self.hi - self.lo)))
        return self

    @property
    def spacing(self):
        return float(np.min(self.h))

    def describe(self):
        return {"lo": self.lo.tolist(), "hi": self.hi.tolist(), "h": self.h.tolist(),
                "shape": list(self.shape), "cell_centered": self.cell_centered}

    # neighbour arithmetic on flat indices
    def shift(self, idx, axis, step):
        m = self._multi[idx].copy()
        m[:, axis] = np.clip(m[:, axis] + step, 0, self.shape[axis] - 1)
        return np.ravel_multi_index(tuple(m.T), self.shape)

    def shift2(self, idx, a1, s1, a2, s2):
        m = self._multi[idx].copy()
        m[:, a1] = np.clip(m[:, a1] + s1, 0, self.shape[a1] - 1)
        m[:, a2] = np.clip(m[:, a2] + s2, 0, self.shape[a2] - 1)
        return np.ravel_multi_index(tuple(m.T), self.shape)

    def in_box(self, x):
        return np.all((x >= self.lo - 1e-12) & (x <= self.hi + 1e-12), axis=-1)

    def interp_stencil(self, x):
        """Multilinear interpolation weights (all >= 0, summing to 1).

        Coordinates are clipped to the node range, so points in the outer
        half cell or outside the box use the nearest box values.
        """
        x = np.atleast_2d(x)
        m = x.shape[0]
        base = np.empty((m, self.dim), dtype=int)
        frac = np.empty((m, self.dim))
        for d in range(self.dim):
            first = self.axes[d][0]
            s = (x[:, d] - first) / self.h[d]
            s = np.clip(s, 0.0, self.shape[d] - 1)
            b = np.minimum(np.floor(s).astype(int), max(self.shape[d] - 2, 0))
            base[:, d] = b
            frac[:, d] = s - b if self.shape[d] > 1 else 0.0
        corners = list(itertools.product((0, 1), repeat=self.dim))
        idx = np.empty((m, len(corners)), dtype=int)
        wts = np.empty((m, len(corners)))
        for c, off in enumerate(corners):
            mi = base + np.asarray(off)
            mi = np.minimum(mi, np.asarray(self.shape) - 1)
            idx[:, c] = np.ravel_multi_index(tuple(mi.T), self.shape)
            w = np.ones(m)
            for d in range(self.dim):
                w *= frac[:, d] if off[d] else 1.0 - frac[:, d]
            wts[:, c] = w
        return idx, wts

    def interpolate(self, u, x):
        idx, wts = self.interp_stencil(x)
        return np.sum(wts * u[idx], axis=-1)

    # stencils ---------------------------------------------------------------
    def second_order_entries(self, rows, mat):
        """Entries of u -> Tr(M D^2 u) at ``rows`` for per-row matrices ``mat``.

        Diagonal terms use the central three-point stencil; cross terms use
        the stencil on the diagonal matching the sign of the entry, which is
        monotone when each ``M_dd/h_d^2`` dominates the cross contributions.
        """
        rows = np.asarray(rows)
        mat = np.broadcast_to(mat, (rows.size, self.dim, self.dim))
        R, C, V = [], [], []
        for d in range(self.dim):
            c = mat[:, d, d] / self.h[d] ** 2
            for step in (-1, 1):
                R.append(rows)
                C.append(self.shift(rows, d, step))
                V.append(c)
            R.append(rows)
            C.append(rows)
            V.append(-2.0 * c)
        for d in range(self.dim):
            for e in range(d + 1, self.dim):
                a = mat[:, d, e] / (self.h[d] * self.h[e])
                pos = np.maximum(a, 0.0)
                neg = np.minimum(a, 0.0)
                # positive part on the (+,+)/(-,-) diagonal
                for s in (1, -1):
                    R.append(rows)
                    C.append(self.shift2(rows, d, s, e, s))
                    V.append(pos)
                    R.append(rows)
                    C.append(self.shift2(rows, d, s, e, -s))
                    V.append(-neg)
                for ax in (d, e):
                    for s in (1, -1):
                        R.append(rows)
                        C.append(self.shift(rows, ax, s))
                        V.append(-pos + neg)
                R.append(rows)
                C.append(rows)
                V.append(2.0 * pos - 2.0 * neg)
        return np.concatenate(R), np.concatenate(C), np.concatenate(V)

    def upwind_entries(self, rows, beta):
        """Entries of u -> beta . D u, one-sided toward the sign of beta.

        Forward differences where beta_d > 0 and backward where beta_d < 0
        keep every off-diagonal coefficient nonnegative; a zero component
        contributes nothing.
        """
        rows = np.asarray(rows)
        beta = np.broadcast_to(beta, (rows.size, self.dim))
        R, C, V = [], [], []
        for d in range(self.dim):
            b = beta[:, d] / self.h[d]
            pos = np.maximum(b, 0.0)
            neg = np.minimum(b, 0.0)
            fwd = self.shift(rows, d, 1)
            bwd = self.shift(rows, d, -1)
            R += [rows, rows, rows, rows]
            C += [fwd, rows, rows, bwd]
            V += [pos, -pos, neg, -neg]
        return np.concatenate(R), np.concatenate(C), np.concatenate(V)

    def central_gradient(self, u, rows):
        rows = np.asarray(rows)
        g = np.empty((rows.size, self.dim))
        for d in range(self.dim):
            up = self.shift(rows, d, 1)
            dn = self.shift(rows, d, -1)
            span = (self._multi[up, d] - self._multi[dn, d]) * self.h[d]
            g[:, d] = np.where(span > 0, (u[up] - u[dn]) / np.where(span > 0, span, 1.0), 0.0)
        return g

    def hessian(self, u, rows):
        rows = np.asarray(rows)
        H = np.empty((rows.size, self.dim, self.dim))
        for d in range(self.dim):
            H[:, d, d] = (u[self.shift(rows, d, 1)] - 2 * u[rows] + u[self.shift(rows, d, -1)]) / self.h[d] ** 2
            for e in range(d + 1, self.dim):
                v = (u[self.shift2(rows, d, 1, e, 1)] - u[self.shift2(rows, d, 1, e, -1)]
                     - u[self.shift2(rows, d, -1, e, 1)] + u[self.shift2(rows, d, -1, e, -1)])
                H[:, d, e] = H[:, e, d] = v / (4 * self.h[d] * self.h[e])
        return H

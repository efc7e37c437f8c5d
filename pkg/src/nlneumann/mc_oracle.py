"""Monte Carlo value of a linear problem through the reflected jump process.

The process moves by Euler steps of the drift and diffusion (the small
jumps enter as Brownian increments with covariance Sigma_delta), jumps at
the arrival times of a Poisson clock with the far jump intensity, and is
sent back along the exterior flow whenever it leaves the closed domain. A
relocation along the flow collects the g-integral of that flow as payoff.
This reflection rule mirrors the transport extension of exterior values;
it is a modelling reconstruction and the estimator is used only as an
oracle for the PDE solver.

Two estimators are available: ``"discount"`` weights running cost and flux
by ``exp(-int lambda)`` up to the horizon, and ``"killing"`` stops each path
at an exponential clock of rate lambda and sums undiscounted payoffs. Both
have the same mean; killing is far cheaper when the process has to be
simulated over many decay times.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import HorizonTooShort
from .flow import extension_data

__all__ = ["JumpProcessConfig", "simulate_value", "FarJumpSampler"]


@dataclass
class JumpProcessConfig:
    time_step: float = 0.01
    horizon: float | None = None
    n_paths: int = 10000
    rng_seed: int = 0
    target_accuracy: float = 1e-2
    estimator: str = "discount"
    chunk: int = 50000
    delta: float | None = None

    def __post_init__(self):
        if self.time_step <= 0:
            raise ValueError("time_step must be positive")
        if self.n_paths <= 0:
            raise ValueError("n_paths must be positive")
        if self.estimator not in ("discount", "killing"):
            raise ValueError("estimator must be 'discount' or 'killing'")

    def effective_horizon(self, lambda0):
        if self.horizon is not None:
            return float(self.horizon)
        return math.log(100.0 / self.target_accuracy) / lambda0


class FarJumpSampler:
    """Samples jumps z with delta <= |z| < R_z from the normalized far measure."""

    def __init__(self, model, delta, n_table=4096):
        self.model = model
        self.dim = model.dim
        self.delta = float(delta)
        R = model.trunc_radius
        self.intensity = float(model.mass(self.delta, R))
        if model.isotropic:
            self.kind = "radial"
            edges = np.geomspace(self.delta, R, n_table + 1)
            masses = np.array([model._radial_moment(a, b, 0.0) for a, b in zip(edges[:-1], edges[1:])])
            self.edges = edges
            self.cdf = np.concatenate([[0.0], np.cumsum(masses)]) / masses.sum()
        else:
            self.kind = "cells"
            t = model._cp_table()
            r = np.linalg.norm(t["centroid"], axis=-1)
            sel = (r >= self.delta) & (r < R)
            lo, hi = (np.broadcast_to(np.asarray(s, dtype=float), (self.dim,)) for s in model.support)
            self.width = (hi - lo) / model.support_cells
            self.centers = t["centroid"][sel]
            m = t["mass"][sel]
            self.cdf = np.concatenate([[0.0], np.cumsum(m)]) / m.sum()

    def _radius(self, u):
        """Inverse CDF; exact for the fractional density, piecewise otherwise."""
        m = self.model
        if m.measure == "fractional":
            a, R, al = self.delta, m.trunc_radius, m.alpha
            return (a ** -al - u * (a ** -al - R ** -al)) ** (-1.0 / al)
        k = np.clip(np.searchsorted(self.cdf, u, side="right") - 1, 0, self.edges.size - 2)
        frac = (u - self.cdf[k]) / np.maximum(self.cdf[k + 1] - self.cdf[k], 1e-300)
        return self.edges[k] * (self.edges[k + 1] / self.edges[k]) ** frac

    def sample(self, rng, n):
        if self.kind == "radial":
            r = self._radius(rng.random(n))
            if self.dim == 1:
                d = np.where(rng.random(n) < 0.5, -1.0, 1.0)[:, None]
            else:
                d = rng.normal(size=(n, self.dim))
                d /= np.linalg.norm(d, axis=-1, keepdims=True)
            return r[:, None] * d
        k = np.clip(np.searchsorted(self.cdf, rng.random(n), side="right") - 1, 0, self.centers.shape[0] - 1)
        return self.centers[k] + (rng.random((n, self.dim)) - 0.5) * self.width


def _relocate(field, domain, x, flow_kw):
    """Send exterior rows of x to the boundary; returns new positions and g-integrals."""
    out = np.zeros(x.shape[0])
    outside = domain._dist(x) > 0
    if outside.any():
        _, p, g_int = extension_data(field, domain, x[outside], **flow_kw)
        x = x.copy()
        x[outside] = p
        out[outside] = g_int
    return x, out


def simulate_value(nl, levy, field, domain, x, cfg, flow_kw=None):
    """Estimate u(x) and its standard error for a linear nonlinearity.

    Paths are simulated in chunks; chunk ``k`` draws from a Philox stream
    keyed by ``(rng_seed, k)``, so results do not depend on scheduling and
    identical seeds reproduce estimates exactly.
    """
    if not nl.is_linear:
        raise ValueError("the Monte Carlo oracle handles linear nonlinearities only")
    flow_kw = flow_kw or {}
    rec = nl.records[0]
    dim = domain.dim
    x0 = np.atleast_1d(np.asarray(x, dtype=float))
    T = cfg.effective_horizon(nl.lambda0)
    tail = math.exp(-nl.lambda0 * T)
    if tail > 0.01 * cfg.target_accuracy:
        raise HorizonTooShort(f"exp(-lambda0 T) = {tail:.3g} exceeds 1% of the target accuracy "
                              f"{cfg.target_accuracy:g}")
    a = rec.a
    use_jumps = levy is not None and a != 0.0
    sampler = None
    sig_small = np.zeros((dim, dim))
    comp = np.zeros(dim)
    if use_jumps:
        delta = cfg.delta if cfg.delta is not None else (levy.delta or 0.1)
        sampler = FarJumpSampler(levy, delta)
        sig_small = levy.small_second_moment(delta)
        if levy.isotropic:
            comp = np.zeros(dim)
        else:
            z, w, var = levy.base_nodes(delta)
            near = np.linalg.norm(z, axis=-1) < 1.0
            comp = (w[near, None] * z[near]).sum(axis=0)
            sig_small = sig_small + var
    rate = a * sampler.intensity if use_jumps else 0.0

    total, total_sq = 0.0, 0.0
    n_done = 0
    chunk_id = 0
    while n_done < cfg.n_paths:
        n = min(cfg.chunk, cfg.n_paths - n_done)
        rng = np.random.Generator(np.random.Philox(key=[cfg.rng_seed, chunk_id]))
        pay = _simulate_chunk(rec, nl, levy, field, domain, x0, n, T, cfg, rng, sampler, rate,
                              a * sig_small, a * comp, flow_kw)
        total += float(pay.sum())
        total_sq += float(np.sum(pay * pay))
        n_done += n
        chunk_id += 1
    mean = total / n_done
    var = max(total_sq / n_done - mean * mean, 0.0)
    se = math.sqrt(var / max(n_done - 1, 1)) if n_done > 1 else 0.0
    if se < 1e-13 * max(1.0, abs(mean)):
        se = 0.0
    return mean, se


def _simulate_chunk(rec, nl, levy, field, domain, x0, n, T, cfg, rng, sampler, rate, sig_small, comp,
                    flow_kw):
    dim = domain.dim
    X = np.broadcast_to(x0, (n, dim)).copy()
    X, g0 = _relocate(field, domain, X, flow_kw)
    pay = g0.copy()
    t = np.zeros(n)
    Lam = np.zeros(n)
    killing = cfg.estimator == "killing"
    kill_at = rng.exponential(size=n) if killing else None
    next_jump = rng.exponential(size=n) / rate if rate > 0 else np.full(n, np.inf)
    alive = np.ones(n, dtype=bool)
    dt_max = cfg.time_step
    while True:
        idx = np.nonzero(alive)[0]
        if idx.size == 0:
            break
        x = X[idx]
        coeff = rec.coefficients(x)
        lam = coeff["lam"]
        step = np.minimum(np.minimum(dt_max, next_jump[idx] - t[idx]), T - t[idx])
        if killing:
            step = np.minimum(step, (kill_at[idx] - Lam[idx]) / lam)
        step = np.maximum(step, 0.0)
        # running cost over the step with lambda frozen at the left point
        if killing:
            pay[idx] += coeff["f"] * step
        else:
            decay = -np.expm1(-lam * step) / lam
            pay[idx] += np.exp(-Lam[idx]) * coeff["f"] * decay
        # Euler move for drift and diffusion
        cov = 2.0 * coeff["A"] + sig_small
        drift = coeff["b"] - comp
        xi = rng.normal(size=(idx.size, dim))
        if not np.any(cov):
            x = x + drift * step[:, None]
        elif np.all(cov == cov[:1]):
            # one factorization serves every path when the covariance is uniform
            Lc = _chol(cov[:1])[0]
            x = x + drift * step[:, None] + (xi @ Lc.T) * np.sqrt(step)[:, None]
        else:
            Lc = _chol(cov)
            x = x + drift * step[:, None] + np.einsum("mij,mj->mi", Lc, xi) * np.sqrt(step)[:, None]
        t[idx] += step
        Lam[idx] += lam * step
        # far jumps whose clock rang
        jump = t[idx] >= next_jump[idx] - 1e-15
        if jump.any():
            j_idx = np.nonzero(jump)[0]
            z = sampler.sample(rng, j_idx.size)
            if levy.jump_map == "affine":
                z = np.einsum("mij,mj->mi", levy.sigma_at(x[j_idx]), z)
            x[j_idx] = x[j_idx] + z
            next_jump[idx[j_idx]] = t[idx[j_idx]] + rng.exponential(size=j_idx.size) / rate
        x, gi = _relocate(field, domain, x, flow_kw)
        wj = np.ones(idx.size) if killing else np.exp(-Lam[idx])
        pay[idx] += wj * gi
        X[idx] = x
        done = t[idx] >= T - 1e-15
        if killing:
            done |= Lam[idx] >= kill_at[idx] * (1 - 1e-14)
        alive[idx[done]] = False
    return pay


def _chol(cov):
    m = cov.shape[0]
    eye = np.eye(cov.shape[-1])
    jitter = 1e-300 + 1e-14 * np.abs(cov).max(axis=(1, 2), keepdims=True)
    try:
        return np.linalg.cholesky(cov + jitter * eye)
    except np.linalg.LinAlgError:
        # PSD but singular: symmetric square root
        vals, vecs = np.linalg.eigh(cov)
        vals = np.clip(vals, 0.0, None)
        return np.einsum("mij,mj->mij", vecs, np.sqrt(vals)).reshape(m, *cov.shape[1:])

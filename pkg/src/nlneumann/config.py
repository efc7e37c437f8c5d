"""Run configuration: an INI file with dotted sections.

Every key has a default listed in ``SCHEMA``; the effective value of every
key (defaults included) is echoed by ``RunConfig.effective`` so that
artifacts never depend on silent defaults. ``load_config`` parses, builds
the library objects and cross-validates them. Malformed input raises
``ConfigError`` (with the dotted key path); a structural assumption that
fails raises ``ValidationError`` with its tag (BC1, BC2, BC3, A2, A4, A5).

Sections: ``domain``, ``field``, ``levy``, ``F`` (plus ``F.1``, ``F.2``, ...
for Bellman records), ``grid``, ``solver``, ``mc``, ``flow``, ``sweep``,
``output``. Vectors are comma separated, lists of points semicolon
separated.
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field as dc_field

import numpy as np

from .errors import ConfigError, DeltaTooLarge, NonIntegrable, ValidationError
from .expressions import ExpressionError, as_matrix_field, as_scalar_field, is_zero_field
from .flow import ObliqueField, check_field
from .geometry import Ball, Box, ConvexPolygon, HalfSpace, ImplicitSDF, Interval
from .levy import LevyModel, check_exterior_integrability
from .mc_oracle import JumpProcessConfig
from .nonlinearity import Linear, Nonlinearity, verify_assumptions
from .solver import DEFAULT_KAPPAS, Problem, SolverConfig

__all__ = ["RunConfig", "load_config", "parse_config", "SCHEMA"]

_KAPPAS = ", ".join(repr(k) for k in DEFAULT_KAPPAS)

# section -> key -> default (None means "unset"; the builder decides)
SCHEMA = {
    "domain": {"shape": None, "a": None, "b": None, "lo": None, "hi": None, "center": None,
               "radius": None, "vertices": None, "point": None, "normal": None, "phi": None,
               "dim": None, "bounds_lo": None, "bounds_hi": None, "lipschitz": "1.0",
               "convex": "false", "smooth": "true", "band": None},
    "field": {"gamma": "normal", "tangential": "0.0", "g": "0", "nu": None, "L_gamma": None,
              "L_g": "0.0", "growth_c": None, "g_compact": None},
    "levy": {"measure": "none", "alpha": "1.0", "c_alpha": None, "tempering": "1.0",
             "density": None, "support_lo": None, "support_hi": None, "support_cells": "64",
             "jump_map": "identity", "sigma": None, "delta": None, "trunc_radius": "50.0",
             "radial_nodes": None, "angular_nodes": "16", "tail": "drop", "delta_safety": "64.0",
             "moment_correction": "true"},
    "F": {"kind": "linear", "a": "0.0", "A": "0", "b": None, "lam": "1.0", "f": "0.0",
          "lambda0": None, "records": "1"},
    "grid": {"h": None, "margin": None, "box_lo": None, "box_hi": None, "cell_centered": "true"},
    "solver": {"bc_mode": "penalized", "kappa_schedule": _KAPPAS, "method": "direct", "rho": "auto",
               "tol_residual": "1e-8", "max_iters": "100000", "tol_kappa": None, "rho_min": "1e-12",
               "howard_max": "100", "check_monotone": "true", "flatten": "true"},
    "mc": {"time_step": "0.01", "horizon": None, "n_paths": "10000", "target_accuracy": "1e-2",
           "estimator": "discount", "chunk": "50000", "delta": None, "points": None, "seed": "0"},
    "flow": {"point": None, "step": None, "event_tol": None, "safety": "4.0",
             "record_path": "false"},
    "sweep": {"h_list": None, "exact": None},
    "output": {"directory": "out", "precision": "17"},
}
_RECORD_KEYS = ("a", "A", "b", "lam", "f")


@dataclass
class RunConfig:
    """Parsed configuration plus the library objects built from it."""

    raw: dict
    domain: object
    field: ObliqueField
    levy: LevyModel | None
    nl: Nonlinearity
    solver: SolverConfig
    mc: JumpProcessConfig
    h: float | None
    margin: float | None
    box: tuple | None
    cell_centered: bool
    flow: dict
    sweep: dict
    output: dict
    checks: dict = dc_field(default_factory=dict)
    source: str | None = None

    @property
    def dim(self):
        return self.domain.dim

    def problem(self, h=None):
        h = self.h if h is None else h
        if h is None:
            raise ConfigError("grid.h", "required for this subcommand")
        return Problem(self.domain, self.nl, h, levy=self.levy, field=self.field, margin=self.margin,
                       box=self.box, cell_centered=self.cell_centered,
                       delta=self.levy.delta if self.levy is not None else None)

    def effective(self):
        """Flat ``section.key -> value`` map of every setting, defaults included."""
        out = {}
        for sec, keys in self.raw.items():
            for k, v in keys.items():
                out[f"{sec}.{k}"] = "" if v is None else v
        for k, v in self.checks.items():
            out[f"check.{k}"] = v
        return out


# ------------------------------------------------------------------ parsing helpers
def _number(text):
    """A plain number or a constant expression such as ``pi/64`` or ``1/32``."""
    try:
        return float(text)
    except ValueError:
        pass
    val = as_scalar_field(str(text).strip(), 1)
    c = getattr(val, "constant_value", None)
    if c is None:
        raise ValueError(text)
    return c


def _float(sec, key, val, positive=False, allow_none=True):
    if val is None:
        if allow_none:
            return None
        raise ConfigError(f"{sec}.{key}", "required")
    try:
        x = _number(val)
    except ValueError:
        raise ConfigError(f"{sec}.{key}", f"not a number: {val!r}") from None
    if not math.isfinite(x):
        raise ConfigError(f"{sec}.{key}", "must be finite")
    if positive and x <= 0:
        raise ConfigError(f"{sec}.{key}", "must be positive")
    return x


def _int(sec, key, val, positive=True):
    if val is None:
        return None
    try:
        x = int(val)
    except ValueError:
        raise ConfigError(f"{sec}.{key}", f"not an integer: {val!r}") from None
    if positive and x <= 0:
        raise ConfigError(f"{sec}.{key}", "must be positive")
    return x


def _bool(sec, key, val):
    v = str(val).strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"{sec}.{key}", f"not a boolean: {val!r}")


def _vec(sec, key, val, dim=None, required=True):
    if val is None:
        if required:
            raise ConfigError(f"{sec}.{key}", "required")
        return None
    try:
        v = np.array([_number(s) for s in str(val).split(",")])
    except ValueError:
        raise ConfigError(f"{sec}.{key}", f"not a comma-separated vector: {val!r}") from None
    if dim is not None and v.size != dim:
        raise ConfigError(f"{sec}.{key}", f"expected {dim} components, got {v.size}")
    return v


def _points(sec, key, val, dim):
    if val is None:
        raise ConfigError(f"{sec}.{key}", "required")
    rows = [r for r in str(val).split(";") if r.strip()]
    return np.stack([_vec(sec, key, r, dim) for r in rows])


def _expr(sec, key, val, dim):
    try:
        return as_scalar_field(val, dim)
    except ExpressionError as exc:
        raise ConfigError(f"{sec}.{key}", str(exc)) from None


def _choice(sec, key, val, options):
    if val not in options:
        raise ConfigError(f"{sec}.{key}", f"must be one of {', '.join(options)}; got {val!r}")
    return val


# ------------------------------------------------------------------ builders
def _build_domain(d):
    shape = d["shape"]
    if shape is None:
        raise ConfigError("domain.shape", "required")
    band = _float("domain", "band", d["band"], positive=True)
    if shape == "interval":
        a = _float("domain", "a", d["a"], allow_none=False)
        b = _float("domain", "b", d["b"], allow_none=False)
        if not a < b:
            raise ConfigError("domain.b", "must exceed domain.a")
        return Interval(a, b, band=band)
    if shape == "box":
        lo = _vec("domain", "lo", d["lo"])
        hi = _vec("domain", "hi", d["hi"], lo.size)
        if np.any(hi <= lo):
            raise ConfigError("domain.hi", "must exceed domain.lo componentwise")
        return Box(lo, hi, band=band)
    if shape == "ball":
        c = _vec("domain", "center", d["center"])
        return Ball(c, _float("domain", "radius", d["radius"], positive=True, allow_none=False), band=band)
    if shape == "polygon":
        v = _points("domain", "vertices", d["vertices"], 2)
        try:
            return ConvexPolygon(v, band=band)
        except ValueError as exc:
            raise ConfigError("domain.vertices", str(exc)) from None
    if shape == "halfspace":
        p = _vec("domain", "point", d["point"])
        n = _vec("domain", "normal", d["normal"], p.size)
        return HalfSpace(p, n, band=band)
    if shape == "implicit":
        dim = _int("domain", "dim", d["dim"])
        if dim is None:
            raise ConfigError("domain.dim", "required for implicit domains")
        lo = _vec("domain", "bounds_lo", d["bounds_lo"], dim)
        hi = _vec("domain", "bounds_hi", d["bounds_hi"], dim)
        if d["phi"] is None:
            raise ConfigError("domain.phi", "required for implicit domains")
        return ImplicitSDF(_expr("domain", "phi", d["phi"], dim), dim, (lo, hi),
                           lipschitz=_float("domain", "lipschitz", d["lipschitz"], positive=True),
                           convex=_bool("domain", "convex", d["convex"]),
                           smooth=_bool("domain", "smooth", d["smooth"]), band=band)
    raise ConfigError("domain.shape",
                      f"unknown shape {shape!r} (interval, box, ball, polygon, halfspace, implicit)")


def _build_field(f, domain):
    dim = domain.dim
    g = _expr("field", "g", f["g"], dim)
    kw = {"L_g": _float("field", "L_g", f["L_g"])}
    if f["growth_c"] is not None:
        kw["growth_c"] = _float("field", "growth_c", f["growth_c"], positive=True)
    if f["g_compact"] is not None:
        kw["g_compact"] = _bool("field", "g_compact", f["g_compact"])
    if f["L_gamma"] is not None:
        kw["L_gamma"] = _float("field", "L_gamma", f["L_gamma"])
    gamma = f["gamma"]
    if gamma == "normal":
        fld = ObliqueField.normal(domain, g=g, **kw)
    elif gamma == "rotational":
        if dim != 2:
            raise ConfigError("field.gamma", "rotational fields are planar")
        fld = ObliqueField.rotational(domain, _float("field", "tangential", f["tangential"]), g=g, **kw)
    else:
        if f["nu"] is None:
            raise ConfigError("field.nu", "required for an expression field")
        try:
            fld = ObliqueField.from_expressions(gamma, g, dim, nu=_float("field", "nu", f["nu"], positive=True),
                                                kind="expression", **kw)
        except ExpressionError as exc:
            raise ConfigError("field.gamma", str(exc)) from None
        if "g_compact" not in kw:
            fld.g_compact = is_zero_field(fld.g)
    if f["nu"] is not None:
        fld.nu = _float("field", "nu", f["nu"], positive=True)
    return fld


def _build_levy(lv, dim):
    measure = _choice("levy", "measure", lv["measure"], ("none", "fractional", "tempered", "compound_poisson"))
    if measure == "none":
        return None
    kw = dict(measure=measure, dim=dim,
              alpha=_float("levy", "alpha", lv["alpha"]),
              c_alpha=_float("levy", "c_alpha", lv["c_alpha"], positive=True),
              tempering=_float("levy", "tempering", lv["tempering"], positive=True),
              support_cells=_int("levy", "support_cells", lv["support_cells"]),
              jump_map=_choice("levy", "jump_map", lv["jump_map"], ("identity", "affine")),
              delta=_float("levy", "delta", lv["delta"], positive=True),
              trunc_radius=_float("levy", "trunc_radius", lv["trunc_radius"], positive=True),
              radial_nodes=_int("levy", "radial_nodes", lv["radial_nodes"]),
              angular_nodes=_int("levy", "angular_nodes", lv["angular_nodes"]),
              tail=_choice("levy", "tail", lv["tail"], ("drop", "fold")),
              delta_safety=_float("levy", "delta_safety", lv["delta_safety"], positive=True),
              moment_correction=_bool("levy", "moment_correction", lv["moment_correction"]))
    if measure == "compound_poisson":
        if lv["density"] is None:
            raise ConfigError("levy.density", "required for a compound Poisson measure")
        kw["density"] = _expr("levy", "density", lv["density"], dim)
        kw["support"] = (_vec("levy", "support_lo", lv["support_lo"], dim),
                         _vec("levy", "support_hi", lv["support_hi"], dim))
    if kw["jump_map"] == "affine":
        if lv["sigma"] is None:
            raise ConfigError("levy.sigma", "required for an affine jump map")
        try:
            kw["sigma"] = as_matrix_field(lv["sigma"], dim)
        except ExpressionError as exc:
            raise ConfigError("levy.sigma", str(exc)) from None
    try:
        return LevyModel(**kw)
    except NonIntegrable as exc:
        raise ValidationError("A4", f"Levy measure is not a Levy measure: {exc}") from None
    except ValueError as exc:
        raise ConfigError("levy", str(exc)) from None


def _record(sec, vals, dim):
    try:
        b = vals["b"] if vals.get("b") is not None else ", ".join(["0"] * dim)
        return Linear(dim, a=_float(sec, "a", vals["a"]), A=vals["A"], b=b, lam=vals["lam"], f=vals["f"])
    except ExpressionError as exc:
        raise ConfigError(sec, str(exc)) from None


def _build_nl(raw, dim):
    F = raw["F"]
    kind = _choice("F", "kind", F["kind"], ("linear", "bellman"))
    lambda0 = _float("F", "lambda0", F["lambda0"], positive=True)
    if kind == "linear":
        recs = [_record("F", F, dim)]
    else:
        n = _int("F", "records", F["records"])
        recs = []
        for k in range(1, n + 1):
            sec = f"F.{k}"
            if sec not in raw:
                raise ConfigError(sec, "missing Bellman record section")
            recs.append(_record(sec, raw[sec], dim))
    if lambda0 is None:
        lams = [getattr(r.lam, "constant_value", None) for r in recs]
        if any(v is None for v in lams):
            raise ConfigError("F.lambda0", "required when lam is not constant")
        lambda0 = min(lams)
    if lambda0 <= 0:
        raise ValidationError("A2", "lambda0 must be positive")
    try:
        return Nonlinearity(recs, lambda0, kind)
    except ValueError as exc:
        raise ConfigError("F", str(exc)) from None


def _build_solver(s):
    rho = s["rho"] if s["rho"] == "auto" else _float("solver", "rho", s["rho"], positive=True)
    try:
        kappas = tuple(float(k) for k in s["kappa_schedule"].split(","))
    except ValueError:
        raise ConfigError("solver.kappa_schedule", "not a comma-separated list of numbers") from None
    try:
        return SolverConfig(bc_mode=_choice("solver", "bc_mode", s["bc_mode"], ("penalized", "direct")),
                            kappa_schedule=kappas,
                            method=_choice("solver", "method", s["method"], ("direct", "explicit")),
                            rho=rho, tol_residual=_float("solver", "tol_residual", s["tol_residual"], positive=True),
                            max_iters=_int("solver", "max_iters", s["max_iters"]),
                            tol_kappa=_float("solver", "tol_kappa", s["tol_kappa"], positive=True),
                            rho_min=_float("solver", "rho_min", s["rho_min"], positive=True),
                            howard_max=_int("solver", "howard_max", s["howard_max"]),
                            check_monotone=_bool("solver", "check_monotone", s["check_monotone"]),
                            flatten=_bool("solver", "flatten", s["flatten"]))
    except ValueError as exc:
        raise ConfigError("solver.kappa_schedule", str(exc)) from None


def _build_mc(m):
    try:
        return JumpProcessConfig(time_step=_float("mc", "time_step", m["time_step"], positive=True),
                                 horizon=_float("mc", "horizon", m["horizon"], positive=True),
                                 n_paths=_int("mc", "n_paths", m["n_paths"]),
                                 rng_seed=_int("mc", "seed", m["seed"], positive=False),
                                 target_accuracy=_float("mc", "target_accuracy", m["target_accuracy"], positive=True),
                                 estimator=_choice("mc", "estimator", m["estimator"], ("discount", "killing")),
                                 chunk=_int("mc", "chunk", m["chunk"]),
                                 delta=_float("mc", "delta", m["delta"], positive=True))
    except ValueError as exc:
        raise ConfigError("mc", str(exc)) from None


# ------------------------------------------------------------------ validation
def _sample_closure(domain, n, seed=0):
    rng = np.random.default_rng(seed)
    lo, hi = domain.bounding_box()
    pts = rng.uniform(lo, hi, size=(8 * n, domain.dim))
    inside = pts[domain.contains(pts)]
    if inside.shape[0] == 0:
        inside = domain.sample_boundary(n, rng)
    return inside[:n]


def validate(cfg):
    """Cross-checks; raises ``ValidationError`` or ``ConfigError``, returns a report dict."""
    dom, fld, levy, nl = cfg.domain, cfg.field, cfg.levy, cfg.nl
    report = {}

    # BC1: gamma.n >= nu on the boundary; corner domains only with gamma = n, g = 0
    chk = check_field(fld, dom)
    report["min_gamma_dot_n"] = chk["min_gamma_dot_n"]
    if not chk["bc1_ok"]:
        raise ValidationError("BC1", f"min gamma.n on the boundary is {chk['min_gamma_dot_n']:.6g} "
                                     f"< nu = {fld.nu:.6g}")
    if not dom.smooth and (fld.kind != "normal" or not fld.g_is_zero):
        raise ValidationError("BC1", "domains with corners admit only gamma = n and g = 0")
    if fld.kind != "normal" and not getattr(dom, "convex", False) and not dom.smooth:
        raise ValidationError("BC1", "oblique fields need a smooth bounded domain")

    # A2 / A4 / A5 on sampled points of the closed domain
    pts = _sample_closure(dom, 64)
    lam_min = min(float(np.min(r.lam(pts))) for r in nl.records)
    report["lambda_min"] = lam_min
    if lam_min < nl.lambda0 - 1e-12:
        raise ValidationError("A2", f"lambda(x) = {lam_min:.6g} falls below lambda0 = {nl.lambda0:.6g}")
    ver = verify_assumptions(nl, pts)
    for tag in ("A2", "A4"):
        report[f"{tag}_margin"] = ver[tag]["margin"]
        if not ver[tag]["pass"]:
            raise ValidationError(tag, f"sampled margin {ver[tag]['margin']:.6g} is negative")
    if not ver["ellipticity_X"]["pass"]:
        raise ValidationError("A2", "F is not degenerate elliptic in the Hessian argument")
    for r in nl.records:
        A = np.asarray(r.A(pts))
        if A.ndim == 3 and np.min(np.linalg.eigvalsh(0.5 * (A + np.swapaxes(A, 1, 2)))) < -1e-12:
            raise ValidationError("A2", "diffusion matrix A(x) is not positive semidefinite")
    f0 = np.stack([np.asarray(r.f(pts), dtype=float) for r in nl.records])
    if not np.all(np.isfinite(f0)):
        raise ValidationError("A5", "F(x, 0, 0, 0, 0) is not finite on the domain")
    report["M_F_sampled"] = float(np.max(np.abs(f0)))

    # BC3: non-compact g needs a finite far first moment
    if levy is not None and nl.uses_nonlocal:
        rep = check_exterior_integrability(levy, fld, dom, delta=levy.delta)
        report["first_moment_tail"] = rep.first_moment_tail
        report["integrability_ok"] = rep.ok
        if not rep.ok:
            raise ValidationError("BC3", rep.message)
        if cfg.h is not None:
            delta = levy.delta if levy.delta is not None else levy.default_delta(cfg.h)
            if delta >= 1.0 or delta > levy.delta_safety * cfg.h:
                raise ConfigError("levy.delta", f"delta = {delta:.6g} must be < 1 and <= "
                                                f"{levy.delta_safety:g} * h")
            report["delta"] = delta
        if cfg.margin is not None and cfg.margin < levy.trunc_radius:
            # landings beyond the box use the closure; reported, not fatal
            report["margin_below_trunc_radius"] = True
    return report


# ------------------------------------------------------------------ entry points
def _read_ini(text, source):
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
    cp.optionxform = str
    try:
        cp.read_string(text, source=source or "<config>")
    except configparser.Error as exc:
        raise ConfigError("<file>", str(exc).splitlines()[0]) from None
    raw = {}
    for sec in cp.sections():
        base = "F" if sec.startswith("F.") else sec
        if base not in SCHEMA:
            raise ConfigError(sec, "unknown section")
        allowed = _RECORD_KEYS if sec.startswith("F.") else SCHEMA[sec]
        for key in cp[sec]:
            if key not in allowed:
                raise ConfigError(f"{sec}.{key}", "unknown key")
        raw[sec] = dict(cp[sec])
    return raw


def parse_config(text, source=None, seed=None, check=True):
    """Build a ``RunConfig`` from INI text; ``seed`` overrides ``mc.seed``."""
    given = _read_ini(text, source)
    raw = {sec: {k: given.get(sec, {}).get(k, v) for k, v in keys.items()} for sec, keys in SCHEMA.items()}
    for sec, vals in given.items():
        if sec.startswith("F."):
            raw[sec] = {k: vals.get(k, SCHEMA["F"][k]) for k in _RECORD_KEYS}
    if seed is not None:
        raw["mc"]["seed"] = str(int(seed))

    domain = _build_domain(raw["domain"])
    dim = domain.dim
    fld = _build_field(raw["field"], domain)
    levy = _build_levy(raw["levy"], dim)
    nl = _build_nl(raw, dim)
    if nl.uses_nonlocal and levy is None:
        raise ConfigError("levy.measure", "F has a nonlocal term (a != 0) but no jump measure is set")
    g = raw["grid"]
    box = None
    if g["box_lo"] is not None or g["box_hi"] is not None:
        box = (_vec("grid", "box_lo", g["box_lo"], dim), _vec("grid", "box_hi", g["box_hi"], dim))
    flow = {"point": None if raw["flow"]["point"] is None else _vec("flow", "point", raw["flow"]["point"], dim),
            "step": _float("flow", "step", raw["flow"]["step"], positive=True),
            "event_tol": _float("flow", "event_tol", raw["flow"]["event_tol"], positive=True),
            "safety": _float("flow", "safety", raw["flow"]["safety"], positive=True),
            "record_path": _bool("flow", "record_path", raw["flow"]["record_path"])}
    sw = raw["sweep"]
    sweep = {"h_list": None, "exact": None}
    if sw["h_list"] is not None:
        try:
            sweep["h_list"] = [_number(s) for s in sw["h_list"].split(",")]
        except (ValueError, ZeroDivisionError):
            raise ConfigError("sweep.h_list", "not a comma-separated list of spacings") from None
    if sw["exact"] is not None:
        sweep["exact"] = _expr("sweep", "exact", sw["exact"], dim)
    out = {"directory": raw["output"]["directory"],
           "precision": _int("output", "precision", raw["output"]["precision"])}
    cfg = RunConfig(raw=raw, domain=domain, field=fld, levy=levy, nl=nl, solver=_build_solver(raw["solver"]),
                    mc=_build_mc(raw["mc"]), h=_float("grid", "h", g["h"], positive=True),
                    margin=_float("grid", "margin", g["margin"], positive=True), box=box,
                    cell_centered=_bool("grid", "cell_centered", g["cell_centered"]), flow=flow,
                    sweep=sweep, output=out, source=source)
    if check:
        try:
            cfg.checks = validate(cfg)
        except DeltaTooLarge as exc:
            raise ConfigError("levy.delta", str(exc)) from None
    return cfg


def load_config(path, seed=None, check=True):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError("<file>", f"cannot read {path}: {exc.strerror}") from None
    return parse_config(text, source=str(path), seed=seed, check=check)

"""Command line front end: ``python -m nlneumann <subcommand> --config run.ini``.

Every CSV starts with ``# key = value`` metadata lines echoing the full
effective configuration, followed by a header row and data written with
``output.precision`` significant digits (17 by default, enough to
round-trip doubles). No timings or host details enter the files, so the
same configuration and seed reproduce them byte for byte.

Exit codes: 0 success, 2 configuration error, 3 validation error,
4 no convergence.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys

import numpy as np

from .config import _points, load_config, validate
from .errors import ConfigError, NoConvergence, NoHit, StepTooLarge, StiffPenalty, ValidationError
from .flow import integrate_flow
from .grid import CLASS_NAMES
from .levy import check_exterior_integrability
from .mc_oracle import simulate_value
from .solver import observed_orders, solve

__all__ = ["main", "run", "build_parser"]

EXIT_OK, EXIT_CONFIG, EXIT_VALIDATION, EXIT_NOCONV = 0, 2, 3, 4
SUBCOMMANDS = ("solve", "flow", "validate", "sweep", "mc-validate")


def _flatten(prefix, obj, out):
    if isinstance(obj, dict):
        for k, v in obj.items():
            if str(k).rsplit(".", 1)[-1].startswith("t_"):
                continue  # timings would break reproducibility
            _flatten(f"{prefix}.{k}" if prefix else str(k), v, out)
    else:
        out[prefix] = obj


def _fmt(v, prec):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return format(float(v), f".{prec}g")
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (list, tuple, np.ndarray)):
        return "[" + ", ".join(_fmt(x, prec) for x in np.asarray(v, dtype=object).ravel()) + "]"
    return "" if v is None else str(v).replace("\n", " ")


class _Writer:
    def __init__(self, cfg, out_dir, extra=None):
        self.cfg = cfg
        self.dir = out_dir
        self.prec = cfg.output["precision"]
        os.makedirs(out_dir, exist_ok=True)
        meta = dict(cfg.effective())
        if extra:
            _flatten("", extra, meta)
        self.meta = meta

    def write(self, name, header, rows, extra=None):
        meta = dict(self.meta)
        if extra:
            _flatten("", extra, meta)
        path = os.path.join(self.dir, name)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            for k in sorted(meta):
                fh.write(f"# {k} = {_fmt(meta[k], self.prec)}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for r in rows:
                w.writerow([_fmt(v, self.prec) for v in r])
        return path


def _coord_names(dim):
    return [f"x{d + 1}" for d in range(dim)]


# ---------------------------------------------------------------- subcommands
def cmd_solve(cfg, out, writer):
    problem = cfg.problem()
    sol = solve(problem, cfg.solver)
    g = sol.grid
    rows = ([*g.points[k], CLASS_NAMES[int(g.node_class[k])], sol.values[k]] for k in range(g.n))
    extra = {"solution": sol.metadata, "result.final_residual": sol.final_residual,
             "result.M_F": sol.M_F}
    writer.write("solution.csv", [*_coord_names(cfg.dim), "class", "value"], rows, extra)
    hist = [tuple(h) for h in sol.residual_history]
    writer.write("history.csv", ["iter", "residual", "kappa"], hist, extra)
    if sol.kappa_trace:
        writer.write("kappa_trace.csv", ["kappa", "residual", "delta"],
                     [(t["kappa"], t["residual"], t.get("delta")) for t in sol.kappa_trace], extra)
    mask = sol.closure_mask
    print(f"solve: mode={sol.mode} nodes={g.n} closure_nodes={int(mask.sum())} "
          f"final_residual={sol.final_residual:.3e}")
    print(f"  u on closure: min={sol.values[mask].min():.10g} max={sol.values[mask].max():.10g}")
    if cfg.field.g_is_zero:
        b, s, ok = sol.sup_bound(cfg.nl.lambda0)
        print(f"  sup bound M_F/lambda0={b:.10g} sup|u|={s:.10g} ok={ok}")
    for t in sol.kappa_trace:
        print(f"  kappa={t['kappa']:.6g} delta={t.get('delta', float('nan')):.3e}")
    return EXIT_OK


def cmd_flow(cfg, out, writer):
    y = cfg.flow["point"]
    if y is None:
        raise ConfigError("flow.point", "required for the flow subcommand")
    res = integrate_flow(cfg.field, cfg.domain, y, step=cfg.flow["step"], event_tol=cfg.flow["event_tol"],
                         safety=cfg.flow["safety"], record_path=cfg.flow["record_path"])
    print(f"flow: tau={res.tau:.17g}")
    print("  endpoint=" + ", ".join(f"{v:.17g}" for v in res.endpoint))
    print(f"  g_integral={res.g_integral:.17g}")
    extra = {"result.tau": res.tau, "result.endpoint": res.endpoint, "result.g_integral": res.g_integral}
    if res.path is not None:
        writer.write("path.csv", ["t", *_coord_names(cfg.dim)], ([t, *x] for t, x in res.path), extra)
    return EXIT_OK


def cmd_validate(cfg, out, writer):
    rows = []
    status = EXIT_OK
    try:
        checks = validate(cfg)
        rows += [(k, v) for k, v in sorted(checks.items())]
        rows.append(("status", "ok"))
    except ValidationError as exc:
        rows.append(("status", f"failed {exc.tag}"))
        rows.append(("reason", exc.reason))
        status = EXIT_VALIDATION
        print(f"validate: {exc}", file=sys.stderr)
    if cfg.levy is not None:
        rep = check_exterior_integrability(cfg.levy, cfg.field, cfg.domain, delta=cfg.levy.delta)
        rows = [(f"integrability.{k}", v) for k, v in rep.as_rows()] + rows
    writer.write("integrability.csv", ["quantity", "value"], rows)
    if status == EXIT_OK:
        print("validate: all checks passed")
    return status


def _sweep_error(cfg, sol, exact, prev):
    mask = sol.closure_mask
    pts = sol.grid.points[mask]
    if exact is not None:
        return float(np.max(np.abs(sol.values[mask] - exact(pts))))
    if prev is None:
        return None
    return float(np.max(np.abs(sol.values[mask] - prev.at(pts))))


def cmd_sweep(cfg, out, writer):
    hs = cfg.sweep["h_list"]
    if not hs or len(hs) < 2:
        raise ConfigError("sweep.h_list", "needs at least two spacings")
    exact = cfg.sweep["exact"]
    errs, used, prev = [], [], None
    for h in hs:
        sol = solve(cfg.problem(h), cfg.solver)
        e = _sweep_error(cfg, sol, exact, prev)
        if e is not None:
            errs.append(e)
            used.append(float(np.min(sol.grid.h)))
        prev = sol
    if len(errs) < 2:
        raise ConfigError("sweep.h_list", "needs at least three spacings without sweep.exact")
    pair, slope = observed_orders(used, errs)
    rows = [(used[0], errs[0], None)] + [(used[k + 1], errs[k + 1], pair[k]) for k in range(len(pair))]
    writer.write("orders.csv", ["h", "error", "order"], rows,
                 {"result.slope": slope, "result.reference": "exact" if exact is not None else "successive"})
    for h, e, o in rows:
        print(f"sweep: h={h:.6g} error={e:.6e}" + ("" if o is None else f" order={o:.4f}"))
    print(f"  least-squares slope={slope:.4f}")
    return EXIT_OK


def cmd_mc_validate(cfg, out, writer):
    pts_txt = cfg.raw["mc"]["points"]
    if pts_txt is None:
        raise ConfigError("mc.points", "required for mc-validate")
    pts = _points("mc", "points", pts_txt, cfg.dim)
    if not cfg.nl.is_linear:
        raise ConfigError("F.kind", "mc-validate needs a linear F")
    sol = solve(cfg.problem(), cfg.solver)
    rows = []
    for x in pts:
        est, se = simulate_value(cfg.nl, cfg.levy, cfg.field, cfg.domain, x, cfg.mc)
        uh = float(sol.at(x)[0])
        z = (uh - est) / se if se > 0 else (0.0 if abs(uh - est) == 0 else float("inf"))
        rows.append([*x, est, se, uh, z])
        print(f"mc-validate: x={np.array2string(x, precision=6)} estimate={est:.8g} se={se:.3g} "
              f"solver={uh:.8g} z={z:.3f}")
    writer.write("mc.csv", [*_coord_names(cfg.dim), "estimate", "std_error", "solver_value", "z_score"], rows,
                 {"solution": sol.metadata})
    return EXIT_OK


_DISPATCH = {"solve": cmd_solve, "flow": cmd_flow, "validate": cmd_validate, "sweep": cmd_sweep,
             "mc-validate": cmd_mc_validate}


def run(subcommand, cfg, out_dir=None, threads=None):
    """Run one subcommand on a loaded config; returns the exit code."""
    out = out_dir or cfg.output["directory"]
    extra = {"run.subcommand": subcommand, "run.threads": threads if threads is not None else 1}
    writer = _Writer(cfg, out, extra)
    try:
        return _DISPATCH[subcommand](cfg, out, writer)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValidationError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except NoHit as exc:
        print(f"validation error [BC2]: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (NoConvergence, StiffPenalty, StepTooLarge) as exc:
        print(f"no convergence: {exc}", file=sys.stderr)
        return EXIT_NOCONV


def build_parser():
    p = argparse.ArgumentParser(prog="nlneumann",
                                description="Nonlocal equations with exterior Neumann/oblique conditions.")
    p.add_argument("subcommand", choices=SUBCOMMANDS)
    p.add_argument("--config", required=True, metavar="PATH", help="run configuration (INI)")
    p.add_argument("--out", metavar="DIR", help="output directory (default: output.directory)")
    p.add_argument("--seed", type=int, metavar="N", help="overrides mc.seed")
    p.add_argument("--threads", type=int, metavar="N",
                   help="caps native thread pools (recorded in the metadata)")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.threads is not None:
        if args.threads < 1:
            print("config error: --threads must be positive", file=sys.stderr)
            return EXIT_CONFIG
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ[var] = str(args.threads)
    try:
        cfg = load_config(args.config, seed=args.seed, check=args.subcommand != "validate")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValidationError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    return run(args.subcommand, cfg, args.out, args.threads)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())

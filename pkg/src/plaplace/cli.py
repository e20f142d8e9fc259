"""Batch entry point: configuration, subcommands, report emission.

Subcommands: interval, solve, eigen, verify, study.  Every run writes
its artifacts (JSON plus CSV or binary fields) into one output
directory, chosen by --out, the PLAPLACE_OUT environment variable, or
the working directory, in that order.  Emitted JSON carries a
"schema" marker naming the versioned schema file shipped under
plaplace/schema/, and is byte-identical across reruns of the same
configuration apart from the "timestamp" field.

Exit codes: 0 ok, 1 a check or drift failed, 2 the solver did not
converge, 3 the configuration was rejected.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import datetime
import json
import math
import os
import re
import sys
from pathlib import Path

import numpy as np

from .calculus import (
    ScalarField,
    read_field_binary,
    read_field_csv,
    write_field_binary,
    write_field_csv,
)
from .eigen import p_eigenpair
from .errors import (
    ConfigError,
    FormatError,
    NonConvergenceError,
    ParameterError,
    UnsupportedOperationError,
)
from .mesh import Circle, Domain, PeriodicGrid, WeightedGraph, build_torus, load_graph
from .plap import RegParams
from .solve import (
    SolveRecord,
    SolverConfig,
    continuation,
    poisson_solve,
    variational_solve,
    weak_residual,
)
from .sources import SOURCES, builtin_source
from .spectral import geometry_constants
from .verify import algebra_suite, drift_report, estimates_suite, grid_family

__all__ = ["main", "parse_domain", "load_config"]

_OUT_ENV = "PLAPLACE_OUT"


# ---------------------------------------------------------------- inputs

_DOMAIN_RE = re.compile(r"(torus|circle)\s*\((.*)\)\s*$")


def _num(text: str, what: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise ConfigError(f"{what}: expected a number, got {text!r}") from None


def _intnum(text: str, what: str) -> int:
    try:
        return int(text)
    except ValueError:
        raise ConfigError(f"{what}: expected an integer, got {text!r}") from None


def parse_domain(spec: str) -> Domain:
    """Build a domain from 'torus(d,n,L[,K,N])', 'circle(n,L[,K,N])' or a graph file."""
    text = spec.strip()
    m = _DOMAIN_RE.fullmatch(text)
    if m is None:
        path = Path(text)
        if not path.is_file():
            raise ConfigError(
                f"domain spec {spec!r} is neither torus(...), circle(...) nor a readable file"
            )
        return load_graph(path)
    kind, arg_text = m.group(1), m.group(2)
    args = [a.strip() for a in arg_text.split(",")] if arg_text.strip() else []
    lo = 3 if kind == "torus" else 2
    if not lo <= len(args) <= lo + 2:
        raise ConfigError(
            f"{kind} takes {lo} to {lo + 2} arguments "
            f"({'d,n,L' if kind == 'torus' else 'n,L'}[,K,N]), got {len(args)}"
        )
    try:
        if kind == "torus":
            d = _intnum(args[0], "torus d")
            n = _intnum(args[1], "torus n")
            L = _num(args[2], "torus L")
            K = _num(args[3], "torus K") if len(args) > 3 else 0.0
            N = _num(args[4], "torus N") if len(args) > 4 else 2.0
            return build_torus(d, n, L, K=K, N=N)
        n = _intnum(args[0], "circle n")
        L = _num(args[1], "circle L")
        K = _num(args[2], "circle K") if len(args) > 2 else 0.0
        N = _num(args[3], "circle N") if len(args) > 3 else 2.0
        return Circle(n, L, K=K, N=N)
    except ParameterError as exc:
        raise ConfigError(f"bad domain spec {spec!r}: {exc}") from exc


_SOLVER_KEYS = {
    "inner_tol": float,
    "outer_tol": float,
    "poisson_tol": float,
    "max_inner": int,
    "max_outer": int,
    "damping": float,
}


def load_config(path, p: float) -> SolverConfig:
    """SolverConfig from an INI file; unknown sections or keys are errors."""
    rp = RegParams(p=p)
    if path is None:
        return SolverConfig(rp=rp)
    parser = configparser.ConfigParser(interpolation=None)
    try:
        with open(path, encoding="utf-8") as handle:
            parser.read_file(handle)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except configparser.Error as exc:
        raise ConfigError(f"malformed config {path}: {exc}") from exc
    kwargs: dict = {}
    for section in parser.sections():
        if section == "solver":
            for key, raw in parser.items("solver"):
                if key not in _SOLVER_KEYS:
                    raise ConfigError(f"{path}: unknown key solver.{key}")
                cast = _SOLVER_KEYS[key]
                try:
                    kwargs[key] = cast(raw)
                except ValueError:
                    raise ConfigError(
                        f"{path}: solver.{key} expects {cast.__name__}, got {raw!r}"
                    ) from None
        elif section == "schedule":
            for key, raw in parser.items("schedule"):
                if key not in ("eps", "m"):
                    raise ConfigError(f"{path}: unknown key schedule.{key}")
                try:
                    values = tuple(float(x) for x in raw.split(","))
                except ValueError:
                    raise ConfigError(
                        f"{path}: schedule.{key} expects comma-separated numbers, got {raw!r}"
                    ) from None
                kwargs["eps_schedule" if key == "eps" else "M_schedule"] = values
        else:
            raise ConfigError(f"{path}: unknown section [{section}]")
    try:
        return SolverConfig(rp=rp, **kwargs)
    except ParameterError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def _load_rhs(domain: Domain, spec: str) -> tuple[ScalarField, str]:
    if spec in SOURCES:
        return builtin_source(domain, spec), spec
    path = Path(spec)
    if not path.is_file():
        known = ", ".join(sorted(SOURCES))
        raise ConfigError(f"--rhs {spec!r} is neither a builtin ({known}) nor a file")
    reader = read_field_binary if path.suffix == ".bin" else read_field_csv
    field = reader(domain, path)
    if not isinstance(field, ScalarField):
        raise ConfigError(f"--rhs {spec}: expected a scalar field, got {type(field).__name__}")
    return field, str(path)


# ---------------------------------------------------------------- outputs

def _jsonify(obj):
    """JSON-safe copy: numpy scalars to python, non-finite floats to null."""
    if isinstance(obj, dict):
        return {str(k): _jsonify(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonify(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonify(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        val = float(obj)
        # adding 0.0 folds negative zero into plain zero
        return val + 0.0 if math.isfinite(val) else None
    return obj


def _out_dir(args) -> Path:
    root = args.out or os.environ.get(_OUT_ENV) or "."
    path = Path(root)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _emit_json(payload: dict, path: Path) -> dict:
    payload = dict(payload)
    payload["timestamp"] = datetime.datetime.now(datetime.timezone.utc).isoformat(
        timespec="seconds"
    )
    body = json.dumps(_jsonify(payload), sort_keys=True, indent=2) + "\n"
    path.write_text(body, encoding="utf-8")
    return payload


def _emit_field(field, outdir: Path, stem: str, fmt: str) -> str:
    if fmt == "binary":
        path = outdir / f"{stem}.bin"
        write_field_binary(field, path)
    else:
        path = outdir / f"{stem}.csv"
        write_field_csv(field, path)
    return path.name


def _report_rows(reports) -> list[dict]:
    rows = []
    for rep in reports:
        ctx = rep.context
        rows.append(
            {
                "name": rep.name,
                "passed": rep.passed,
                "lhs": rep.lhs,
                "rhs": rep.rhs,
                "fitted_constant": rep.fitted_constant,
                "p": ctx.get("p", ""),
                "n": ctx.get("n", ""),
            }
        )
    return rows


def _write_report_csv(reports, path: Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.DictWriter(
            handle, fieldnames=["name", "passed", "lhs", "rhs", "fitted_constant", "p", "n"]
        )
        writer.writeheader()
        writer.writerows(_report_rows(reports))


# ------------------------------------------------------------ subcommands

def _check_p(p: float) -> float:
    if not p > 1.0:
        raise ConfigError(f"--p must exceed 1, got {p}")
    return p


def _cmd_interval(args) -> int:
    dom = parse_domain(args.domain)
    gc = geometry_constants(dom, tol=args.tol)
    lo, hi = gc.interval
    outdir = _out_dir(args)
    payload = _emit_json(
        {
            "schema": "plaplace/interval/v1",
            "domain": args.domain,
            "lambda1": gc.lambda1,
            "delta_X": gc.delta_X,
            "K_minus": gc.K_minus,
            "N": gc.N,
            "p_lo": lo,
            "p_hi": hi,
        },
        outdir / "interval.json",
    )
    print(json.dumps(_jsonify(payload), sort_keys=True, indent=2))
    return 0


def _solve_dispatch(domain: Domain, f: ScalarField, p: float, cfg: SolverConfig) -> SolveRecord:
    """Route one solve: linear fast path at p=2, variational on graphs,
    the continuation scheme on grids."""
    if p == 2.0:
        u = poisson_solve(f, tol=cfg.poisson_tol)
        return SolveRecord(
            u=u,
            residual=weak_residual(u, f, RegParams(p=2.0)),
            inner_ratios=[],
            iterations={"outer": 1, "inner": 0},
            eps_final=0.0,
            M_final=math.inf,
            method="poisson",
        )
    if isinstance(domain, WeightedGraph):
        u = variational_solve(f, p, tol=cfg.outer_tol)
        return SolveRecord(
            u=u,
            residual=weak_residual(u, f, RegParams(p=p)),
            inner_ratios=[],
            iterations={"outer": 1, "inner": 0},
            eps_final=0.0,
            M_final=math.inf,
            method="variational",
        )
    rec = continuation(f, cfg)
    rec.method = "continuation"
    return rec


def _cmd_solve(args) -> int:
    p = _check_p(args.p)
    dom = parse_domain(args.domain)
    f, rhs_name = _load_rhs(dom, args.rhs)
    cfg = load_config(args.config, p)
    rec = _solve_dispatch(dom, f, p, cfg)
    outdir = _out_dir(args)
    solution_file = _emit_field(rec.u, outdir, "solution", args.format)
    _emit_json(
        {
            "schema": "plaplace/solve/v1",
            "domain": args.domain,
            "rhs": rhs_name,
            "p": p,
            "method": rec.method,
            "residual": rec.residual,
            "iterations": rec.iterations,
            "eps_final": rec.eps_final,
            "M_final": rec.M_final,
            "tau": rec.tau,
            "inner_ratios": rec.inner_ratios,
            "energy_trace": rec.energy_trace,
            "stage_drifts": rec.stage_drifts,
            "solution_file": solution_file,
            "format": args.format,
        },
        outdir / "solve.json",
    )
    print(f"solve p={p} method={rec.method} residual={rec.residual:.3e} -> {outdir / 'solve.json'}")
    return 0


def _cmd_eigen(args) -> int:
    p = _check_p(args.p)
    dom = parse_domain(args.domain)
    rec = p_eigenpair(
        dom, p, tol=args.tol, max_iter=args.max_iter, restarts=args.restarts, seed=args.seed
    )
    outdir = _out_dir(args)
    solution_file = _emit_field(rec.u, outdir, "eigenfunction", args.format)
    _emit_json(
        {
            "schema": "plaplace/eigen/v1",
            "domain": args.domain,
            "p": p,
            "lam": rec.lam,
            "residual": rec.residual,
            "lipschitz_estimate": rec.lipschitz_estimate,
            "iterations": rec.iterations,
            "restarts": args.restarts,
            "seed": args.seed,
            "tol": args.tol,
            "solution_file": solution_file,
            "format": args.format,
        },
        outdir / "eigen.json",
    )
    print(f"eigen p={p} lam={rec.lam:.10g} residual={rec.residual:.3e} -> {outdir / 'eigen.json'}")
    return 0


def _parse_ps(text: str) -> tuple[float, ...]:
    try:
        ps = tuple(float(x) for x in text.split(","))
    except ValueError:
        raise ConfigError(f"--p expects comma-separated numbers, got {text!r}") from None
    if not ps or any(not x > 1.0 for x in ps):
        raise ConfigError(f"every p must exceed 1, got {text!r}")
    return ps


def _cmd_verify(args) -> int:
    reports = []
    if args.suite in ("algebra", "all"):
        reports.extend(algebra_suite(seed=args.seed, samples=args.samples))
    if args.suite in ("estimates", "all"):
        reports.extend(
            estimates_suite(seed=args.seed, base_n=args.base_n, ps=_parse_ps(args.p))
        )
    outdir = _out_dir(args)
    _emit_json(
        {
            "schema": "plaplace/reports/v1",
            "suite": args.suite,
            "seed": args.seed,
            "reports": [rep.to_dict() for rep in reports],
        },
        outdir / "reports.json",
    )
    _write_report_csv(reports, outdir / "reports.csv")
    failed = [rep for rep in reports if not rep.passed]
    for rep in reports:
        print(f"{'PASS' if rep.passed else 'FAIL'}  {rep.name}  fitted={rep.fitted_constant:.6g}")
    print(f"{len(reports) - len(failed)}/{len(reports)} checks passed -> {outdir / 'reports.json'}")
    return 1 if failed else 0


def _rebuild(dom: PeriodicGrid, n: int) -> PeriodicGrid:
    if dom.d == 1:
        return Circle(n, dom.L, K=dom.K, N=dom.N)
    return build_torus(dom.d, n, dom.L, K=dom.K, N=dom.N)


def _cmd_study(args) -> int:
    p = _check_p(args.p)
    dom = parse_domain(args.domain)
    if not isinstance(dom, PeriodicGrid):
        raise ConfigError("study needs a refinable grid domain (torus or circle)")
    resolutions = [dom.n, 2 * dom.n, 4 * dom.n]
    families: dict[str, list] = {}
    reports = []
    for n in resolutions:
        for rep in grid_family(_rebuild(dom, n), p, seed=args.seed):
            families.setdefault(rep.name, []).append(rep)
            reports.append(rep)
    drifts = [drift_report(key, fam) for key, fam in families.items()]
    outdir = _out_dir(args)
    _emit_json(
        {
            "schema": "plaplace/study/v1",
            "domain": args.domain,
            "p": p,
            "seed": args.seed,
            "resolutions": resolutions,
            "reports": [rep.to_dict() for rep in reports],
            "drifts": [rep.to_dict() for rep in drifts],
        },
        outdir / "study.json",
    )
    _write_report_csv(reports + drifts, outdir / "study.csv")
    bad = [rep for rep in reports + drifts if not rep.passed]
    for rep in drifts:
        print(f"{'PASS' if rep.passed else 'FAIL'}  {rep.name}  drift={rep.fitted_constant:.4g}")
    print(f"study p={p} over n={resolutions} -> {outdir / 'study.json'}")
    return 1 if bad else 0


# ------------------------------------------------------------------ main

class _Parser(argparse.ArgumentParser):
    """argparse that reports usage problems as config errors (exit 3)."""

    def error(self, message):
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="plaplace", description=__doc__.split("\n\n")[0])
    common = _Parser(add_help=False)
    common.add_argument("--out", help=f"output directory (default ${_OUT_ENV} or .)")
    sub = parser.add_subparsers(dest="subcommand", required=True, parser_class=_Parser)

    pi = sub.add_parser("interval", parents=[common],
                        help="spectral gap, delta_X and the exponent interval")
    pi.add_argument("--domain", required=True)
    pi.add_argument("--tol", type=float, default=1e-10)
    pi.set_defaults(func=_cmd_interval)

    ps = sub.add_parser("solve", parents=[common], help="solve div(|grad u|^(p-2) grad u) = f")
    ps.add_argument("--p", type=float, required=True)
    ps.add_argument("--domain", required=True)
    ps.add_argument("--rhs", required=True,
                    help=f"builtin ({', '.join(sorted(SOURCES))}) or a field file")
    ps.add_argument("--config", help="INI solver configuration")
    ps.add_argument("--format", choices=("csv", "binary"), default="csv")
    ps.set_defaults(func=_cmd_solve)

    pe = sub.add_parser("eigen", parents=[common], help="first nontrivial p-eigenpair")
    pe.add_argument("--p", type=float, required=True)
    pe.add_argument("--domain", required=True)
    pe.add_argument("--tol", type=float, default=1e-8)
    pe.add_argument("--max-iter", type=int, default=5000)
    pe.add_argument("--restarts", type=int, default=4)
    pe.add_argument("--seed", type=int, default=0)
    pe.add_argument("--format", choices=("csv", "binary"), default="csv")
    pe.set_defaults(func=_cmd_eigen)

    pv = sub.add_parser("verify", parents=[common], help="run the inequality check suites")
    pv.add_argument("--suite", choices=("algebra", "estimates", "all"), required=True)
    pv.add_argument("--p", default="1.5,2,2.5,3",
                    help="comma-separated exponents for the estimates suite")
    pv.add_argument("--seed", type=int, default=0)
    pv.add_argument("--samples", type=int, default=10**6)
    pv.add_argument("--base-n", type=int, default=16)
    pv.set_defaults(func=_cmd_verify)

    pt = sub.add_parser("study", parents=[common],
                        help="fitted-constant drift over the refinement family n, 2n, 4n")
    pt.add_argument("--p", type=float, required=True)
    pt.add_argument("--domain", required=True)
    pt.add_argument("--seed", type=int, default=0)
    pt.set_defaults(func=_cmd_study)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except (ConfigError, FormatError, ParameterError, UnsupportedOperationError, OSError) as exc:
        print(f"plaplace: config error: {exc}", file=sys.stderr)
        return 3
    except NonConvergenceError as exc:
        print(f"plaplace: solver failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

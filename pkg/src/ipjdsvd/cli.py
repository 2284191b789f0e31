"""Command-line front end.

Exit codes: 0 when every requested triplet converged (or an audit found no
violations), 2 on partial convergence or audit violations, 1 on usage or
input errors.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import json
import logging
import math
import sys

import numpy as np

from . import __version__
from .audit import AUDIT_NAMES, run_audit
from .jdsvd import RunReport, SolverConfig, solve
from .operator import AUDIT_CAP
from .sparse import MatrixMarketError, SparseMatrix, load_matrix_market

SCHEMA_VERSION = 1
RECHECK_TOL = 1e-12

log = logging.getLogger("ipjdsvd")


def build_parser():
    p = argparse.ArgumentParser(
        prog="ipjdsvd",
        description="Singular triplets nearest a target by (inner-preconditioned) Jacobi-Davidson.",
    )
    p.add_argument("--matrix", help="Matrix Market file")
    p.add_argument("--tau", type=float, default=0.0, help="target (default 0)")
    p.add_argument("--num", type=int, default=1, help="number of triplets")
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--kmax", type=int, default=30)
    p.add_argument("--kmin", type=int, default=3)
    p.add_argument("--pretol1", type=float, default=0.05)
    p.add_argument("--pretol2", type=float, default=0.01)
    p.add_argument("--eps-inner", type=float, default=1e-4)
    p.add_argument("--mode", choices=["jdsvd", "ipjdsvd"], default="ipjdsvd")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--maxit-outer", type=int, default=None)
    p.add_argument("--report", help="write the JSON report here ('-' for stdout)")
    p.add_argument("--csv", help="write a per-triplet CSV summary here")
    p.add_argument("--emit-vectors", action="store_true", help="include singular vectors in the report")
    p.add_argument("--no-timestamp", action="store_true",
                   help="omit timestamp and wall time so reports are byte-identical across runs")
    p.add_argument("--audit", choices=AUDIT_NAMES, help="run a convergence audit instead of a solve")
    p.add_argument("--trials", type=int, default=50)
    p.add_argument("--audit-cap", type=int, default=AUDIT_CAP)
    p.add_argument("-v", "--verbose", action="store_true")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    return p


def recheck_residuals(a: SparseMatrix, values, u, v):
    """Recompute per-triplet residual norms and their aggregate from the factors."""
    ad = a.toarray()
    ru = ad @ v - u * values
    rv = ad.T @ u - v * values
    per = np.sqrt(np.sum(ru * ru, axis=0) + np.sum(rv * rv, axis=0))
    return per, float(math.sqrt(float(per @ per)))


def _finite(x):
    x = float(x)
    if not math.isfinite(x):
        raise ValueError("non-finite value in report")
    return x


def solve_document(report: RunReport, a: SparseMatrix, emit_vectors=False, timestamp=True):
    cfg = report.config
    per, agg = recheck_residuals(a, report.values, report.u, report.v)
    scale = report.norme
    doc = {
        "schema_version": SCHEMA_VERSION,
        "kind": "solve",
        "config": {
            "shape": list(report.shape),
            "tau": cfg.tau,
            "num": cfg.ell,
            "tol": cfg.tol,
            "kmax": cfg.k_max,
            "kmin": cfg.k_min,
            "pretol1": cfg.pretol1,
            "pretol2": cfg.pretol2,
            "eps_inner": cfg.eps_inner,
            "mode": cfg.mode.value,
            "seed": cfg.seed,
            "maxit_outer": cfg.outer_limit,
        },
        "status": report.status.value,
        "converged": int(len(report.values)),
        "values": [_finite(x) for x in report.values],
        "residual_norms": [_finite(x) for x in report.residual_norms],
        "aggregate_residual": _finite(report.aggregate_residual),
        "norm_estimate": _finite(scale),
        "recheck": {
            "aggregate_residual": _finite(agg),
            "difference": _finite(abs(agg - report.aggregate_residual)),
            "passed": bool(abs(agg - report.aggregate_residual) <= RECHECK_TOL * max(scale, 1.0)),
        },
        "outer_iterations": report.outer_iterations,
        "mvs": report.mvs,
        "mv_breakdown": dict(report.mv_breakdown),
        "trace": [
            {
                "outer": t["outer"],
                "k": t["k"],
                "theta1": _finite(t["theta1"]),
                "rnorm1": _finite(t["rnorm1"]),
                "m_tilde": t["m_tilde"],
                "inner_iterations": t["inner_iterations"],
            }
            for t in report.trace
        ],
    }
    if timestamp:
        doc["wall_time"] = _finite(report.wall_time)
        doc["timestamp"] = _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
    if emit_vectors:
        doc["u"] = [[float(x) for x in row] for row in report.u.T]
        doc["v"] = [[float(x) for x in row] for row in report.v.T]
    return doc


def _write_json(doc, path):
    text = json.dumps(doc, indent=2, ensure_ascii=False, allow_nan=False) + "\n"
    if path == "-":
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)


def _write_csv(report: RunReport, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["index", "value", "residual_norm"])
        for i, (val, res) in enumerate(zip(report.values, report.residual_norms), start=1):
            w.writerow([i, repr(float(val)), repr(float(res))])


def _print_table(report: RunReport, out):
    print(f"mode {report.config.mode.value}  status {report.status.value}  "
          f"I_out {report.outer_iterations}  MVs {report.mvs}  time {report.wall_time:.3f}s", file=out)
    print(f"{'#':>3}  {'value':>24}  {'residual':>10}", file=out)
    for i, (val, res) in enumerate(zip(report.values, report.residual_norms), start=1):
        print(f"{i:>3}  {val:>24.16e}  {res:>10.3e}", file=out)


def _run_audit(args, out):
    doc = {"schema_version": SCHEMA_VERSION, "kind": "audit"}
    doc.update(run_audit(args.audit, trials=args.trials, seed=args.seed, cap=args.audit_cap))
    if not args.no_timestamp:
        doc["timestamp"] = _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
    for b in doc["bounds"]:
        print(f"{b['theorem']:>6}  trials {b['trials']:>4}  skipped {b['skipped']:>3}  "
              f"violations {b['violations']:>3}  worst margin {b['worst_margin']:.3e}", file=out)
    if doc["perturbation"] is not None:
        p = doc["perturbation"]
        print(f"reduced-matrix perturbation  trials {p['trials']}  failures {p['failures']}  "
              f"worst deviation/delta {p['worst_ratio']:.3f}", file=out)
    if doc["equivalence"] is not None:
        worst = max(r["history_gap"] for r in doc["equivalence"])
        print(f"equivalence  instances {len(doc['equivalence'])}  worst history gap {worst:.3e}", file=out)
    if doc["rtail"] is not None:
        for r in doc["rtail"]:
            print(f"rtail  ||r|| {r['r_norm']:.3e}  ||r_tail|| {r['tail_norm']:.3e}  "
                  f"ratio {r['ratio']:.3e}", file=out)
    if args.report:
        _write_json(doc, args.report)
    return 0 if doc["violations"] == 0 else 2


def run(argv=None, out=None):
    out = sys.stdout if out is None else out
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 1
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.report == "-":
        out = sys.stderr
    try:
        if args.audit:
            return _run_audit(args, out)
        if not args.matrix:
            parser.print_usage(sys.stderr)
            print("ipjdsvd: error: --matrix is required unless --audit is given", file=sys.stderr)
            return 1
        a = load_matrix_market(args.matrix)
        cfg = SolverConfig(
            tau=args.tau, ell=args.num, tol=args.tol, k_max=args.kmax, k_min=args.kmin,
            eps_inner=args.eps_inner, pretol1=args.pretol1, pretol2=args.pretol2,
            mode=args.mode, seed=args.seed, maxit_outer=args.maxit_outer,
            audit_cap=args.audit_cap,
        )
        report = solve(a, cfg)
    except (OSError, MatrixMarketError, ValueError) as exc:
        print(f"ipjdsvd: error: {exc}", file=sys.stderr)
        return 1
    _print_table(report, out)
    if args.report:
        doc = solve_document(report, a, args.emit_vectors, timestamp=not args.no_timestamp)
        _write_json(doc, args.report)
    if args.csv:
        _write_csv(report, args.csv)
    return 0 if report.converged else 2


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()

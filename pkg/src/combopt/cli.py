"""Command-line front end.

Subcommands: omega, solve, certify, table, verify, bounds, validate.
JSON is the canonical output; CSV is a projection of the same records.
Exit codes: 0 success, 1 malformed input, 2 validation failure,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import csv
import io
import json
import sys
import time

import numpy as np

from . import formulas, perfop, sdp, superchannels
from .perfop import TaskSpec
from .tensor import load_operator, operator_from_dict, operator_to_dict

EXIT_OK = 0
EXIT_MALFORMED = 1
EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def _parse_ks(text: str) -> list[int]:
    if ".." in text:
        lo, hi = text.split("..")
        return list(range(int(lo), int(hi) + 1))
    return [int(x) for x in text.split(",")]


def _emit(payload: dict, args) -> None:
    if not getattr(args, "no_timestamp", False):
        payload["timestamp"] = time.strftime("%Y-%m-%dT%H:%M:%S")
    if getattr(args, "format", "json") == "csv" and "rows" in payload:
        text = _rows_to_csv(payload["rows"])
    else:
        text = json.dumps(payload, indent=1, sort_keys=True)
    if getattr(args, "out", None):
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)


def _rows_to_csv(rows: list[dict]) -> str:
    if not rows:
        return ""
    keys = sorted({k for row in rows for k in row})
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=keys)
    writer.writeheader()
    for row in rows:
        writer.writerow({k: row.get(k, "") for k in keys})
    return buf.getvalue().rstrip("\n")


def _load_json(path: str) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise CliError(f"cannot read {path}: {exc}", EXIT_MALFORMED)


def _load_operator_file(path: str):
    try:
        return load_operator(path)
    except (OSError, json.JSONDecodeError, KeyError, ValueError) as exc:
        raise CliError(f"malformed operator file {path}: {exc}", EXIT_MALFORMED)


def _task(args) -> TaskSpec:
    return TaskSpec(args.task, args.d, args.k)


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_omega(args) -> int:
    task = _task(args)
    om = perfop.omega_build(task)
    meta = {
        "task": task.f,
        "d": task.d,
        "k": task.k,
        "trace": float(np.trace(om.mat).real),
        "min_eigenvalue": float(np.linalg.eigvalsh(om.mat).min()),
    }
    if args.out:
        from .tensor import save_operator

        save_operator(om.omega, args.out)
        meta["file"] = args.out
        sidecar = dict(meta)
        with open(args.out + ".meta.json", "w") as fh:
            json.dump(sidecar, fh, indent=1, sort_keys=True)
        args.out = None  # metadata report goes to stdout
        _emit({"command": "omega", "result": meta}, args)
    else:
        _emit({"command": "omega", "result": meta, "operator": operator_to_dict(om.omega)}, args)
    return EXIT_OK


def cmd_solve(args) -> int:
    task = _task(args)
    report = sdp.optimize_task(
        task,
        args.cone,
        tol=args.tol,
        precision=args.precision,
        reduce=not args.full_space,
        run_certify=False,
    )
    sol = report.solution
    payload = {
        "command": "solve",
        "config": {
            "task": task.f, "d": task.d, "k": task.k, "cone": args.cone,
            "tol": args.tol, "reduced": not args.full_space, "seed": args.seed,
        },
        "result": report.to_dict(),
        "S": operator_to_dict(sol.superchannel),
        "Y": {
            "labels": [{"name": l.name, "dim": l.dim} for l in sol.problem.cone.labels],
            "re": sol.Y_omega.reshape(-1).tolist(),
            "im": [0.0] * sol.Y_omega.size,
        },
    }
    _emit(payload, args)
    if sol.status != "optimal":
        return EXIT_NUMERICAL
    if not report.validation.ok:
        return EXIT_VALIDATION
    return EXIT_OK


def cmd_certify(args) -> int:
    data = _load_json(args.infile)
    try:
        cfg = data["config"]
        task = TaskSpec(cfg["task"], int(cfg["d"]), int(cfg["k"]))
        cone_kind = cfg["cone"]
        S = operator_from_dict(data["S"])
        Y = operator_from_dict(data["Y"])
    except (KeyError, TypeError, ValueError) as exc:
        raise CliError(f"malformed solution file: {exc}", EXIT_MALFORMED)
    omega = perfop.omega_build(task)
    cone = superchannels.cone_for(cone_kind, task.d, task.k)
    problem = sdp.assemble(omega, cone, reduce=bool(cfg.get("reduced", True)))
    fidelity = perfop.average_fidelity(S, omega)
    shim = sdp.SdpSolution(
        X=S.mat.real, y=np.zeros(problem.m), Z=S.mat.real,
        primal_obj=0.0, dual_obj=0.0, gap=0.0, primal_residual=0.0, dual_residual=0.0,
        iterations=0, status="loaded", fidelity=fidelity, fidelity_bound=fidelity,
        S_full=S.mat.real, Y_omega=Y.mat.real, problem=problem, solve_seconds=0.0,
    )
    try:
        cert = sdp.certify(problem, shim, precision=args.precision)
    except ArithmeticError as exc:
        raise CliError(f"certification failed: {exc}", EXIT_NUMERICAL)
    payload = {
        "command": "certify",
        "config": {"in": args.infile, "precision": args.precision},
        "result": cert.to_dict(),
    }
    _emit(payload, args)
    return EXIT_OK if cert.precision_met else EXIT_NUMERICAL


def _table_cell(f: str, d: int, k: int, cone_kind: str, tol: float, precision: float) -> dict:
    row = {"task": f, "d": d, "k": k, "cone": cone_kind}
    try:
        task = TaskSpec(f, d, k)
        report = sdp.optimize_task(task, cone_kind, tol=tol, precision=precision)
        row["fidelity"] = report.fidelity
        row["visibility"] = report.visibility
        row["status"] = report.status
        if report.interval is not None:
            row["certified_lower"] = float(report.interval.lower)
            row["certified_upper"] = float(report.interval.upper)
            row["certified_width"] = report.interval.width
        if report.analytic is not None:
            row["analytic"] = report.analytic["value"]
            row["analytic_match"] = report.analytic["matches"]
    except Exception as exc:  # per-cell failures recorded, run continues
        row["status"] = "error"
        row["error"] = str(exc)
    return row


def cmd_table(args) -> int:
    tasks = args.task.split(",")
    ds = [int(x) for x in str(args.d).split(",")]
    ks = _parse_ks(args.k)
    cones = args.cone.split(",")
    cells = [
        (f, d, k, cone)
        for f in tasks
        for d in ds
        for k in ks
        for cone in cones
        if not (cone == "general" and k > 2)
    ]
    rows = []
    if args.jobs > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=args.jobs) as pool:
            futs = {
                pool.submit(_table_cell, f, d, k, cone, args.tol, args.precision): (f, d, k, cone)
                for (f, d, k, cone) in cells
            }
            done = {futs[fut]: fut.result() for fut in concurrent.futures.as_completed(futs)}
        rows = [done[cell] for cell in cells]
    else:
        rows = [_table_cell(*cell, args.tol, args.precision) for cell in cells]
    # flag cone gaps per (task, d, k)
    for f in tasks:
        for d in ds:
            for k in ks:
                sub = {r["cone"]: r for r in rows if (r["task"], r["d"], r["k"]) == (f, d, k)}
                if "sequential" in sub and "general" in sub:
                    lo = sub["general"].get("certified_lower")
                    hi = sub["sequential"].get("certified_upper")
                    if lo is not None and hi is not None:
                        sub["general"]["beats_sequential_certified"] = bool(lo > hi)
    payload = {"command": "table", "rows": rows}
    _emit(payload, args)
    if any(r.get("status") == "error" for r in rows):
        return EXIT_NUMERICAL
    return EXIT_OK


def cmd_verify(args) -> int:
    S = _load_operator_file(args.infile)
    task = _task(args)
    cone = superchannels.cone_for(args.cone, task.d, task.k)
    report = superchannels.validate(S, cone)
    if not report.ok:
        payload = {"command": "verify", "validation": report.to_dict()}
        _emit(payload, args)
        return EXIT_VALIDATION
    omega = perfop.omega_build(task)
    fbar = perfop.average_fidelity(S, omega)
    rng = np.random.default_rng(args.seed)
    vals = []
    from .groups import haar_unitary

    for _ in range(args.samples):
        vals.append(perfop.fidelity_at_unitary(S, haar_unitary(task.d, rng), task))
    vals = np.asarray(vals)
    twirled = superchannels.twirl(S, task)
    payload = {
        "command": "verify",
        "config": {"task": task.f, "d": task.d, "k": task.k, "samples": args.samples, "seed": args.seed},
        "validation": report.to_dict(),
        "result": {
            "average_fidelity": fbar,
            "mc_mean": float(vals.mean()),
            "mc_min": float(vals.min()),
            "mc_stderr": float(vals.std(ddof=1) / np.sqrt(len(vals))) if len(vals) > 1 else 0.0,
            "mc_variance": float(vals.var()),
            "twirl_fidelity_shift": abs(perfop.average_fidelity(twirled, omega) - fbar),
        },
    }
    _emit(payload, args)
    return EXIT_OK


def cmd_bounds(args) -> int:
    ks = _parse_ks(args.k)
    records = formulas.bounds_table(args.task, args.d, ks)
    rows = []
    for r in records:
        row = {
            "task": r.task, "d": r.d, "k": r.k, "cone": r.cone,
            "kind": r.kind, "value": r.value, "source": r.source,
        }
        if r.exact is not None:
            row["exact"] = f"{r.exact.numerator}/{r.exact.denominator}"
        rows.append(row)
    _emit({"command": "bounds", "rows": rows}, args)
    return EXIT_OK


def cmd_validate(args) -> int:
    S = _load_operator_file(args.infile)
    d = S.label("P").dim
    k = sum(1 for nm in S.names if nm.startswith("I"))
    if args.d is not None and args.d != d:
        raise CliError(f"operator has d = {d}, not {args.d}", EXIT_MALFORMED)
    if args.k is not None and args.k != k:
        raise CliError(f"operator has k = {k}, not {args.k}", EXIT_MALFORMED)
    cone = superchannels.cone_for(args.cone, d, k)
    report = superchannels.validate(S, cone, tol=args.tol)
    _emit({"command": "validate", "result": report.to_dict()}, args)
    return EXIT_OK if report.ok else EXIT_VALIDATION


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="combopt",
        description="Optimize and certify superchannels transforming uses of an unknown unitary",
    )
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, task=True, cone=False):
        if task:
            sp.add_argument("--task", required=True, choices=perfop.TASKS)
            sp.add_argument("--d", type=int, default=2)
            sp.add_argument("--k", type=int, default=1)
        if cone:
            sp.add_argument("--cone", default="parallel", choices=superchannels.CONE_KINDS)
        sp.add_argument("--out", default=None)
        sp.add_argument("--format", default="json", choices=["json", "csv"])
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--no-timestamp", action="store_true")

    sp = sub.add_parser("omega", help="emit a performance operator file")
    common(sp)
    sp.set_defaults(fn=cmd_omega)

    sp = sub.add_parser("solve", help="optimize a task over a cone")
    common(sp, cone=True)
    sp.add_argument("--tol", type=float, default=1e-9)
    sp.add_argument("--precision", type=float, default=1e-4)
    sp.add_argument("--full-space", action="store_true", help="disable symmetry reduction")
    sp.set_defaults(fn=cmd_solve)

    sp = sub.add_parser("certify", help="exact rational bounds from a solution file")
    sp.add_argument("--in", dest="infile", required=True)
    sp.add_argument("--precision", type=float, default=1e-4)
    sp.add_argument("--out", default=None)
    sp.add_argument("--format", default="json", choices=["json"])
    sp.add_argument("--no-timestamp", action="store_true")
    sp.set_defaults(fn=cmd_certify)

    sp = sub.add_parser("table", help="grid of optima with certificates")
    sp.add_argument("--task", default="transpose,invert", help="comma-separated tasks")
    sp.add_argument("--d", default="2", help="comma-separated dimensions")
    sp.add_argument("--k", default="1,2", help="comma list or lo..hi range")
    sp.add_argument("--cone", default="parallel,sequential,general", help="comma-separated cones")
    sp.add_argument("--tol", type=float, default=1e-9)
    sp.add_argument("--precision", type=float, default=1e-4)
    sp.add_argument("--jobs", type=int, default=1)
    sp.add_argument("--out", default=None)
    sp.add_argument("--format", default="json", choices=["json", "csv"])
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--no-timestamp", action="store_true")
    sp.set_defaults(fn=cmd_table)

    sp = sub.add_parser("verify", help="Monte-Carlo check of a superchannel file")
    sp.add_argument("--in", dest="infile", required=True)
    common(sp, cone=True)
    sp.add_argument("--samples", type=int, default=200)
    sp.set_defaults(fn=cmd_verify)

    sp = sub.add_parser("bounds", help="closed-form bounds table")
    sp.add_argument("--task", required=True, choices=["transpose", "invert", "conjugate"])
    sp.add_argument("--d", type=int, default=2)
    sp.add_argument("--k", default="1..5", help="comma list or lo..hi range")
    sp.add_argument("--out", default=None)
    sp.add_argument("--format", default="json", choices=["json", "csv"])
    sp.add_argument("--no-timestamp", action="store_true")
    sp.set_defaults(fn=cmd_bounds)

    sp = sub.add_parser("validate", help="residual report for a superchannel file")
    sp.add_argument("--in", dest="infile", required=True)
    sp.add_argument("--cone", default="parallel", choices=superchannels.CONE_KINDS)
    sp.add_argument("--d", type=int, default=None)
    sp.add_argument("--k", type=int, default=None)
    sp.add_argument("--tol", type=float, default=1e-8)
    sp.add_argument("--out", default=None)
    sp.add_argument("--format", default="json", choices=["json"])
    sp.add_argument("--no-timestamp", action="store_true")
    sp.set_defaults(fn=cmd_validate)

    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except (ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MALFORMED


if __name__ == "__main__":
    sys.exit(main())

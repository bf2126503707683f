"""Command-line entry point: ``cqpbb {generate,solve,bench,oracle}``.

Exit codes: 0 on success (including runs stopped by an iteration or time
limit), 1 on usage or input errors, 2 when a solve fails.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import math
import re
import statistics
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict
from typing import Optional, Sequence

import numpy as np

from . import apps, bb
from .conic import OPTIMAL, SearchBox, solve_relaxation
from .io import (RESULT_FORMAT, VERSION, Instance, _cx_vec, finite_or_none, read_instance, spec_to_dict,
                 write_json)
from .model import evaluate_objective
from .sdpsolver import SolverConfig

EXIT_OK, EXIT_USAGE, EXIT_SOLVE = 0, 1, 2
DEFAULT_EPSILON = 1e-4

_ANGLE = re.compile(r"^\s*(?:(?P<num>[0-9.eE+-]+)\s*\*?\s*)?pi\s*(?:/\s*(?P<den>[0-9.eE+-]+))?\s*$")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def parse_angle(text: str) -> float:
    """Radians from a literal such as ``0.5``, ``pi/6`` or ``2*pi/3``."""
    m = _ANGLE.match(text)
    if m:
        num = float(m.group("num")) if m.group("num") else 1.0
        den = float(m.group("den")) if m.group("den") else 1.0
        return num * math.pi / den
    try:
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an angle: {text!r}") from None


def _ints(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(t) for t in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


# ---------------------------------------------------------------------------
# records

def _fingerprint(epsilon: float, cfg: SolverConfig, fix_phase: bool = False) -> dict:
    solver = {k: v for k, v in asdict(cfg).items() if k != "trace"}
    blob = json.dumps({"epsilon": epsilon, "solver": solver, "fix_phase": fix_phase}, sort_keys=True)
    return {"epsilon": epsilon, "fix_phase": fix_phase, "solver": solver,
            "fingerprint": hashlib.sha256(blob.encode()).hexdigest()[:16]}


def _instance_block(inst: Instance) -> dict:
    return {"id": inst.identity(), "kind": inst.kind,
            "spec": spec_to_dict(inst.spec) if inst.spec is not None else None}


def bb_record(inst: Instance, rep: bb.RunReport, epsilon: float, cfg: SolverConfig, verify: bool,
              fix_phase: bool = False) -> dict:
    show = inst.display
    rec = {
        "format": RESULT_FORMAT,
        "version": VERSION,
        "instance": _instance_block(inst),
        "mode": "bb",
        "status": rep.status,
        "sense": inst.sense,
        "ObjVal": show(rep.objective),
        "LBdE": finite_or_none(show(rep.lbd_e)),
        "LBdC": finite_or_none(show(rep.lbd_c)),
        "CldGap": rep.cld_gap,
        "iterations": rep.iterations,
        "nodes": rep.nodes,
        "K": rep.theoretical_k,
        "F": {"objective": rep.objective, "lower": finite_or_none(rep.lower), "lbd_e": finite_or_none(rep.lbd_e),
              "lbd_c": finite_or_none(rep.lbd_c), "cld_gap_raw": rep.cld_gap_raw, "offset": inst.offset},
        "times": {"total": rep.times["total"], "TimeE": rep.times["ecsdr"], "TimeC": rep.times["csdr"]},
        "x": _cx_vec(rep.x),
        "solver_audit": {k: finite_or_none(v) for k, v in rep.solver_audit.items()},
        "verify": None,
        "config": _fingerprint(epsilon, cfg, fix_phase),
    }
    if verify:
        rec["verify"] = {"checks": len(rep.verify_log), "violations": rep.violations}
    return rec


def relaxation_record(inst: Instance, kind: str, epsilon: float, cfg: SolverConfig) -> dict:
    p = inst.problem
    t0 = time.perf_counter()
    # Same refinement as the root bounds of a branch-and-bound run, falling back to cfg.
    sol = solve_relaxation(p, None, kind, cfg.loosened(0.1))
    if sol.status != OPTIMAL:
        sol = solve_relaxation(p, None, kind, cfg)
    elapsed = time.perf_counter() - t0
    rec = {
        "format": RESULT_FORMAT,
        "version": VERSION,
        "instance": _instance_block(inst),
        "mode": kind,
        "status": sol.status,
        "sense": inst.sense,
        "ObjVal": None,
        "LBdE": None,
        "LBdC": None,
        "CldGap": None,
        "F": {"bound": finite_or_none(sol.value), "offset": inst.offset},
        "times": {"total": elapsed, "TimeE" if kind == "ecsdr" else "TimeC": sol.solve_time},
        "x": None,
        "config": _fingerprint(epsilon, cfg),
    }
    if sol.status == OPTIMAL:
        box = SearchBox.of(p)
        r = np.clip(sol.r, [b.lo for b in box.bounds], [b.hi for b in box.bounds])
        xs = bb.scale(sol.x, r, box.args)
        rec["ObjVal"] = inst.display(evaluate_objective(p, xs))
        rec["LBdE" if kind == "ecsdr" else "LBdC"] = inst.display(sol.value)
        rec["x"] = _cx_vec(xs)
    return rec


# ---------------------------------------------------------------------------
# commands

def cmd_generate(args) -> int:
    if args.kind == "mimo":
        if args.mod < 2:
            raise UsageError("--mod must be at least 2")
        if args.m < args.n:
            raise UsageError("--m must be at least --n")
        spec = apps.MimoSpec(args.m, args.n, args.mod, args.snr, args.seed)
    elif args.kind == "radar":
        spec = apps.RadarSpec(n=args.n, rho=args.rho, fdTr=args.fdtr, delta_angle=args.delta, seed=args.seed)
    else:
        power = tuple(args.power) if args.power else None
        spec = apps.VbSpec(args.m, args.n, power, args.seed)
    inst = Instance.generate(args.kind, spec)
    write_json(args.out, inst.to_dict())
    return EXIT_OK


def cmd_solve(args) -> int:
    inst = read_instance(args.input)
    cfg = SolverConfig()
    if args.relaxation == "bb":
        limits = bb.Limits(args.max_iter, args.time_limit)
        rep = bb.run(inst.problem, args.epsilon, limits, verify=args.verify, solver=cfg, fix_phase=args.fix_phase)
        rec = bb_record(inst, rep, args.epsilon, cfg, args.verify, args.fix_phase)
    else:
        rec = relaxation_record(inst, args.relaxation, args.epsilon, cfg)
        if rec["status"] != OPTIMAL:
            write_json(args.out, rec)
            return EXIT_SOLVE
    write_json(args.out, rec)
    return EXIT_OK


def cmd_oracle(args) -> int:
    inst = read_instance(args.input)
    try:
        gt = apps.brute_force(inst.problem)
    except ValueError as exc:
        size = apps.enumeration_size(inst.problem)
        raise UsageError(f"{exc} (enumeration size {size if size else 'unbounded'})") from None
    write_json(args.out, {
        "format": "cqpbb-oracle",
        "version": VERSION,
        "instance": _instance_block(inst),
        "points": gt.points,
        "value": gt.value,
        "ObjVal": inst.display(gt.value),
        "minimizer": _cx_vec(gt.minimizer),
    })
    return EXIT_OK


BENCH_DEFAULTS = {
    "mimo": {"shape": [(10, 10, 4), (15, 10, 4)], "snr": [5.0, 15.0, 25.0]},
    "radar": {"delta": [math.pi / 6, math.pi / 3]},
    "vb": {"shape": [(5, 5), (10, 5)]},
}


def bench_cells(args) -> list[dict]:
    cells = []
    if args.suite == "mimo":
        shapes = args.shape or BENCH_DEFAULTS["mimo"]["shape"]
        for sh in shapes:
            if len(sh) != 3:
                raise UsageError("mimo --shape takes m,n,M")
            for snr in args.snr or BENCH_DEFAULTS["mimo"]["snr"]:
                cells.append({"m": sh[0], "n": sh[1], "M": sh[2], "snr_db": snr})
    elif args.suite == "radar":
        for d in args.delta or BENCH_DEFAULTS["radar"]["delta"]:
            cells.append({"delta_angle": d})
    else:
        for sh in args.shape or BENCH_DEFAULTS["vb"]["shape"]:
            if len(sh) != 2:
                raise UsageError("vb --shape takes m,n")
            cells.append({"m": sh[0], "n": sh[1]})
    return cells


def _bench_one(job) -> dict:
    suite, cell, seed, epsilon, max_iter, time_limit, fix_phase = job
    if suite == "mimo":
        spec = apps.MimoSpec(seed=seed, **cell)
    elif suite == "radar":
        spec = apps.RadarSpec(seed=seed, **cell)
    else:
        spec = apps.VbSpec(seed=seed, **cell)
    inst = Instance.generate(suite, spec)
    cfg = SolverConfig()
    try:
        rep = bb.run(inst.problem, epsilon, bb.Limits(max_iter, time_limit), solver=cfg, fix_phase=fix_phase)
    except Exception as exc:  # flagged in the table, not dropped
        return {"seed": seed, "failed": True, "error": str(exc)}
    rec = bb_record(inst, rep, epsilon, cfg, False, fix_phase)
    return {"seed": seed, "failed": rep.status != bb.EPSILON_OPTIMAL, "ObjVal": rec["ObjVal"], "LBdE": rec["LBdE"],
            "LBdC": rec["LBdC"], "CldGap": rec["CldGap"], "Iter": rep.iterations, "Time": rep.times["total"],
            "TimeE": rep.times["ecsdr"], "TimeC": rep.times["csdr"], "status": rep.status}


COLUMNS = ("ObjVal", "LBdE", "LBdC", "CldGap", "Iter", "Time", "TimeE", "TimeC")


def cmd_bench(args) -> int:
    if args.reps < 0:
        raise UsageError("--reps must be nonnegative")
    cells = bench_cells(args)
    jobs = [(args.suite, cell, args.seed + r, args.epsilon, args.max_iter, args.time_limit, args.fix_phase)
            for cell in cells for r in range(args.reps)]
    if args.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(args.jobs) as pool:
            results = list(pool.map(_bench_one, jobs))
    else:
        results = [_bench_one(j) for j in jobs]
    table = []
    for ci, cell in enumerate(cells):
        runs = results[ci * args.reps:(ci + 1) * args.reps]
        ok = [r for r in runs if "ObjVal" in r]
        row = {"cell": cell, "reps": len(runs), "failed": sum(bool(r["failed"]) for r in runs)}
        for col in COLUMNS:
            vals = [r[col] for r in ok if r.get(col) is not None]
            row[col] = statistics.fmean(vals) if vals else None
        row["runs"] = runs
        table.append(row)
    write_json(args.out, {"format": "cqpbb-bench", "version": VERSION, "suite": args.suite, "reps": args.reps,
                          "epsilon": args.epsilon, "cells": table})
    if args.out not in (None, "-"):
        sys.stdout.write(render_table(table))
    return EXIT_OK


def render_table(table: Sequence[dict]) -> str:
    head = ("cell", "ObjVal", "LBdE", "LBdC", "CldGap", "# Iter", "Time", "TimeE", "TimeC", "failed")
    lines = []
    for row in table:
        cell = ",".join(f"{v:g}" if isinstance(v, float) else str(v) for v in row["cell"].values())
        fmt = lambda v, spec: "-" if v is None else format(v, spec)
        lines.append((f"({cell})", fmt(row["ObjVal"], ".3f"), fmt(row["LBdE"], ".3f"), fmt(row["LBdC"], ".3f"),
                      "-" if row["CldGap"] is None else f"{row['CldGap']:.1f} %", fmt(row["Iter"], ".1f"),
                      fmt(row["Time"], ".2f"), fmt(row["TimeE"], ".3f"), fmt(row["TimeC"], ".3f"), str(row["failed"])))
    widths = [max(len(h), *(len(l[i]) for l in lines)) if lines else len(h) for i, h in enumerate(head)]
    out = ["  ".join(h.rjust(w) for h, w in zip(head, widths))]
    out += ["  ".join(v.rjust(w) for v, w in zip(l, widths)) for l in lines]
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="cqpbb", description="Global solver for complex QPs with modulus and argument constraints.")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", help="write a seeded instance file")
    gk = g.add_subparsers(dest="kind", required=True, parser_class=_Parser)
    gm = gk.add_parser("mimo")
    gm.add_argument("--m", type=int, required=True)
    gm.add_argument("--n", type=int, required=True)
    gm.add_argument("--mod", type=int, default=4)
    gm.add_argument("--snr", type=float, default=15.0)
    gr = gk.add_parser("radar")
    gr.add_argument("--n", type=int, default=7)
    gr.add_argument("--rho", type=float, default=None)
    gr.add_argument("--fdtr", type=float, default=0.15)
    gr.add_argument("--delta", type=parse_angle, default=math.pi / 6, help="half-width of each argument interval")
    gv = gk.add_parser("vb")
    gv.add_argument("--m", type=int, required=True)
    gv.add_argument("--n", type=int, required=True)
    gv.add_argument("--power", type=float, nargs="+", default=None)
    for p in (gm, gr, gv):
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", default="-")
    g.set_defaults(func=cmd_generate)

    s = sub.add_parser("solve", help="solve an instance")
    s.add_argument("--in", dest="input", required=True)
    s.add_argument("--epsilon", type=float, default=DEFAULT_EPSILON)
    s.add_argument("--relaxation", choices=("csdr", "ecsdr", "bb"), default="bb")
    s.add_argument("--max-iter", type=int, default=None)
    s.add_argument("--time-limit", type=float, default=None)
    s.add_argument("--verify", action="store_true")
    s.add_argument("--fix-phase", action="store_true",
                   help="pin arg(x_0) = 0 on rotation-invariant instances (c = 0, full-circle arguments)")
    s.add_argument("--out", default="-")
    s.set_defaults(func=cmd_solve)

    b = sub.add_parser("bench", help="run a seeded benchmark grid")
    b.add_argument("--suite", choices=("mimo", "radar", "vb"), required=True)
    b.add_argument("--reps", type=int, default=5)
    b.add_argument("--seed", type=int, default=0, help="seed of the first replicate")
    b.add_argument("--shape", type=_ints, action="append", help="m,n,M for mimo or m,n for vb (repeatable)")
    b.add_argument("--snr", type=float, action="append")
    b.add_argument("--delta", type=parse_angle, action="append")
    b.add_argument("--epsilon", type=float, default=DEFAULT_EPSILON)
    b.add_argument("--max-iter", type=int, default=None)
    b.add_argument("--time-limit", type=float, default=None)
    b.add_argument("--fix-phase", action="store_true")
    b.add_argument("--jobs", type=int, default=1)
    b.add_argument("--out", default="-")
    b.set_defaults(func=cmd_bench)

    o = sub.add_parser("oracle", help="exhaustive optimum of a discrete instance")
    o.add_argument("--in", dest="input", required=True)
    o.add_argument("--out", default="-")
    o.set_defaults(func=cmd_oracle)
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    if getattr(args, "epsilon", 1.0) is not None and getattr(args, "epsilon", 1.0) <= 0:
        print("cqpbb: error: --epsilon must be positive", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"cqpbb: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, ValueError, KeyError, json.JSONDecodeError) as exc:
        print(f"cqpbb: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (RuntimeError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"cqpbb: solve failed: {exc}", file=sys.stderr)
        return EXIT_SOLVE


if __name__ == "__main__":
    sys.exit(main())

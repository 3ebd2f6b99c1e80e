"""Benchmark harness: instance files, experiment grids, CSV tables and the CLI."""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import os
import sys
import time
import traceback
from concurrent.futures import ThreadPoolExecutor
from typing import Optional, Sequence

import jsonschema
import numpy as np

from .baselines import solve_nlp_bnb, solve_oa
from .blmo import region_from_dict
from .objective import objective_from_dict
from .problems import (ProblemInstance, make_box_quadratic, make_logistic_regression, make_poisson_regression,
                       make_portfolio, make_sparse_regression, make_tcmp)
from .runlog import RunLog, relative_gap
from .tree import SolverConfig, solve

CSV_COLUMNS = ["instance", "solver", "seed", "status", "primal", "dual", "rel_gap", "nodes", "lmo_calls",
               "wall_seconds"]
DEFAULT_BUCKETS = (0.0, 10.0, 300.0, 600.0, 1200.0)
SOLVERS = ("hullfw", "oa", "nlp-bnb")

INSTANCE_SCHEMA = {
    "type": "object",
    "required": ["dimension", "objective", "region", "integer_indices", "lower", "upper"],
    "properties": {
        "dimension": {"type": "integer", "minimum": 1},
        "objective": {
            "type": "object",
            "required": ["kind", "params"],
            "properties": {
                "kind": {"enum": ["portfolio", "sparse_reg", "poisson", "logistic", "tcmp", "custom_quadratic"]},
                "params": {"type": "object"},
            },
        },
        "region": {"type": "object", "required": ["kind"]},
        "integer_indices": {"type": "array", "items": {"type": "integer", "minimum": 0}},
        "lower": {"type": "array", "items": {"type": "number"}},
        "upper": {"type": "array", "items": {"type": "number"}},
        "name": {"type": "string"},
    },
}

GRID_SCHEMA = {
    "type": "object",
    "required": ["instances", "solvers"],
    "additionalProperties": False,
    "properties": {
        "name": {"type": "string"},
        "time_limit": {"type": "number", "exclusiveMinimum": 0},
        "instances": {
            "type": "array",
            "items": {
                "type": "object",
                "oneOf": [
                    {"required": ["family"], "properties": {
                        "family": {"enum": ["portfolio", "sparse_reg", "poisson", "logistic", "tcmp", "box_quadratic"]},
                        "params": {"type": "object"},
                        "seeds": {"type": "array", "items": {"type": "integer"}, "minItems": 1},
                    }, "additionalProperties": False},
                    {"required": ["file"], "properties": {"file": {"type": "string"}},
                     "additionalProperties": False},
                ],
            },
        },
        "solvers": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["solver"],
                "additionalProperties": False,
                "properties": {
                    "solver": {"enum": list(SOLVERS)},
                    "label": {"type": "string"},
                    "config": {"type": "object"},
                    "tolerance": {"type": "number", "exclusiveMinimum": 0},
                },
            },
        },
    },
}


class GridSpecError(ValueError):
    """The grid specification file is malformed."""


# -- instances --------------------------------------------------------------------

FAMILIES = {
    "portfolio": make_portfolio,
    "sparse_reg": make_sparse_regression,
    "poisson": make_poisson_regression,
    "logistic": make_logistic_regression,
    "tcmp": make_tcmp,
    "box_quadratic": make_box_quadratic,
}


def make_instance(family: str, params: dict, seed: int) -> ProblemInstance:
    if family not in FAMILIES:
        raise ValueError(f"unknown family {family!r}")
    return FAMILIES[family](**params, seed=seed)


def instance_to_dict(inst: ProblemInstance) -> dict:
    region = inst.region
    return {
        "name": inst.name,
        "dimension": inst.dimension,
        "objective": inst.objective.to_dict(),
        "region": region.to_dict(),
        "integer_indices": list(inst.integer_indices),
        "lower": region.lower.tolist(),
        "upper": region.upper.tolist(),
    }


def instance_from_dict(data: dict) -> ProblemInstance:
    jsonschema.validate(data, INSTANCE_SCHEMA)
    n = data["dimension"]
    if len(data["lower"]) != n or len(data["upper"]) != n:
        raise ValueError("bound arrays must have one entry per variable")
    objective = objective_from_dict(data["objective"])
    region = region_from_dict(data["region"], np.asarray(data["lower"], dtype=float),
                              np.asarray(data["upper"], dtype=float), data["integer_indices"])
    family = data["objective"]["kind"]
    return ProblemInstance(objective, region, data.get("name", "instance"), family)


def save_instance(inst: ProblemInstance, path: str) -> None:
    with open(path, "w") as fh:
        json.dump(instance_to_dict(inst), fh)


def load_instance(path: str) -> ProblemInstance:
    with open(path) as fh:
        return instance_from_dict(json.load(fh))


# -- single runs ------------------------------------------------------------------

def run_solver(inst: ProblemInstance, solver: str = "hullfw", config: Optional[dict] = None,
               time_limit: Optional[float] = None, tolerance: float = 1e-6):
    """Run one solver and return its :class:`SolveOutcome`."""
    if solver == "hullfw":
        cfg = SolverConfig.from_dict(config or {})
        if time_limit is not None:
            cfg.time_limit = time_limit
        return solve(inst, cfg)
    if solver == "oa":
        return solve_oa(inst, tolerance, time_limit=time_limit)
    if solver == "nlp-bnb":
        return solve_nlp_bnb(inst, tolerance, time_limit=time_limit)
    raise ValueError(f"unknown solver {solver!r}")


def outcome_row(instance: str, solver: str, seed, outcome, wall: float) -> dict:
    return {
        "instance": instance, "solver": solver, "seed": seed, "status": outcome.status.value,
        "primal": outcome.primal, "dual": outcome.dual, "rel_gap": relative_gap(outcome.primal, outcome.dual),
        "nodes": outcome.nodes_processed, "lmo_calls": outcome.total_lmo_calls, "wall_seconds": wall,
    }


# -- grids ------------------------------------------------------------------------

def load_grid_spec(path: str) -> dict:
    try:
        with open(path) as fh:
            spec = json.load(fh)
    except json.JSONDecodeError as exc:
        raise GridSpecError(f"{path}: invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    try:
        jsonschema.validate(spec, GRID_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise GridSpecError(f"{path}: field {where}: {exc.message}") from exc
    return spec


def _canonical(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def config_hash(cell: dict) -> str:
    return hashlib.sha256(_canonical(cell).encode()).hexdigest()[:16]


def expand_grid(spec: dict, base_dir: str = ".") -> list[dict]:
    """One cell per (instance, seed, solver entry)."""
    cells = []
    time_limit = spec.get("time_limit")
    for inst_spec in spec["instances"]:
        if "file" in inst_spec:
            path = inst_spec["file"]
            if not os.path.isabs(path):
                path = os.path.join(base_dir, path)
            sources = [({"file": os.path.abspath(path)}, None)]
        else:
            seeds = inst_spec.get("seeds", [0])
            sources = [({"family": inst_spec["family"], "params": inst_spec.get("params", {})}, s) for s in seeds]
        for source, seed in sources:
            for solver in spec["solvers"]:
                cell = {"instance": source, "seed": seed, "solver": solver["solver"],
                        "label": solver.get("label", solver["solver"]), "config": solver.get("config", {}),
                        "tolerance": solver.get("tolerance", 1e-6), "time_limit": time_limit}
                cell["hash"] = config_hash(cell)
                cells.append(cell)
    return cells


def _build(cell: dict) -> ProblemInstance:
    src = cell["instance"]
    if "file" in src:
        return load_instance(src["file"])
    return make_instance(src["family"], src["params"], cell["seed"])


def run_cell(cell: dict, out_dir: str) -> str:
    """Run one grid cell and write its RunLog; failures are logged, not raised."""
    path = os.path.join(out_dir, "runs", cell["hash"] + ".json")
    header = {k: cell[k] for k in ("instance", "seed", "solver", "label", "config", "tolerance", "time_limit", "hash")}
    t0 = time.monotonic()
    try:
        inst = _build(cell)
        outcome = run_solver(inst, cell["solver"], cell["config"], cell["time_limit"], cell["tolerance"])
        log = outcome.log
        log.header.update(header)
        log.header["instance_name"] = inst.name
        log.summary["wall_seconds"] = time.monotonic() - t0
    except Exception as exc:  # recorded in the grid, never fatal
        log = RunLog(dict(header))
        log.header["instance_name"] = cell["instance"].get("family", cell["instance"].get("file"))
        log.event("error", message=str(exc), traceback=traceback.format_exc())
        log.finish(status="Error", primal=math.inf, dual=-math.inf, nodes=0, lmo_calls=0,
                   wall_seconds=time.monotonic() - t0)
    log.save(path)
    return path


def row_from_log(log: RunLog) -> dict:
    s, h = log.summary, log.header
    return {
        "instance": h.get("instance_name", h.get("instance")), "solver": h.get("label", h.get("solver")),
        "seed": h.get("seed"), "status": s.get("status"), "primal": s.get("primal"), "dual": s.get("dual"),
        "rel_gap": relative_gap(s.get("primal"), s.get("dual")), "nodes": s.get("nodes"),
        "lmo_calls": s.get("lmo_calls"), "wall_seconds": s.get("wall_seconds"),
    }


def run_grid(spec_file: str, out_dir: Optional[str] = None, jobs: int = 1) -> str:
    """Run every cell of the grid, skipping cells whose RunLog already exists."""
    spec = load_grid_spec(spec_file)
    if out_dir is None:
        out_dir = os.path.splitext(spec_file)[0] + "_results"
    os.makedirs(os.path.join(out_dir, "runs"), exist_ok=True)
    cells = expand_grid(spec, os.path.dirname(os.path.abspath(spec_file)))
    todo = [c for c in cells if not os.path.exists(os.path.join(out_dir, "runs", c["hash"] + ".json"))]
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            list(pool.map(lambda c: run_cell(c, out_dir), todo))
    else:
        for c in todo:
            run_cell(c, out_dir)
    rows = [row_from_log(RunLog.load(os.path.join(out_dir, "runs", c["hash"] + ".json"))) for c in cells]
    write_csv(rows, os.path.join(out_dir, "results.csv"))
    return out_dir


# -- tables -----------------------------------------------------------------------

def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def emit_csv(rows: Sequence[dict]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for r in rows:
        writer.writerow([_fmt(r.get(c)) for c in CSV_COLUMNS])
    return buf.getvalue()


def parse_csv(text: str) -> list[dict]:
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames is not None and list(reader.fieldnames) != CSV_COLUMNS:
        raise ValueError(f"unexpected CSV header {reader.fieldnames}")
    out = []
    for rec in reader:
        row = {}
        for c in CSV_COLUMNS:
            v = rec[c]
            if c in ("instance", "solver", "status"):
                row[c] = v
            elif c in ("seed", "nodes", "lmo_calls"):
                row[c] = None if v == "" else int(v)
            else:
                row[c] = None if v == "" else float(v)
        out.append(row)
    return out


def write_csv(rows: Sequence[dict], path: str) -> None:
    tmp = path + ".tmp"
    with open(tmp, "w") as fh:
        fh.write(emit_csv(rows))
    os.replace(tmp, path)


def shifted_geomean(values: Sequence[float], shift: float = 1.0) -> float:
    """``exp(mean(log(v + shift))) - shift``."""
    if len(values) == 0:
        raise ValueError("shifted geometric mean of an empty list")
    if shift < 0:
        raise ValueError("shift must be nonnegative")
    logs = [math.log(v + shift) for v in values]
    return math.exp(sum(logs) / len(logs)) - shift


def load_results(results_dir: str) -> list[dict]:
    """RunLog summaries as records with the time limit attached."""
    runs = os.path.join(results_dir, "runs")
    out = []
    for name in sorted(os.listdir(runs)):
        if not name.endswith(".json"):
            continue
        log = RunLog.load(os.path.join(runs, name))
        rec = row_from_log(log)
        rec["time_limit"] = log.header.get("time_limit")
        out.append(rec)
    return out


def summarize(results, bucket_thresholds: Sequence[float] = DEFAULT_BUCKETS) -> list[dict]:
    """Per solver and difficulty bucket: solved count, percent, shifted geomean time, mean gap.

    ``results`` is a results directory or a list of records with the CSV fields
    (plus an optional ``time_limit``).  Instances are keyed by (instance, seed).
    An instance belongs to bucket ``tau`` when its minimum solve time over the
    solvers that solved it is at least ``tau``; instances nobody solved count
    with the time limit.  Unsolved runs enter the time mean at the limit.  The
    gap is taken against the reference dual bound, the largest dual bound any
    solver reported for the instance.
    """
    records = load_results(results) if isinstance(results, str) else list(results)
    solvers = sorted({r["solver"] for r in records})
    by_inst: dict = {}
    for r in records:
        by_inst.setdefault((r["instance"], r.get("seed")), {})[r["solver"]] = r

    def solved(r):
        return r["status"] == "Optimal"

    def run_time(r):
        limit = r.get("time_limit")
        if solved(r) or limit is None:
            return float(r["wall_seconds"])
        return float(limit)

    min_time = {}
    for key, runs in by_inst.items():
        times = [run_time(r) for r in runs.values() if solved(r)]
        min_time[key] = min(times) if times else max(run_time(r) for r in runs.values())
    table = []
    for tau in bucket_thresholds:
        keys = [k for k in by_inst if min_time[k] >= tau]
        for s in solvers:
            runs = [by_inst[k][s] for k in keys if s in by_inst[k]]
            n = len(runs)
            n_solved = sum(1 for r in runs if solved(r))
            gaps = []
            for k in keys:
                if s not in by_inst[k]:
                    continue
                ref = max(float(r["dual"]) for r in by_inst[k].values() if r["dual"] is not None)
                gaps.append(relative_gap(by_inst[k][s]["primal"], ref))
            table.append({
                "bucket": tau, "solver": s, "instances": n, "solved": n_solved,
                "percent_solved": 100.0 * n_solved / n if n else 0.0,
                "time_sgm": shifted_geomean([run_time(r) for r in runs], 1.0) if n else math.nan,
                "mean_rel_gap": sum(gaps) / len(gaps) if gaps else math.nan,
            })
    return table


def format_table(table: Sequence[dict]) -> str:
    lines = [f"{'bucket':>8} {'solver':<12} {'inst':>5} {'solved':>6} {'%':>7} {'time':>10} {'gap':>10}"]
    for r in table:
        lines.append(f"{r['bucket']:>8g} {r['solver']:<12} {r['instances']:>5d} {r['solved']:>6d} "
                     f"{r['percent_solved']:>7.1f} {r['time_sgm']:>10.3f} {r['mean_rel_gap']:>10.3g}")
    return "\n".join(lines)


# -- CLI --------------------------------------------------------------------------

def _cmd_solve(args) -> int:
    inst = load_instance(args.instance)
    config = None
    if args.config:
        with open(args.config) as fh:
            config = json.load(fh)
    t0 = time.monotonic()
    outcome = run_solver(inst, args.solver, config, args.time_limit)
    row = outcome_row(inst.name, args.solver, None, outcome, time.monotonic() - t0)
    if args.log:
        outcome.log.save(args.log)
    sys.stdout.write(emit_csv([row]))
    return 0


def _cmd_grid(args) -> int:
    try:
        out = run_grid(args.spec, args.out, args.jobs)
    except GridSpecError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(os.path.join(out, "results.csv"))
    return 0


def _cmd_report(args) -> int:
    buckets = [float(b) for b in args.buckets.split(",")] if args.buckets else list(DEFAULT_BUCKETS)
    print(format_table(summarize(args.results, buckets)))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hullfw", description="Mixed-integer convex solver over the integer hull.")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("solve", help="solve one instance file")
    p.add_argument("instance")
    p.add_argument("--config")
    p.add_argument("--solver", choices=SOLVERS, default="hullfw")
    p.add_argument("--time-limit", type=float)
    p.add_argument("--log")
    p.set_defaults(func=_cmd_solve)
    p = sub.add_parser("grid", help="run an experiment grid")
    p.add_argument("spec")
    p.add_argument("--out", required=True)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=_cmd_grid)
    p = sub.add_parser("report", help="summarize a results directory")
    p.add_argument("results")
    p.add_argument("--buckets", default=",".join(f"{b:g}" for b in DEFAULT_BUCKETS))
    p.set_defaults(func=_cmd_report)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())

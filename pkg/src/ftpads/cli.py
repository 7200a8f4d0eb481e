"""Command-line harness: ``ftpads run``, ``ftpads reliability``, ``ftpads sweep``.

Exit codes: 0 success, 1 a simulation did not complete, 2 configuration or
query error.  CSV goes to ``--out`` (stdout by default); run events go to
``--events`` as JSON lines, defaulting to ``<out>.events.jsonl`` when
``--out`` is a file.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import time
from contextlib import ExitStack
from dataclasses import replace
from pathlib import Path
from typing import IO, Callable, Sequence

from .config import RunConfig, load_config
from .core import FailureModel, FaultKind, FtpadsError, derive_seed
from .engine import RunReport, run
from .faults import ByzantineBehavior, ByzantineMode, FailureEvent, FailureSchedule
from .p2pmodel import P2PBehavior
from .reliability import (
    ReliabilityQuery,
    monte_carlo_reliability,
    r_byzantine,
    r_crash,
    r_crash_unconstrained,
)

log = logging.getLogger("ftpads")

EXIT_OK, EXIT_INCOMPLETE, EXIT_CONFIG = 0, 1, 2

# Column name -> type; rows written by ``run`` and ``sweep`` parse back with these.
RUN_COLUMNS: dict[str, type] = {
    "run_id": str,
    "L": int,
    "N": int,
    "M": int,
    "model": str,
    "faults": int,
    "completed": bool,
    "logical_sends": int,
    "physical_sends": int,
    "filtered_duplicates": int,
    "voted_deliveries": int,
    "dropped_corrupt": int,
    "migrations": int,
    "wall_seconds": float,
    "digest_of_entity_digests": str,
}
SWEEP_COLUMNS: dict[str, type] = {"sweep_axis": str, "sweep_value": int, **RUN_COLUMNS, "error": str}
SWEEP_AXES = ("N", "L", "faults", "M")


def parse_bool(text: str) -> bool:
    if text not in ("true", "false"):
        raise ValueError(f"not a boolean: {text!r}")
    return text == "true"


def parse_row(row: dict[str, str], columns: dict[str, type]) -> dict:
    """Inverse of the CSV writer; empty cells (failed sweep rows) become None."""
    out = {}
    for name, typ in columns.items():
        cell = row[name]
        if cell == "" and typ is not str:
            out[name] = None
        elif typ is bool:
            out[name] = parse_bool(cell)
        else:
            out[name] = typ(cell)
    return out


def _cell(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return "" if value is None else str(value)


class EventLog:
    def __init__(self, stream: IO[str] | None):
        self.stream = stream

    def sink(self, run_id: str) -> Callable | None:
        if self.stream is None:
            return None

        def emit(step, lp, kind, detail):
            rec = {"run_id": run_id, "step": step, "lp": lp, "event_kind": kind, "detail": detail}
            self.stream.write(json.dumps(rec, sort_keys=True) + "\n")

        return emit


def run_row(cfg: RunConfig, run_id: str, events: EventLog) -> tuple[dict, RunReport]:
    sim = cfg.sim
    log.info("run %s: L=%d N=%d M=%d steps=%d", run_id, sim.n_lps, sim.n_entities, sim.m, sim.total_steps)
    start = time.perf_counter()
    report = run(sim, P2PBehavior(cfg.model), cfg.schedule, events.sink(run_id))
    wall = time.perf_counter() - start
    c = report.msg_counts
    row = {
        "run_id": run_id,
        "L": sim.n_lps,
        "N": sim.n_entities,
        "M": sim.m,
        "model": sim.model.kind.value,
        "faults": len(cfg.schedule.events),
        "completed": report.completed,
        "logical_sends": c.logical_sends,
        "physical_sends": c.physical_sends,
        "filtered_duplicates": c.filtered_duplicates,
        "voted_deliveries": c.voted_deliveries,
        "dropped_corrupt": c.dropped_corrupt,
        "migrations": report.migrations,
        "wall_seconds": round(wall, 6),
        "digest_of_entity_digests": report.digest_of_entity_digests(),
    }
    log.info("run %s: completed=%s in %.2fs", run_id, report.completed, wall)
    return row, report


def _writer(stream: IO[str], columns: dict[str, type]) -> Callable[[dict], None]:
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(columns)

    def write(row: dict) -> None:
        w.writerow(_cell(row.get(name)) for name in columns)
        stream.flush()

    return write


def _open_outputs(stack: ExitStack, args) -> tuple[IO[str], EventLog]:
    if args.out and args.out != "-":
        out = stack.enter_context(open(args.out, "w", newline=""))
    else:
        out = sys.stdout
    events_path = getattr(args, "events", None)
    if events_path is None and args.out and args.out != "-":
        events_path = str(Path(args.out).with_suffix(".events.jsonl"))
    events = None
    if events_path and events_path != "-":
        events = stack.enter_context(open(events_path, "w"))
    elif events_path == "-":
        events = sys.stderr
    return out, EventLog(events)


def _load(args) -> RunConfig:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    if args.workers is not None:
        cfg = cfg.with_workers(args.workers)
    return cfg


def cmd_run(args) -> int:
    try:
        cfg = _load(args)
    except FtpadsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    with ExitStack() as stack:
        out, events = _open_outputs(stack, args)
        write = _writer(out, RUN_COLUMNS)
        row, report = run_row(cfg, f"{Path(args.config).stem}-{cfg.sim.master_seed}", events)
        write(row)
    return EXIT_OK if report.completed else EXIT_INCOMPLETE


def _fault_schedule(cfg: RunConfig, k: int) -> FailureSchedule:
    """k distinct LPs fail at the midpoint; Byzantine ones corrupt every message."""
    if not 0 <= k <= cfg.sim.n_lps:
        raise FtpadsError(f"faults={k} is outside [0, L={cfg.sim.n_lps}]")
    step = cfg.sim.total_steps // 2
    if cfg.sim.model.kind is FaultKind.CRASH:
        events = [FailureEvent.crash(lp, step) for lp in range(k)]
    else:
        behavior = ByzantineBehavior(ByzantineMode.CORRUPT_ALL)
        events = [FailureEvent.byzantine(lp, step, behavior) for lp in range(k)]
    return FailureSchedule(tuple(events))


def sweep_config(base: RunConfig, axis: str, value: int, seed: int) -> RunConfig:
    if value < (0 if axis == "faults" else 1):
        raise FtpadsError(f"{axis}={value} is out of range")
    sim = replace(base.sim, master_seed=seed)
    cfg = replace(base, sim=sim)
    if axis == "N":
        cfg = replace(cfg, sim=replace(sim, n_entities=value))
    elif axis == "L":
        cfg = replace(cfg, sim=replace(sim, n_lps=value))
    elif axis == "M":
        if sim.model.kind is FaultKind.CRASH:
            model = FailureModel.crash(value - 1)
        else:
            if value % 2 == 0:
                raise FtpadsError(f"byzantine replication degree must be odd, got M={value}")
            model = FailureModel.byzantine((value - 1) // 2)
        cfg = replace(cfg, sim=replace(sim, model=model))
    elif axis == "faults":
        cfg = replace(cfg, schedule=_fault_schedule(cfg, value))
    else:
        raise FtpadsError(f"unknown sweep axis {axis!r}")
    cfg.sim.validate()
    cfg.schedule.validate(cfg.sim.n_lps)
    return cfg


def cmd_sweep(args) -> int:
    try:
        base = _load(args)
        values = [int(v) for v in args.values.split(",") if v.strip()]
    except FtpadsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError:
        print(f"error: --values must be comma-separated integers, got {args.values!r}", file=sys.stderr)
        return EXIT_CONFIG
    if not values:
        print("error: --values is empty", file=sys.stderr)
        return EXIT_CONFIG
    stem = Path(args.config).stem
    status = EXIT_OK
    with ExitStack() as stack:
        out, events = _open_outputs(stack, args)
        write = _writer(out, SWEEP_COLUMNS)
        for idx, value in enumerate(values):
            seed = derive_seed("sweep", base.sim.master_seed, idx)
            run_id = f"{stem}-{args.axis}{value}-{idx}"
            prefix = {"sweep_axis": args.axis, "sweep_value": value}
            try:
                cfg = sweep_config(base, args.axis, value, seed)
                row, report = run_row(cfg, run_id, events)
            except FtpadsError as exc:
                log.warning("sweep row %s failed: %s", run_id, exc)
                write({**prefix, "run_id": run_id, "error": f"{type(exc).__name__}: {exc}"})
                status = EXIT_INCOMPLETE
                continue
            write({**prefix, **row, "error": ""})
            if not report.completed:
                status = EXIT_INCOMPLETE
    return status


def _grid(args) -> list[int]:
    if args.step < 1:
        raise FtpadsError("--step must be >= 1")
    if args.over == "X":
        lo = 0 if args.lo is None else args.lo
        hi = args.L if args.hi is None else args.hi
    else:
        lo = 1 if args.lo is None else args.lo
        hi = args.N if args.hi is None else args.hi
        if hi is None:
            raise FtpadsError("--to (or -N) is required when sweeping over N")
    if lo > hi:
        raise FtpadsError(f"empty grid: from={lo} > to={hi}")
    return list(range(lo, hi + 1, args.step))


def cmd_reliability(args) -> int:
    kind = FaultKind(args.model)
    try:
        grid = _grid(args)
        fixed = args.N if args.over == "X" else args.X
        if fixed is None:
            raise FtpadsError(f"-{'N' if args.over == 'X' else 'X'} is required when sweeping over {args.over}")
        queries = []
        for v in grid:
            q = ReliabilityQuery(args.L, v, args.M, fixed) if args.over == "N" else ReliabilityQuery(args.L, fixed, args.M, v)
            q.validate()
            queries.append(q)
        if args.trials is not None and args.trials < 1:
            raise FtpadsError("--trials must be >= 1")
    except FtpadsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    columns: dict[str, type] = {"sweep_value": int, "analytic": float}
    if kind is FaultKind.CRASH:
        columns["analytic_unconstrained"] = float
    if args.trials:
        columns.update(monte_carlo_estimate=float, stderr=float)
    with ExitStack() as stack:
        out = stack.enter_context(open(args.out, "w", newline="")) if args.out and args.out != "-" else sys.stdout
        write = _writer(out, columns)
        for v, q in zip(grid, queries):
            row = {"sweep_value": v}
            if kind is FaultKind.CRASH:
                row["analytic"] = r_crash(q)
                row["analytic_unconstrained"] = r_crash_unconstrained(q)
            else:
                row["analytic"] = r_byzantine(q)
            if args.trials:
                mc = monte_carlo_reliability(q, True, kind, args.trials, args.seed, args.workers)
                row["monte_carlo_estimate"] = mc.estimate
                row["stderr"] = mc.stderr
            write(row)
    return EXIT_OK


def _u64(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError(f"seed must fit in 64 unsigned bits: {text}")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ftpads", description="Fault-tolerant replicated simulation harness.")
    sub = parser.add_subparsers(dest="command", required=True)

    def sim_flags(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", required=True, help="TOML run configuration")
        p.add_argument("--out", help="CSV output path (default: stdout)")
        p.add_argument("--events", help="JSON-lines event log path ('-' for stderr)")
        p.add_argument("--seed", type=_u64, help="override the configured master seed")
        p.add_argument("--workers", type=int, help="worker threads per run")

    p_run = sub.add_parser("run", help="run one simulation")
    sim_flags(p_run)
    p_run.set_defaults(func=cmd_run)

    p_sweep = sub.add_parser("sweep", help="run one simulation per axis value")
    sim_flags(p_sweep)
    p_sweep.add_argument("--axis", required=True, choices=SWEEP_AXES)
    p_sweep.add_argument("--values", required=True, help="comma-separated integers")
    p_sweep.set_defaults(func=cmd_sweep)

    p_rel = sub.add_parser("reliability", help="analytic (and Monte Carlo) reliability curves")
    p_rel.add_argument("-L", type=int, required=True, help="number of LPs")
    p_rel.add_argument("-N", type=int, help="number of entities")
    p_rel.add_argument("-M", type=int, required=True, help="replicas per entity")
    p_rel.add_argument("-X", type=int, help="number of crashed LPs")
    p_rel.add_argument("--model", choices=[k.value for k in FaultKind], default="crash")
    p_rel.add_argument("--over", choices=("X", "N"), default="X")
    p_rel.add_argument("--from", dest="lo", type=int)
    p_rel.add_argument("--to", dest="hi", type=int)
    p_rel.add_argument("--step", type=int, default=1)
    p_rel.add_argument("--trials", type=int, help="also estimate by Monte Carlo with this many trials")
    p_rel.add_argument("--seed", type=_u64, default=0)
    p_rel.add_argument("--workers", type=int, default=1)
    p_rel.add_argument("--out", help="CSV output path (default: stdout)")
    p_rel.set_defaults(func=cmd_reliability)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    level = os.environ.get("FTPADS_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())

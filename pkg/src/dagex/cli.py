"""Command-line entry point: ``dagex run | validate-plan | bench | simulate | trace-export``."""

from __future__ import annotations

import argparse
import csv
import json
import sys
import uuid
from datetime import datetime, timezone
from fractions import Fraction
from pathlib import Path

from . import config as config_mod
from .backends import BackendError
from .bench import bench
from .latency import WorkloadProfile, makespan_table, simulate_trace, speedup
from .plan_ir import PlanError, build_graph, critical_path_length
from .plan_parser import PlanSyntaxError, parse_plan
from .replan import AnswerProtocolError, ExhaustedRounds, PlannerSyntaxError, run
from .trace import RunTrace

EXIT_OK, EXIT_ERROR, EXIT_EXHAUSTED = 0, 1, 2
DEFAULT_CONFIG = "dagex.toml"
DEFAULT_RUNS_DIR = ".dagex/runs"


def _err(msg: str) -> None:
    print(f"dagex: {msg}", file=sys.stderr)


def _new_run_id() -> str:
    return datetime.now(timezone.utc).strftime("%Y%m%dT%H%M%S") + "-" + uuid.uuid4().hex[:6]


def _write_trace(trace: RunTrace, args) -> Path:
    if args.trace:
        path = Path(args.trace)
    else:
        path = Path(args.runs_dir) / f"{args.run_id}.jsonl"
    return trace.write(path)


def cmd_run(args) -> int:
    try:
        cfg = config_mod.load(args.config)
    except config_mod.ConfigError as exc:
        _err(str(exc))
        return EXIT_ERROR
    if args.stream is not None:
        cfg.streaming = args.stream
    if args.cap is not None:
        if args.cap < 0:
            _err("--cap must be >= 0")
            return EXIT_ERROR
        cfg.concurrency_cap = args.cap or None
    if args.max_replans is not None:
        cfg.max_replans = args.max_replans
    args.run_id = _new_run_id()
    trace = RunTrace()
    try:
        outcome = run(cfg, args.query, trace)
    except ExhaustedRounds as exc:
        path = _write_trace(trace, args)
        if args.json:
            print(json.dumps({"status": "exhausted", "rounds": exc.rounds, "carry_state": exc.carry_state,
                              "run_id": args.run_id, "trace": str(path)}))
        else:
            print(f"ExhaustedRounds after {exc.rounds} rounds; last state: {exc.carry_state}")
        return EXIT_EXHAUSTED
    except (PlannerSyntaxError, AnswerProtocolError, BackendError, PlanError, OSError) as exc:
        _err(f"{type(exc).__name__}: {exc}")
        return EXIT_ERROR
    path = _write_trace(trace, args)
    if args.json:
        print(json.dumps({"status": "finish", "answer": outcome.answer, "rounds": len(outcome.rounds),
                          "run_id": args.run_id, "trace": str(path)}))
    else:
        print(outcome.answer)
    print(f"trace: {path} (run {args.run_id})", file=sys.stderr)
    return EXIT_OK


def cmd_validate_plan(args) -> int:
    try:
        text = Path(args.plan).read_text()
        graph = build_graph(parse_plan(text))
    except (OSError, PlanSyntaxError, PlanError) as exc:
        _err(f"{type(exc).__name__}: {exc}")
        return EXIT_ERROR
    summary = {
        "tasks": len(graph.tasks),
        "join_id": graph.join_id,
        "edges": sorted([list(e) for e in graph.edges]),
        "critical_path": critical_path_length(graph),
        "tools": sorted({t.tool for t in graph.tasks if not t.is_join}),
    }
    if args.json:
        print(json.dumps(summary))
    else:
        print(f"ok: {summary['tasks']} tasks, join ${graph.join_id}, critical path {summary['critical_path']}")
        for src, dst in summary["edges"]:
            print(f"  ${src} -> ${dst}")
    return EXIT_OK


def cmd_bench(args) -> int:
    try:
        result = bench(args.pattern, args.trials, args.latency_ms, args.plan_delay_ms)
    except ValueError as exc:
        _err(str(exc))
        return EXIT_ERROR
    row = result.as_dict()
    if args.json:
        print(json.dumps(row))
        return EXIT_OK
    print(f"{'metric':<26}{'measured':>12}{'predicted':>12}")
    for mode in ("sequential", "parallel", "streamed"):
        pred = row[f"predicted_{mode}_ms"]
        print(f"{mode + '_ms':<26}{row[f'{mode}_ms']:>12.1f}{'' if pred is None else format(pred, '.1f'):>12}")
    gamma = row["gamma_analytic"]
    print(f"{'speedup':<26}{row['speedup']:>12.2f}{'' if gamma is None else format(gamma, '.2f'):>12}")
    return EXIT_OK


def _num(v):
    if isinstance(v, Fraction):
        return v.numerator if v.denominator == 1 else float(v)
    return v


def cmd_simulate(args) -> int:
    try:
        if args.plan:
            graph = build_graph(parse_plan(Path(args.plan).read_text()))
            raw = json.loads(Path(args.durations).read_text()) if args.durations else {}
            durations = {(int(k) if k.isdigit() else k): v for k, v in raw.items()}
            emissions = json.loads(args.emission_times) if args.emission_times else None
            sim = simulate_trace(graph, durations, emissions, streaming=args.stream, cap=args.cap)
            print(json.dumps({
                "makespan": _num(sim.makespan),
                "start": {str(k): _num(v) for k, v in sim.start.items()},
                "finish": {str(k): _num(v) for k, v in sim.finish.items()},
            }))
            return EXIT_OK
        if not args.workload:
            _err("simulate needs a workload file or --plan")
            return EXIT_ERROR
        profile = WorkloadProfile.from_dict(json.loads(Path(args.workload).read_text()))
        print(speedup(profile).to_json())
        if args.csv:
            rows = makespan_table(profile)
            with open(args.csv, "w", newline="") as fh:
                writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
                writer.writeheader()
                for row in rows:
                    writer.writerow({k: _num(v) for k, v in row.items()})
        return EXIT_OK
    except (OSError, ValueError, KeyError, PlanSyntaxError, PlanError) as exc:
        _err(f"{type(exc).__name__}: {exc}")
        return EXIT_ERROR


def cmd_trace_export(args) -> int:
    src = Path(args.runs_dir) / f"{args.run_id}.jsonl"
    try:
        trace = RunTrace.read(src)
    except OSError as exc:
        _err(f"cannot read trace for run {args.run_id}: {exc}")
        return EXIT_ERROR
    out = Path(args.out_path)
    if out.suffix == ".csv":
        out.parent.mkdir(parents=True, exist_ok=True)
        with open(out, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t_ms", "event", "task_id", "tool", "ok"])
            for e in trace.events:
                writer.writerow([e.t_ms, e.event, e.task_id, e.tool, e.ok])
    else:
        trace.write(out)
    print(out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dagex", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="plan and execute a query end to end")
    p.add_argument("query")
    p.add_argument("--config", default=DEFAULT_CONFIG)
    p.add_argument("--stream", action=argparse.BooleanOptionalAction, default=None)
    p.add_argument("--cap", type=int, default=None, help="concurrency cap (0 = unlimited)")
    p.add_argument("--max-replans", type=int, default=None)
    p.add_argument("--trace", default=None, help="JSONL trace path")
    p.add_argument("--runs-dir", default=DEFAULT_RUNS_DIR)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("validate-plan", help="parse a plan file and check its DAG")
    p.add_argument("plan")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_validate_plan)

    p = sub.add_parser("bench", help="time mock workloads in serialized, parallel and streamed modes")
    p.add_argument("pattern", help="parallel-N | chain-N | fig2 | game24")
    p.add_argument("--trials", type=int, default=3)
    p.add_argument("--latency-ms", type=float, default=500.0)
    p.add_argument("--plan-delay-ms", type=float, default=0.0)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("simulate", help="latency model for a workload, or a simulated schedule for a plan")
    p.add_argument("workload", nargs="?")
    p.add_argument("--csv", default=None)
    p.add_argument("--plan", default=None)
    p.add_argument("--durations", default=None, help="JSON map of task id or tool name to seconds")
    p.add_argument("--emission-times", default=None, help="JSON list, one per task")
    p.add_argument("--stream", action="store_true")
    p.add_argument("--cap", type=int, default=None)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("trace-export", help="copy a run's trace as JSONL or CSV")
    p.add_argument("run_id")
    p.add_argument("out_path")
    p.add_argument("--runs-dir", default=DEFAULT_RUNS_DIR)
    p.set_defaults(func=cmd_trace_export)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())

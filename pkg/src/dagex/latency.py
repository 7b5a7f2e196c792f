"""Latency model for sequential (ReAct-style), parallel and streamed-parallel execution.

The closed forms assume an embarrassingly parallel workload of N tasks; any
other DAG goes through :func:`simulate_trace`. Arithmetic is generic, so
integer or Fraction inputs give exact results.
"""

from __future__ import annotations

import heapq
import json
import math
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from numbers import Rational
from typing import Mapping, Sequence

from .plan_ir import PlanGraph


class ZeroDenominator(ZeroDivisionError):
    pass


class MissingDuration(KeyError):
    pass


@dataclass(frozen=True)
class WorkloadProfile:
    plan_times_react: tuple
    plan_times_compiler: tuple
    exec_times: tuple

    def __post_init__(self):
        n = len(self.exec_times)
        if n < 1:
            raise ValueError("a workload needs at least one task")
        if len(self.plan_times_react) != n or len(self.plan_times_compiler) != n:
            raise ValueError("plan and exec time lists must all have length N")
        for t in (*self.plan_times_react, *self.plan_times_compiler, *self.exec_times):
            if t < 0:
                raise ValueError("durations must be non-negative")

    @property
    def n_tasks(self) -> int:
        return len(self.exec_times)

    @classmethod
    def from_dict(cls, d: Mapping) -> "WorkloadProfile":
        profile = cls(tuple(d["plan_react"]), tuple(d["plan_compiler"]), tuple(d["exec"]))
        if "n" in d and d["n"] != profile.n_tasks:
            raise ValueError(f"n={d['n']} but lists have length {profile.n_tasks}")
        return profile

    @classmethod
    def uniform(cls, n: int, plan, exec_time, plan_react=None) -> "WorkloadProfile":
        plan_react = plan if plan_react is None else plan_react
        return cls((plan_react,) * n, (plan,) * n, (exec_time,) * n)

    def truncated(self, n: int) -> "WorkloadProfile":
        return WorkloadProfile(self.plan_times_react[:n], self.plan_times_compiler[:n], self.exec_times[:n])


@dataclass(frozen=True)
class OverheadPreset:
    """Measured overheads from a published run, kept for reference workloads."""

    planner_s: float
    answer_s: float
    mean_task_s: float
    straggler_s: float


PRESETS = {
    "movie-rec-gpt35": OverheadPreset(planner_s=1.88, answer_s=1.62, mean_task_s=0.61, straggler_s=1.13),
}


def _div(a, b):
    if b == 0:
        raise ZeroDenominator("denominator is zero")
    if isinstance(a, Rational) and isinstance(b, Rational):
        return Fraction(a) / Fraction(b)
    return a / b


def react_latency(w: WorkloadProfile):
    return sum(p + e for p, e in zip(w.plan_times_react, w.exec_times))


def compiler_latency(w: WorkloadProfile):
    return sum(w.plan_times_compiler) + max(w.exec_times)


def streamed_latency(w: WorkloadProfile):
    return sum(w.plan_times_compiler) + w.exec_times[-1]


@dataclass(frozen=True)
class SpeedupReport:
    t_react: object
    t_compiler: object
    t_streamed: object
    gamma: object
    gamma_max: int
    gamma_min: object

    def to_json(self) -> str:
        def conv(v):
            if isinstance(v, Fraction):
                return v.numerator if v.denominator == 1 else float(v)
            return v

        return json.dumps({k: conv(v) for k, v in asdict(self).items()})


def speedup(w: WorkloadProfile) -> SpeedupReport:
    t_r = react_latency(w)
    t_c = compiler_latency(w)
    t_sc = streamed_latency(w)
    gamma = _div(t_r, t_c)
    plan_r, plan_c = sum(w.plan_times_react), sum(w.plan_times_compiler)
    if plan_c == 0:
        gamma_min = Fraction(1) if plan_r == 0 else math.inf
    else:
        gamma_min = _div(plan_r, plan_c)
    return SpeedupReport(t_r, t_c, t_sc, gamma, w.n_tasks, gamma_min)


@dataclass
class SimEvent:
    time: object
    kind: str  # "emit", "start", "finish"
    task_id: int


@dataclass
class SimulatedTrace:
    makespan: object
    start: dict[int, object]
    finish: dict[int, object]
    events: list[SimEvent] = field(default_factory=list)


def _duration(task, durations: Mapping):
    if task.id in durations:
        return durations[task.id]
    if task.tool in durations:
        return durations[task.tool]
    if task.is_join:
        return 0
    raise MissingDuration(f"no duration for task ${task.id} ({task.tool})")


def simulate_trace(
    graph: PlanGraph,
    tool_durations: Mapping,
    planner_emission_times: Sequence | None = None,
    streaming: bool = False,
    cap: int | None = None,
) -> SimulatedTrace:
    """Event-driven schedule of ``graph``.

    A task becomes eligible at the later of its emission time (streaming) or
    the last emission time (batch) and its dependencies' finish times. It
    starts as soon as one of ``cap`` worker slots is free; ties go to the
    earliest-eligible, then lowest id. The join takes no slot and, unless a
    duration is given for it, no time.
    """
    tasks = list(graph.tasks)
    if planner_emission_times is None:
        planner_emission_times = [0] * len(tasks)
    if len(planner_emission_times) != len(tasks):
        raise ValueError("need one emission time per task")
    if cap is not None and cap < 1:
        raise ValueError("cap must be positive")
    durations = {t.id: _duration(t, tool_durations) for t in tasks}
    last_emit = max(planner_emission_times)
    release = {
        t.id: (emit if streaming else last_emit) for t, emit in zip(tasks, planner_emission_times)
    }

    events = [SimEvent(e, "emit", t.id) for t, e in zip(tasks, planner_emission_times)]
    start: dict[int, object] = {}
    finish: dict[int, object] = {}
    waiting = {t.id: set(graph.predecessors(t.id)) for t in tasks}
    eligible_at: dict[int, object] = {}
    ready: list = []  # (eligible time, id)
    running: list = []  # (finish time, id)
    now = 0

    def mark_eligible(tid):
        dep_done = max((finish[d] for d in graph.predecessors(tid)), default=0)
        eligible_at[tid] = max(release[tid], dep_done)
        heapq.heappush(ready, (eligible_at[tid], tid))

    for t in tasks:
        if not waiting[t.id]:
            mark_eligible(t.id)

    def slots_free() -> bool:
        busy = sum(1 for _, tid in running if tid != graph.join_id)
        return cap is None or busy < cap

    while len(finish) < len(tasks):
        while ready and ready[0][0] <= now and (ready[0][1] == graph.join_id or slots_free()):
            _, tid = heapq.heappop(ready)
            start[tid] = now
            events.append(SimEvent(now, "start", tid))
            heapq.heappush(running, (now + durations[tid], tid))
        candidates = []
        if running:
            candidates.append(running[0][0])
        if ready and ready[0][0] > now and slots_free():
            candidates.append(ready[0][0])
        if not candidates:
            raise RuntimeError("simulation stalled")
        now = min(candidates)
        while running and running[0][0] <= now:
            done_at, tid = heapq.heappop(running)
            finish[tid] = done_at
            events.append(SimEvent(done_at, "finish", tid))
            for succ in sorted(graph.successors(tid)):
                waiting[succ].discard(tid)
                if not waiting[succ]:
                    mark_eligible(succ)

    events.sort(key=lambda e: (e.time, {"finish": 0, "emit": 1, "start": 2}[e.kind], e.task_id))
    return SimulatedTrace(max(finish.values()), start, finish, events)


def embarrassingly_parallel_emissions(w: WorkloadProfile) -> list:
    """Emission times for N tasks plus a join: task i appears after P_1 + ... + P_i."""
    times = []
    acc = 0
    for p in w.plan_times_compiler:
        acc = acc + p
        times.append(acc)
    return times + [acc]


def makespan_table(w: WorkloadProfile) -> list[dict]:
    """Closed-form latencies for the first n tasks, n = 1..N."""
    rows = []
    for n in range(1, w.n_tasks + 1):
        sub = w.truncated(n)
        rows.append({
            "n": n,
            "t_react": react_latency(sub),
            "t_compiler": compiler_latency(sub),
            "t_streamed": streamed_latency(sub),
        })
    return rows

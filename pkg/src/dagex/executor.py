"""Tool registry and the concurrent executor that drives a plan to its join."""

from __future__ import annotations

import heapq
import json
import queue
import threading
import time
from dataclasses import dataclass, field
from decimal import Decimal
from fractions import Fraction
from typing import Any, Callable, Iterable

from .plan_ir import JOIN, PlanError, PlanGraph, TaskSpec
from .task_fetcher import FetchState, Observation, render_value, substitute
from .trace import RunTrace

DEFAULT_TIMEOUT = 60.0

ARG_KINDS = ("text", "number", "list", "any")


class DuplicateTool(ValueError):
    pass


class ReservedToolName(ValueError):
    pass


@dataclass
class ToolSpec:
    name: str
    description: str
    run: Callable[..., Any]
    arg_schema: list[tuple[str, str]] | None = None
    timeout: float | None = DEFAULT_TIMEOUT
    latency_class: float | None = None
    with_memory: bool = False

    def __post_init__(self):
        if not self.name:
            raise ValueError("tool name must be non-empty")
        if not self.description.strip():
            raise ValueError(f"tool {self.name!r} needs a description")
        for _, kind in self.arg_schema or ():
            if kind not in ARG_KINDS:
                raise ValueError(f"unknown argument kind {kind!r}")

    def signature(self) -> str:
        if self.arg_schema is None:
            return f"{self.name}(...)"
        return f"{self.name}(" + ", ".join(f"{n}: {k}" for n, k in self.arg_schema) + ")"


class ToolRegistry:
    def __init__(self, tools: Iterable[ToolSpec] = ()):
        self._tools: dict[str, ToolSpec] = {}
        for t in tools:
            self.register(t)

    def register(self, spec: ToolSpec) -> "ToolRegistry":
        if spec.name == JOIN:
            raise ReservedToolName("'join' is reserved for the engine")
        if spec.name in self._tools:
            raise DuplicateTool(spec.name)
        self._tools[spec.name] = spec
        return self

    def get(self, name: str) -> ToolSpec | None:
        return self._tools.get(name)

    def __contains__(self, name: str) -> bool:
        return name in self._tools

    def __len__(self) -> int:
        return len(self._tools)

    def __iter__(self):
        return iter(self._tools.values())

    def names(self) -> list[str]:
        return list(self._tools)


def register_tool(registry: ToolRegistry, spec: ToolSpec) -> ToolRegistry:
    return registry.register(spec)


@dataclass
class TaskMemory:
    task_id: int
    log: list[str] = field(default_factory=list)

    def append(self, entry: str) -> None:
        self.log.append(entry)


def _kind_ok(kind: str, value: Any) -> bool:
    if kind == "any":
        return True
    if kind == "text":
        return isinstance(value, str)
    if kind == "number":
        return isinstance(value, (int, float, Fraction, Decimal)) and not isinstance(value, bool)
    if kind == "list":
        return isinstance(value, (list, tuple))
    return False


def _call_with_timeout(fn: Callable[[], Any], timeout: float | None):
    if timeout is None:
        return fn()
    box: dict[str, Any] = {}

    def target():
        try:
            box["value"] = fn()
        except BaseException as exc:  # surfaced to the caller below
            box["error"] = exc

    worker = threading.Thread(target=target, daemon=True)
    worker.start()
    worker.join(timeout)
    if worker.is_alive():
        raise TimeoutError(f"exceeded {timeout:g} s")
    if "error" in box:
        raise box["error"]
    return box["value"]


def execute_task(
    registry: ToolRegistry, task: TaskSpec, concrete_args: list[Any], memory: TaskMemory | None = None
) -> Observation:
    """Run one task. Every fault comes back as a failed Observation."""
    spec = registry.get(task.tool)
    if spec is None:
        return Observation.failure(task.id, f"UnknownTool: {task.tool}")
    if spec.arg_schema is not None:
        if len(concrete_args) != len(spec.arg_schema):
            return Observation.failure(
                task.id,
                f"ArgSchemaMismatch: {task.tool} takes {len(spec.arg_schema)} arguments, got {len(concrete_args)}",
            )
        for (name, kind), value in zip(spec.arg_schema, concrete_args):
            if not _kind_ok(kind, value):
                return Observation.failure(
                    task.id, f"ArgSchemaMismatch: {name} expects {kind}, got {type(value).__name__}"
                )
    memory = memory if memory is not None else TaskMemory(task.id)
    kwargs = {"memory": memory} if spec.with_memory else {}
    try:
        value = _call_with_timeout(lambda: spec.run(*concrete_args, **kwargs), spec.timeout)
    except TimeoutError as exc:
        return Observation.failure(task.id, f"ToolTimeout: {exc}")
    except Exception as exc:
        return Observation.failure(task.id, f"ToolError: {type(exc).__name__}: {exc}")
    return Observation(task.id, value)


def mock_tool(name: str, latency: float, description: str | None = None, fail: bool = False) -> ToolSpec:
    """A tool that sleeps ``latency`` seconds and echoes its call."""

    def run(*args):
        time.sleep(latency)
        if fail:
            raise RuntimeError(f"{name} injected failure")
        return f"{name}(" + ", ".join(render_value(a) for a in args) + ")"

    return ToolSpec(
        name=name,
        description=description or f"mock tool sleeping {latency * 1000:g} ms",
        run=run,
        latency_class=latency,
    )


def _prompt_value(value: Any) -> str:
    if isinstance(value, str):
        return value
    if isinstance(value, (list, tuple, dict)):
        return json.dumps(value, default=render_value)
    return render_value(value)


@dataclass
class JoinSummary:
    tasks: dict[int, TaskSpec]
    observations: dict[int, Observation]
    skipped: list[int]
    join_id: int

    def lines(self) -> list[str]:
        out = []
        for tid in sorted(self.tasks):
            if tid == self.join_id:
                continue
            tool = self.tasks[tid].tool
            if tid in self.skipped:
                out.append(f"${tid} {tool}: SKIPPED (a dependency failed)")
                continue
            obs = self.observations[tid]
            if obs.ok:
                out.append(f"${tid} {tool}: {_prompt_value(obs.value)}")
            else:
                out.append(f"${tid} {tool}: ERROR {obs.error}")
        return out


@dataclass
class PlanRun:
    observations: dict[int, Observation]
    skipped: list[int]
    trace: RunTrace
    join: JoinSummary
    inputs: dict[int, list[Any]] = field(default_factory=dict)
    memories: dict[int, TaskMemory] = field(default_factory=dict)
    dispatch_counts: dict[int, int] = field(default_factory=dict)
    rounds: int | None = None


class Engine:
    """Event loop joining a task source (planner) with concurrent tool execution.

    Producers call :meth:`add_task`, :meth:`end_plan` or :meth:`fail_plan` from
    any thread; :meth:`run` consumes events on the calling thread until the join
    is reached and the plan source has ended.
    """

    def __init__(self, registry: ToolRegistry, concurrency_cap: int | None = None, trace: RunTrace | None = None):
        if concurrency_cap is not None and concurrency_cap < 1:
            raise ValueError("concurrency_cap must be positive")
        self.registry = registry
        self.cap = concurrency_cap
        self.trace = trace if trace is not None else RunTrace()
        self.state = FetchState()
        self._events: queue.Queue = queue.Queue()
        self._pending: list[int] = []
        self._running = 0
        self._inputs: dict[int, list[Any]] = {}
        self._memories: dict[int, TaskMemory] = {}
        self._dispatch_counts: dict[int, int] = {}

    def add_task(self, task: TaskSpec) -> None:
        self._events.put(("task", task))

    def end_plan(self) -> None:
        self._events.put(("end", None))

    def fail_plan(self, exc: BaseException) -> None:
        self._events.put(("error", exc))

    def _start(self, tid: int) -> None:
        task = self.state.tasks[tid]
        args = substitute(task.args, self.state.observations)
        self._inputs[tid] = args
        self._dispatch_counts[tid] = self._dispatch_counts.get(tid, 0) + 1
        memory = TaskMemory(tid)
        self._memories[tid] = memory
        self._running += 1
        self.trace.record("dispatch", tid, task.tool)

        def work():
            obs = execute_task(self.registry, task, args, memory)
            self.trace.record("complete", tid, task.tool, obs.ok)
            self._events.put(("done", obs))

        threading.Thread(target=work, daemon=True, name=f"task-{tid}").start()

    def _pump(self) -> None:
        while self._pending and (self.cap is None or self._running < self.cap):
            self._start(heapq.heappop(self._pending))

    def _enqueue(self, ready: Iterable[int]) -> bool:
        """Queue ready tasks; returns True if the join became ready."""
        join_ready = False
        for tid in ready:
            if self.state.tasks[tid].is_join:
                join_ready = True
            else:
                heapq.heappush(self._pending, tid)
        return join_ready

    def run(self) -> PlanRun:
        join_ready = False
        plan_ended = False
        while not (join_ready and plan_ended):
            kind, payload = self._events.get()
            if kind == "task":
                ready, _ = self.state.add_task(payload)
                join_ready |= self._enqueue(ready)
            elif kind == "done":
                self._running -= 1
                ready, _ = self.state.on_task_done(payload)
                join_ready |= self._enqueue(ready)
            elif kind == "end":
                plan_ended = True
                if self.state.join_id is None:
                    self.state.graph()  # raises MissingJoin
            elif kind == "error":
                raise payload
            self._pump()
        jid = self.state.join_id
        self.trace.record("join", jid, JOIN, True)
        summary = JoinSummary(
            dict(self.state.tasks), dict(self.state.observations), sorted(self.state.skipped), jid
        )
        return PlanRun(
            observations=dict(self.state.observations),
            skipped=sorted(self.state.skipped),
            trace=self.trace,
            join=summary,
            inputs=self._inputs,
            memories=self._memories,
            dispatch_counts=self._dispatch_counts,
        )


def run_plan(
    registry: ToolRegistry,
    graph: PlanGraph,
    concurrency_cap: int | None = None,
    trace: RunTrace | None = None,
) -> PlanRun:
    engine = Engine(registry, concurrency_cap, trace)
    for task in graph.tasks:
        engine.add_task(task)
    engine.end_plan()
    return engine.run()


def run_plan_async(
    registry: ToolRegistry,
    graph: PlanGraph,
    on_done: Callable[[PlanRun | BaseException], None],
    concurrency_cap: int | None = None,
) -> threading.Thread:
    """Non-blocking ``run_plan``; ``on_done`` gets the PlanRun or the raised exception."""

    def target():
        try:
            result = run_plan(registry, graph, concurrency_cap)
        except BaseException as exc:
            on_done(exc)
        else:
            on_done(result)

    thread = threading.Thread(target=target, daemon=True)
    thread.start()
    return thread


def run_plan_lockstep(registry: ToolRegistry, graph: PlanGraph) -> PlanRun:
    """Execute in synchronous waves, as if every task took one time unit.

    Each wave runs every ready task, then delivers all completions together.
    ``rounds`` counts waves that contained at least one non-join task.
    """
    trace = RunTrace()
    state = FetchState.from_graph(graph)
    ready = state.initial_ready()
    rounds = 0
    inputs: dict[int, list[Any]] = {}
    counts: dict[int, int] = {}
    memories: dict[int, TaskMemory] = {}
    while True:
        wave = [tid for tid in ready if not state.tasks[tid].is_join]
        join_ready = len(wave) != len(ready)
        if join_ready:
            break
        if not wave:
            raise PlanError("no runnable tasks and join not ready")
        rounds += 1
        results = []
        for tid in wave:
            task = state.tasks[tid]
            args = substitute(task.args, state.observations)
            inputs[tid] = args
            counts[tid] = counts.get(tid, 0) + 1
            memories[tid] = TaskMemory(tid)
            trace.record("dispatch", tid, task.tool, t_ms=float(rounds - 1))
            results.append(execute_task(registry, task, args, memories[tid]))
        ready = []
        for obs in results:
            trace.record("complete", obs.task_id, state.tasks[obs.task_id].tool, obs.ok, t_ms=float(rounds))
            newly, _ = state.on_task_done(obs)
            ready.extend(newly)
        ready.sort()
    trace.record("join", graph.join_id, JOIN, True, t_ms=float(rounds))
    summary = JoinSummary(dict(state.tasks), dict(state.observations), sorted(state.skipped), graph.join_id)
    return PlanRun(
        observations=dict(state.observations),
        skipped=sorted(state.skipped),
        trace=trace,
        join=summary,
        inputs=inputs,
        memories=memories,
        dispatch_counts=counts,
        rounds=rounds,
    )

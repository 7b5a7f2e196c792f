"""Task Fetching Unit: completion tracking, placeholder substitution, greedy dispatch."""

from __future__ import annotations

import threading
from dataclasses import dataclass
from decimal import Decimal
from fractions import Fraction
from typing import Any, Iterable, Mapping

from .plan_ir import (
    PLACEHOLDER_RE,
    ArgValue,
    GraphBuilder,
    ListOf,
    Number,
    PlanGraph,
    Ref,
    TaskSpec,
    Text,
)


class FetchError(RuntimeError):
    pass


class MissingObservation(FetchError):
    pass


class DuplicateObservation(FetchError):
    pass


class UnknownTask(FetchError):
    pass


@dataclass(frozen=True)
class Observation:
    task_id: int
    value: Any = None
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None

    @classmethod
    def failure(cls, task_id: int, error: str) -> "Observation":
        return cls(task_id, None, error)


def render_value(value: Any) -> str:
    """Deterministic text form used when an observation lands inside a string template."""
    if isinstance(value, str):
        return value
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, int):
        return str(value)
    if isinstance(value, Fraction):
        if value.denominator == 1:
            return str(value.numerator)
        return repr(float(value))
    if isinstance(value, float):
        if value.is_integer() and abs(value) < 2**53:
            return str(int(value))
        return repr(value)
    if isinstance(value, Decimal):
        return format(value.normalize(), "f") if value == value.to_integral() else str(value)
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(render_value(v) for v in value) + "]"
    return str(value)


def _lookup(task_id: int, observations: Mapping[int, Observation]) -> Observation:
    obs = observations.get(task_id)
    if obs is None or not obs.ok:
        raise MissingObservation(f"no successful observation for ${task_id}")
    return obs


def _substitute_one(arg: ArgValue, observations: Mapping[int, Observation]) -> Any:
    if isinstance(arg, Ref):
        return _lookup(arg.id, observations).value
    if isinstance(arg, Text):
        return PLACEHOLDER_RE.sub(
            lambda m: render_value(_lookup(int(m.group(1)), observations).value), arg.template
        )
    if isinstance(arg, Number):
        return arg.value
    if isinstance(arg, ListOf):
        return [_substitute_one(a, observations) for a in arg.items]
    raise TypeError(f"not an argument value: {arg!r}")


def substitute(args: Iterable[ArgValue], observations: Mapping[int, Observation]) -> list[Any]:
    return [_substitute_one(a, observations) for a in args]


class FetchState:
    """Completion state for one planning round.

    Tasks may be added incrementally (streamed planning) or all at once from a
    validated graph. Every mutating method holds a single lock, so completion
    callbacks from concurrent workers are serialized.
    """

    def __init__(self):
        self.builder = GraphBuilder()
        self.tasks: dict[int, TaskSpec] = {}
        self.deps: dict[int, set[int]] = {}
        self.dependents: dict[int, set[int]] = {}
        self.observations: dict[int, Observation] = {}
        self.dispatched: set[int] = set()
        self.skipped: set[int] = set()
        self._lock = threading.RLock()

    @classmethod
    def from_graph(cls, graph: PlanGraph) -> "FetchState":
        state = cls()
        for task in graph.tasks:
            state._register(task)
        return state

    @property
    def join_id(self) -> int | None:
        return self.builder.join_id

    @property
    def resolved(self) -> set[int]:
        return set(self.observations) | self.skipped

    def graph(self) -> PlanGraph:
        return self.builder.graph()

    def _register(self, task: TaskSpec) -> None:
        deps = self.builder.add(task)
        self.tasks[task.id] = task
        self.deps[task.id] = deps
        self.dependents.setdefault(task.id, set())
        for d in deps:
            self.dependents[d].add(task.id)

    def _is_ready(self, tid: int) -> bool:
        if tid in self.dispatched or tid in self.skipped:
            return False
        deps = self.deps[tid]
        if self.tasks[tid].is_join:
            return deps <= self.resolved
        return all(d in self.observations and self.observations[d].ok for d in deps)

    def _is_doomed(self, tid: int) -> bool:
        if self.tasks[tid].is_join:
            return False
        return any(
            d in self.skipped or (d in self.observations and not self.observations[d].ok)
            for d in self.deps[tid]
        )

    def _skip_from(self, roots: Iterable[int]) -> list[int]:
        newly: list[int] = []
        stack = list(roots)
        while stack:
            tid = stack.pop()
            for dep in self.dependents.get(tid, ()):
                if self.tasks[dep].is_join or dep in self.skipped:
                    continue
                assert dep not in self.dispatched, f"${dep} dispatched despite failed ${tid}"
                self.skipped.add(dep)
                newly.append(dep)
                stack.append(dep)
        return sorted(newly)

    def _collect_ready(self, candidates: Iterable[int]) -> list[int]:
        ready = sorted(tid for tid in set(candidates) if self._is_ready(tid))
        self.dispatched.update(ready)
        return ready

    def initial_ready(self) -> list[int]:
        with self._lock:
            return self._collect_ready(self.tasks)

    def add_task(self, task: TaskSpec) -> tuple[list[int], list[int]]:
        """Register a streamed task; returns (ready, skipped) among the new task."""
        with self._lock:
            self._register(task)
            if self._is_doomed(task.id):
                self.skipped.add(task.id)
                return [], [task.id]
            return self._collect_ready([task.id]), []

    def on_task_done(self, obs: Observation) -> tuple[list[int], list[int]]:
        with self._lock:
            tid = obs.task_id
            if tid not in self.tasks:
                raise UnknownTask(f"observation for unknown task ${tid}")
            if tid in self.observations:
                raise DuplicateObservation(f"second observation for ${tid}")
            if tid not in self.dispatched:
                raise FetchError(f"observation for undispatched task ${tid}")
            self.observations[tid] = obs
            skipped = [] if obs.ok else self._skip_from([tid])
            candidates = set(self.dependents.get(tid, ()))
            for s in skipped:
                candidates |= self.dependents.get(s, set())
            if self.join_id is not None:
                candidates.add(self.join_id)
            ready = self._collect_ready(candidates)
            for r in ready:
                if not self.tasks[r].is_join:
                    for d in self.deps[r]:
                        assert self.observations[d].ok
            return ready, skipped

    def done(self) -> bool:
        jid = self.join_id
        return jid is not None and jid in self.dispatched


def initial_dispatch(graph: PlanGraph) -> tuple[FetchState, list[int]]:
    state = FetchState.from_graph(graph)
    return state, state.initial_ready()


def on_task_done(state: FetchState, obs: Observation) -> tuple[FetchState, list[int], list[int]]:
    ready, skipped = state.on_task_done(obs)
    return state, ready, skipped

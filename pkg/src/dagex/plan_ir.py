"""In-memory plan representation: tasks, argument values, placeholders and the DAG."""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from decimal import Decimal
from graphlib import CycleError, TopologicalSorter
from typing import Iterable, Union

JOIN = "join"

PLACEHOLDER_RE = re.compile(r"\$(\d+)")


class PlanError(ValueError):
    """Structural problem with a plan."""


class DuplicateId(PlanError):
    pass


class NonMonotonicId(PlanError):
    pass


class ForwardReference(PlanError):
    pass


class DanglingReference(PlanError):
    pass


class MissingJoin(PlanError):
    pass


class MultipleJoin(PlanError):
    pass


class TaskAfterJoin(PlanError):
    pass


@dataclass(frozen=True)
class Text:
    template: str

    @property
    def placeholders(self) -> frozenset[int]:
        return frozenset(int(m) for m in PLACEHOLDER_RE.findall(self.template))


@dataclass(frozen=True)
class Number:
    value: Decimal


@dataclass(frozen=True)
class ListOf:
    items: tuple["ArgValue", ...]


@dataclass(frozen=True)
class Ref:
    id: int


ArgValue = Union[Text, Number, ListOf, Ref]


def arg_refs(arg: ArgValue) -> set[int]:
    """Every task id an argument mentions, at any nesting depth."""
    if isinstance(arg, Ref):
        return {arg.id}
    if isinstance(arg, Text):
        return set(arg.placeholders)
    if isinstance(arg, ListOf):
        out: set[int] = set()
        for item in arg.items:
            out |= arg_refs(item)
        return out
    return set()


@dataclass(frozen=True)
class TaskSpec:
    id: int
    tool: str
    args: tuple[ArgValue, ...] = ()
    thought: str | None = None

    def __post_init__(self):
        if self.id < 1:
            raise PlanError(f"task id must be >= 1, got {self.id}")
        if not self.tool:
            raise PlanError(f"task {self.id} has an empty tool name")

    @property
    def is_join(self) -> bool:
        return self.tool == JOIN

    @property
    def deps(self) -> frozenset[int]:
        """Ids referenced by the arguments. The join's implicit edges are not included."""
        out: set[int] = set()
        for arg in self.args:
            out |= arg_refs(arg)
        return frozenset(out)


@dataclass(frozen=True)
class PlanGraph:
    tasks: tuple[TaskSpec, ...]
    edges: frozenset[tuple[int, int]]
    join_id: int
    _preds: dict[int, frozenset[int]] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        preds: dict[int, set[int]] = {t.id: set() for t in self.tasks}
        for src, dst in self.edges:
            preds[dst].add(src)
        object.__setattr__(self, "_preds", {k: frozenset(v) for k, v in preds.items()})

    @property
    def ids(self) -> list[int]:
        return [t.id for t in self.tasks]

    def task(self, task_id: int) -> TaskSpec:
        for t in self.tasks:
            if t.id == task_id:
                return t
        raise KeyError(task_id)

    def predecessors(self, task_id: int) -> frozenset[int]:
        return self._preds[task_id]

    def successors(self, task_id: int) -> set[int]:
        return {dst for src, dst in self.edges if src == task_id}

    def topological_order(self) -> list[int]:
        ts = TopologicalSorter({tid: set(p) for tid, p in self._preds.items()})
        return list(ts.static_order())


class GraphBuilder:
    """Validates tasks one at a time, in emission order.

    Streaming planners use this directly; ``build_graph`` is the batch wrapper.
    """

    def __init__(self):
        self.tasks: list[TaskSpec] = []
        self.edges: set[tuple[int, int]] = set()
        self.join_id: int | None = None
        self._ids: set[int] = set()

    @property
    def finished(self) -> bool:
        return self.join_id is not None

    def add(self, task: TaskSpec) -> set[int]:
        """Validate and append ``task``; return its dependency ids (all prior ids for join)."""
        if self.join_id is not None:
            if task.is_join:
                raise MultipleJoin(f"second join task ${task.id} (join already at ${self.join_id})")
            raise TaskAfterJoin(f"task ${task.id} appears after join ${self.join_id}")
        if task.id in self._ids:
            raise DuplicateId(f"task id {task.id} used twice")
        if self.tasks and task.id < self.tasks[-1].id:
            raise NonMonotonicId(f"task id {task.id} follows {self.tasks[-1].id}")
        for ref in sorted(task.deps):
            if ref >= task.id:
                raise ForwardReference(f"task ${task.id} references ${ref}")
            if ref not in self._ids:
                raise DanglingReference(f"task ${task.id} references unknown ${ref}")
        if task.is_join:
            deps = set(self._ids)
            self.join_id = task.id
        else:
            deps = set(task.deps)
        self.edges |= {(d, task.id) for d in deps}
        self.tasks.append(task)
        self._ids.add(task.id)
        return deps

    def graph(self) -> PlanGraph:
        if self.join_id is None:
            raise MissingJoin("plan has no join task")
        return PlanGraph(tuple(self.tasks), frozenset(self.edges), self.join_id)


def build_graph(tasks: Iterable[TaskSpec]) -> PlanGraph:
    tasks = list(tasks)
    if not tasks:
        raise MissingJoin("empty plan")
    builder = GraphBuilder()
    for task in tasks:
        builder.add(task)
    graph = builder.graph()
    try:
        graph.topological_order()
    except CycleError as exc:  # unreachable given the forward-reference ban
        raise PlanError(f"dependency cycle: {exc.args[1]}") from exc
    return graph


def ready_set(graph: PlanGraph, completed: Iterable[int]) -> list[int]:
    done = set(completed)
    return sorted(
        t.id
        for t in graph.tasks
        if t.id not in done and graph.predecessors(t.id) <= done
    )


def critical_path_length(graph: PlanGraph, include_join: bool = False) -> int:
    """Number of tasks on the longest dependency chain."""
    depth: dict[int, int] = {}
    for tid in graph.topological_order():
        if tid == graph.join_id and not include_join:
            continue
        preds = [depth[p] for p in graph.predecessors(tid) if p in depth]
        depth[tid] = 1 + max(preds, default=0)
    return max(depth.values(), default=0)

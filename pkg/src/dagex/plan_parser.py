"""Line-oriented plan DSL parser, batch and incremental.

Accepted task line forms::

    1. search("Mission Impossible")
    $3 = math("$1 / $2")

A quoted argument consisting of nothing but ``"$N"`` is read as a bare
reference, so the observation keeps its kind (lists stay lists).
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from decimal import Decimal

from .plan_ir import ArgValue, ListOf, Number, Ref, TaskSpec, Text

_ID_PREFIX = re.compile(r"(?:(\d+)\.[ \t]+|\$(\d+)[ \t]*=[ \t]*)")
_IDENT = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")
_NUMBER = re.compile(r"-?\d+(?:\.\d+)?")
_REF = re.compile(r"\$(\d+)")
_SOLE_REF = re.compile(r"\$(\d+)\Z")


class PlanSyntaxError(ValueError):
    def __init__(self, line_no: int, reason: str, line: str = ""):
        super().__init__(f"line {line_no}: {reason}: {line!r}")
        self.line_no = line_no
        self.reason = reason
        self.line = line


class _ArgParser:
    def __init__(self, text: str):
        self.s = text
        self.i = 0

    def error(self, msg: str):
        raise ValueError(f"{msg} at column {self.i}")

    def ws(self):
        while self.i < len(self.s) and self.s[self.i] in " \t":
            self.i += 1

    def peek(self) -> str:
        return self.s[self.i] if self.i < len(self.s) else ""

    def expect(self, ch: str):
        self.ws()
        if self.peek() != ch:
            self.error(f"expected {ch!r}")
        self.i += 1

    def arg_list(self, close: str) -> list[ArgValue]:
        items: list[ArgValue] = []
        self.ws()
        if self.peek() == close:
            self.i += 1
            return items
        while True:
            items.append(self.arg())
            self.ws()
            ch = self.peek()
            self.i += 1
            if ch == close:
                return items
            if ch != ",":
                self.i -= 1
                self.error(f"expected ',' or {close!r}")

    def arg(self) -> ArgValue:
        self.ws()
        ch = self.peek()
        if ch == '"':
            return self.string()
        if ch == "[":
            self.i += 1
            return ListOf(tuple(self.arg_list("]")))
        if ch == "$":
            m = _REF.match(self.s, self.i)
            if not m:
                self.error("expected digits after '$'")
            self.i = m.end()
            return Ref(int(m.group(1)))
        m = _NUMBER.match(self.s, self.i)
        if m:
            self.i = m.end()
            return Number(Decimal(m.group(0)))
        self.error("expected an argument")

    def string(self) -> ArgValue:
        self.i += 1
        out = []
        while True:
            if self.i >= len(self.s):
                self.error("unterminated string")
            ch = self.s[self.i]
            if ch == "\\" and self.i + 1 < len(self.s) and self.s[self.i + 1] in '"\\':
                out.append(self.s[self.i + 1])
                self.i += 2
                continue
            if ch == '"':
                self.i += 1
                break
            out.append(ch)
            self.i += 1
        text = "".join(out)
        sole = _SOLE_REF.match(text)
        if sole:
            return Ref(int(sole.group(1)))
        return Text(text)


def parse_task_line(line: str, line_no: int = 0, thought: str | None = None) -> TaskSpec:
    m = _ID_PREFIX.match(line)
    if not m:
        raise PlanSyntaxError(line_no, "not a task line", line)
    task_id = int(m.group(1) or m.group(2))
    rest = line[m.end():]
    name = _IDENT.match(rest)
    if not name:
        raise PlanSyntaxError(line_no, "missing tool name", line)
    p = _ArgParser(rest)
    p.i = name.end()
    try:
        p.expect("(")
        args = p.arg_list(")")
    except ValueError as exc:
        raise PlanSyntaxError(line_no, str(exc), line) from None
    tail = rest[p.i:].strip()
    if tail.startswith("#"):
        raise PlanSyntaxError(line_no, "comments are not allowed in plans", line)
    if tail:
        raise PlanSyntaxError(line_no, "trailing content after task", line)
    if task_id < 1:
        raise PlanSyntaxError(line_no, "task id must be >= 1", line)
    return TaskSpec(task_id, name.group(0), tuple(args), thought)


@dataclass
class ParserState:
    buffer: str = ""
    emitted: int = 0
    pending_thought: str | None = None
    finished: bool = False
    line_no: int = 0
    closed: bool = field(default=False, repr=False)


def _consume_line(state: ParserState, raw: str) -> TaskSpec | None:
    state.line_no += 1
    line = raw.rstrip("\r")
    stripped = line.strip()
    if not stripped or stripped.startswith("###"):
        return None
    if state.finished:
        raise PlanSyntaxError(state.line_no, "content after join", line)
    if stripped.startswith("Thought:"):
        state.pending_thought = stripped[len("Thought:"):].strip()
        return None
    task = parse_task_line(stripped, state.line_no, state.pending_thought)
    state.pending_thought = None
    state.emitted += 1
    if task.is_join:
        state.finished = True
    return task


def feed_chunk(state: ParserState, chunk: str) -> tuple[ParserState, list[TaskSpec]]:
    """Buffer ``chunk`` and return every task whose line is now complete."""
    if state.closed:
        raise ValueError("parser already closed")
    state.buffer += chunk
    out: list[TaskSpec] = []
    while True:
        nl = state.buffer.find("\n")
        if nl < 0:
            break
        raw, state.buffer = state.buffer[:nl], state.buffer[nl + 1:]
        task = _consume_line(state, raw)
        if task is not None:
            out.append(task)
    return state, out


def close(state: ParserState) -> list[TaskSpec]:
    """Flush an unterminated final line and require that a join was seen."""
    out: list[TaskSpec] = []
    if not state.closed:
        state.closed = True
        if state.buffer:
            raw, state.buffer = state.buffer, ""
            task = _consume_line(state, raw)
            if task is not None:
                out.append(task)
    if not state.finished:
        raise PlanSyntaxError(state.line_no + 1, "no join found", "")
    return out


def parse_plan(text: str) -> list[TaskSpec]:
    state, tasks = feed_chunk(ParserState(), text)
    return tasks + close(state)


class StreamParser:
    """Stateful wrapper over ``feed_chunk``/``close``."""

    def __init__(self):
        self.state = ParserState()

    def feed(self, chunk: str) -> list[TaskSpec]:
        return feed_chunk(self.state, chunk)[1]

    def close(self) -> list[TaskSpec]:
        return close(self.state)

    @property
    def finished(self) -> bool:
        return self.state.finished


def _render_string(s: str) -> str:
    return '"' + s.replace("\\", "\\\\").replace('"', '\\"') + '"'


def render_arg(arg: ArgValue) -> str:
    if isinstance(arg, Text):
        return _render_string(arg.template)
    if isinstance(arg, Number):
        return str(arg.value)
    if isinstance(arg, Ref):
        return f"${arg.id}"
    if isinstance(arg, ListOf):
        return "[" + ", ".join(render_arg(a) for a in arg.items) + "]"
    raise TypeError(f"not an argument value: {arg!r}")


def render_task(task: TaskSpec) -> str:
    """Canonical ``$N = tool(args)`` text, preceded by its Thought line if any."""
    line = f"${task.id} = {task.tool}(" + ", ".join(render_arg(a) for a in task.args) + ")"
    if task.thought is not None:
        return f"Thought: {task.thought}\n{line}"
    return line


def render_plan(tasks) -> str:
    return "".join(render_task(t) + "\n" for t in tasks)

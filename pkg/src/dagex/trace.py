"""Timestamped run events, persisted as JSONL."""

from __future__ import annotations

import json
import threading
import time
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable

EVENT_KINDS = ("dispatch", "complete", "plan_token", "join", "replan")


@dataclass(frozen=True)
class TraceEvent:
    t_ms: float
    event: str
    task_id: int | None = None
    tool: str | None = None
    ok: bool | None = None


class RunTrace:
    def __init__(self, clock=time.perf_counter):
        self._clock = clock
        self.t0 = clock()
        self._events: list[TraceEvent] = []
        self._lock = threading.Lock()

    def now_ms(self) -> float:
        return (self._clock() - self.t0) * 1000.0

    def record(self, event: str, task_id=None, tool=None, ok=None, t_ms: float | None = None) -> TraceEvent:
        if event not in EVENT_KINDS:
            raise ValueError(f"unknown trace event {event!r}")
        ev = TraceEvent(self.now_ms() if t_ms is None else t_ms, event, task_id, tool, ok)
        with self._lock:
            self._events.append(ev)
        return ev

    @property
    def events(self) -> list[TraceEvent]:
        with self._lock:
            return sorted(self._events, key=lambda e: e.t_ms)

    def __len__(self) -> int:
        return len(self._events)

    def of_kind(self, event: str) -> list[TraceEvent]:
        return [e for e in self.events if e.event == event]

    def intervals(self) -> dict[int, tuple[float, float]]:
        """task_id -> (dispatch ms, complete ms), for tasks that ran to completion."""
        start: dict[int, float] = {}
        out: dict[int, tuple[float, float]] = {}
        for e in self.events:
            if e.event == "dispatch":
                start[e.task_id] = e.t_ms
            elif e.event == "complete" and e.task_id in start:
                out[e.task_id] = (start.pop(e.task_id), e.t_ms)
        return out

    def max_concurrency(self) -> int:
        points = []
        for s, e in self.intervals().values():
            points.append((s, 1))
            points.append((e, -1))
        # completions sort before dispatches at equal timestamps
        points.sort(key=lambda p: (p[0], p[1]))
        cur = best = 0
        for _, delta in points:
            cur += delta
            best = max(best, cur)
        return best

    def to_jsonl(self) -> str:
        return "".join(json.dumps(asdict(e)) + "\n" for e in self.events)

    def write(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_jsonl())
        return path

    @classmethod
    def from_events(cls, events: Iterable[TraceEvent]) -> "RunTrace":
        trace = cls()
        trace._events = list(events)
        return trace

    @classmethod
    def read(cls, path) -> "RunTrace":
        events = []
        for line in Path(path).read_text().splitlines():
            if line.strip():
                events.append(TraceEvent(**json.loads(line)))
        return cls.from_events(events)

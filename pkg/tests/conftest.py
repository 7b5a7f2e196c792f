import random
from pathlib import Path

import pytest

from dagex.plan_ir import ListOf, Ref, TaskSpec, Text

DATA = Path(__file__).resolve().parents[1] / "src" / "dagex" / "data"


def random_plan(rng: random.Random, max_tasks: int = 12, tool: str = "work", edge_p: float = 0.3) -> list[TaskSpec]:
    """A valid plan of 1..max_tasks tasks (join included) with random backward references."""
    n = rng.randint(1, max_tasks - 1)
    tasks = []
    for i in range(1, n + 1):
        refs = [j for j in range(1, i) if rng.random() < edge_p]
        args = []
        for j in refs:
            form = rng.randrange(3)
            if form == 0:
                args.append(Ref(j))
            elif form == 1:
                args.append(Text(f"input ${j}"))
            else:
                args.append(ListOf((Ref(j),)))
        if not args:
            args.append(Text(f"item {i}"))
        tasks.append(TaskSpec(i, tool, tuple(args)))
    tasks.append(TaskSpec(n + 1, "join"))
    return tasks


def longest_chain(tasks: list[TaskSpec]) -> int:
    """Brute force: enumerate every path by DFS from every task."""
    deps = {t.id: set(t.deps) for t in tasks if not t.is_join}

    def paths_from(tid):
        # longest path ending at tid
        if not deps[tid]:
            return 1
        return 1 + max(paths_from(d) for d in deps[tid])

    return max((paths_from(t) for t in deps), default=0)


@pytest.fixture
def data_dir() -> Path:
    return DATA


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)

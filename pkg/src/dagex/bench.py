"""Mock-workload benchmarks: serialized vs parallel vs streamed execution."""

from __future__ import annotations

import re
import statistics
import time
from dataclasses import asdict, dataclass

from . import agents
from .backends import FunctionBackend
from .executor import ToolRegistry, ToolSpec, mock_tool
from .latency import WorkloadProfile, simulate_trace, speedup
from .plan_ir import build_graph
from .plan_parser import parse_plan
from .replan import ExhaustedRounds, RunConfig, run
from .tools.game24 import game24_tools

_PATTERN = re.compile(r"^(parallel|chain)-(\d+)$|^(fig2|game24)$")
MAX_N = 64


def parse_pattern(pattern: str) -> tuple[str, int]:
    m = _PATTERN.match(pattern)
    if not m:
        raise ValueError(f"unknown bench pattern {pattern!r} (parallel-N, chain-N, fig2, game24)")
    if m.group(3):
        return m.group(3), 0
    n = int(m.group(2))
    if not 1 <= n <= MAX_N:
        raise ValueError(f"N must be in [1, {MAX_N}]")
    return m.group(1), n


def plan_text(kind: str, n: int = 0) -> str:
    if kind == "parallel":
        lines = [f'${i} = work("item {i}")' for i in range(1, n + 1)]
        lines.append(f"${n + 1} = join()")
    elif kind == "chain":
        lines = ['$1 = work("item 1")'] + [f'${i} = work("$%d")' % (i - 1) for i in range(2, n + 1)]
        lines.append(f"${n + 1} = join()")
    elif kind == "fig2":
        lines = [
            '$1 = search("Microsoft Market Cap")',
            '$2 = search("Apple Market Cap")',
            '$3 = math("$1 / $2")',
            "$4 = join()",
        ]
    else:
        raise ValueError(kind)
    return "\n".join(lines) + "\n"


def with_latency(spec: ToolSpec, latency: float) -> ToolSpec:
    inner = spec.run

    def run_slow(*args, **kwargs):
        time.sleep(latency)
        return inner(*args, **kwargs)

    return ToolSpec(spec.name, spec.description, run_slow, spec.arg_schema, spec.timeout, latency, spec.with_memory)


def _registry(kind: str, latency: float) -> ToolRegistry:
    if kind == "game24":
        return ToolRegistry(with_latency(t, latency) for t in game24_tools())
    if kind == "fig2":
        return ToolRegistry([mock_tool("search", latency), mock_tool("math", latency)])
    return ToolRegistry([mock_tool("work", latency)])


def _config(kind: str, n: int, latency: float, plan_delay: float, cap, streaming: bool) -> RunConfig:
    if kind == "game24":
        planner = FunctionBackend(agents.game24_planner, delay=plan_delay)
        answerer = FunctionBackend(agents.game24_answerer)
    else:
        text = plan_text(kind, n)
        planner = FunctionBackend(lambda _prompt: text, delay=plan_delay)
        answerer = FunctionBackend(agents.last_observation_answerer)
    return RunConfig(_registry(kind, latency), planner, answerer, max_replans=4,
                     streaming=streaming, concurrency_cap=cap)


def _time_run(config: RunConfig, query: str) -> float:
    t0 = time.perf_counter()
    try:
        run(config, query)
    except ExhaustedRounds:
        pass
    return (time.perf_counter() - t0) * 1000.0


@dataclass
class BenchResult:
    pattern: str
    trials: int
    sequential_ms: float
    parallel_ms: float
    streamed_ms: float
    speedup: float
    predicted_sequential_ms: float | None
    predicted_parallel_ms: float | None
    predicted_streamed_ms: float | None
    gamma_analytic: float | None

    def as_dict(self) -> dict:
        return {k: (round(v, 3) if isinstance(v, float) else v) for k, v in asdict(self).items()}


def predictions(kind: str, n: int, latency: float, plan_delay: float):
    """Simulated makespans (ms) for the three modes, plus the closed-form speedup where it applies."""
    if kind == "game24":
        return None, None, None, None
    graph = build_graph(parse_plan(plan_text(kind, n)))
    lines = len(graph.tasks)
    emissions = [i * plan_delay for i in range(lines)]
    durations = {t.id: latency for t in graph.tasks if not t.is_join}
    seq = simulate_trace(graph, durations, emissions, streaming=False, cap=1).makespan
    par = simulate_trace(graph, durations, emissions, streaming=False).makespan
    stream = simulate_trace(graph, durations, emissions, streaming=True).makespan
    gamma = None
    if kind == "parallel":
        gamma = float(speedup(WorkloadProfile.uniform(n, plan_delay, latency)).gamma)
    return seq * 1000, par * 1000, stream * 1000, gamma


def bench(pattern: str, trials: int = 3, latency_ms: float = 500.0, plan_delay_ms: float = 0.0,
          query: str | None = None) -> BenchResult:
    if trials < 1:
        raise ValueError("trials must be >= 1")
    kind, n = parse_pattern(pattern)
    latency, delay = latency_ms / 1000.0, plan_delay_ms / 1000.0
    query = query or ("2 4 4 7" if kind == "game24" else f"bench {pattern}")
    modes = {"sequential": (1, False), "parallel": (None, False), "streamed": (None, True)}
    times: dict[str, list[float]] = {m: [] for m in modes}
    for _ in range(trials):
        for mode, (cap, streaming) in modes.items():
            times[mode].append(_time_run(_config(kind, n, latency, delay, cap, streaming), query))
    med = {m: statistics.median(v) for m, v in times.items()}
    pred = predictions(kind, n, latency, delay)
    return BenchResult(
        pattern, trials, med["sequential"], med["parallel"], med["streamed"],
        med["sequential"] / med["parallel"], *pred,
    )

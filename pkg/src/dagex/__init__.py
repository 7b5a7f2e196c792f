"""Parallel function-calling orchestration: plan DAGs, greedy dispatch, streaming and replanning."""

from .executor import ToolRegistry, ToolSpec, mock_tool, run_plan
from .plan_ir import PlanGraph, TaskSpec, build_graph, ready_set
from .plan_parser import parse_plan
from .replan import ExhaustedRounds, Finish, Replan, RunConfig, run, run_round

__version__ = "0.1.0"

__all__ = [
    "ExhaustedRounds",
    "Finish",
    "PlanGraph",
    "Replan",
    "RunConfig",
    "TaskSpec",
    "ToolRegistry",
    "ToolSpec",
    "build_graph",
    "mock_tool",
    "parse_plan",
    "ready_set",
    "run",
    "run_plan",
    "run_round",
]

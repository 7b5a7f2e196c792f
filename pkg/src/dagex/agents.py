"""Deterministic planner/answerer functions for hermetic runs.

Each takes the full prompt text and returns what a well-behaved LLM would:
a plan in the DSL (planners) or a ``FINISH:``/``REPLAN:`` reply (answerers).
Wrap them in :class:`dagex.backends.FunctionBackend`.
"""

from __future__ import annotations

import json
import re

from .tools.game24 import GameState, parse_puzzle, solution_expression

_QUESTION = re.compile(r"^Question: (.*)$", re.M)
_STATE_LIST = re.compile(r",\s*state_list:\s*(\[.*\])\s*$")
_OBS_LINE = re.compile(r"^\$(\d+) (\w+): (.*)$", re.M)


def last_question(prompt: str) -> str:
    found = _QUESTION.findall(prompt)
    if not found:
        raise ValueError("prompt has no Question: line")
    return found[-1]


def _split_question(line: str) -> tuple[str, list[str] | None]:
    m = _STATE_LIST.search(line)
    if not m:
        return line.strip(), None
    return line[: m.start()].strip(), json.loads(m.group(1))


def game24_plan(puzzle: str, states: list[str]) -> str:
    """Propose from every carried state, evaluate each proposal list, keep the top k."""
    if not states:
        return "$1 = join()\n"
    q = json.dumps(puzzle)
    n = len(states)
    lines = [f"$%d = thought_proposer({q}, {json.dumps(s)})" % (i + 1) for i, s in enumerate(states)]
    lines += [f"${n + i + 1} = state_evaluator({q}, \"${i + 1}\")" for i in range(n)]
    props = ", ".join(f'"${i + 1}"' for i in range(n))
    evals = ", ".join(f'"${n + i + 1}"' for i in range(n))
    lines.append(f"${2 * n + 1} = top_k_select({q}, [{props}], [{evals}])")
    lines.append(f"${2 * n + 2} = join()")
    return "\n".join(lines) + "\n"


def game24_planner(prompt: str) -> str:
    question, states = _split_question(last_question(prompt))
    puzzle = " ".join(str(n) for n in parse_puzzle(question))
    return game24_plan(puzzle, [""] if states is None else states)


def observation_lines(prompt: str) -> list[tuple[int, str, str]]:
    _, _, tail = prompt.partition("Observations:\n")
    return [(int(i), tool, value) for i, tool, value in _OBS_LINE.findall(tail)]


def game24_answerer(prompt: str) -> str:
    puzzle = parse_puzzle(_split_question(last_question(prompt))[0])
    selected: list[str] = []
    for _, tool, value in observation_lines(prompt):
        if tool == "top_k_select" and not value.startswith(("ERROR", "SKIPPED")):
            selected = json.loads(value)
    for text in selected:
        state = GameState.parse(puzzle, text)
        if state.is_solved():
            return f"FINISH: {solution_expression(state)}\n"
    return "REPLAN: " + json.dumps(selected, separators=(",", ":")) + "\n"


def last_observation_answerer(prompt: str) -> str:
    """Answer with the highest-numbered successful observation."""
    good = [
        value for _, _, value in observation_lines(prompt)
        if not value.startswith(("ERROR", "SKIPPED"))
    ]
    if not good:
        return "REPLAN: no successful observations\n"
    return f"FINISH: {good[-1]}\n"

"""Exact Game-of-24 tools: propose successor states, judge solvability, keep the top k.

A state is written as its history of steps joined by ``"; "``, each step like
``8/(8/3)=3(left:3 3)``. The empty string is the starting state. Fractions
appear parenthesized inside a step and bare in the ``left:`` list.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from itertools import combinations
from typing import Sequence

from ..executor import ToolSpec

TARGET = Fraction(24)
DEFAULT_K = 5
LABELS = ("sure", "likely", "impossible")
_RANK = {label: i for i, label in enumerate(LABELS)}
STEP_SEP = "; "

_OPERAND = r"\(-?\d+/\d+\)|-?\d+"
_STEP = re.compile(rf"^({_OPERAND})([-+*/])({_OPERAND})=({_OPERAND})\(left:(.*)\)$")


class TerminalState(ValueError):
    pass


class LengthMismatch(ValueError):
    pass


class InvalidState(ValueError):
    pass


def parse_puzzle(puzzle) -> tuple[int, ...]:
    if isinstance(puzzle, str):
        nums = tuple(int(x) for x in puzzle.replace('"', " ").split())
    else:
        nums = tuple(int(x) for x in puzzle)
    if len(nums) != 4:
        raise ValueError(f"a puzzle has four numbers, got {puzzle!r}")
    return nums


def fmt_operand(q: Fraction) -> str:
    return str(q.numerator) if q.denominator == 1 else f"({q.numerator}/{q.denominator})"


def fmt_left(q: Fraction) -> str:
    return str(q.numerator) if q.denominator == 1 else f"{q.numerator}/{q.denominator}"


def _parse_operand(text: str) -> Fraction:
    return Fraction(text.strip("()"))


def apply_op(a: Fraction, op: str, b: Fraction) -> Fraction:
    if op == "+":
        return a + b
    if op == "-":
        return a - b
    if op == "*":
        return a * b
    if op == "/":
        if b == 0:
            raise ZeroDivisionError("division by zero")
        return a / b
    raise ValueError(f"unknown operator {op!r}")


@dataclass(frozen=True)
class Step:
    a: Fraction
    op: str
    b: Fraction
    result: Fraction
    left: tuple[Fraction, ...]

    def text(self) -> str:
        left = " ".join(fmt_left(q) for q in self.left)
        return f"{fmt_operand(self.a)}{self.op}{fmt_operand(self.b)}={fmt_operand(self.result)}(left:{left})"

    @classmethod
    def parse(cls, text: str) -> "Step":
        m = _STEP.match(text.strip())
        if not m:
            raise InvalidState(f"malformed step {text!r}")
        a, op, b, result, left = m.groups()
        return cls(
            _parse_operand(a), op, _parse_operand(b), _parse_operand(result),
            tuple(Fraction(x) for x in left.split()),
        )


@dataclass(frozen=True)
class GameState:
    original: tuple[int, ...]
    history: tuple[Step, ...] = ()

    @property
    def remaining(self) -> tuple[Fraction, ...]:
        if self.history:
            return self.history[-1].left
        return tuple(sorted(Fraction(n) for n in self.original))

    def text(self) -> str:
        return STEP_SEP.join(s.text() for s in self.history)

    @classmethod
    def parse(cls, puzzle, text: str) -> "GameState":
        """Parse and replay a state string against the puzzle, rejecting inconsistent histories."""
        original = parse_puzzle(puzzle)
        text = (text or "").strip()
        steps = tuple(Step.parse(s) for s in text.split(";") if s.strip()) if text else ()
        pool = sorted(Fraction(n) for n in original)
        for step in steps:
            for operand in (step.a, step.b):
                if operand not in pool:
                    raise InvalidState(f"step {step.text()!r} uses {operand} which is not available")
                pool.remove(operand)
            try:
                value = apply_op(step.a, step.op, step.b)
            except ZeroDivisionError:
                raise InvalidState(f"step {step.text()!r} divides by zero") from None
            if value != step.result:
                raise InvalidState(f"step {step.text()!r} is arithmetically wrong")
            pool = sorted(pool + [value])
            if tuple(pool) != tuple(sorted(step.left)):
                raise InvalidState(f"step {step.text()!r} lists the wrong remaining numbers")
        if len(steps) > 3:
            raise InvalidState("more than three steps")
        return cls(original, steps)

    def is_solved(self) -> bool:
        return len(self.history) == 3 and self.remaining == (TARGET,)


@lru_cache(maxsize=None)
def _solvable(nums: tuple[Fraction, ...]) -> bool:
    if len(nums) == 1:
        return nums[0] == TARGET
    for i, j in combinations(range(len(nums)), 2):
        a, b = nums[i], nums[j]
        rest = [nums[k] for k in range(len(nums)) if k not in (i, j)]
        results = {a + b, a - b, b - a, a * b}
        if b != 0:
            results.add(a / b)
        if a != 0:
            results.add(b / a)
        for r in results:
            if _solvable(tuple(sorted(rest + [r]))):
                return True
    return False


def solvable(nums: Sequence) -> bool:
    return _solvable(tuple(sorted(Fraction(n) for n in nums)))


def successors(state: GameState) -> list[GameState]:
    rem = list(state.remaining)
    if len(rem) < 2:
        raise TerminalState(f"no moves left from {state.text()!r}")
    out: list[GameState] = []
    seen: set[tuple] = set()
    for i, j in combinations(range(len(rem)), 2):
        a, b = rem[i], rem[j]
        rest = [rem[k] for k in range(len(rem)) if k not in (i, j)]
        candidates = [(a, "+", b), (a, "*", b), (b, "-", a), (a, "-", b)]
        if a != 0:
            candidates.append((b, "/", a))
        if b != 0:
            candidates.append((a, "/", b))
        for x, op, y in candidates:
            value = apply_op(x, op, y)
            left = tuple(sorted(rest + [value]))
            step = Step(x, op, y, value, left)
            key = (left, step.text())
            if key in seen:
                continue
            seen.add(key)
            out.append(GameState(state.original, state.history + (step,)))
    return out


def thought_proposer(puzzle, state) -> list[GameState]:
    if isinstance(state, str):
        state = GameState.parse(puzzle, state)
    return successors(state)


def state_evaluator(puzzle, state) -> str:
    if isinstance(state, str):
        state = GameState.parse(puzzle, state)
    if state.remaining == (TARGET,):
        return "sure"
    return "sure" if solvable(state.remaining) else "impossible"


def top_k_select(puzzle, states: Sequence, labels: Sequence[str], k: int = DEFAULT_K) -> list:
    if len(states) != len(labels):
        raise LengthMismatch(f"{len(states)} states but {len(labels)} labels")
    if k < 1:
        raise ValueError("k must be positive")
    for label in labels:
        if label not in _RANK:
            raise ValueError(f"unknown label {label!r}")
    order = sorted(range(len(states)), key=lambda i: _RANK[labels[i]])
    kept = [states[i] for i in order if labels[i] != "impossible"]
    return kept[:k]


def solution_expression(state: GameState) -> str:
    """Fully parenthesized expression over the original numbers for a solved state."""
    pool: list[tuple[Fraction, str]] = [(Fraction(n), str(n)) for n in state.original]
    for step in state.history:
        exprs = []
        for operand in (step.a, step.b):
            idx = next(i for i, (v, _) in enumerate(pool) if v == operand)
            exprs.append(pool.pop(idx)[1])
        pool.append((step.result, f"({exprs[0]} {step.op} {exprs[1]})"))
    if len(pool) != 1:
        raise InvalidState("state is not complete")
    expr = pool[0][1]
    return expr[1:-1] if expr.startswith("(") and expr.endswith(")") else expr


def check_solution(puzzle, expression: str) -> bool:
    """True when ``expression`` uses each puzzle number exactly once and equals 24 exactly."""
    from .arith import DivisionByZero, ParseError, evaluate

    used = sorted(int(n) for n in re.findall(r"\d+", expression))
    if used != sorted(parse_puzzle(puzzle)):
        return False
    if re.search(r"\d\s*\.|\.\s*\d", expression):
        return False
    try:
        return evaluate(expression) == TARGET
    except (ParseError, DivisionByZero):
        return False


# Plan-level wrappers. Planner plans pass whole observation lists between these
# tools ("$1" is a list of states, top_k_select gets lists of lists).

def _flatten(values) -> list:
    if isinstance(values, (list, tuple)):
        out = []
        for v in values:
            out.extend(_flatten(v))
        return out
    return [values]


def _propose_texts(puzzle, state) -> list[str]:
    return [s.text() for s in thought_proposer(puzzle, state)]


def _evaluate_texts(puzzle, states):
    if isinstance(states, (list, tuple)):
        return [state_evaluator(puzzle, s) for s in _flatten(states)]
    return state_evaluator(puzzle, states)


def _select_texts(puzzle, states, labels, k=DEFAULT_K):
    return top_k_select(puzzle, _flatten(states), _flatten(labels), int(k))


def game24_tools(k: int = DEFAULT_K) -> list[ToolSpec]:
    return [
        ToolSpec(
            name="thought_proposer",
            description=(
                "thought_proposer(puzzle: text, state: text) -> list of states: every state reachable by "
                "combining two remaining numbers with + - * /. The empty state means the start."
            ),
            run=_propose_texts,
            arg_schema=[("puzzle", "text"), ("state", "text")],
        ),
        ToolSpec(
            name="state_evaluator",
            description=(
                "state_evaluator(puzzle: text, states: list of states) -> list of labels: "
                "'sure' if the remaining numbers can still reach 24, else 'impossible'."
            ),
            run=_evaluate_texts,
            arg_schema=[("puzzle", "text"), ("states", "any")],
        ),
        ToolSpec(
            name="top_k_select",
            description=(
                f"top_k_select(puzzle: text, states: list, labels: list) -> list of states: the best {k} "
                "states ranked sure > likely > impossible; impossible states are dropped."
            ),
            run=lambda puzzle, states, labels: _select_texts(puzzle, states, labels, k),
            arg_schema=[("puzzle", "text"), ("states", "list"), ("labels", "list")],
        ),
    ]

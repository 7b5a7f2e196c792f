"""Plan -> execute -> join loop with dynamic replanning."""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from typing import Sequence

from .backends import Backend, CompletionRequest
from .executor import Engine, JoinSummary, PlanRun, ToolRegistry, ToolSpec, run_plan
from .plan_ir import PlanError, build_graph
from .plan_parser import PlanSyntaxError, StreamParser, parse_plan
from .trace import RunTrace

DEFAULT_MAX_REPLANS = 4

PLANNER_RULES = """\
 - Every action above lists its input and output types; use exactly those types.
 - Follow the usage notes given in each action's description.
 - Write each action as a Python-style call to one of the actions above, one action per line.
 - Give every action a unique numeric ID; IDs must strictly increase.
 - An input is either a constant or the output of an earlier action; write $id to use the output of action id.
 - Arrange the plan so that as many actions as possible can run in parallel.
 - If the listed actions cannot address the query, call join to hand over to the next step.
 - Do not add comments (such as #) to the plan.
 - Do not invent actions that are not listed."""

JOIN_DESCRIPTION = "join(): collects the outputs of all previous actions. It is always the last action of a plan."

ANSWER_INSTRUCTIONS = """\
Decide whether the observations below answer the question.
Your first line must be either
FINISH: <the final answer>
or
REPLAN: <the intermediate state the next plan should start from>"""


class PlannerSyntaxError(RuntimeError):
    """The planner produced a plan that does not parse or does not form a valid DAG."""

    def __init__(self, message: str, raw_text: str):
        super().__init__(f"{message}\n--- plan text ---\n{raw_text}")
        self.raw_text = raw_text


class AnswerProtocolError(RuntimeError):
    pass


class ExhaustedRounds(RuntimeError):
    def __init__(self, carry_state: str | None, rounds: int, trace: RunTrace):
        super().__init__(f"no final answer after {rounds} planning rounds")
        self.carry_state = carry_state
        self.rounds = rounds
        self.trace = trace


@dataclass(frozen=True)
class Finish:
    answer: str

    def __post_init__(self):
        if not self.answer.strip():
            raise AnswerProtocolError("FINISH with an empty answer")


@dataclass(frozen=True)
class Replan:
    carry_state: str


JoinDecision = Finish | Replan


def parse_decision(text: str) -> JoinDecision:
    body = text.lstrip()
    first, _, rest = body.partition("\n")
    if first.startswith("FINISH:"):
        return Finish((first[len("FINISH:"):] + ("\n" + rest if rest else "")).strip())
    if first.startswith("REPLAN:"):
        return Replan((first[len("REPLAN:"):] + ("\n" + rest if rest else "")).strip())
    raise AnswerProtocolError(f"answer must start with FINISH: or REPLAN:, got {first[:80]!r}")


@dataclass
class RunConfig:
    tools: ToolRegistry
    planner: Backend
    answerer: Backend
    max_replans: int = DEFAULT_MAX_REPLANS
    streaming: bool = False
    concurrency_cap: int | None = None
    examples: Sequence[str] = ()
    temperature: float = 0.0

    def __post_init__(self):
        if self.max_replans < 0:
            raise ValueError("max_replans must be >= 0")
        if self.concurrency_cap is not None and self.concurrency_cap < 1:
            raise ValueError("concurrency_cap must be positive")


def assemble_planner_prompt(
    tools: Sequence[ToolSpec], examples: Sequence[str], query: str, carry_state: str | None = None
) -> str:
    tools = list(tools)
    if not tools:
        raise ValueError("the planner needs at least one tool")
    parts = ["Create a plan to answer the question with the following actions:", ""]
    for i, tool in enumerate(tools, 1):
        parts.append(f"{i}. {tool.description}")
    parts.append(f"{len(tools) + 1}. {JOIN_DESCRIPTION}")
    parts += ["", "Rules:", PLANNER_RULES, ""]
    if examples:
        parts.append("Examples:")
        for ex in examples:
            parts.append(ex.rstrip("\n"))
            if not ex.rstrip().endswith("###"):
                parts.append("###")
        parts.append("")
    question = f"Question: {query}"
    if carry_state is not None:
        question += f", state_list: {carry_state}"
    parts.append(question)
    return "\n".join(parts) + "\n"


def _prompt_line(text: str) -> str:
    return " ".join(text.split("\n"))


def assemble_answer_prompt(query: str, join: JoinSummary) -> str:
    lines = [ANSWER_INSTRUCTIONS, "", f"Question: {query}", "Observations:"]
    lines += [_prompt_line(line) for line in join.lines()]
    return "\n".join(lines) + "\n"


@dataclass
class RoundResult:
    plan: PlanRun
    decision: JoinDecision
    plan_text: str
    trace: RunTrace

    @property
    def observations(self):
        return self.plan.observations


def _plan_batch(config: RunConfig, prompt: str, trace: RunTrace) -> tuple[PlanRun, str]:
    text = config.planner.complete(CompletionRequest(prompt, config.temperature))
    trace.record("plan_token")
    try:
        graph = build_graph(parse_plan(text))
    except (PlanSyntaxError, PlanError) as exc:
        raise PlannerSyntaxError(str(exc), text) from exc
    return run_plan(config.tools, graph, config.concurrency_cap, trace), text


def _plan_streaming(config: RunConfig, prompt: str, trace: RunTrace) -> tuple[PlanRun, str]:
    engine = Engine(config.tools, config.concurrency_cap, trace)
    parser = StreamParser()
    received: list[str] = []

    def on_chunk(chunk: str) -> None:
        received.append(chunk)
        trace.record("plan_token")
        for task in parser.feed(chunk):
            engine.add_task(task)

    def produce() -> None:
        try:
            config.planner.complete_streaming(CompletionRequest(prompt, config.temperature), on_chunk)
            for task in parser.close():
                engine.add_task(task)
        except PlanSyntaxError as exc:
            engine.fail_plan(PlannerSyntaxError(str(exc), "".join(received)))
        except BaseException as exc:
            engine.fail_plan(exc)
        else:
            engine.end_plan()

    producer = threading.Thread(target=produce, daemon=True, name="planner-stream")
    producer.start()
    try:
        result = engine.run()
    except PlanError as exc:
        raise PlannerSyntaxError(str(exc), "".join(received)) from exc
    producer.join()
    return result, "".join(received)


def run_round(config: RunConfig, query: str, carry_state: str | None = None,
              trace: RunTrace | None = None) -> RoundResult:
    trace = trace if trace is not None else RunTrace()
    prompt = assemble_planner_prompt(list(config.tools), config.examples, query, carry_state)
    if config.streaming:
        plan, text = _plan_streaming(config, prompt, trace)
    else:
        plan, text = _plan_batch(config, prompt, trace)
    answer_text = config.answerer.complete(
        CompletionRequest(assemble_answer_prompt(query, plan.join), config.temperature)
    )
    decision = parse_decision(answer_text)
    return RoundResult(plan, decision, text, trace)


@dataclass
class RunOutcome:
    answer: str
    rounds: list[RoundResult] = field(default_factory=list)
    trace: RunTrace | None = None

    @property
    def replans(self) -> int:
        return len(self.rounds) - 1


def run(config: RunConfig, query: str, trace: RunTrace | None = None) -> RunOutcome:
    """Plan and execute until the answerer finishes or the replan budget runs out."""
    trace = trace if trace is not None else RunTrace()
    carry: str | None = None
    rounds: list[RoundResult] = []
    for _ in range(config.max_replans + 1):
        result = run_round(config, query, carry, trace)
        rounds.append(result)
        if isinstance(result.decision, Finish):
            return RunOutcome(result.decision.answer, rounds, trace)
        carry = result.decision.carry_state
        trace.record("replan")
    raise ExhaustedRounds(carry, len(rounds), trace)

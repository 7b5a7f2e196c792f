import threading
import time
from fractions import Fraction

import pytest

from dagex.executor import (
    DuplicateTool,
    Engine,
    ReservedToolName,
    ToolRegistry,
    ToolSpec,
    execute_task,
    mock_tool,
    register_tool,
    run_plan,
    run_plan_async,
    run_plan_lockstep,
)
from dagex.plan_ir import MissingJoin, Ref, TaskSpec, Text, build_graph
from dagex.plan_parser import parse_plan
from dagex.trace import RunTrace


def _tool(name, fn, **kw):
    return ToolSpec(name, f"{name} tool", fn, **kw)


def test_registry_rejects_duplicates_and_join():
    reg = ToolRegistry([_tool("a", lambda: 1)])
    with pytest.raises(DuplicateTool):
        register_tool(reg, _tool("a", lambda: 2))
    with pytest.raises(ReservedToolName):
        reg.register(_tool("join", lambda: 0))
    assert reg.names() == ["a"]


def test_tool_needs_description():
    with pytest.raises(ValueError):
        ToolSpec("a", "  ", lambda: 1)


@pytest.mark.parametrize(
    "spec, args, prefix",
    [
        (None, [], "UnknownTool"),
        (_tool("t", lambda x: x, arg_schema=[("x", "number")]), ["str"], "ArgSchemaMismatch"),
        (_tool("t", lambda x: x, arg_schema=[("x", "text")]), [], "ArgSchemaMismatch"),
        (_tool("t", lambda: 1 / 0), [], "ToolError: ZeroDivisionError"),
        (_tool("t", lambda: time.sleep(1), timeout=0.05), [], "ToolTimeout"),
    ],
)
def test_faults_become_failed_observations(spec, args, prefix):
    reg = ToolRegistry([spec] if spec else [])
    obs = execute_task(reg, TaskSpec(1, "t"), args)
    assert not obs.ok
    assert obs.error.startswith(prefix)


def test_schema_kinds_accept_matching_values():
    spec = _tool("t", lambda a, b, c: (a, b, c), arg_schema=[("a", "text"), ("b", "number"), ("c", "list")])
    obs = execute_task(ToolRegistry([spec]), TaskSpec(1, "t"), ["x", Fraction(1, 3), [1]])
    assert obs.ok


def test_memory_is_private_per_task():
    def remember(x, memory):
        memory.append(f"saw {x}")
        return x

    reg = ToolRegistry([_tool("m", remember, with_memory=True)])
    run = run_plan(reg, build_graph(parse_plan('1. m("a")\n2. m("b")\n3. join()\n')))
    assert run.memories[1].log == ["saw a"]
    assert run.memories[2].log == ["saw b"]


def test_parallel_tasks_overlap():
    reg = ToolRegistry([mock_tool("work", 0.2)])
    plan = "".join(f'{i}. work("{i}")\n' for i in range(1, 5)) + "5. join()\n"
    t0 = time.perf_counter()
    run = run_plan(reg, build_graph(parse_plan(plan)))
    elapsed = time.perf_counter() - t0
    assert elapsed < 0.5
    assert run.trace.max_concurrency() == 4


def test_concurrency_cap_respected():
    reg = ToolRegistry([mock_tool("work", 0.05)])
    plan = "".join(f'{i}. work("{i}")\n' for i in range(1, 7)) + "7. join()\n"
    run = run_plan(reg, build_graph(parse_plan(plan)), concurrency_cap=2)
    assert run.trace.max_concurrency() == 2
    dispatch_order = [e.task_id for e in run.trace.of_kind("dispatch")]
    assert dispatch_order == [1, 2, 3, 4, 5, 6]


def test_observations_flow_into_dependents():
    reg = ToolRegistry([
        _tool("num", lambda x: Fraction(x)),
        _tool("add", lambda a, b: a + b),
        _tool("say", lambda s: s.upper()),
    ])
    plan = '1. num(3)\n2. num(4)\n3. add($1, $2)\n4. say("total $3")\n5. join()\n'
    run = run_plan(reg, build_graph(parse_plan(plan)))
    assert run.observations[3].value == 7
    assert run.observations[4].value == "TOTAL 7"
    assert run.inputs[4] == ["total 7"]
    assert run.join.lines()[-1] == "$4 say: TOTAL 7"


def test_failure_skips_dependents_and_join_reports_it():
    reg = ToolRegistry([mock_tool("ok", 0.0), mock_tool("bad", 0.0, fail=True)])
    plan = '1. bad()\n2. ok("$1")\n3. ok()\n4. ok($2)\n5. join()\n'
    run = run_plan(reg, build_graph(parse_plan(plan)))
    assert run.skipped == [2, 4]
    assert set(run.dispatch_counts) == {1, 3}
    lines = run.join.lines()
    assert lines[0].startswith("$1 bad: ERROR ToolError")
    assert lines[1] == "$2 ok: SKIPPED (a dependency failed)"
    assert run.trace.of_kind("join")[0].task_id == 5


def test_engine_streams_tasks_as_they_arrive():
    reg = ToolRegistry([mock_tool("work", 0.1)])
    engine = Engine(reg)

    def produce():
        engine.add_task(TaskSpec(1, "work"))
        time.sleep(0.15)
        engine.add_task(TaskSpec(2, "work", (Ref(1),)))
        engine.add_task(TaskSpec(3, "join"))
        engine.end_plan()

    threading.Thread(target=produce).start()
    run = engine.run()
    first = run.trace.intervals()[1]
    assert first[1] < 150  # task 1 finished before the plan did
    assert set(run.observations) == {1, 2}


def test_engine_plan_without_join_raises():
    engine = Engine(ToolRegistry([mock_tool("work", 0)]))
    engine.add_task(TaskSpec(1, "work"))
    engine.end_plan()
    with pytest.raises(MissingJoin):
        engine.run()


def test_engine_propagates_planner_failure():
    engine = Engine(ToolRegistry())
    engine.fail_plan(RuntimeError("planner died"))
    with pytest.raises(RuntimeError, match="planner died"):
        engine.run()


def test_run_plan_async_calls_back():
    reg = ToolRegistry([mock_tool("work", 0.01)])
    box = []
    done = threading.Event()
    run_plan_async(reg, build_graph(parse_plan("1. work()\n2. join()\n")), lambda r: (box.append(r), done.set()))
    assert done.wait(2)
    assert box[0].observations[1].ok


def test_lockstep_rounds_equal_waves():
    reg = ToolRegistry([mock_tool("work", 0)])
    plan = '1. work()\n2. work()\n3. work($1)\n4. work($3, $2)\n5. work()\n6. join()\n'
    run = run_plan_lockstep(reg, build_graph(parse_plan(plan)))
    assert run.rounds == 3
    assert {e.task_id: e.t_ms for e in run.trace.of_kind("dispatch")} == {1: 0, 2: 0, 5: 0, 3: 1, 4: 2}


def test_trace_round_trip(tmp_path):
    trace = RunTrace()
    trace.record("dispatch", 1, "work")
    trace.record("complete", 1, "work", True)
    trace.record("plan_token")
    path = trace.write(tmp_path / "run.jsonl")
    again = RunTrace.read(path)
    assert again.events == trace.events
    with pytest.raises(ValueError):
        trace.record("bogus")

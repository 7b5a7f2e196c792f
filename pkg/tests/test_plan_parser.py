import random
from decimal import Decimal

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_plan
from dagex.plan_ir import ListOf, Number, Ref, TaskSpec, Text, build_graph
from dagex.plan_parser import (
    ParserState,
    PlanSyntaxError,
    StreamParser,
    close,
    feed_chunk,
    parse_plan,
    parse_task_line,
    render_plan,
    render_task,
)


def test_numbered_and_dollar_forms():
    a = parse_task_line('1. search("Ed Wood")')
    b = parse_task_line('$1 = search("Ed Wood")')
    assert a == b == TaskSpec(1, "search", (Text("Ed Wood"),))


def test_argument_kinds():
    task = parse_task_line('$7 = f("a \\"q\\" b", -2.5, $3, ["$1", [4, "x $2"]], "$5")')
    assert task.args == (
        Text('a "q" b'),
        Number(Decimal("-2.5")),
        Ref(3),
        ListOf((Ref(1), ListOf((Number(Decimal(4)), Text("x $2"))))),
        Ref(5),
    )
    assert task.deps == {1, 2, 3, 5}


def test_thought_attaches_to_next_task():
    tasks = parse_plan('Thought: look it up\n1. search("x")\n2. join()\n')
    assert tasks[0].thought == "look it up"
    assert tasks[1].thought is None


def test_separators_and_blank_lines_ignored():
    tasks = parse_plan('\n###\n1. search("x")\n\n   \n2. join()\n###\n')
    assert [t.id for t in tasks] == [1, 2]


@pytest.mark.parametrize(
    "text, reason",
    [
        ('1. search("x")  # look up x\n2. join()\n', "comments"),
        ('# plan\n1. search("x")\n2. join()\n', "not a task line"),
        ('1. search("x"\n2. join()\n', "expected"),
        ('1. search("x)\n2. join()\n', "unterminated"),
        ('1. search("x") extra\n2. join()\n', "trailing"),
        ('1. search("x")\n2. join()\n3. search("y")\n', "content after join"),
        ('1. search("x")\n', "no join"),
        ("search(\"x\")\n1. join()\n", "not a task line"),
    ],
)
def test_syntax_errors(text, reason):
    with pytest.raises(PlanSyntaxError) as info:
        parse_plan(text)
    assert reason in info.value.reason


def test_error_reports_line_number():
    with pytest.raises(PlanSyntaxError) as info:
        parse_plan('1. a()\n\n3. b(\n4. join()\n')
    assert info.value.line_no == 3


def test_trailing_line_without_newline_flushed_on_close():
    state, tasks = feed_chunk(ParserState(), '1. a()\n2. join()')
    assert [t.id for t in tasks] == [1]
    assert [t.id for t in close(state)] == [2]


def test_tasks_emitted_as_soon_as_line_completes():
    p = StreamParser()
    assert p.feed("1. sea") == []
    assert [t.id for t in p.feed('rch("x")\n2. se')] == [1]
    assert not p.finished
    assert [t.id for t in p.feed('arch("y")\n3. join()\n')] == [2, 3]
    assert p.finished
    assert p.close() == []


def test_closed_parser_rejects_more_input():
    state, _ = feed_chunk(ParserState(), "1. join()\n")
    close(state)
    with pytest.raises(ValueError):
        feed_chunk(state, "x")


def test_fixture_plans_parse(data_dir):
    movie = parse_plan((data_dir / "plan_movie_rec.txt").read_text())
    assert len(movie) == 9
    g24 = parse_plan((data_dir / "plan_game24_round2.txt").read_text())
    assert len(g24) == 12
    assert g24[10].deps == set(range(1, 11))


def _chunked(text: str, rng: random.Random) -> list[TaskSpec]:
    cuts = sorted(rng.sample(range(1, len(text)), rng.randint(0, min(30, len(text) - 1))))
    state = ParserState()
    out = []
    prev = 0
    for c in cuts + [len(text)]:
        state, tasks = feed_chunk(state, text[prev:c])
        out += tasks
        prev = c
    return out + close(state)


@settings(max_examples=150, deadline=None)
@given(st.integers(min_value=0, max_value=2**32), st.integers(min_value=0, max_value=2**32))
def test_chunking_invariance(plan_seed, cut_seed):
    text = render_plan(random_plan(random.Random(plan_seed)))
    assert _chunked(text, random.Random(cut_seed)) == parse_plan(text)


_safe_text = st.text(
    alphabet=st.characters(blacklist_categories=("Cs",), blacklist_characters="\n\r\x0b\x0c\x1c\x1d\x1e\x85  "),
    max_size=12,
).filter(lambda s: not (s.startswith("$") and s[1:].isdigit()))


def _arg(max_ref):
    leaves = st.one_of(
        _safe_text.map(Text),
        st.decimals(min_value=-1000, max_value=1000, places=2, allow_nan=False).map(Number),
        st.integers(min_value=1, max_value=max_ref).map(Ref) if max_ref else _safe_text.map(Text),
    )
    return st.recursive(leaves, lambda inner: st.lists(inner, max_size=3).map(lambda xs: ListOf(tuple(xs))), max_leaves=5)


@st.composite
def plans(draw):
    n = draw(st.integers(min_value=0, max_value=6))
    tasks = []
    for i in range(1, n + 1):
        args = draw(st.lists(_arg(i - 1), max_size=3))
        thought = draw(st.none() | _safe_text.map(str.strip).filter(bool))
        tool = draw(st.from_regex(r"[a-z_][a-z0-9_]{0,8}", fullmatch=True).filter(lambda s: s != "join"))
        tasks.append(TaskSpec(i, tool, tuple(args), thought))
    tasks.append(TaskSpec(n + 1, "join"))
    return tasks


@settings(max_examples=200, deadline=None)
@given(plans())
def test_render_parse_round_trip(tasks):
    assert parse_plan(render_plan(tasks)) == tasks
    build_graph(tasks)


def test_render_task_canonical_form():
    task = TaskSpec(3, "math", (Text("$1 / $2"),), "divide")
    assert render_task(task) == 'Thought: divide\n$3 = math("$1 / $2")'

from fractions import Fraction

import httpx
import pytest

from dagex.tools.arith import ParseError
from dagex.tools.builtin import (
    Corpus,
    NetworkError,
    NotFound,
    UnresolvedPlaceholder,
    WikiSearchClient,
    math_tool,
    search_tool,
    solve_math,
)


@pytest.fixture
def corpus():
    return Corpus([
        {"title": "Ed Wood", "first_paragraph": "Edward Davis Wood Jr. was an American filmmaker."},
        {"title": "Ed Wood (film)", "first_paragraph": "Ed Wood is a 1994 biographical film."},
        {"title": "Apple Market Cap", "first_paragraph": "Apple is 2950 billion."},
    ])


def test_exact_title_wins(corpus):
    assert corpus.lookup("  ed   WOOD ").title == "Ed Wood"


def test_overlap_match_prefers_shorter_title(corpus):
    assert corpus.lookup("Wood Ed director").title == "Ed Wood"
    assert corpus.lookup("market cap of Apple").title == "Apple Market Cap"


def test_no_match(corpus):
    with pytest.raises(NotFound):
        corpus.search("Star Wars")
    with pytest.raises(ValueError):
        corpus.lookup("  ")


def test_unsubstituted_placeholder_rejected(corpus):
    with pytest.raises(UnresolvedPlaceholder):
        corpus.search("$1")
    with pytest.raises(UnresolvedPlaceholder):
        solve_math("$1 / 2")


def test_duplicate_titles_rejected():
    with pytest.raises(ValueError):
        Corpus([{"title": "A", "first_paragraph": "x"}, {"title": "a", "first_paragraph": "y"}])


def test_shipped_corpora_load(data_dir):
    for name in ("corpus_fig1.json", "corpus_fig2.json", "corpus_fig3.json"):
        assert len(Corpus.load(data_dir / name)) >= 2


def test_solve_math_direct_and_extracted():
    assert solve_math("(95 + 61) - (83 + 57)") == 16
    assert solve_math("It was 2800 billion. / It was 2950 billion.") == Fraction(56, 59)
    assert solve_math(Fraction(3, 2)) == Fraction(3, 2)
    assert solve_math("words only", rephrase=lambda s: "6 * 7") == 42
    with pytest.raises(ParseError):
        solve_math("no numbers here")


def test_tool_specs():
    assert search_tool(Corpus([])).arg_schema == [("query", "text")]
    assert math_tool().run("2 + 2") == 4


def _client(handler):
    return httpx.Client(transport=httpx.MockTransport(handler))


def test_wiki_client_returns_first_paragraph():
    seen = {}

    def handler(request):
        seen.update(request.url.params)
        return httpx.Response(200, json={"query": {"pages": {
            "2": {"index": 2, "extract": "Second."},
            "1": {"index": 1, "extract": "First line.\nMore text."},
        }}})

    client = WikiSearchClient("https://wiki.test/api.php", client=_client(handler))
    assert client.search("Ed Wood") == "First line."
    assert seen["gsrsearch"] == "Ed Wood"


def test_wiki_client_errors():
    empty = WikiSearchClient("https://wiki.test/api.php", client=_client(lambda r: httpx.Response(200, json={})))
    with pytest.raises(NotFound):
        empty.search("nothing")
    broken = WikiSearchClient("https://wiki.test/api.php", client=_client(lambda r: httpx.Response(503)))
    with pytest.raises(NetworkError):
        broken.search("x")

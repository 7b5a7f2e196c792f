"""General-purpose tools: encyclopedia-style search and an arithmetic solver."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Callable

import httpx

from ..plan_ir import PLACEHOLDER_RE
from ..executor import ToolSpec
from .arith import ParseError, evaluate, extract_formula

OVERLAP_THRESHOLD = 0.5


class NotFound(LookupError):
    pass


class NetworkError(RuntimeError):
    pass


class UnresolvedPlaceholder(ValueError):
    pass


def _norm(title: str) -> str:
    return " ".join(title.lower().split())


def _tokens(text: str) -> set[str]:
    return set(re.findall(r"\w+", text.lower()))


def _no_placeholders(text: str) -> None:
    if PLACEHOLDER_RE.search(text):
        raise UnresolvedPlaceholder(f"unsubstituted placeholder in tool input: {text!r}")


@dataclass(frozen=True)
class CorpusEntry:
    title: str
    first_paragraph: str


class Corpus:
    def __init__(self, entries):
        self.entries: list[CorpusEntry] = []
        seen: set[str] = set()
        for e in entries:
            if not isinstance(e, CorpusEntry):
                e = CorpusEntry(e["title"], e["first_paragraph"])
            key = _norm(e.title)
            if key in seen:
                raise ValueError(f"duplicate corpus title {e.title!r}")
            seen.add(key)
            self.entries.append(e)

    @classmethod
    def load(cls, path) -> "Corpus":
        return cls(json.loads(Path(path).read_text()))

    def __len__(self) -> int:
        return len(self.entries)

    def lookup(self, query: str) -> CorpusEntry:
        """Exact title match, else best token overlap (|q & t| / min(|q|, |t|)) >= 0.5.

        Ties go to the shorter title, then to corpus order.
        """
        if not query.strip():
            raise ValueError("empty search query")
        key = _norm(query)
        for e in self.entries:
            if _norm(e.title) == key:
                return e
        q = _tokens(query)
        best = None
        best_key = None
        for idx, e in enumerate(self.entries):
            t = _tokens(e.title)
            if not q or not t:
                continue
            score = Fraction(len(q & t), min(len(q), len(t)))
            if score < OVERLAP_THRESHOLD:
                continue
            rank = (-score, len(e.title), idx)
            if best_key is None or rank < best_key:
                best, best_key = e, rank
        if best is None:
            raise NotFound(f"no entry matches {query!r}")
        return best

    def search(self, query: str) -> str:
        _no_placeholders(query)
        return self.lookup(query).first_paragraph


class WikiSearchClient:
    """Lead-paragraph lookup against a MediaWiki-compatible API."""

    def __init__(self, endpoint: str = "https://en.wikipedia.org/w/api.php", timeout: float = 10.0,
                 client: httpx.Client | None = None):
        self.endpoint = endpoint
        self.client = client or httpx.Client(timeout=timeout)

    def search(self, query: str) -> str:
        _no_placeholders(query)
        params = {
            "action": "query",
            "format": "json",
            "generator": "search",
            "gsrsearch": query,
            "gsrlimit": 1,
            "prop": "extracts",
            "exintro": 1,
            "explaintext": 1,
            "redirects": 1,
        }
        try:
            resp = self.client.get(self.endpoint, params=params)
            resp.raise_for_status()
        except httpx.HTTPError as exc:
            raise NetworkError(str(exc)) from exc
        pages = resp.json().get("query", {}).get("pages", {})
        if isinstance(pages, dict):
            pages = list(pages.values())
        for page in sorted(pages, key=lambda p: p.get("index", 0)):
            extract = (page.get("extract") or "").strip()
            if extract:
                return extract.split("\n")[0]
        raise NotFound(f"no article for {query!r}")


def solve_math(problem, rephrase: Callable[[str], str] | None = None) -> Fraction:
    """Evaluate an arithmetic problem exactly.

    If the text is not a bare expression, ``rephrase`` (an LLM front-end in
    live mode) or, by default, :func:`extract_formula` turns it into one.
    """
    if not isinstance(problem, str):
        problem = str(problem)
    _no_placeholders(problem)
    try:
        return evaluate(problem)
    except ParseError:
        formula = rephrase(problem) if rephrase else extract_formula(problem)
        if not formula or formula == problem:
            raise
        return evaluate(formula)


def search_tool(searcher, timeout: float | None = 60.0) -> ToolSpec:
    return ToolSpec(
        name="search",
        description="search(query: text) -> text: returns the first paragraph of the best-matching encyclopedia article.",
        run=searcher.search,
        arg_schema=[("query", "text")],
        timeout=timeout,
    )


def math_tool(rephrase: Callable[[str], str] | None = None, timeout: float | None = 60.0) -> ToolSpec:
    return ToolSpec(
        name="math",
        description=(
            "math(problem: text) -> number: evaluates an arithmetic expression using + - * / and parentheses. "
            "Use $id to refer to earlier results, e.g. math(\"$1 / $2\")."
        ),
        run=lambda problem: solve_math(problem, rephrase),
        arg_schema=[("problem", "any")],
        timeout=timeout,
    )

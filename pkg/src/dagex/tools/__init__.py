from .builtin import Corpus, CorpusEntry, WikiSearchClient, math_tool, search_tool, solve_math
from .game24 import game24_tools

__all__ = ["Corpus", "CorpusEntry", "WikiSearchClient", "game24_tools", "math_tool", "search_tool", "solve_math"]

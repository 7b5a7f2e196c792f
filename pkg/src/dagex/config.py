"""TOML run configuration -> RunConfig.

Example::

    [planner]
    kind = "scripted"            # scripted | http | game24
    rules = "planner_rules.json"

    [answerer]
    kind = "last-observation"    # scripted | http | game24 | last-observation

    [engine]
    max_replans = 4
    streaming = false
    concurrency_cap = 0          # 0 = unlimited

    [tools]
    enabled = ["search", "math"]
    corpus = "corpus.json"
    search = "fixture"           # fixture | live

Relative paths resolve against the config file's directory; API keys are
only ever read from the environment variable named by ``api_key_env``.
"""

from __future__ import annotations

import sys
from importlib import resources
from pathlib import Path
from typing import Any

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from . import agents
from .backends import Backend, FunctionBackend, HTTPBackend, ScriptedBackend
from .executor import ToolRegistry
from .replan import DEFAULT_MAX_REPLANS, RunConfig
from .tools.builtin import Corpus, WikiSearchClient, math_tool, search_tool
from .tools.game24 import DEFAULT_K, game24_tools


class ConfigError(ValueError):
    pass


_FUNCTION_PLANNERS = {"game24": agents.game24_planner}
_FUNCTION_ANSWERERS = {
    "game24": agents.game24_answerer,
    "last-observation": agents.last_observation_answerer,
}


def data_path(name: str) -> Path:
    """Path of a file shipped in the package's data directory."""
    return Path(str(resources.files("dagex") / "data" / name))


def _resolve(base: Path, value: str) -> Path:
    if value.startswith("pkg:"):
        return data_path(value[4:])
    path = Path(value)
    return path if path.is_absolute() else base / path


def _backend(section: dict, base: Path, functions: dict) -> Backend:
    kind = section.get("kind")
    delay = section.get("delay_ms", 0) / 1000.0
    if kind == "scripted":
        if "rules" not in section:
            raise ConfigError("scripted backend needs 'rules'")
        return ScriptedBackend.from_file(_resolve(base, section["rules"]))
    if kind == "http":
        for key in ("url", "model"):
            if key not in section:
                raise ConfigError(f"http backend needs {key!r}")
        return HTTPBackend(section["url"], section["model"], section.get("api_key_env", "OPENAI_API_KEY"))
    if kind in functions:
        return FunctionBackend(functions[kind], delay=delay)
    raise ConfigError(f"unknown backend kind {kind!r}")


def build_tools(section: dict, base: Path) -> ToolRegistry:
    registry = ToolRegistry()
    timeout = section.get("timeout_s", 60.0)
    for name in section.get("enabled", ["search", "math"]):
        if name == "search":
            if section.get("search", "fixture") == "live":
                searcher = WikiSearchClient(section.get("search_endpoint", "https://en.wikipedia.org/w/api.php"))
            else:
                if "corpus" not in section:
                    raise ConfigError("fixture search needs 'corpus'")
                searcher = Corpus.load(_resolve(base, section["corpus"]))
            registry.register(search_tool(searcher, timeout))
        elif name == "math":
            registry.register(math_tool(timeout=timeout))
        elif name == "game24":
            for spec in game24_tools(section.get("k", DEFAULT_K)):
                registry.register(spec)
        else:
            raise ConfigError(f"unknown tool {name!r}")
    return registry


def from_dict(data: dict[str, Any], base: Path = Path(".")) -> RunConfig:
    try:
        planner = _backend(data["planner"], base, _FUNCTION_PLANNERS)
        answerer = _backend(data["answerer"], base, _FUNCTION_ANSWERERS)
    except KeyError as exc:
        raise ConfigError(f"missing section {exc.args[0]!r}") from None
    engine = data.get("engine", {})
    tools = data.get("tools", {})
    cap = engine.get("concurrency_cap", 0)
    examples = [_resolve(base, p).read_text() for p in tools.get("examples", [])]
    try:
        return RunConfig(
            tools=build_tools(tools, base),
            planner=planner,
            answerer=answerer,
            max_replans=engine.get("max_replans", DEFAULT_MAX_REPLANS),
            streaming=engine.get("streaming", False),
            concurrency_cap=cap or None,
            examples=examples,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def load(path) -> RunConfig:
    path = Path(path)
    try:
        data = tomllib.loads(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid config {path}: {exc}") from exc
    return from_dict(data, path.parent)

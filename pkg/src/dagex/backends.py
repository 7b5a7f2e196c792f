"""Completion backends: scripted (deterministic), function-driven, and HTTP chat-completion."""

from __future__ import annotations

import json
import os
import re
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterator

import httpx


class BackendError(RuntimeError):
    pass


class BackendUnavailable(BackendError):
    pass


class RateLimited(BackendError):
    pass


class ScriptMiss(BackendError):
    pass


@dataclass
class CompletionRequest:
    prompt: str
    temperature: float = 0.0
    max_tokens: int = 1024
    stop: list[str] | None = None

    def __post_init__(self):
        if not 0.0 <= self.temperature <= 1.0:
            raise ValueError("temperature must be in [0, 1]")
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be positive")


@dataclass
class Usage:
    prompt_tokens: int = 0
    completion_tokens: int = 0
    calls: int = 0


_SPLITTERS = {
    "whitespace": re.compile(r"\s+|\S+"),
    "line": re.compile(r"[^\n]*\n|[^\n]+"),
    "char": re.compile(r".", re.S),
}


def split_tokens(text: str, granularity: str = "whitespace") -> list[str]:
    try:
        pattern = _SPLITTERS[granularity]
    except KeyError:
        raise ValueError(f"unknown token granularity {granularity!r}") from None
    return pattern.findall(text)


def whitespace_token_count(text: str) -> int:
    return len(text.split())


class Backend:
    """Base class. Subclasses implement :meth:`_stream`, yielding text chunks."""

    def __init__(self):
        self.usage = Usage()
        self._usage_lock = threading.Lock()

    def _account(self, prompt_tokens: int, completion_tokens: int) -> None:
        with self._usage_lock:
            self.usage.prompt_tokens += prompt_tokens
            self.usage.completion_tokens += completion_tokens
            self.usage.calls += 1

    def _stream(self, req: CompletionRequest) -> Iterator[str]:
        raise NotImplementedError

    def complete(self, req: CompletionRequest) -> str:
        return "".join(self._stream(req))

    def complete_streaming(self, req: CompletionRequest, on_chunk: Callable[[str], None]) -> str:
        parts = []
        for chunk in self._stream(req):
            parts.append(chunk)
            on_chunk(chunk)
        return "".join(parts)


@dataclass
class ScriptedRule:
    match: str
    response: str
    delay: float = 0.0
    regex: bool = False
    token_split: str = "whitespace"
    _compiled: re.Pattern | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.token_split not in _SPLITTERS:
            raise ValueError(f"unknown token granularity {self.token_split!r}")
        if self.regex:
            self._compiled = re.compile(self.match, re.S)

    def matches(self, prompt: str) -> bool:
        if self._compiled is not None:
            return self._compiled.search(prompt) is not None
        return self.match in prompt

    @classmethod
    def from_dict(cls, d: dict) -> "ScriptedRule":
        return cls(
            match=d["match"],
            response=d["response"],
            delay=d.get("delay_ms", 0) / 1000.0,
            regex=d.get("regex", False),
            token_split=d.get("token_split", "whitespace"),
        )


class ScriptedBackend(Backend):
    """Replays canned responses. Rules are tried in order; the first match wins."""

    def __init__(self, rules, sleep: Callable[[float], None] = time.sleep):
        super().__init__()
        self.rules = [r if isinstance(r, ScriptedRule) else ScriptedRule.from_dict(r) for r in rules]
        self._sleep = sleep

    @classmethod
    def from_file(cls, path) -> "ScriptedBackend":
        return cls(json.loads(Path(path).read_text()))

    def rule_for(self, prompt: str) -> ScriptedRule:
        for rule in self.rules:
            if rule.matches(prompt):
                return rule
        raise ScriptMiss(f"no scripted rule matches prompt {prompt[:80]!r}")

    def _stream(self, req: CompletionRequest) -> Iterator[str]:
        rule = self.rule_for(req.prompt)
        chunks = split_tokens(rule.response, rule.token_split)
        self._account(whitespace_token_count(req.prompt), whitespace_token_count(rule.response))
        for i, chunk in enumerate(chunks):
            if i and rule.delay > 0:
                self._sleep(rule.delay)
            yield chunk


class FunctionBackend(Backend):
    """Computes its response with a Python function of the prompt.

    Used for deterministic planners and answerers whose output depends on
    prompt content (e.g. replanning from a carried state list).
    """

    def __init__(self, fn: Callable[[str], str], delay: float = 0.0, token_split: str = "line",
                 sleep: Callable[[float], None] = time.sleep):
        super().__init__()
        self.fn = fn
        self.delay = delay
        self.token_split = token_split
        self._sleep = sleep

    def _stream(self, req: CompletionRequest) -> Iterator[str]:
        text = self.fn(req.prompt)
        self._account(whitespace_token_count(req.prompt), whitespace_token_count(text))
        for i, chunk in enumerate(split_tokens(text, self.token_split)):
            if i and self.delay > 0:
                self._sleep(self.delay)
            yield chunk


class HTTPBackend(Backend):
    """Chat-completion endpoint client (``messages`` request, SSE deltas when streaming)."""

    RETRY_STATUSES = {429, 500, 502, 503, 504}

    def __init__(
        self,
        url: str,
        model: str,
        api_key_env: str | None = "OPENAI_API_KEY",
        timeout: float = 120.0,
        max_retries: int = 3,
        backoff: float = 1.0,
        client: httpx.Client | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        super().__init__()
        self.url = url
        self.model = model
        self.api_key = os.environ.get(api_key_env) if api_key_env else None
        self.max_retries = max_retries
        self.backoff = backoff
        self.client = client or httpx.Client(timeout=timeout)
        self._sleep = sleep

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        return headers

    def _body(self, req: CompletionRequest, stream: bool) -> dict:
        body = {
            "model": self.model,
            "messages": [{"role": "user", "content": req.prompt}],
            "temperature": req.temperature,
            "max_tokens": req.max_tokens,
            "stream": stream,
        }
        if req.stop:
            body["stop"] = req.stop
        return body

    def _wait(self, attempt: int, resp: httpx.Response | None) -> None:
        delay = self.backoff * (2 ** attempt)
        if resp is not None:
            retry_after = resp.headers.get("retry-after")
            if retry_after:
                try:
                    delay = max(delay, float(retry_after))
                except ValueError:
                    pass
        self._sleep(delay)

    def _with_retries(self, send):
        """Call ``send()`` -> response, retrying 429/5xx with exponential backoff."""
        for attempt in range(self.max_retries + 1):
            try:
                resp = send()
            except httpx.TransportError as exc:
                if attempt == self.max_retries:
                    raise BackendUnavailable(str(exc)) from exc
                self._wait(attempt, None)
                continue
            if resp.status_code in self.RETRY_STATUSES:
                if attempt == self.max_retries:
                    resp.close()
                    if resp.status_code == 429:
                        raise RateLimited(f"rate limited after {attempt + 1} attempts")
                    raise BackendUnavailable(f"HTTP {resp.status_code} after {attempt + 1} attempts")
                self._wait(attempt, resp)
                resp.close()
                continue
            if resp.status_code >= 400:
                resp.read()
                resp.close()
                raise BackendUnavailable(f"HTTP {resp.status_code}: {resp.text[:200]}")
            return resp
        raise AssertionError("unreachable")

    def complete(self, req: CompletionRequest) -> str:
        resp = self._with_retries(
            lambda: self.client.post(self.url, headers=self._headers(), json=self._body(req, False))
        )
        data = resp.json()
        text = data["choices"][0]["message"]["content"] or ""
        usage = data.get("usage") or {}
        self._account(usage.get("prompt_tokens", 0), usage.get("completion_tokens", 0))
        return text

    def _stream(self, req: CompletionRequest) -> Iterator[str]:
        def send():
            request = self.client.build_request(
                "POST", self.url, headers=self._headers(), json=self._body(req, True)
            )
            return self.client.send(request, stream=True)

        resp = self._with_retries(send)
        prompt_tokens = completion_tokens = 0
        try:
            for line in resp.iter_lines():
                if not line.startswith("data:"):
                    continue
                payload = line[5:].strip()
                if payload == "[DONE]":
                    break
                data = json.loads(payload)
                usage = data.get("usage") or {}
                prompt_tokens = usage.get("prompt_tokens", prompt_tokens)
                completion_tokens = usage.get("completion_tokens", completion_tokens)
                for choice in data.get("choices", []):
                    content = (choice.get("delta") or {}).get("content")
                    if content:
                        yield content
        except httpx.HTTPError as exc:
            raise BackendUnavailable(f"stream interrupted: {exc}") from exc
        finally:
            resp.close()
            self._account(prompt_tokens, completion_tokens)


def complete(backend: Backend, req: CompletionRequest) -> str:
    return backend.complete(req)


def complete_streaming(backend: Backend, req: CompletionRequest, on_chunk: Callable[[str], None]) -> str:
    return backend.complete_streaming(req, on_chunk)

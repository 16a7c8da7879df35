"""Completion/chat backends: deterministic mock, record/replay, and HTTP.

All backends speak the same two-call surface (completion-with-logprobs and
chat), so the experiment harness cannot tell a mock from a live endpoint. The
mock inverts the prompt templates to recover the counters and scores them with
a fixed logistic form, which doubles as a guard against template drift.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import re
import threading
import time
import urllib.error
import urllib.request
from collections import deque
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from ..errors import ConfigError, KtbenchError
from .decoding import TokenLogprobs
from .prompts import ChatRequest

CAP_COMPLETION = "completion-with-logprobs"
CAP_CHAT = "chat"


class MalformedPromptError(KtbenchError):
    """A prompt does not match the expected template (template drift guard)."""


class TransportError(KtbenchError):
    """Request could not be completed after retries."""


@dataclass(frozen=True)
class CompletionResult:
    text: str
    token_logprobs: TokenLogprobs | None


@dataclass(frozen=True)
class ChatResult:
    text: str


class LlmBackend:
    """Interface; a backend declares its capabilities before use."""

    capabilities: frozenset[str] = frozenset()

    def complete(self, prompt: str, max_tokens: int = 1, logprobs: int = 5) -> CompletionResult:
        raise NotImplementedError

    def chat(self, request: ChatRequest) -> ChatResult:
        raise NotImplementedError


def request_hash(kind: str, payload: dict) -> str:
    body = json.dumps({"kind": kind, **payload}, sort_keys=True, ensure_ascii=False)
    return hashlib.sha256(body.encode("utf-8")).hexdigest()


_NUM = r"[0-9][0-9 ]*"
_MINIMAL_RE = re.compile(
    rf"\ATotal correct until now: ({_NUM})\n"
    rf"Total wrong until now: ({_NUM})\n"
    rf"Current question ID: ({_NUM})\n"
    rf"Student response: \Z"
)
_EXTENDED_RE = re.compile(
    rf"\ACurrent skill ID: (?P<k>{_NUM})\n"
    rf"Total correct for prior questions with skill ID (?P=k): (?P<d>{_NUM})\n"
    rf"Total wrong for prior questions with skill ID (?P=k): (?P<e>{_NUM})\n"
    rf"Total correct until now: (?P<b>{_NUM})\n"
    rf"Total wrong until now: (?P<c>{_NUM})\n"
    rf"Current question ID: (?P<a>{_NUM})\n"
    rf"Student response: \Z"
)


def _unsplit(text: str) -> int:
    return int(text.replace(" ", ""))


def parse_prompt_fields(prompt: str) -> dict:
    """Invert a rendered template back to its numeric fields.

    Returns keys a, b, c and, for extended prompts, k, d, e.
    """
    m = _EXTENDED_RE.match(prompt)
    if m:
        return {
            "template": "extended",
            "k": _unsplit(m.group("k")),
            "d": _unsplit(m.group("d")),
            "e": _unsplit(m.group("e")),
            "b": _unsplit(m.group("b")),
            "c": _unsplit(m.group("c")),
            "a": _unsplit(m.group("a")),
        }
    m = _MINIMAL_RE.match(prompt)
    if m:
        return {
            "template": "minimal",
            "b": _unsplit(m.group(1)),
            "c": _unsplit(m.group(2)),
            "a": _unsplit(m.group(3)),
        }
    raise MalformedPromptError(f"prompt matches neither template: {prompt!r}")


class MockBackend(LlmBackend):
    """Deterministic stand-in scoring sigmoid(w . [B, C, D, E]).

    `template`, when set, rejects prompts of the other template. A nonzero
    failure_rate makes the backend emit unparseable garbage now and then,
    which exercises the harness's failure accounting.
    """

    capabilities = frozenset({CAP_COMPLETION, CAP_CHAT})

    def __init__(
        self,
        seed: int = 0,
        weights: Sequence[float] = (0.05, -0.05, 0.2, -0.2),
        template: str | None = None,
        failure_rate: float = 0.0,
    ):
        if len(tuple(weights)) != 4:
            raise ConfigError("mock backend needs 4 weights for [B, C, D, E]")
        self.weights = tuple(float(w) for w in weights)
        self.template = template
        self.failure_rate = failure_rate
        self._rng = np.random.default_rng(seed)
        self._lock = threading.Lock()

    def p_correct(self, prompt: str) -> float:
        fields = parse_prompt_fields(prompt)
        if self.template is not None and fields["template"] != self.template:
            raise MalformedPromptError(
                f"expected a {self.template} prompt, got {fields['template']}"
            )
        counts = (fields["b"], fields["c"], fields.get("d", 0), fields.get("e", 0))
        z = sum(w * x for w, x in zip(self.weights, counts))
        p = 1.0 / (1.0 + math.exp(-min(max(z, -500.0), 500.0)))
        return min(max(p, 1e-12), 1.0 - 1e-12)

    def _garbage(self) -> bool:
        if self.failure_rate <= 0.0:
            return False
        with self._lock:
            return bool(self._rng.random() < self.failure_rate)

    def complete(self, prompt: str, max_tokens: int = 1, logprobs: int = 5) -> CompletionResult:
        if self._garbage():
            return CompletionResult(text="hmm", token_logprobs=None)
        p = self.p_correct(prompt)
        return CompletionResult(
            text="CORRECT" if p >= 0.5 else "WRONG",
            token_logprobs=TokenLogprobs({"C": math.log(p), "W": math.log(1.0 - p)}),
        )

    def chat(self, request: ChatRequest) -> ChatResult:
        if self._garbage():
            return ChatResult(text="maybe correct")
        p = self.p_correct(request.user_message)
        return ChatResult(text="CORRECT" if p >= 0.5 else "WRONG")


def _result_to_json(result: CompletionResult | ChatResult) -> dict:
    if isinstance(result, CompletionResult):
        return {
            "type": "completion",
            "text": result.text,
            "token_logprobs": dict(result.token_logprobs.by_token)
            if result.token_logprobs is not None
            else None,
        }
    return {"type": "chat", "text": result.text}


def _result_from_json(d: dict) -> CompletionResult | ChatResult:
    if d["type"] == "completion":
        lps = d.get("token_logprobs")
        return CompletionResult(
            text=d["text"],
            token_logprobs=TokenLogprobs(lps) if lps is not None else None,
        )
    return ChatResult(text=d["text"])


class RecordingBackend(LlmBackend):
    """Wrap another backend and capture request/response pairs for replay."""

    def __init__(self, inner: LlmBackend):
        self.inner = inner
        self.capabilities = inner.capabilities
        self.records: list[dict] = []
        self._lock = threading.Lock()

    def _record(self, kind: str, payload: dict, result) -> None:
        with self._lock:
            self.records.append(
                {"hash": request_hash(kind, payload), "response": _result_to_json(result)}
            )

    def complete(self, prompt: str, max_tokens: int = 1, logprobs: int = 5) -> CompletionResult:
        result = self.inner.complete(prompt, max_tokens=max_tokens, logprobs=logprobs)
        self._record("complete", {"prompt": prompt, "max_tokens": max_tokens, "logprobs": logprobs}, result)
        return result

    def chat(self, request: ChatRequest) -> ChatResult:
        result = self.inner.chat(request)
        self._record("chat", {"system": request.system_message, "user": request.user_message}, result)
        return result

    def save(self, path: str | Path) -> None:
        save_replay_records(self.records, path)


def save_replay_records(records: list[dict], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True, ensure_ascii=False) + "\n")


class ReplayBackend(LlmBackend):
    """Serve previously captured responses; identical runs replay identically.

    Responses are queued per request hash in file order, so repeated identical
    requests replay in their original order.
    """

    capabilities = frozenset({CAP_COMPLETION, CAP_CHAT})

    def __init__(self, path: str | Path):
        self._queues: dict[str, deque] = {}
        self._lock = threading.Lock()
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"no such replay file: {path}")
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                rec = json.loads(line)
                self._queues.setdefault(rec["hash"], deque()).append(
                    _result_from_json(rec["response"])
                )

    def _serve(self, h: str):
        with self._lock:
            queue = self._queues.get(h)
            if not queue:
                raise TransportError(f"no recorded response for request {h[:12]}...")
            return queue.popleft()

    def complete(self, prompt: str, max_tokens: int = 1, logprobs: int = 5) -> CompletionResult:
        result = self._serve(
            request_hash("complete", {"prompt": prompt, "max_tokens": max_tokens, "logprobs": logprobs})
        )
        if not isinstance(result, CompletionResult):
            raise TransportError("recorded response is not a completion")
        return result

    def chat(self, request: ChatRequest) -> ChatResult:
        result = self._serve(
            request_hash("chat", {"system": request.system_message, "user": request.user_message})
        )
        if not isinstance(result, ChatResult):
            raise TransportError("recorded response is not a chat result")
        return result


@dataclass(frozen=True)
class HttpBackendConfig:
    base_url: str
    model: str
    api_key_env: str = "KTBENCH_API_KEY"
    timeout_s: float = 30.0
    max_retries: int = 3
    backoff_s: float = 1.0


class HttpBackend(LlmBackend):
    """OpenAI-compatible completion and chat endpoints over HTTP.

    The credential is read from the configured environment variable at call
    time and never logged or persisted.
    """

    capabilities = frozenset({CAP_COMPLETION, CAP_CHAT})

    def __init__(self, config: HttpBackendConfig):
        self.config = config

    def _api_key(self) -> str:
        key = os.environ.get(self.config.api_key_env, "")
        if not key:
            raise ConfigError(f"environment variable {self.config.api_key_env} is not set")
        return key

    def _post(self, url: str, body: dict) -> dict:
        data = json.dumps(body).encode("utf-8")
        req = urllib.request.Request(
            url,
            data=data,
            headers={
                "Content-Type": "application/json",
                "Authorization": f"Bearer {self._api_key()}",
            },
            method="POST",
        )
        with urllib.request.urlopen(req, timeout=self.config.timeout_s) as resp:
            return json.loads(resp.read().decode("utf-8"))

    def _post_with_retries(self, url: str, body: dict) -> dict:
        delay = self.config.backoff_s
        last: Exception | None = None
        for attempt in range(self.config.max_retries):
            try:
                return self._post(url, body)
            except urllib.error.HTTPError as exc:
                last = exc
                if exc.code not in (429, 500, 502, 503, 504):
                    break
            except urllib.error.URLError as exc:
                last = exc
            if attempt + 1 < self.config.max_retries:
                time.sleep(delay)
                delay *= 2.0
        raise TransportError(f"request to {url} failed: {last}")

    def build_completion_body(self, prompt: str, max_tokens: int, logprobs: int) -> dict:
        return {
            "model": self.config.model,
            "prompt": prompt,
            "max_tokens": max_tokens,
            "logprobs": logprobs,
            "temperature": 0,
        }

    def build_chat_body(self, request: ChatRequest) -> dict:
        return {
            "model": self.config.model,
            "messages": [
                {"role": "system", "content": request.system_message},
                {"role": "user", "content": request.user_message},
            ],
            "temperature": 0,
        }

    def complete(self, prompt: str, max_tokens: int = 1, logprobs: int = 5) -> CompletionResult:
        url = self.config.base_url.rstrip("/") + "/completions"
        payload = self._post_with_retries(url, self.build_completion_body(prompt, max_tokens, logprobs))
        try:
            choice = payload["choices"][0]
            text = choice["text"]
            top = (choice.get("logprobs") or {}).get("top_logprobs") or []
            token_logprobs = TokenLogprobs(top[0]) if top and top[0] else None
        except (KeyError, IndexError, TypeError) as exc:
            raise TransportError(f"unexpected completion response shape: {exc}") from exc
        return CompletionResult(text=text, token_logprobs=token_logprobs)

    def chat(self, request: ChatRequest) -> ChatResult:
        url = self.config.base_url.rstrip("/") + "/chat/completions"
        payload = self._post_with_retries(url, self.build_chat_body(request))
        try:
            return ChatResult(text=payload["choices"][0]["message"]["content"])
        except (KeyError, IndexError, TypeError) as exc:
            raise TransportError(f"unexpected chat response shape: {exc}") from exc

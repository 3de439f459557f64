"""Pluggable chat and embedding providers, plus the prompt template assets.

Two implementations of each interface: a scripted/mock variant that is a pure
function of its inputs (what the test suite and deterministic mode run on),
and an HTTP variant speaking the common chat-completions / embeddings JSON
shape, with a bounded timeout and retry budget.
"""

from __future__ import annotations

import hashlib
import os
import re
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol, Sequence

import numpy as np
import requests

from .errors import BackendError, ConfigError

PROMPT_FORMAT_VERSION = 1
ROLES = ("system", "user", "assistant", "tool")

_PROMPT_DIR = Path(__file__).parent / "prompts"
_PLACEHOLDER = re.compile(r"\{\{(\w+)\}\}")


@dataclass(frozen=True)
class ChatParams:
    temperature: float = 0.0
    max_tokens: int = 1024
    seed: int = 0


def check_messages(messages: Sequence[dict]) -> None:
    for msg in messages:
        if not isinstance(msg, dict) or "role" not in msg or "content" not in msg:
            raise BackendError(f"malformed chat message: {msg!r}")
        if msg["role"] not in ROLES:
            raise BackendError(f"unknown chat role {msg['role']!r}")


class ChatBackend(Protocol):
    name: str

    def complete(self, messages: Sequence[dict], params: ChatParams = ChatParams()) -> str:
        ...


class EmbeddingProvider(Protocol):
    name: str
    deterministic: bool

    def embed(self, texts: Sequence[str]) -> list[np.ndarray]:
        ...


# --- prompt templates ---

def load_template(name: str) -> str:
    path = _PROMPT_DIR / f"{name}.txt"
    if not path.is_file():
        raise ConfigError(f"unknown prompt template {name!r}")
    return path.read_text(encoding="utf-8")


def render_template(template: str, values: dict[str, str]) -> str:
    def sub(match: re.Match) -> str:
        key = match.group(1)
        if key not in values:
            raise ConfigError(f"prompt placeholder {{{{{key}}}}} has no value")
        return str(values[key])

    return _PLACEHOLDER.sub(sub, template)


def render_prompt(name: str, values: dict[str, str]) -> str:
    return render_template(load_template(name), values)


# --- scripted chat ---

@dataclass(frozen=True)
class ScriptedChatBackend:
    """Replays a fixed list of replies.

    The reply index equals the number of assistant messages already in the
    conversation, so the backend is a pure function of its input and a
    replayed prefix yields identical results.
    """

    replies: tuple[str, ...]
    name: str = "scripted"

    def complete(self, messages: Sequence[dict], params: ChatParams = ChatParams()) -> str:
        check_messages(messages)
        turn = sum(1 for m in messages if m["role"] == "assistant")
        if turn >= len(self.replies):
            raise BackendError(
                f"scripted backend {self.name!r} exhausted after {len(self.replies)} replies")
        return self.replies[turn]


@dataclass(frozen=True)
class KeyedScriptedBackend:
    """Scripted replies selected by substring match on the last user message.

    Rules are checked in order; the first whose pattern occurs in the message
    wins. Like ScriptedChatBackend this is a pure function of the messages,
    which lets one fixed script serve prompts that vary per request (the demo
    writer picks its reply by the disease named in the prompt).
    """

    rules: tuple[tuple[str, str], ...]
    default: str | None = None
    name: str = "keyed-scripted"

    def complete(self, messages: Sequence[dict], params: ChatParams = ChatParams()) -> str:
        check_messages(messages)
        last_user = next(
            (m["content"] for m in reversed(messages) if m["role"] == "user"), "")
        for pattern, reply in self.rules:
            if pattern in last_user:
                return reply
        if self.default is not None:
            return self.default
        raise BackendError(
            f"keyed backend {self.name!r}: no rule matches the last user message")


# --- HTTP chat ---

def _post_json(
    url: str, payload: dict, headers: dict[str, str], timeout: float, max_retries: int
) -> dict:
    attempt = 0
    while True:
        try:
            response = requests.post(url, json=payload, headers=headers, timeout=timeout)
        except requests.RequestException as exc:
            if attempt >= max_retries:
                raise BackendError(f"request to {url} failed: {exc}") from exc
            time.sleep(0.25 * 2 ** attempt)
            attempt += 1
            continue
        if response.status_code >= 500 and attempt < max_retries:
            time.sleep(0.25 * 2 ** attempt)
            attempt += 1
            continue
        if response.status_code != 200:
            raise BackendError(
                f"{url} returned HTTP {response.status_code}: {response.text[:200]}")
        try:
            return response.json()
        except ValueError as exc:
            raise BackendError(f"{url} returned non-JSON body") from exc


def _auth_headers(api_key_env: str | None) -> dict[str, str]:
    headers = {"Content-Type": "application/json"}
    if api_key_env:
        key = os.environ.get(api_key_env)
        if not key:
            raise BackendError(f"environment variable {api_key_env!r} is not set")
        headers["Authorization"] = f"Bearer {key}"
    return headers


@dataclass(frozen=True)
class HttpChatBackend:
    """Chat-completions client; works against any server speaking that shape."""

    base_url: str
    model: str
    api_key_env: str | None = None
    timeout: float = 30.0
    max_retries: int = 2
    name: str = "http-chat"

    def complete(self, messages: Sequence[dict], params: ChatParams = ChatParams()) -> str:
        check_messages(messages)
        payload = {
            "model": self.model,
            "messages": [{"role": m["role"], "content": m["content"]} for m in messages],
            "temperature": params.temperature,
            "max_tokens": params.max_tokens,
            "seed": params.seed,
        }
        url = self.base_url.rstrip("/") + "/chat/completions"
        body = _post_json(url, payload, _auth_headers(self.api_key_env),
                          self.timeout, self.max_retries)
        try:
            content = body["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise BackendError(f"chat response missing choices[0].message.content") from exc
        if not isinstance(content, str):
            raise BackendError("chat response content is not a string")
        return content


# --- embeddings ---

@dataclass(frozen=True)
class MockEmbeddingProvider:
    """Deterministic unit vector derived from a hash of the text."""

    dim: int = 32
    name: str = "mock-embed"
    deterministic: bool = True

    def embed(self, texts: Sequence[str]) -> list[np.ndarray]:
        out = []
        for text in texts:
            digest = hashlib.sha256(text.encode("utf-8")).digest()
            seed = int.from_bytes(digest[:8], "big")
            vec = np.random.default_rng(seed).standard_normal(self.dim)
            out.append(vec / np.linalg.norm(vec))
        return out


@dataclass(frozen=True)
class HttpEmbeddingProvider:
    base_url: str
    model: str
    api_key_env: str | None = None
    timeout: float = 30.0
    max_retries: int = 2
    name: str = "http-embed"
    deterministic: bool = False

    def embed(self, texts: Sequence[str]) -> list[np.ndarray]:
        if not texts:
            return []
        payload = {"model": self.model, "input": list(texts)}
        url = self.base_url.rstrip("/") + "/embeddings"
        body = _post_json(url, payload, _auth_headers(self.api_key_env),
                          self.timeout, self.max_retries)
        try:
            rows = body["data"]
            vectors = [np.asarray(row["embedding"], dtype=np.float64) for row in rows]
        except (KeyError, TypeError) as exc:
            raise BackendError("embeddings response missing data[*].embedding") from exc
        if len(vectors) != len(texts):
            raise BackendError(
                f"embeddings response has {len(vectors)} rows for {len(texts)} inputs")
        return vectors

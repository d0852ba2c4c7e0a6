"""Completion backends: a generic HTTP endpoint, a scripted mock, and a file cache.

The wire protocol is a minimal JSON POST ``{prompt, temperature, max_tokens,
n, stop, seed}`` answered by ``{"choices": [{"text": ...}]}``. The mock
backend serves fixture texts keyed by a digest of the prompt alone, so it is
insensitive to temperature and seed and therefore fully deterministic. The
cache is content-addressed over the whole request plus backend id; hits are
byte-identical to the original call and a warmed cache issues no inner calls.
"""

from __future__ import annotations

import hashlib
import json
import os
import random
import tempfile
import threading
import time
from abc import ABC, abstractmethod
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import requests

DEFAULT_MAX_TOKENS = 256
DEFAULT_TOKEN_ENV = "SELFCOT_API_TOKEN"


class BackendError(Exception):
    """Base class for completion failures."""


class TransportError(BackendError):
    """Retries exhausted against the HTTP endpoint."""

    def __init__(self, message: str, attempts: int):
        super().__init__(f"{message} (after {attempts} attempts)")
        self.attempts = attempts


class FixtureMissError(BackendError):
    """Mock backend has no texts for a prompt digest."""

    def __init__(self, digest: str):
        super().__init__(f"no fixture entry for prompt digest {digest}")
        self.digest = digest


@dataclass(frozen=True)
class CompletionRequest:
    prompt: str
    temperature: float = 0.0
    max_tokens: int = DEFAULT_MAX_TOKENS
    n_samples: int = 1
    stop: tuple[str, ...] = ()
    seed: int = 0

    def __post_init__(self) -> None:
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be >= 1")
        if self.n_samples < 1:
            raise ValueError("n_samples must be >= 1")


@dataclass(frozen=True)
class SampledPath:
    """One generated reasoning text for a question."""

    question_id: str
    path_index: int
    text: str
    temperature: float
    backend_id: str


def truncate_at_stop(text: str, stop: Sequence[str]) -> str:
    """Cut at the earliest occurrence of any stop sequence."""
    cut = len(text)
    for s in stop:
        if s:
            idx = text.find(s)
            if idx >= 0:
                cut = min(cut, idx)
    return text[:cut]


def prompt_digest(prompt: str) -> str:
    return hashlib.sha256(prompt.encode("utf-8")).hexdigest()


def cache_key(req: CompletionRequest, backend_id: str) -> str:
    """Stable content digest over all request fields plus the backend id."""
    payload = json.dumps(
        {
            "backend_id": backend_id,
            "prompt": req.prompt,
            "temperature": repr(req.temperature),
            "max_tokens": req.max_tokens,
            "n_samples": req.n_samples,
            "stop": list(req.stop),
            "seed": req.seed,
        },
        sort_keys=True,
        ensure_ascii=True,
    )
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


class Backend(ABC):
    """Blocking, thread-safe completion interface."""

    backend_id: str = "backend"

    @abstractmethod
    def complete(self, req: CompletionRequest) -> list[str]:
        """Return exactly ``req.n_samples`` texts, truncated at stop sequences."""


class HTTPBackend(Backend):
    """JSON-over-HTTP completion client with jittered exponential backoff.

    The auth token, when needed, comes from an environment variable (default
    ``SELFCOT_API_TOKEN``) and is sent as a bearer header. ``extra_options``
    (e.g. nucleus or top-k settings) are passed through in the request body.
    """

    def __init__(
        self,
        url: str,
        *,
        token_env: str = DEFAULT_TOKEN_ENV,
        timeout: float = 120.0,
        max_retries: int = 5,
        backoff_base: float = 1.0,
        backoff_cap: float = 30.0,
        extra_options: Mapping[str, object] | None = None,
        label: str = "",
    ) -> None:
        self.url = url
        self.token_env = token_env
        self.timeout = timeout
        self.max_retries = max_retries
        self.backoff_base = backoff_base
        self.backoff_cap = backoff_cap
        self.extra_options = dict(extra_options or {})
        self.backend_id = label or f"http:{url}"

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        token = os.environ.get(self.token_env, "")
        if token:
            headers["Authorization"] = f"Bearer {token}"
        return headers

    def complete(self, req: CompletionRequest) -> list[str]:
        payload = {
            "prompt": req.prompt,
            "temperature": req.temperature,
            "max_tokens": req.max_tokens,
            "n": req.n_samples,
            "stop": list(req.stop),
            "seed": req.seed,
            **self.extra_options,
        }
        last_error = "no attempt made"
        for attempt in range(self.max_retries):
            if attempt:
                delay = min(self.backoff_cap, self.backoff_base * 2 ** (attempt - 1))
                time.sleep(delay * (0.5 + random.random() / 2))
            try:
                response = requests.post(self.url, json=payload, headers=self._headers(), timeout=self.timeout)
            except requests.RequestException as exc:
                last_error = f"transport failure: {exc}"
                continue
            if response.status_code == 429 or response.status_code >= 500:
                last_error = f"HTTP {response.status_code}"
                continue
            if response.status_code != 200:
                raise BackendError(f"HTTP {response.status_code}: {response.text[:200]}")
            try:
                choices = response.json()["choices"]
                texts = [str(choice["text"]) for choice in choices]
            except (ValueError, KeyError, TypeError) as exc:
                raise BackendError(f"malformed completion response: {exc}") from exc
            if len(texts) != req.n_samples:
                raise BackendError(f"endpoint returned {len(texts)} texts, requested {req.n_samples}")
            return [truncate_at_stop(t, req.stop) for t in texts]
        raise TransportError(last_error, attempts=self.max_retries)


class MockBackend(Backend):
    """Deterministic scripted backend serving fixture texts by prompt digest.

    ``fixture`` maps prompt digests to text lists; sample ``i`` of a request
    is entry ``i % len(texts)``, so short fixtures can serve large path
    counts. Unknown prompts raise :class:`FixtureMissError`.
    """

    def __init__(self, fixture: Mapping[str, Sequence[str]], *, backend_id: str = "mock") -> None:
        self._fixture = {k: list(v) for k, v in fixture.items()}
        for key, texts in self._fixture.items():
            if not texts:
                raise ValueError(f"fixture entry {key} has no texts")
        self.backend_id = backend_id

    @classmethod
    def from_prompts(cls, prompt_to_texts: Mapping[str, Sequence[str]], **kwargs) -> "MockBackend":
        return cls({prompt_digest(p): texts for p, texts in prompt_to_texts.items()}, **kwargs)

    @classmethod
    def load_fixture(cls, path: str | Path, **kwargs) -> "MockBackend":
        with open(path, encoding="utf-8") as fh:
            return cls(json.load(fh), **kwargs)

    def save_fixture(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self._fixture, fh, indent=2, sort_keys=True)

    def complete(self, req: CompletionRequest) -> list[str]:
        key = prompt_digest(req.prompt)
        texts = self._fixture.get(key)
        if texts is None:
            raise FixtureMissError(key)
        out = [texts[i % len(texts)] for i in range(req.n_samples)]
        return [truncate_at_stop(t, req.stop) for t in out]


class CachingBackend(Backend):
    """Content-addressed file cache in front of any backend.

    One JSON file per request digest under ``cache_dir``; writes go through a
    temp file and an atomic rename so a crash never leaves a torn entry.
    """

    def __init__(self, inner: Backend, cache_dir: str | Path) -> None:
        self.inner = inner
        self.backend_id = inner.backend_id
        self.cache_dir = Path(cache_dir)
        self.cache_dir.mkdir(parents=True, exist_ok=True)
        self.hits = 0
        self.misses = 0
        self._lock = threading.Lock()

    def complete(self, req: CompletionRequest) -> list[str]:
        path = self.cache_dir / cache_key(req, self.inner.backend_id)
        if path.exists():
            texts = json.loads(path.read_text(encoding="utf-8"))
            with self._lock:
                self.hits += 1
            return texts
        texts = self.inner.complete(req)
        fd, tmp = tempfile.mkstemp(dir=self.cache_dir, suffix=".tmp")
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as fh:
                json.dump(texts, fh)
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
        with self._lock:
            self.misses += 1
        return texts

    @property
    def hit_rate(self) -> float:
        total = self.hits + self.misses
        return self.hits / total if total else 0.0


def complete_batch(
    backend: Backend,
    reqs: Sequence[CompletionRequest],
    max_in_flight: int = 8,
) -> list[list[str] | Exception]:
    """Run requests with bounded parallelism, results in input order.

    Per-request failures come back as exception values in their slot rather
    than aborting the batch.
    """
    if max_in_flight < 1:
        raise ValueError("max_in_flight must be >= 1")
    if not reqs:
        return []

    def run_one(req: CompletionRequest):
        try:
            return backend.complete(req)
        except Exception as exc:
            return exc

    with ThreadPoolExecutor(max_workers=max_in_flight) as pool:
        return list(pool.map(run_one, reqs))

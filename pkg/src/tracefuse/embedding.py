"""Text encoders behind a small provider interface.

The reference provider is a deterministic feature-hashing embedder: it is
pure, platform-stable (fixed FNV-1a hash, fixed tokenizer) and needs no
model files, so every downstream score is reproducible offline. A remote
HTTP provider is available as an opt-in alternative; it caches by content
hash and never silently falls back to the reference provider.
"""

from __future__ import annotations

import json
import re
import threading
import time
import urllib.error
import urllib.request
from pathlib import Path
from typing import Callable, Protocol

import numpy as np

DEFAULT_DIM = 256

_TOKEN_RE = re.compile(r"[0-9a-z]+")

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK64 = 0xFFFFFFFFFFFFFFFF


class DimMismatch(ValueError):
    pass


class Transport(RuntimeError):
    pass


class BadResponse(RuntimeError):
    pass


class EmbeddingProvider(Protocol):
    name: str
    dim: int

    def embed(self, text: str) -> np.ndarray: ...


def tokenize(text: str) -> list[str]:
    return _TOKEN_RE.findall(text.lower())


def fnv1a_64(data: bytes) -> int:
    h = _FNV_OFFSET
    for byte in data:
        h = ((h ^ byte) * _FNV_PRIME) & _MASK64
    return h


class ReferenceEmbedder:
    """Signed feature-hashing embedder over lowercase alphanumeric tokens."""

    name = "reference"

    def __init__(self, dim: int = DEFAULT_DIM) -> None:
        if dim < 1:
            raise ValueError("dim must be positive")
        self.dim = dim
        self._cache: dict[str, np.ndarray] = {}

    def embed(self, text: str) -> np.ndarray:
        cached = self._cache.get(text)
        if cached is not None:
            return cached
        vec = np.zeros(self.dim)
        for token in tokenize(text):
            h = fnv1a_64(token.encode("utf-8"))
            sign = 1.0 if h < 1 << 63 else -1.0
            vec[h % self.dim] += sign
        norm = float(np.linalg.norm(vec))
        if norm > 0.0:
            vec /= norm
        vec.flags.writeable = False
        self._cache[text] = vec
        return vec


def embed_text(text: str, dim: int = DEFAULT_DIM) -> np.ndarray:
    return ReferenceEmbedder(dim).embed(text)


def cosine(u: np.ndarray, v: np.ndarray) -> float:
    """Cosine similarity, defined as 0 when either vector is zero."""
    if u.shape != v.shape:
        raise DimMismatch(f"dims differ: {u.shape} vs {v.shape}")
    nu = float(np.linalg.norm(u))
    nv = float(np.linalg.norm(v))
    if nu == 0.0 or nv == 0.0:
        return 0.0
    return float(np.dot(u, v) / (nu * nv))


def _http_post_json(url: str, payload: dict, timeout: float) -> dict:
    body = json.dumps(payload).encode("utf-8")
    request = urllib.request.Request(
        url, data=body, headers={"Content-Type": "application/json"}, method="POST"
    )
    try:
        with urllib.request.urlopen(request, timeout=timeout) as response:
            raw = response.read()
    except (urllib.error.URLError, OSError) as exc:
        raise Transport(str(exc)) from exc
    try:
        return json.loads(raw)
    except json.JSONDecodeError as exc:
        raise BadResponse(f"response is not JSON: {exc.msg}") from exc


class RemoteEmbedder:
    """HTTP embedding client with content-hash cache and capped backoff.

    Wire schema: request ``{"texts": [...]}`` -> response ``{"vectors": [[...]]}``.
    ``post`` is injectable for tests (recorded-response doubles).
    """

    name = "remote"

    def __init__(
        self,
        endpoint: str,
        dim: int,
        cache_path: str | Path | None = None,
        max_retries: int = 3,
        backoff_base: float = 0.1,
        backoff_cap: float = 2.0,
        timeout: float = 30.0,
        post: Callable[[str, dict, float], dict] | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ) -> None:
        self.endpoint = endpoint
        self.dim = dim
        self.max_retries = max_retries
        self.backoff_base = backoff_base
        self.backoff_cap = backoff_cap
        self.timeout = timeout
        self._post = post or _http_post_json
        self._sleep = sleep
        self._cache_path = Path(cache_path) if cache_path else None
        self._cache: dict[str, list[float]] = {}
        self._lock = threading.Lock()
        self._inflight: dict[str, threading.Event] = {}
        if self._cache_path and self._cache_path.exists():
            self._cache = json.loads(self._cache_path.read_text("utf-8"))

    @staticmethod
    def _key(text: str) -> str:
        return format(fnv1a_64(text.encode("utf-8")), "016x")

    def _persist(self) -> None:
        if self._cache_path:
            self._cache_path.write_text(
                json.dumps(self._cache, sort_keys=True), encoding="utf-8"
            )

    def _fetch(self, texts: list[str]) -> list[list[float]]:
        delay = self.backoff_base
        last: Exception | None = None
        for attempt in range(self.max_retries + 1):
            if attempt:
                self._sleep(min(delay, self.backoff_cap))
                delay *= 2
            try:
                response = self._post(self.endpoint, {"texts": texts}, self.timeout)
            except Transport as exc:
                last = exc
                continue
            vectors = response.get("vectors")
            if not isinstance(vectors, list) or len(vectors) != len(texts):
                raise BadResponse("response 'vectors' missing or wrong length")
            for vec in vectors:
                if len(vec) != self.dim:
                    raise DimMismatch(f"endpoint returned dim {len(vec)}, expected {self.dim}")
            return vectors
        assert last is not None
        raise last

    def embed_batch(self, texts: list[str]) -> list[np.ndarray]:
        missing: list[str] = []
        with self._lock:
            for text in texts:
                key = self._key(text)
                if key not in self._cache and text not in missing:
                    missing.append(text)
        if missing:
            # de-duplicate concurrent fetches of the same content
            waiters: list[threading.Event] = []
            owned: list[str] = []
            with self._lock:
                for text in missing:
                    key = self._key(text)
                    if key in self._cache:
                        continue
                    pending = self._inflight.get(key)
                    if pending is not None:
                        waiters.append(pending)
                    else:
                        event = threading.Event()
                        self._inflight[key] = event
                        owned.append(text)
            if owned:
                try:
                    vectors = self._fetch(owned)
                    with self._lock:
                        for text, vec in zip(owned, vectors):
                            self._cache[self._key(text)] = [float(x) for x in vec]
                        self._persist()
                finally:
                    with self._lock:
                        for text in owned:
                            event = self._inflight.pop(self._key(text), None)
                            if event is not None:
                                event.set()
            for event in waiters:
                event.wait()
        out: list[np.ndarray] = []
        with self._lock:
            for text in texts:
                values = self._cache.get(self._key(text))
                if values is None:
                    raise Transport(f"no vector obtained for {text!r}")
                out.append(np.asarray(values, dtype=float))
        return out

    def embed(self, text: str) -> np.ndarray:
        return self.embed_batch([text])[0]

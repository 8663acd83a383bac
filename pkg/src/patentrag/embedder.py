"""
Text -> dense vector providers.

Two providers share one interface (``embed`` / ``embed_batch``):

* ``LocalHashEmbedder``: character-trigram FNV-1a feature hashing. Pure,
  offline and bit-reproducible; used for tests and desk-scale runs.
* ``RemoteEmbedder``: HTTP client for an OpenAI-style embeddings endpoint,
  ``POST {model, input: [...]}`` -> ``{data: [{embedding: [...]}, ...]}``,
  bearer token read from ``EMBEDDER_API_KEY``.
"""

from __future__ import annotations

import logging
import math
import os
import re
import threading
import time
from dataclasses import asdict, dataclass
from typing import Optional, Sequence

import numpy as np
import requests

from .errors import (
    BatchEmbeddingError,
    ConfigError,
    DimensionMismatch,
    EmptyText,
    RemoteUnavailable,
)

log = logging.getLogger(__name__)

API_KEY_ENV = "EMBEDDER_API_KEY"
DEFAULT_DIMENSION = 1536

FNV64_OFFSET = 0xCBF29CE484222325
FNV64_PRIME = 0x100000001B3
_MASK64 = 0xFFFFFFFFFFFFFFFF
_WS_RE = re.compile(r"\s+")


@dataclass(frozen=True)
class EmbedderConfig:
    provider: str = "local"
    model_name: str = "local-hash-trigram"
    dimension: int = DEFAULT_DIMENSION
    endpoint_url: Optional[str] = None
    batch_size: int = 64
    timeout_ms: int = 30_000
    normalize: bool = True
    seed: int = 0
    max_retries: int = 3
    backoff_s: float = 0.5
    max_in_flight: int = 4

    def __post_init__(self):
        if self.provider not in ("local", "remote"):
            raise ConfigError(f"unknown embedder provider {self.provider!r}")
        if self.dimension < 1 or (self.provider == "local" and self.dimension < 2):
            raise ConfigError(f"invalid dimension {self.dimension}")
        if self.batch_size < 1 or self.timeout_ms < 1 or self.max_in_flight < 1:
            raise ConfigError("batch_size, timeout_ms and max_in_flight must be positive")
        if self.provider == "remote" and not self.endpoint_url:
            raise ConfigError("remote embedder requires endpoint_url")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class EmbeddingVector:
    values: np.ndarray  # float32, shape (D,)
    source_id: Optional[str] = None

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)

    def __len__(self) -> int:
        return len(self.values)


def fnv1a_64(data: bytes) -> int:
    h = FNV64_OFFSET
    for byte in data:
        h ^= byte
        h = (h * FNV64_PRIME) & _MASK64
    return h


def char_trigrams(text: str) -> list[str]:
    """Lowercase, collapse whitespace runs, then slide a width-3 window.
    Texts shorter than three characters form a single token."""
    text = _WS_RE.sub(" ", text.lower())
    if len(text) < 3:
        return [text]
    return [text[i:i + 3] for i in range(len(text) - 2)]


def local_hash_embed(text: str, dimension: int, seed: int = 0) -> np.ndarray:
    """Signed feature hashing of character trigrams.

    Each trigram's FNV-1a 64-bit hash (of its UTF-8 bytes) is XORed with
    ``seed``; the result picks bucket ``h % dimension`` and the sign from the
    top bit. Counts are accumulated in float64, L2-normalized, and rounded
    once to float32. An all-zero accumulator maps to the first basis vector.
    """
    if dimension < 2:
        raise ValueError("dimension must be >= 2")
    acc = np.zeros(dimension, dtype=np.float64)
    salt = seed & _MASK64
    for gram in char_trigrams(text):
        h = fnv1a_64(gram.encode("utf-8")) ^ salt
        acc[h % dimension] += -1.0 if h >> 63 else 1.0
    norm = math.sqrt(math.fsum(x * x for x in acc))
    if norm == 0.0:
        out = np.zeros(dimension, dtype=np.float32)
        out[0] = 1.0
        return out
    return (acc / norm).astype(np.float32)


def _check_text(text: str) -> None:
    if not isinstance(text, str) or not text.strip():
        raise EmptyText("text to embed is empty")


class LocalHashEmbedder:
    def __init__(self, config: EmbedderConfig):
        self.config = config
        self.dimension = config.dimension

    def embed(self, text: str, source_id: Optional[str] = None) -> EmbeddingVector:
        _check_text(text)
        return EmbeddingVector(local_hash_embed(text, self.dimension, self.config.seed), source_id)

    def embed_batch(self, texts: Sequence[str], source_ids: Optional[Sequence[str]] = None) -> list[EmbeddingVector]:
        ids = source_ids if source_ids is not None else [None] * len(texts)
        for t in texts:
            _check_text(t)
        return [self.embed(t, sid) for t, sid in zip(texts, ids)]


class RemoteEmbedder:
    """Client for an HTTP embeddings endpoint with bounded retries."""

    RETRY_STATUS = {408, 425, 429, 500, 502, 503, 504}

    def __init__(self, config: EmbedderConfig, api_key: Optional[str] = None,
                 session: Optional[requests.Session] = None):
        self.config = config
        self.dimension = config.dimension
        self._api_key = api_key if api_key is not None else os.environ.get(API_KEY_ENV)
        if not self._api_key:
            raise ConfigError(f"remote embedder needs an API key in ${API_KEY_ENV}")
        self._session = session or requests.Session()
        self._slots = threading.BoundedSemaphore(config.max_in_flight)

    def __repr__(self) -> str:
        return f"RemoteEmbedder(model={self.config.model_name!r}, endpoint={self.config.endpoint_url!r})"

    def _post(self, texts: list[str]) -> list[list[float]]:
        cfg = self.config
        body = {"model": cfg.model_name, "input": texts}
        headers = {"Authorization": f"Bearer {self._api_key}"}
        last = "no attempt made"
        for attempt in range(cfg.max_retries + 1):
            if attempt:
                time.sleep(cfg.backoff_s * 2 ** (attempt - 1))
            try:
                with self._slots:
                    resp = self._session.post(cfg.endpoint_url, json=body, headers=headers,
                                              timeout=cfg.timeout_ms / 1000)
            except requests.RequestException as exc:
                last = type(exc).__name__
                log.warning("embedding request failed (%s), attempt %d", last, attempt + 1)
                continue
            if resp.status_code in self.RETRY_STATUS:
                last = f"HTTP {resp.status_code}"
                log.warning("embedding endpoint returned %s, attempt %d", last, attempt + 1)
                continue
            if resp.status_code != 200:
                raise RemoteUnavailable(f"embedding endpoint returned HTTP {resp.status_code}")
            try:
                data = resp.json()["data"]
                return [item["embedding"] for item in data]
            except (ValueError, KeyError, TypeError) as exc:
                raise RemoteUnavailable(f"malformed embedding response: {exc!r}") from exc
        raise RemoteUnavailable(f"embedding endpoint unavailable after {cfg.max_retries + 1} attempts ({last})")

    def _to_vector(self, raw, source_id) -> EmbeddingVector:
        vec = np.asarray(raw, dtype=np.float64)
        if vec.ndim != 1 or len(vec) != self.dimension:
            raise DimensionMismatch(f"expected {self.dimension} floats, got {vec.size}")
        if not np.all(np.isfinite(vec)):
            raise RemoteUnavailable("embedding contains non-finite values")
        if self.config.normalize:
            norm = np.linalg.norm(vec)
            if norm == 0.0:
                raise RemoteUnavailable("cannot normalize an all-zero embedding")
            vec = vec / norm
        return EmbeddingVector(vec.astype(np.float32), source_id)

    def embed(self, text: str, source_id: Optional[str] = None) -> EmbeddingVector:
        _check_text(text)
        raw = self._post([text])
        if len(raw) != 1:
            raise RemoteUnavailable(f"expected 1 embedding, got {len(raw)}")
        return self._to_vector(raw[0], source_id)

    def embed_batch(self, texts: Sequence[str], source_ids: Optional[Sequence[str]] = None) -> list[EmbeddingVector]:
        ids = list(source_ids) if source_ids is not None else [None] * len(texts)
        for t in texts:
            _check_text(t)
        out: list[EmbeddingVector] = []
        size = self.config.batch_size
        for start in range(0, len(texts), size):
            stop = min(start + size, len(texts))
            try:
                raw = self._post(list(texts[start:stop]))
                if len(raw) != stop - start:
                    raise RemoteUnavailable(f"expected {stop - start} embeddings, got {len(raw)}")
                out.extend(self._to_vector(r, sid) for r, sid in zip(raw, ids[start:stop]))
            except (RemoteUnavailable, DimensionMismatch) as exc:
                raise BatchEmbeddingError(start, stop, exc) from exc
        return out


def make_embedder(config: EmbedderConfig):
    if config.provider == "local":
        return LocalHashEmbedder(config)
    return RemoteEmbedder(config)


def embed_text(text: str, config: EmbedderConfig) -> EmbeddingVector:
    return make_embedder(config).embed(text)


def embed_batch(texts: Sequence[str], config: EmbedderConfig) -> list[EmbeddingVector]:
    return make_embedder(config).embed_batch(texts)

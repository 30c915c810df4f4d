"""Embedding backends, vector normalization and cosine similarity.

Two backends share one interface (``dim`` plus ``embed(texts)``):

* :class:`DeterministicEmbedder` hashes word unigrams and bigrams into a
  signed accumulator. Tokens are ``\\w+`` runs of the lower-cased text.
  Each feature string (``"u:" + w`` or ``"b:" + w1 + " " + w2``) is hashed
  with 64-bit FNV-1a over its UTF-8 bytes; bucket ``h % dim`` receives
  ``+1`` when bit 63 of ``h`` is clear and ``-1`` when it is set. The
  accumulator is then L2-normalized.
* :class:`RemoteEmbedder` posts ``{model, input}`` to an embeddings endpoint
  and reads ``{data: [{index, embedding}]}``.
"""
from __future__ import annotations

import logging
import os
import re
import time
from concurrent.futures import ThreadPoolExecutor
from functools import lru_cache
from dataclasses import dataclass
from typing import Protocol, Sequence

import httpx
import numpy as np

log = logging.getLogger(__name__)

API_KEY_ENV = "NARRLENS_API_KEY"

FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3
_MASK64 = 0xFFFFFFFFFFFFFFFF

_TOKEN_RE = re.compile(r"\w+", re.UNICODE)


class EmbeddingError(RuntimeError):
    pass


class Embedder(Protocol):
    dim: int

    def embed(self, texts: Sequence[str]) -> list[np.ndarray]: ...


@dataclass
class EmbedderConfig:
    backend: str = "deterministic"  # "deterministic" | "remote"
    endpoint: str = ""
    model_name: str = "text-embedding-ada-002"
    dim: int = 256
    max_batch: int = 64
    max_parallel: int = 4
    timeout: float = 30.0
    retries: int = 3

    def __post_init__(self):
        if self.backend not in ("deterministic", "remote"):
            raise ValueError(f"unknown embedder backend {self.backend!r}")
        if self.dim <= 0 or self.max_batch < 1 or self.max_parallel < 1 or self.retries < 0:
            raise ValueError(f"invalid embedder config: {self}")


def fnv1a_64(data: bytes) -> int:
    h = FNV_OFFSET
    for byte in data:
        h ^= byte
        h = (h * FNV_PRIME) & _MASK64
    return h


@lru_cache(maxsize=1 << 16)
def _feature_hash(feature: str) -> int:
    return fnv1a_64(feature.encode("utf-8"))


def tokenize(text: str) -> list[str]:
    return _TOKEN_RE.findall(text.lower())


def normalize(vec) -> np.ndarray:
    vec = np.asarray(vec, dtype=np.float64)
    if not np.all(np.isfinite(vec)):
        raise EmbeddingError("non-finite embedding component")
    norm = np.linalg.norm(vec)
    if norm == 0.0:
        raise EmbeddingError("cannot normalize a zero vector")
    return vec / norm


def deterministic_embed(text: str, dim: int) -> np.ndarray:
    if dim <= 0:
        raise ValueError(f"dim must be positive, got {dim}")
    if not text.strip():
        raise EmbeddingError("cannot embed empty text")
    words = tokenize(text)
    features = [f"u:{w}" for w in words]
    features += [f"b:{a} {b}" for a, b in zip(words, words[1:])]
    acc = np.zeros(dim, dtype=np.float64)
    for feat in features:
        h = _feature_hash(feat)
        acc[h % dim] += -1.0 if h >> 63 else 1.0
    if not acc.any():
        # No usable tokens, or every feature cancelled out.
        log.warning("degenerate embedding for %r; using basis vector e1", text[:40])
        acc[0] = 1.0
        return acc
    return acc / np.linalg.norm(acc)


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine of two unit vectors, i.e. their dot product."""
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return float(np.dot(a, b))


class DeterministicEmbedder:
    def __init__(self, dim: int = 256):
        if dim <= 0:
            raise ValueError(f"dim must be positive, got {dim}")
        self.dim = dim

    def embed(self, texts: Sequence[str]) -> list[np.ndarray]:
        return [deterministic_embed(t, self.dim) for t in texts]


class RemoteEmbedder:
    """Batched client for an embeddings endpoint with retry and backoff."""

    def __init__(self, cfg: EmbedderConfig, client: httpx.Client | None = None,
                 backoff: float = 0.5):
        if not cfg.endpoint:
            raise EmbeddingError("remote embedder requires an endpoint")
        self.cfg = cfg
        self.dim = cfg.dim
        self.backoff = backoff
        headers = {}
        key = os.environ.get(API_KEY_ENV)
        if key:
            headers["Authorization"] = f"Bearer {key}"
        self._client = client or httpx.Client(timeout=cfg.timeout)
        self._headers = headers

    def _post(self, batch: list[str]) -> list[np.ndarray]:
        payload = {"model": self.cfg.model_name, "input": batch}
        last_exc: Exception | None = None
        for attempt in range(self.cfg.retries + 1):
            try:
                resp = self._client.post(self.cfg.endpoint, json=payload, headers=self._headers)
                resp.raise_for_status()
                data = resp.json()["data"]
                break
            except (httpx.HTTPError, KeyError, ValueError) as exc:
                last_exc = exc
                if attempt < self.cfg.retries:
                    time.sleep(self.backoff * 2**attempt)
        else:
            raise EmbeddingError(
                f"embedding request failed after {self.cfg.retries + 1} attempts: {last_exc}"
            )
        if len(data) != len(batch):
            raise EmbeddingError(f"expected {len(batch)} embeddings, got {len(data)}")
        out = []
        for item in sorted(data, key=lambda d: d["index"]):
            vec = item["embedding"]
            if len(vec) != self.dim:
                raise EmbeddingError(f"dimension mismatch: got {len(vec)}, configured {self.dim}")
            out.append(normalize(vec))
        return out

    def embed(self, texts: Sequence[str]) -> list[np.ndarray]:
        texts = list(texts)
        for t in texts:
            if not t.strip():
                raise EmbeddingError("cannot embed empty text")
        step = self.cfg.max_batch
        batches = [texts[i:i + step] for i in range(0, len(texts), step)]
        if len(batches) == 1 or self.cfg.max_parallel == 1:
            results = [self._post(b) for b in batches]
        else:
            with ThreadPoolExecutor(max_workers=self.cfg.max_parallel) as pool:
                results = list(pool.map(self._post, batches))
        return [v for batch in results for v in batch]


def make_embedder(cfg: EmbedderConfig, offline: bool = False) -> Embedder:
    if cfg.backend == "deterministic" or offline:
        return DeterministicEmbedder(cfg.dim)
    return RemoteEmbedder(cfg)


def embed_texts(cfg: EmbedderConfig, texts: Sequence[str]) -> list[np.ndarray]:
    if not texts:
        raise EmbeddingError("no texts to embed")
    return make_embedder(cfg).embed(texts)

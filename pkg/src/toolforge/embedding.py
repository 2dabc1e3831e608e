"""Sentence-embedding providers and cosine similarity.

Two providers ship with the package: a deterministic hashed bag-of-words
embedder that works offline, and a thin client for an OpenAI-compatible
``/embeddings`` HTTP endpoint for operators who serve a real sentence
encoder. Both return unit-norm float64 vectors, so similarity is a plain
dot product.
"""

from __future__ import annotations

import hashlib
import os
import re
import threading
from typing import Sequence

import numpy as np
import requests

from .errors import DimMismatchError, EmptyTextError, ProviderError

_TOKEN_SPLIT = re.compile(r"[^0-9a-zA-Z]+")

NORM_TOLERANCE = 1e-6


def tokenize(text: str) -> list[str]:
    """Split on non-alphanumeric characters and lowercase.

    The same rule is used by the hashed embedder and by the BM25 baseline
    so lexical and embedded views see identical tokens.
    """
    return [t for t in _TOKEN_SPLIT.split(text.lower()) if t]


def _token_index(token: str, dim: int) -> int:
    # Fixed 64-bit hash; never the builtin hash() (randomized per process).
    digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "big") % dim


class EmbeddingProvider:
    """Interface: deterministic text -> unit-norm vector of ``dim`` entries."""

    provider_id: str
    dim: int

    def embed(self, text: str) -> np.ndarray:
        raise NotImplementedError


class HashEmbedding(EmbeddingProvider):
    """Offline fallback: hashed bag-of-words counts, L2-normalized."""

    def __init__(self, dim: int = 256):
        self.provider_id = f"hash-bow-{dim}"
        self.dim = dim

    def embed(self, text: str) -> np.ndarray:
        tokens = tokenize(text)
        if not tokens:
            raise EmptyTextError("cannot embed empty text")
        vec = np.zeros(self.dim, dtype=np.float64)
        for tok in tokens:
            vec[_token_index(tok, self.dim)] += 1.0
        return vec / np.linalg.norm(vec)


class RemoteEmbedding(EmbeddingProvider):
    """Client for an OpenAI-compatible embeddings endpoint.

    The base URL and API key come from the constructor or from the
    ``FORGE_BASE_URL`` / ``FORGE_API_KEY`` environment variables. At most
    ``max_in_flight`` requests run concurrently.
    """

    def __init__(
        self,
        model: str,
        dim: int,
        base_url: str | None = None,
        api_key: str | None = None,
        timeout: float = 30.0,
        max_in_flight: int = 8,
    ):
        self.provider_id = f"remote:{model}"
        self.model = model
        self.dim = dim
        self.base_url = (base_url or os.environ.get("FORGE_BASE_URL", "")).rstrip("/")
        self.api_key = api_key or os.environ.get("FORGE_API_KEY", "")
        self.timeout = timeout
        self._gate = threading.Semaphore(max_in_flight)
        self._cache: dict[str, np.ndarray] = {}
        self._cache_lock = threading.Lock()

    def embed(self, text: str) -> np.ndarray:
        if not text.strip():
            raise EmptyTextError("cannot embed empty text")
        with self._cache_lock:
            hit = self._cache.get(text)
        if hit is not None:
            return hit
        with self._gate:
            try:
                resp = requests.post(
                    f"{self.base_url}/embeddings",
                    json={"model": self.model, "input": text},
                    headers={"Authorization": f"Bearer {self.api_key}"},
                    timeout=self.timeout,
                )
            except requests.RequestException as exc:
                raise ProviderError(f"embedding request failed: {exc}") from exc
        if resp.status_code != 200:
            raise ProviderError(
                f"embedding endpoint returned {resp.status_code}", status=resp.status_code
            )
        try:
            values = resp.json()["data"][0]["embedding"]
        except (KeyError, IndexError, ValueError) as exc:
            raise ProviderError(f"malformed embedding response: {exc}") from exc
        vec = np.asarray(values, dtype=np.float64)
        if vec.shape != (self.dim,):
            raise ProviderError(f"expected dim {self.dim}, got {vec.shape}")
        norm = np.linalg.norm(vec)
        if norm == 0 or not np.isfinite(norm):
            raise ProviderError("embedding endpoint returned a degenerate vector")
        vec = vec / norm
        # Cache per process run: the determinism contract says the same text
        # must map to the same vector within a run, even if the served model
        # is not bitwise stable across calls.
        with self._cache_lock:
            self._cache.setdefault(text, vec)
            return self._cache[text]


def embed(provider: EmbeddingProvider, text: str) -> np.ndarray:
    """Embed ``text``; unit-norm vector of ``provider.dim`` entries."""
    return provider.embed(text)


def cosine_sim(a: Sequence[float] | np.ndarray, b: Sequence[float] | np.ndarray) -> float:
    """Cosine similarity of two unit vectors, clamped to [-1, 1]."""
    va = np.asarray(a, dtype=np.float64)
    vb = np.asarray(b, dtype=np.float64)
    if va.shape != vb.shape:
        raise DimMismatchError(f"dim mismatch: {va.shape} vs {vb.shape}")
    return float(min(1.0, max(-1.0, float(np.dot(va, vb)))))


def check_unit_norm(vec: Sequence[float] | np.ndarray) -> bool:
    """True when all entries are finite and the L2 norm is 1 within 1e-6."""
    v = np.asarray(vec, dtype=np.float64)
    if not np.all(np.isfinite(v)):
        return False
    return abs(float(np.linalg.norm(v)) - 1.0) <= NORM_TOLERANCE

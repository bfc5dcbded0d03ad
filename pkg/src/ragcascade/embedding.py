"""Text embedding: 1024-dimensional unit vectors and cosine arithmetic.

Two embedder implementations share one interface:

* :class:`HashEmbedder` is the built-in deterministic feature-hash embedder.
  It tokenizes on Unicode whitespace/punctuation, hashes each token with a
  fixed-seed 64-bit hash into one of 1024 buckets with a hash-derived +/-1
  sign, accumulates, and L2-normalizes. Queries that share tokens get high
  cosine similarity, which stands in for semantic similarity at desk scale
  and makes cache behavior fully testable offline.
* :class:`RemoteEmbedder` is a thin JSON-over-HTTP client for an external
  embedding service.

Vectors are reproducible across runs and machines: the hash seed is the
fixed constant :data:`HASH_SEED`.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from hashlib import blake2b
from typing import Iterable, Protocol, Sequence

import numpy as np

from .errors import BackendUnavailable, DimensionMismatch, EmptyInput, InvalidVector

#: Embedding width. A config constant; only 1024 is exercised by the tests.
DIMENSION = 1024

#: Fixed 64-bit seed for the feature hash. Changing it changes every vector.
HASH_SEED = 0x5EED_1024_CA5C_ADE5

#: Unit-norm tolerance for stored vectors.
NORM_TOLERANCE = 1e-5

_TOKEN_RE = re.compile(r"\w+", re.UNICODE)


def tokenize(text: str) -> list[str]:
    """Split on Unicode whitespace/punctuation; punctuation is dropped."""
    return _TOKEN_RE.findall(text)


@dataclass(frozen=True, eq=False)
class EmbeddingVector:
    """A fixed-length unit vector stored at float32 precision."""

    values: np.ndarray

    @classmethod
    def wrap(cls, values: np.ndarray | Sequence[float]) -> "EmbeddingVector":
        """Validate and wrap raw components (must already be unit-norm)."""
        arr = np.asarray(values, dtype=np.float32)
        if arr.shape != (DIMENSION,):
            raise DimensionMismatch(
                f"expected {DIMENSION} components, got shape {arr.shape}"
            )
        if not np.all(np.isfinite(arr)):
            raise InvalidVector("vector contains NaN or Inf components")
        norm = float(np.linalg.norm(arr.astype(np.float64)))
        if abs(norm - 1.0) > NORM_TOLERANCE:
            raise InvalidVector(f"vector norm {norm} deviates from 1 by > {NORM_TOLERANCE}")
        arr = arr.copy()
        arr.setflags(write=False)
        return cls(values=arr)

    @classmethod
    def normalized(cls, values: np.ndarray | Sequence[float]) -> "EmbeddingVector":
        """L2-normalize arbitrary finite components and wrap."""
        arr = np.asarray(values, dtype=np.float64)
        if arr.shape != (DIMENSION,):
            raise DimensionMismatch(
                f"expected {DIMENSION} components, got shape {arr.shape}"
            )
        if not np.all(np.isfinite(arr)):
            raise InvalidVector("vector contains NaN or Inf components")
        norm = float(np.linalg.norm(arr))
        if norm == 0.0:
            raise InvalidVector("cannot normalize a zero vector")
        return cls.wrap((arr / norm).astype(np.float32))

    def __len__(self) -> int:
        return int(self.values.shape[0])


def _as_array(vector: "EmbeddingVector | np.ndarray | Sequence[float]") -> np.ndarray:
    if isinstance(vector, EmbeddingVector):
        return vector.values
    return np.asarray(vector)


def cosine(a, b) -> float:
    """Cosine similarity of two unit vectors: their dot product, clamped.

    Inputs must share a dimension and be unit-norm (the embedder and index
    contracts guarantee this); the dot product is accumulated at 64-bit
    precision and clamped to [-1, 1] against float rounding.
    """
    va = _as_array(a)
    vb = _as_array(b)
    if va.shape != vb.shape:
        raise DimensionMismatch(f"shapes differ: {va.shape} vs {vb.shape}")
    score = float(np.dot(va.astype(np.float64), vb.astype(np.float64)))
    return max(-1.0, min(1.0, score))


class Embedder(Protocol):
    """Anything that turns text into 1024-D unit vectors."""

    def embed(self, text: str) -> EmbeddingVector: ...

    def embed_many(self, texts: Sequence[str]) -> list[EmbeddingVector]: ...


class HashEmbedder:
    """Deterministic bag-of-tokens feature-hash embedder.

    Equal inputs yield bit-identical vectors. Text whose token signs all
    cancel (or that has no tokens at all) falls back to a deterministic
    one-hot unit vector derived from the raw byte hash, so a zero vector is
    never emitted.
    """

    def __init__(self, seed: int = HASH_SEED):
        self._key = seed.to_bytes(8, "big")
        self._token_cache: dict[str, tuple[int, float]] = {}

    def _hash64(self, data: bytes) -> int:
        return int.from_bytes(blake2b(data, digest_size=8, key=self._key).digest(), "big")

    def _bucket_sign(self, token: str) -> tuple[int, float]:
        cached = self._token_cache.get(token)
        if cached is None:
            h = self._hash64(b"tok:" + token.encode("utf-8"))
            cached = (h % DIMENSION, 1.0 if (h >> 63) & 1 else -1.0)
            self._token_cache[token] = cached
        return cached

    def _fallback(self, text: str) -> np.ndarray:
        h = self._hash64(b"raw:" + text.encode("utf-8"))
        arr = np.zeros(DIMENSION, dtype=np.float32)
        arr[h % DIMENSION] = 1.0 if (h >> 63) & 1 else -1.0
        return arr

    def embed(self, text: str) -> EmbeddingVector:
        if len(text) == 0:
            raise EmptyInput("cannot embed an empty string")
        acc = np.zeros(DIMENSION, dtype=np.float64)
        for token in tokenize(text):
            bucket, sign = self._bucket_sign(token)
            acc[bucket] += sign
        norm = float(np.linalg.norm(acc))
        if norm == 0.0:
            return EmbeddingVector.wrap(self._fallback(text))
        return EmbeddingVector.wrap((acc / norm).astype(np.float32))

    def embed_many(self, texts: Sequence[str]) -> list[EmbeddingVector]:
        return [self.embed(text) for text in texts]


class RemoteEmbedder:
    """JSON-over-HTTP embedding client.

    Protocol: POST ``{"texts": [string, ...]}`` to the endpoint, expect
    ``{"vectors": [[1024 floats], ...]}`` back. Returned vectors are
    re-normalized defensively before wrapping.
    """

    def __init__(self, endpoint: str, *, timeout: float = 30.0, client=None):
        import httpx

        self.endpoint = endpoint
        self._client = client or httpx.Client(timeout=timeout)

    def embed(self, text: str) -> EmbeddingVector:
        return self.embed_many([text])[0]

    def embed_many(self, texts: Sequence[str]) -> list[EmbeddingVector]:
        import httpx

        for text in texts:
            if len(text) == 0:
                raise EmptyInput("cannot embed an empty string")
        try:
            response = self._client.post(self.endpoint, json={"texts": list(texts)})
            response.raise_for_status()
            payload = response.json()
        except httpx.HTTPError as exc:
            raise BackendUnavailable(f"embedding endpoint failed: {exc}") from exc
        vectors = payload.get("vectors")
        if not isinstance(vectors, list) or len(vectors) != len(texts):
            raise BackendUnavailable(
                f"embedding endpoint returned {len(vectors) if isinstance(vectors, list) else 'no'}"
                f" vectors for {len(texts)} texts"
            )
        return [EmbeddingVector.normalized(np.asarray(v, dtype=np.float64)) for v in vectors]


def mean_cosine(reference, others: Iterable) -> float:
    """Mean cosine similarity between ``reference`` and each of ``others``."""
    scores = [cosine(reference, other) for other in others]
    if not scores:
        raise ValueError("mean_cosine needs at least one comparison vector")
    return float(np.mean(scores))

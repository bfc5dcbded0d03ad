"""Exact flat (linear-scan) cosine k-NN index.

One structure backs the semantic cache, the main knowledge base, and the
adaptive knowledge memory. Design points:

* Linear scan only, no approximation: every search examines all entries,
  so recall is 100% by construction.
* Vectors are stored at float32; scores are float32 components accumulated
  into 64-bit sums. Ties (exact score equality) are broken by ascending
  insertion order, which makes search fully deterministic given the
  construction order.
* A stored vector that is bit-identical to the query scores exactly 1.0:
  the true cosine of a vector with itself is 1 regardless of float32
  rounding of its norm. This keeps inclusive threshold checks at 1.0 exact.
* ``snapshot``/``restore`` serialize to a single byte stream: a versioned
  header (magic, version, dimension, count, payload length, CRC32) followed
  by fixed-width float32 vector records and a line-delimited JSON payload
  sidecar.

Concurrency: a single mutex serializes writes; readers take the same mutex
briefly, so a search sees a consistent pre- or post-insert view, never a
torn one. The index targets desk scale (<= 1e6 entries); the scan cost is
O(n * dim) per query and memory holds both float32 and float64 copies.
"""

from __future__ import annotations

import json
import struct
import threading
import zlib
from dataclasses import dataclass
from typing import Any, Callable, Iterable

import numpy as np

from .embedding import DIMENSION, EmbeddingVector
from .errors import CorruptSnapshot, InvalidVector

_MAGIC = b"RCFLATIX"
_VERSION = 1
_HEADER = struct.Struct("<8sIIQQI")  # magic, version, dim, count, payload_len, crc32

#: Unit-norm tolerance accepted at the index boundary (slightly looser than
#: the embedder's own tolerance to accommodate float32 re-rounding).
_NORM_TOLERANCE = 1e-4


@dataclass(frozen=True)
class SearchHit:
    """One ranked search result. ``rank`` is 1-based."""

    entry_id: str
    score: float
    rank: int


def _coerce_vector(vector, dim: int) -> np.ndarray:
    if isinstance(vector, EmbeddingVector):
        arr = vector.values.astype(np.float32)
    else:
        arr = np.asarray(vector, dtype=np.float32)
    if arr.shape != (dim,):
        raise InvalidVector(f"expected shape ({dim},), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidVector("vector contains NaN or Inf components")
    norm = float(np.linalg.norm(arr.astype(np.float64)))
    if abs(norm - 1.0) > _NORM_TOLERANCE:
        raise InvalidVector(f"vector norm {norm} is not 1 within {_NORM_TOLERANCE}")
    return arr


class FlatIndex:
    """Exact cosine k-NN over unit vectors with upsert semantics."""

    def __init__(self, dim: int = DIMENSION):
        if dim < 1:
            raise ValueError("dim must be >= 1")
        self._dim = dim
        self._lock = threading.RLock()
        self._capacity = 16
        self._vectors32 = np.zeros((self._capacity, dim), dtype=np.float32)
        self._vectors64 = np.zeros((self._capacity, dim), dtype=np.float64)
        self._ids: list[str] = []
        self._row_by_id: dict[str, int] = {}
        self._payloads: list[Any] = []
        self._insertion_counter = 0
        self.search_count = 0

    @property
    def dim(self) -> int:
        return self._dim

    def __len__(self) -> int:
        with self._lock:
            return len(self._ids)

    def __contains__(self, entry_id: str) -> bool:
        with self._lock:
            return entry_id in self._row_by_id

    def entry_ids(self) -> tuple[str, ...]:
        """Entry ids in insertion order."""
        with self._lock:
            return tuple(self._ids)

    def payload(self, entry_id: str) -> Any:
        with self._lock:
            return self._payloads[self._row_by_id[entry_id]]

    def vector(self, entry_id: str) -> np.ndarray:
        """Stored float32 vector for an entry (read-only copy)."""
        with self._lock:
            return self._vectors32[self._row_by_id[entry_id]].copy()

    def _grow(self, needed: int) -> None:
        while self._capacity < needed:
            self._capacity *= 2
        for name in ("_vectors32", "_vectors64"):
            old = getattr(self, name)
            fresh = np.zeros((self._capacity, self._dim), dtype=old.dtype)
            fresh[: len(self._ids)] = old[: len(self._ids)]
            setattr(self, name, fresh)

    def insert(self, entry_id: str, vector, payload: Any = None) -> None:
        """Insert or replace (upsert) an entry.

        A duplicate ``entry_id`` replaces the vector and payload in place
        and keeps the original insertion slot, so tie-break order is stable.
        """
        arr = _coerce_vector(vector, self._dim)
        with self._lock:
            row = self._row_by_id.get(entry_id)
            if row is None:
                row = len(self._ids)
                if row + 1 > self._capacity:
                    self._grow(row + 1)
                self._ids.append(entry_id)
                self._payloads.append(payload)
                self._row_by_id[entry_id] = row
                self._insertion_counter += 1
            else:
                self._payloads[row] = payload
            self._vectors32[row] = arr
            self._vectors64[row] = arr.astype(np.float64)

    def extend(self, items: Iterable[tuple[str, Any, Any]]) -> int:
        """Bulk upsert of ``(entry_id, vector, payload)`` tuples."""
        count = 0
        for entry_id, vector, payload in items:
            self.insert(entry_id, vector, payload)
            count += 1
        return count

    def search(self, query_vector, k: int) -> list[SearchHit]:
        """Exact top-k by cosine, ties broken by ascending insertion order.

        An empty index returns an empty list; ``k`` larger than the index
        truncates to the index size.
        """
        if k < 1:
            raise ValueError("k must be >= 1")
        q32 = _coerce_vector(query_vector, self._dim)
        q64 = q32.astype(np.float64)
        with self._lock:
            self.search_count += 1
            n = len(self._ids)
            if n == 0:
                return []
            # Per-row reduction, not BLAS gemv: bit-identical rows must get
            # bit-identical scores or duplicate-vector ties break, and gemv
            # kernels can differ in the last ulp across rows.
            scores = np.einsum("ij,j->i", self._vectors64[:n], q64)
            take = min(k, n)
            # Primary key: score descending; secondary: insertion order ascending.
            order = np.lexsort((np.arange(n), -scores))[:take]
            hits = []
            for rank, row in enumerate(order, start=1):
                score = float(scores[row])
                if score > 1.0 - 1e-6 and np.array_equal(self._vectors32[row], q32):
                    score = 1.0
                hits.append(
                    SearchHit(
                        entry_id=self._ids[row],
                        score=max(-1.0, min(1.0, score)),
                        rank=rank,
                    )
                )
            return hits

    def clear(self) -> None:
        with self._lock:
            self._ids.clear()
            self._row_by_id.clear()
            self._payloads.clear()
            self._insertion_counter = 0

    # -- snapshot / restore ------------------------------------------------

    def snapshot(self, payload_encoder: Callable[[Any], Any] | None = None) -> bytes:
        """Serialize to bytes. Payloads must be JSON-serializable, or pass
        ``payload_encoder`` to convert them first."""
        encode = payload_encoder or (lambda p: p)
        with self._lock:
            n = len(self._ids)
            vec_block = self._vectors32[:n].tobytes()
            meta_lines = []
            for i in range(n):
                meta_lines.append(
                    json.dumps(
                        {"id": self._ids[i], "payload": encode(self._payloads[i])},
                        ensure_ascii=False,
                    )
                )
            meta_block = ("\n".join(meta_lines) + ("\n" if meta_lines else "")).encode("utf-8")
            body = vec_block + meta_block
            header = _HEADER.pack(
                _MAGIC, _VERSION, self._dim, n, len(meta_block), zlib.crc32(body)
            )
            return header + body

    @classmethod
    def restore(
        cls,
        data: bytes,
        payload_decoder: Callable[[Any], Any] | None = None,
    ) -> "FlatIndex":
        """Rebuild an index from ``snapshot`` bytes.

        Raises :class:`CorruptSnapshot` on bad magic, version, sizes, or
        checksum. The restored index is observationally identical to the
        original: same search results for every query.
        """
        decode = payload_decoder or (lambda p: p)
        if len(data) < _HEADER.size:
            raise CorruptSnapshot("snapshot shorter than header")
        magic, version, dim, count, meta_len, crc = _HEADER.unpack_from(data)
        if magic != _MAGIC:
            raise CorruptSnapshot(f"bad magic {magic!r}")
        if version != _VERSION:
            raise CorruptSnapshot(f"unsupported snapshot version {version}")
        body = data[_HEADER.size :]
        vec_len = count * dim * 4
        if len(body) != vec_len + meta_len:
            raise CorruptSnapshot(
                f"body length {len(body)} != expected {vec_len + meta_len}"
            )
        if zlib.crc32(body) != crc:
            raise CorruptSnapshot("checksum mismatch")
        vectors = np.frombuffer(body[:vec_len], dtype=np.float32).reshape(count, dim)
        index = cls(dim=dim)
        meta = body[vec_len:].decode("utf-8").splitlines()
        if len(meta) != count:
            raise CorruptSnapshot(f"payload sidecar has {len(meta)} lines, expected {count}")
        for i, line in enumerate(meta):
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorruptSnapshot(f"payload line {i + 1}: {exc}") from exc
            index.insert(record["id"], vectors[i], decode(record.get("payload")))
        return index

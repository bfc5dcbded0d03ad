"""Layer 1 (fixed KV-cache) and Layer 2 (semantic cache).

The fixed KV-cache maps the raw query byte string to the last answer served
for it; any single-byte difference is a distinct key. The semantic cache
keys answers by query embedding and hits when the top-1 cosine score meets
the threshold (inclusive at equality, so a re-embedded identical query
always hits for any threshold <= 1).

Both caches are unbounded by default: simulation sessions start empty and
grow for their lifetime. A ``max_entries`` cap enables LRU-style eviction
for long-running service mode, where recency is refreshed by write-back on
every serve.
"""

from __future__ import annotations

import logging
import threading
import time
from collections import OrderedDict
from dataclasses import dataclass
from typing import Any

from .embedding import Embedder, EmbeddingVector
from .errors import CascadeError
from .index import FlatIndex
from .model import AnswerRecord, Query

logger = logging.getLogger(__name__)

#: Semantic-cache threshold used when none is configured.
DEFAULT_SEMANTIC_THRESHOLD = 0.85


@dataclass(frozen=True)
class CacheEntry:
    """A cached answer plus its creation timestamp (staleness is surfaced,
    never acted on: cached answers are not invalidated on corpus updates)."""

    query_text: str
    answer: AnswerRecord
    created_at_ns: int


class FixedKVCache:
    """Exact-match cache from raw query text to the last answer written."""

    def __init__(self, max_entries: int | None = None):
        if max_entries is not None and max_entries < 1:
            raise ValueError("max_entries must be >= 1 or None")
        self._entries: "OrderedDict[str, CacheEntry]" = OrderedDict()
        self._max_entries = max_entries
        self._lock = threading.Lock()
        self.hits = 0
        self.misses = 0

    def get(self, query_text: str) -> AnswerRecord | None:
        """Hit iff a byte-identical key is present."""
        with self._lock:
            entry = self._entries.get(query_text)
            if entry is None:
                self.misses += 1
                return None
            self.hits += 1
            return entry.answer

    def put(self, query_text: str, answer: AnswerRecord) -> None:
        """Last write wins; refreshes LRU recency when capped."""
        with self._lock:
            if query_text in self._entries:
                self._entries.pop(query_text)
            self._entries[query_text] = CacheEntry(
                query_text=query_text, answer=answer, created_at_ns=time.monotonic_ns()
            )
            if self._max_entries is not None:
                while len(self._entries) > self._max_entries:
                    self._entries.popitem(last=False)

    def __len__(self) -> int:
        with self._lock:
            return len(self._entries)

    def clear(self) -> None:
        with self._lock:
            self._entries.clear()

    def stats(self) -> dict[str, int]:
        with self._lock:
            return {"hits": self.hits, "misses": self.misses, "size": len(self._entries)}

    def export_entries(self) -> list[dict[str, Any]]:
        """Cache contents for the common snapshot format (JSONL-ready)."""
        with self._lock:
            return [
                {
                    "query_text": e.query_text,
                    "answer": e.answer.to_dict(),
                    "created_at_ns": e.created_at_ns,
                }
                for e in self._entries.values()
            ]


class SemanticCache:
    """Cosine-threshold cache over query embeddings.

    Entries are keyed by the original query text (upsert), with the stored
    vector always equal to ``embed(query_text)``.
    """

    def __init__(
        self,
        embedder: Embedder,
        threshold: float = DEFAULT_SEMANTIC_THRESHOLD,
        max_entries: int | None = None,
    ):
        if not 0.0 < threshold <= 1.0:
            raise ValueError(f"threshold {threshold} outside (0, 1]")
        if max_entries is not None and max_entries < 1:
            raise ValueError("max_entries must be >= 1 or None")
        self._embedder = embedder
        self.threshold = threshold
        self._max_entries = max_entries
        self._index = FlatIndex()
        self._recency: dict[str, int] = {}
        self._seq = 0
        self._lock = threading.Lock()
        self.hits = 0
        self.misses = 0

    def lookup(self, query_embedding: EmbeddingVector) -> tuple[AnswerRecord, float] | None:
        """Top-1 hit iff its score >= threshold (inclusive boundary).

        Exact score ties fall back to the flat index's insertion-order
        tie-break, so lookups are deterministic.
        """
        index = self._index  # stable reference across a concurrent eviction rebuild
        hits = index.search(query_embedding, k=1)
        with self._lock:
            if hits and hits[0].score >= self.threshold:
                self.hits += 1
                entry: CacheEntry = index.payload(hits[0].entry_id)
                return entry.answer, hits[0].score
            self.misses += 1
            return None

    def put(
        self,
        query_text: str,
        answer: AnswerRecord,
        vector: EmbeddingVector | None = None,
    ) -> None:
        """Upsert keyed by the query text; ``vector`` skips re-embedding."""
        if vector is None:
            vector = self._embedder.embed(query_text)
        entry = CacheEntry(
            query_text=query_text, answer=answer, created_at_ns=time.monotonic_ns()
        )
        with self._lock:
            self._index.insert(query_text, vector, entry)
            self._seq += 1
            self._recency[query_text] = self._seq
            if self._max_entries is not None and len(self._index) > self._max_entries:
                self._evict_locked()

    def _evict_locked(self) -> None:
        # The flat index has no delete; rebuild from the most recent entries,
        # reusing stored vectors (no re-embedding, which could be remote).
        keep = sorted(self._recency, key=self._recency.get, reverse=True)[: self._max_entries]
        keep_set = set(keep)
        survivors = [
            (text, self._index.vector(text), self._index.payload(text))
            for text in self._index.entry_ids()
            if text in keep_set
        ]
        rebuilt = FlatIndex()
        for text, vector, entry in survivors:
            rebuilt.insert(text, vector, entry)
        rebuilt.search_count = self._index.search_count
        self._index = rebuilt
        self._recency = {text: self._recency[text] for text in keep_set}

    def __len__(self) -> int:
        return len(self._index)

    def clear(self) -> None:
        with self._lock:
            self._index.clear()
            self._recency.clear()

    @property
    def index(self) -> FlatIndex:
        return self._index

    def stats(self) -> dict[str, Any]:
        return {"hits": self.hits, "misses": self.misses, "size": len(self._index)}

    def snapshot(self) -> bytes:
        return self._index.snapshot(
            payload_encoder=lambda e: {
                "query_text": e.query_text,
                "answer": e.answer.to_dict(),
                "created_at_ns": e.created_at_ns,
            }
        )

    @classmethod
    def restore(
        cls,
        data: bytes,
        embedder: Embedder,
        threshold: float = DEFAULT_SEMANTIC_THRESHOLD,
        max_entries: int | None = None,
    ) -> "SemanticCache":
        cache = cls(embedder, threshold=threshold, max_entries=max_entries)
        restored = FlatIndex.restore(
            data,
            payload_decoder=lambda p: CacheEntry(
                query_text=p["query_text"],
                answer=AnswerRecord.from_dict(p["answer"]),
                created_at_ns=int(p["created_at_ns"]),
            ),
        )
        cache._index = restored
        for seq, text in enumerate(restored.entry_ids(), start=1):
            cache._recency[text] = seq
        cache._seq = len(cache._recency)
        return cache


def writeback(
    kv: FixedKVCache,
    sc: SemanticCache,
    query: Query,
    answer: AnswerRecord,
    *,
    vector: EmbeddingVector | None = None,
) -> None:
    """Synchronously store a served answer in both caches (write-through).

    Runs before the routing call that produced the answer returns, so an
    identical or semantically similar question issued immediately afterward
    bypasses retrieval. Failures are logged and never surfaced: a broken
    cache write must not fail the answer that was already produced.
    """
    try:
        kv.put(query.text, answer)
    except CascadeError:
        logger.exception("fixed KV write-back failed for query %s", query.id)
    try:
        sc.put(query.text, answer, vector=vector)
    except CascadeError:
        logger.exception("semantic cache write-back failed for query %s", query.id)

"""Layer 5 (main knowledge base) and Layer 4 (adaptive knowledge memory).

The main knowledge base is the bulk-ingested corpus index. Every live
search against it returns the top-k passages for context generation and a
wider seed list (top-10 by default) that is queued for insertion into the
adaptive knowledge memory, a small subset index that warms up over the
session.

AKM insertions never block the response path. In deterministic-settle mode
(tests, simulation) queued passages are applied at a barrier before the
next query is routed; in service mode a background worker applies them
within a bounded settle interval.
"""

from __future__ import annotations

import threading
import time
from collections import deque
from dataclasses import dataclass
from typing import Iterable, Sequence

from .embedding import DIMENSION, Embedder, EmbeddingVector
from .errors import EmptyKnowledgeBase, MalformedJsonl
from .index import FlatIndex
from .jsonl import iter_jsonl
from .model import Passage

DEFAULT_RETRIEVAL_K = 3
DEFAULT_SEED_K = 10
DEFAULT_AKM_THRESHOLD = 0.85


@dataclass
class CorpusInfo:
    name: str
    ingested_at_ns: int
    count: int


class MainKnowledgeBase:
    """Flat-index store over the full ingested passage corpus."""

    def __init__(self, dim: int = DIMENSION, name: str = "corpus"):
        self._index = FlatIndex(dim=dim)
        self.info = CorpusInfo(name=name, ingested_at_ns=time.monotonic_ns(), count=0)

    def add(self, passage: Passage) -> None:
        self._index.insert(passage.id, passage.embedding, passage)
        self.info.count = len(self._index)

    def get(self, passage_id: str) -> Passage:
        return self._index.payload(passage_id)

    def __len__(self) -> int:
        return len(self._index)

    def __contains__(self, passage_id: str) -> bool:
        return passage_id in self._index

    @property
    def index(self) -> FlatIndex:
        return self._index

    def retrieve(
        self,
        query_embedding: EmbeddingVector,
        k: int = DEFAULT_RETRIEVAL_K,
        seed_k: int = DEFAULT_SEED_K,
    ) -> tuple[list[Passage], list[Passage]]:
        """Top-k passages for generation plus the top-seed_k seed list.

        One exact search serves both: the seed list is a prefix-consistent
        superset of the top-k list. Raises :class:`EmptyKnowledgeBase` when
        no passages have been ingested.
        """
        if k < 1:
            raise ValueError("k must be >= 1")
        if seed_k < k:
            raise ValueError("seed_k must be >= k")
        if len(self._index) == 0:
            raise EmptyKnowledgeBase("knowledge base has no passages")
        hits = self._index.search(query_embedding, k=seed_k)
        passages = [self._index.payload(h.entry_id) for h in hits]
        return passages[:k], passages

    def snapshot(self) -> bytes:
        return self._index.snapshot(
            payload_encoder=lambda p: {
                "text": p.text,
                "source": p.source,
                "answer": p.answer,
            }
        )

    @classmethod
    def restore(cls, data: bytes, name: str = "corpus") -> "MainKnowledgeBase":
        kb = cls(name=name)
        # Rebuild passages with embeddings recovered from the vector block.
        raw = FlatIndex.restore(data)
        restored = FlatIndex(dim=raw.dim)
        for entry_id in raw.entry_ids():
            meta = raw.payload(entry_id)
            vector = EmbeddingVector.wrap(raw.vector(entry_id))
            passage = Passage(
                id=entry_id,
                text=meta["text"],
                source=meta["source"],
                embedding=vector,
                answer=meta.get("answer"),
            )
            restored.insert(entry_id, vector, passage)
        kb._index = restored
        kb.info.count = len(restored)
        return kb


def ingest_corpus(
    lines: Iterable[str],
    embedder: Embedder,
    *,
    kb: MainKnowledgeBase | None = None,
    source_default: str = "corpus",
    lenient: bool = False,
    on_error=None,
) -> MainKnowledgeBase:
    """Build (or extend) a knowledge base from JSONL passage lines.

    Each line is ``{"id": str, "text": str, "source": str}`` with an
    optional ``"answer"`` QA annotation; embeddings are computed at ingest
    time. Malformed lines raise :class:`MalformedJsonl` with their line
    number unless ``lenient`` is set.
    """
    if kb is None:
        kb = MainKnowledgeBase()
    for lineno, obj in iter_jsonl(lines, lenient=lenient, on_error=on_error):
        try:
            passage_id = str(obj["id"])
            text = obj["text"]
            if not isinstance(text, str) or not text.strip():
                raise KeyError("text")
        except KeyError as exc:
            message = f"line {lineno}: missing or empty field {exc}"
            if lenient:
                if on_error is not None:
                    on_error(lineno, message)
                continue
            raise MalformedJsonl(message, line_number=lineno) from None
        passage = Passage(
            id=passage_id,
            text=text,
            source=str(obj.get("source", source_default)),
            embedding=embedder.embed(text),
            answer=obj.get("answer"),
        )
        kb.add(passage)
    return kb


class AdaptiveKnowledgeMemory:
    """Small subset index grown at runtime from main-KB search results.

    Retrieval is gated like the semantic cache: the top-k passages are
    returned only when the top-1 cosine score meets ``threshold``;
    otherwise the router falls through to full retrieval.
    """

    def __init__(
        self,
        dim: int = DIMENSION,
        threshold: float = DEFAULT_AKM_THRESHOLD,
        deterministic: bool = True,
        settle_seconds: float = 0.05,
    ):
        if not 0.0 < threshold <= 1.0:
            raise ValueError(f"threshold {threshold} outside (0, 1]")
        self._index = FlatIndex(dim=dim)
        self.threshold = threshold
        self.deterministic = deterministic
        self.settle_seconds = settle_seconds
        self._pending: deque[Passage] = deque()
        self._lock = threading.Lock()
        self._wake = threading.Event()
        self._stop = False
        self._worker: threading.Thread | None = None
        self.hits = 0
        self.misses = 0
        self.inserted_total = 0
        if not deterministic:
            self._start_worker()

    def _start_worker(self) -> None:
        self._worker = threading.Thread(
            target=self._drain_loop, name="akm-settle", daemon=True
        )
        self._worker.start()

    def _drain_loop(self) -> None:
        while not self._stop:
            self._wake.wait(timeout=self.settle_seconds)
            self._wake.clear()
            self.settle()

    def stop(self) -> None:
        self._stop = True
        self._wake.set()
        if self._worker is not None:
            self._worker.join(timeout=1.0)

    def enqueue(self, passages: Sequence[Passage]) -> None:
        """Queue seed passages; never blocks the response path."""
        with self._lock:
            self._pending.extend(passages)
        if not self.deterministic:
            self._wake.set()

    def settle(self) -> int:
        """Apply queued insertions; duplicates (by passage id) are skipped."""
        applied = 0
        while True:
            with self._lock:
                if not self._pending:
                    return applied
                passage = self._pending.popleft()
            if passage.id not in self._index:
                self._index.insert(passage.id, passage.embedding, passage)
                self.inserted_total += 1
                applied += 1

    def pending_count(self) -> int:
        with self._lock:
            return len(self._pending)

    def retrieve(self, query_embedding: EmbeddingVector, k: int) -> list[Passage] | None:
        """Top-k passages iff the top-1 score >= threshold; else a miss."""
        if k < 1:
            raise ValueError("k must be >= 1")
        hits = self._index.search(query_embedding, k=k)
        if hits and hits[0].score >= self.threshold:
            self.hits += 1
            return [self._index.payload(h.entry_id) for h in hits]
        self.misses += 1
        return None

    def ids(self) -> frozenset[str]:
        return frozenset(self._index.entry_ids())

    def __len__(self) -> int:
        return len(self._index)

    @property
    def index(self) -> FlatIndex:
        return self._index

    def clear(self) -> None:
        with self._lock:
            self._pending.clear()
        self._index.clear()

    def stats(self) -> dict[str, int]:
        return {
            "hits": self.hits,
            "misses": self.misses,
            "size": len(self._index),
            "pending": self.pending_count(),
        }

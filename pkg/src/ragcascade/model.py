"""Core domain types: queries, layer provenance, answers, training triples.

All types are immutable value objects and are safe to share across threads.
Each type serializes to a flat JSON object (snake_case keys) for logs,
snapshots, and the HTTP API.
"""

from __future__ import annotations

import enum
import itertools
import time
from dataclasses import dataclass, field, replace
from typing import TYPE_CHECKING, Any

from .errors import EmptyQuery

if TYPE_CHECKING:  # pragma: no cover
    from .embedding import EmbeddingVector


class LayerTag(enum.IntEnum):
    """The five routing layers, ordered by cascade precedence.

    Lower values are probed first. The integer order is total and stable
    across serialization round-trips (wire form is the snake_case name).
    """

    FIXED_KV = 1
    SEMANTIC_CACHE = 2
    MEMORY_RECALL = 3
    ADAPTIVE_MEMORY = 4
    NAIVE_RAG = 5

    @property
    def wire_name(self) -> str:
        return self.name.lower()

    @classmethod
    def from_wire(cls, name: str) -> "LayerTag":
        try:
            return cls[name.upper()]
        except KeyError:
            raise ValueError(f"unknown layer tag: {name!r}") from None


#: Cascade order probed by the router: cheapest first, full retrieval last.
CASCADE_ORDER: tuple[LayerTag, ...] = (
    LayerTag.FIXED_KV,
    LayerTag.SEMANTIC_CACHE,
    LayerTag.MEMORY_RECALL,
    LayerTag.ADAPTIVE_MEMORY,
    LayerTag.NAIVE_RAG,
)

#: Layers that answer without retrieved context; their answers never carry
#: supporting passages.
CONTEXT_FREE_LAYERS = frozenset(
    {LayerTag.FIXED_KV, LayerTag.SEMANTIC_CACHE, LayerTag.MEMORY_RECALL}
)

_query_counter = itertools.count(1)


@dataclass(frozen=True)
class Query:
    """A user question routed through the cascade.

    ``issued_at`` is a monotonic timestamp in nanoseconds so latency
    arithmetic is immune to wall-clock adjustments. ``text`` is preserved
    byte-for-byte; exact-match cache semantics depend on it.
    """

    id: str
    text: str
    session_id: str
    issued_at: int

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "text": self.text,
            "session_id": self.session_id,
            "issued_at": self.issued_at,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "Query":
        return cls(
            id=data["id"],
            text=data["text"],
            session_id=data["session_id"],
            issued_at=int(data["issued_at"]),
        )


def validate_query(
    raw_text: str,
    session_id: str,
    *,
    query_id: str | None = None,
    issued_at_ns: int | None = None,
) -> Query:
    """Validate raw text and mint a :class:`Query`.

    The text is kept byte-for-byte: no trimming, no case folding, no
    normalization of any kind. Only empty / whitespace-only input is
    rejected. Deterministic callers (the simulator) pass explicit ids and
    timestamps; by default both are freshly assigned.
    """
    if not raw_text or not raw_text.strip():
        raise EmptyQuery("query text is empty or whitespace-only")
    if query_id is None:
        query_id = f"q{next(_query_counter):08d}"
    if issued_at_ns is None:
        issued_at_ns = time.monotonic_ns()
    return Query(id=query_id, text=raw_text, session_id=session_id, issued_at=issued_at_ns)


@dataclass(frozen=True)
class Passage:
    """A retrievable unit of context with its precomputed embedding.

    ``answer`` is an optional QA annotation consumed by the deterministic
    stub backend; bulk corpora without annotations leave it ``None``.
    """

    id: str
    text: str
    source: str
    embedding: "EmbeddingVector"
    answer: str | None = None

    def to_dict(self, *, include_embedding: bool = True) -> dict[str, Any]:
        data: dict[str, Any] = {
            "id": self.id,
            "text": self.text,
            "source": self.source,
        }
        if include_embedding:
            data["embedding"] = [float(x) for x in self.embedding.values]
        if self.answer is not None:
            data["answer"] = self.answer
        return data


@dataclass(frozen=True)
class AnswerRecord:
    """An answer annotated with the layer that produced it.

    Invariants enforced here: confidence lies in [0, 1], latency is
    non-negative, and supporting passages are present exactly when the
    serving layer generated from retrieved context (ADAPTIVE_MEMORY or
    NAIVE_RAG).
    """

    text: str
    layer: LayerTag
    confidence: float
    supporting_passage_ids: tuple[str, ...] = field(default_factory=tuple)
    latency_seconds: float = 0.0

    def __post_init__(self) -> None:
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence {self.confidence} outside [0, 1]")
        if self.latency_seconds < 0.0:
            raise ValueError(f"negative latency {self.latency_seconds}")
        object.__setattr__(
            self, "supporting_passage_ids", tuple(self.supporting_passage_ids)
        )
        has_passages = bool(self.supporting_passage_ids)
        if self.layer in CONTEXT_FREE_LAYERS and has_passages:
            raise ValueError(f"{self.layer.wire_name} answers must not carry passages")
        if self.layer not in CONTEXT_FREE_LAYERS and not has_passages:
            raise ValueError(f"{self.layer.wire_name} answers must carry passages")

    def served_as(self, layer: LayerTag, latency_seconds: float) -> "AnswerRecord":
        """Re-tag this answer with the layer that actually served it.

        Usage-ratio accounting counts the serving path, so a cached answer
        originally generated by NAIVE_RAG is returned as FIXED_KV or
        SEMANTIC_CACHE. Context-free layers drop the supporting passages.
        """
        passages = (
            tuple() if layer in CONTEXT_FREE_LAYERS else self.supporting_passage_ids
        )
        return replace(
            self,
            layer=layer,
            supporting_passage_ids=passages,
            latency_seconds=latency_seconds,
        )

    def to_dict(self) -> dict[str, Any]:
        return {
            "text": self.text,
            "layer": self.layer.wire_name,
            "confidence": self.confidence,
            "supporting_passage_ids": list(self.supporting_passage_ids),
            "latency_seconds": self.latency_seconds,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "AnswerRecord":
        return cls(
            text=data["text"],
            layer=LayerTag.from_wire(data["layer"]),
            confidence=float(data["confidence"]),
            supporting_passage_ids=tuple(data.get("supporting_passage_ids", ())),
            latency_seconds=float(data.get("latency_seconds", 0.0)),
        )


@dataclass(frozen=True)
class TrainingTriple:
    """A (question, context, answer) record exported for offline adaptation."""

    question: str
    context: str
    answer: str

    def __post_init__(self) -> None:
        for name in ("question", "context", "answer"):
            if not getattr(self, name):
                raise ValueError(f"training triple field {name!r} is empty")

    def to_dict(self) -> dict[str, str]:
        return {"question": self.question, "context": self.context, "answer": self.answer}

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "TrainingTriple":
        return cls(
            question=data["question"], context=data["context"], answer=data["answer"]
        )

"""Generation backends: context generation and confidence-gated recall.

A backend exposes two entry points. ``generate_with_context`` needs
retrieved passages and is used by the adaptive-memory and full-retrieval
layers; ``recall`` answers from the backend's own knowledge with a
self-reported confidence that the recall gate compares against a threshold.

The built-in :class:`StubBackend` is fully deterministic for desk-scale
testing. Its recallable knowledge is a :class:`StubKnowledgeTable` loaded
from exported training triples, which gives an executable analog of
offline adaptation: after export and reload, questions that previously
required retrieval are answered directly by the recall layer.
"""

from __future__ import annotations

import re
import threading
from dataclasses import replace
from typing import Protocol, Sequence

from .errors import BackendUnavailable, EmptyContext
from .jsonl import read_jsonl
from .model import AnswerRecord, LayerTag, Passage, Query

#: Confidence attached to stub answers; above the default recall gate (0.5).
STUB_CONFIDENCE = 0.9

#: Recall gate used when none is configured. Backends self-report a scalar
#: confidence; the gate accepts iff confidence >= threshold.
DEFAULT_RECALL_THRESHOLD = 0.5

_SENTENCE_END = re.compile(r"(?<=[.!?])\s+")


def first_sentence(text: str) -> str:
    parts = _SENTENCE_END.split(text.strip(), maxsplit=1)
    return parts[0] if parts and parts[0] else text.strip()


class GenerationBackend(Protocol):
    """Interface implemented by the stub and remote backends."""

    def generate_with_context(
        self, query_text: str, passages: Sequence[Passage]
    ) -> tuple[str, float]: ...

    def recall(self, query_text: str) -> tuple[str, float]: ...


class StubKnowledgeTable:
    """Exact-keyed map from question text to (answer, recall confidence).

    Keys are exact canonical forms: no embedding-based or fuzzy matching.
    Loading a training-triple export adds those questions to the table,
    making them recallable without retrieval.
    """

    def __init__(self) -> None:
        self._entries: dict[str, tuple[str, float]] = {}

    def add(self, question: str, answer: str, confidence: float = STUB_CONFIDENCE) -> None:
        if not 0.0 <= confidence <= 1.0:
            raise ValueError(f"confidence {confidence} outside [0, 1]")
        self._entries[question] = (answer, confidence)

    def lookup(self, question: str) -> tuple[str, float] | None:
        return self._entries.get(question)

    def __len__(self) -> int:
        return len(self._entries)

    @classmethod
    def from_triples_jsonl(
        cls, path, confidence: float = STUB_CONFIDENCE
    ) -> "StubKnowledgeTable":
        table = cls()
        for obj in read_jsonl(path):
            table.add(str(obj["question"]), str(obj["answer"]), confidence)
        return table


class StubBackend:
    """Deterministic backend for tests, demos, and the simulator.

    Context mode answers with the QA annotation of the top-ranked passage
    (falling back to the passage's first sentence when unannotated). Recall
    mode consults the knowledge table; unknown questions come back with
    confidence 0.0, which forces the gate to discard them.
    """

    def __init__(
        self,
        knowledge: StubKnowledgeTable | None = None,
        context_confidence: float = STUB_CONFIDENCE,
    ):
        self.knowledge = knowledge or StubKnowledgeTable()
        self.context_confidence = context_confidence
        self.context_calls = 0
        self.recall_calls = 0

    def generate_with_context(
        self, query_text: str, passages: Sequence[Passage]
    ) -> tuple[str, float]:
        self.context_calls += 1
        top = passages[0]
        answer = top.answer if top.answer else first_sentence(top.text)
        return answer, self.context_confidence

    def recall(self, query_text: str) -> tuple[str, float]:
        self.recall_calls += 1
        entry = self.knowledge.lookup(query_text)
        if entry is None:
            return "", 0.0
        return entry


class RemoteBackend:
    """JSON-over-HTTP generation client.

    Protocol: POST ``{"mode": "context"|"recall", "query": str,
    "passages": [str, ...]}`` expecting ``{"answer": str, "confidence":
    float}``. A remote that reports no usable confidence yields 0.0, which
    makes the recall gate fall through rather than guess. Concurrent
    in-flight calls are bounded by ``max_in_flight``.
    """

    def __init__(
        self,
        endpoint: str,
        *,
        timeout: float = 60.0,
        max_in_flight: int = 8,
        client=None,
    ):
        import httpx

        self.endpoint = endpoint
        self._client = client or httpx.Client(timeout=timeout)
        self._slots = threading.BoundedSemaphore(max_in_flight)
        self.context_calls = 0
        self.recall_calls = 0

    def _call(
        self, mode: str, query_text: str, passages: Sequence[str] = ()
    ) -> tuple[str, float]:
        import httpx

        body = {"mode": mode, "query": query_text, "passages": list(passages)}
        with self._slots:
            try:
                response = self._client.post(self.endpoint, json=body)
                response.raise_for_status()
                payload = response.json()
            except httpx.HTTPError as exc:
                raise BackendUnavailable(f"generation endpoint failed: {exc}") from exc
        answer = payload.get("answer")
        if not isinstance(answer, str):
            raise BackendUnavailable("generation endpoint returned no answer string")
        confidence = payload.get("confidence", 0.0)
        try:
            confidence = float(confidence)
        except (TypeError, ValueError):
            confidence = 0.0
        return answer, max(0.0, min(1.0, confidence))

    def generate_with_context(
        self, query_text: str, passages: Sequence[Passage]
    ) -> tuple[str, float]:
        self.context_calls += 1
        return self._call("context", query_text, [p.text for p in passages])

    def recall(self, query_text: str) -> tuple[str, float]:
        self.recall_calls += 1
        return self._call("recall", query_text)


def generate_with_context(
    backend: GenerationBackend,
    query: Query,
    passages: Sequence[Passage],
    layer: LayerTag,
) -> AnswerRecord:
    """Produce a context-grounded answer tagged with the caller's layer.

    Supporting passage ids are recorded in rank order. Latency is filled in
    by the router once the serving layer is known.
    """
    if layer not in (LayerTag.ADAPTIVE_MEMORY, LayerTag.NAIVE_RAG):
        raise ValueError(f"context generation cannot serve layer {layer.wire_name}")
    if not passages:
        raise EmptyContext("context generation requires at least one passage")
    answer_text, confidence = backend.generate_with_context(query.text, passages)
    return AnswerRecord(
        text=answer_text,
        layer=layer,
        confidence=confidence,
        supporting_passage_ids=tuple(p.id for p in passages),
        latency_seconds=0.0,
    )


def memory_recall(
    backend: GenerationBackend,
    query: Query,
    recall_threshold: float = DEFAULT_RECALL_THRESHOLD,
) -> AnswerRecord | None:
    """Recall gated by confidence: accepted iff confidence >= threshold.

    Accepted answers carry no supporting passages. A rejected answer is
    discarded and the router falls through to the next layer.
    """
    if not 0.0 <= recall_threshold <= 1.0:
        raise ValueError(f"recall_threshold {recall_threshold} outside [0, 1]")
    answer_text, confidence = backend.recall(query.text)
    if confidence < recall_threshold or not answer_text:
        return None
    return AnswerRecord(
        text=answer_text,
        layer=LayerTag.MEMORY_RECALL,
        confidence=confidence,
        supporting_passage_ids=(),
        latency_seconds=0.0,
    )


def answer_with_latency(answer: AnswerRecord, latency_seconds: float) -> AnswerRecord:
    return replace(answer, latency_seconds=latency_seconds)

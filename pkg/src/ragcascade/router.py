"""The five-layer decision cascade.

``route`` probes the layers strictly in configured order (by default:
fixed KV, semantic cache, memory recall, adaptive memory, full retrieval),
returns the first accepted answer, writes that answer through to both
caches before returning, and queues the wider retrieval hit list for
adaptive-memory seeding without blocking the response.

Every routed query emits one :class:`RouteTraceEvent`. Events carry enough
material (query text, answer text, supporting passage texts) for the
metrics engine and the training-triple exporter to work from logs alone.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, replace
from threading import Lock
from typing import Any, Callable, Iterable, Iterator, Sequence

from . import generation
from .caches import FixedKVCache, SemanticCache, writeback
from .embedding import Embedder, EmbeddingVector
from .errors import AllLayersMissed, EmptyKnowledgeBase
from .generation import GenerationBackend
from .knowledge import AdaptiveKnowledgeMemory, MainKnowledgeBase
from .model import CASCADE_ORDER, AnswerRecord, LayerTag, Query, TrainingTriple

#: Context separator used when concatenating passages into a triple.
CONTEXT_JOINER = "\n\n"


@dataclass(frozen=True)
class LayerProbe:
    """One probed layer and what happened there.

    ``rejected`` is specific to the recall gate (an answer was produced but
    discarded by the confidence check); every other decline is a ``miss``.
    """

    layer: LayerTag
    outcome: str  # "hit" | "miss" | "rejected"
    probe_seconds: float = 0.0

    def to_dict(self) -> dict[str, Any]:
        return {
            "layer": self.layer.wire_name,
            "outcome": self.outcome,
            "probe_seconds": self.probe_seconds,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "LayerProbe":
        return cls(
            layer=LayerTag.from_wire(data["layer"]),
            outcome=data["outcome"],
            probe_seconds=float(data.get("probe_seconds", 0.0)),
        )


@dataclass(frozen=True)
class RouteTraceEvent:
    """Trace of one routed query.

    ``serving_layer`` is the last probed layer (outcome ``hit``), or None
    when every layer declined. ``supporting_passages`` holds (id, text)
    pairs in rank order so triple export needs no index access.
    """

    query_id: str
    session_id: str
    query_text: str
    layers_probed: tuple[LayerProbe, ...]
    serving_layer: LayerTag | None
    latency_seconds: float
    timestamp_ns: int
    answer_text: str | None = None
    supporting_passages: tuple[tuple[str, str], ...] = ()

    def to_dict(self) -> dict[str, Any]:
        return {
            "query_id": self.query_id,
            "session_id": self.session_id,
            "query_text": self.query_text,
            "layers_probed": [p.to_dict() for p in self.layers_probed],
            "serving_layer": self.serving_layer.wire_name if self.serving_layer else None,
            "latency_seconds": self.latency_seconds,
            "timestamp_ns": self.timestamp_ns,
            "answer_text": self.answer_text,
            "supporting_passages": [
                {"id": pid, "text": text} for pid, text in self.supporting_passages
            ],
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "RouteTraceEvent":
        serving = data.get("serving_layer")
        return cls(
            query_id=data["query_id"],
            session_id=data.get("session_id", ""),
            query_text=data.get("query_text", ""),
            layers_probed=tuple(
                LayerProbe.from_dict(p) for p in data.get("layers_probed", ())
            ),
            serving_layer=LayerTag.from_wire(serving) if serving else None,
            latency_seconds=float(data["latency_seconds"]),
            timestamp_ns=int(data["timestamp_ns"]),
            answer_text=data.get("answer_text"),
            supporting_passages=tuple(
                (p["id"], p["text"]) for p in data.get("supporting_passages", ())
            ),
        )


@dataclass(frozen=True)
class RouterConfig:
    """Cascade knobs. Defaults mirror the deployed configuration:
    0.85 similarity gates, top-3 retrieval, top-10 adaptive-memory seeding.
    """

    semantic_threshold: float = 0.85
    akm_threshold: float = 0.85
    recall_threshold: float = 0.5
    retrieval_k: int = 3
    akm_seed_k: int = 10
    deterministic_settle: bool = True
    layer_order: tuple[LayerTag, ...] = CASCADE_ORDER
    disabled_layers: frozenset[LayerTag] = frozenset()

    def __post_init__(self) -> None:
        for name in ("semantic_threshold", "akm_threshold"):
            value = getattr(self, name)
            if not 0.0 < value <= 1.0:
                raise ValueError(f"{name} {value} outside (0, 1]")
        if not 0.0 <= self.recall_threshold <= 1.0:
            raise ValueError(f"recall_threshold {self.recall_threshold} outside [0, 1]")
        if self.retrieval_k < 1:
            raise ValueError("retrieval_k must be >= 1")
        if self.retrieval_k > self.akm_seed_k:
            raise ValueError("retrieval_k must be <= akm_seed_k")
        object.__setattr__(self, "layer_order", tuple(self.layer_order))
        object.__setattr__(self, "disabled_layers", frozenset(self.disabled_layers))
        if sorted(self.layer_order) != sorted(LayerTag):
            raise ValueError("layer_order must be a permutation of all five layers")

    def probe_order(self) -> tuple[LayerTag, ...]:
        return tuple(t for t in self.layer_order if t not in self.disabled_layers)


class TraceLog:
    """Ordered, contention-safe trace log with running per-layer counts."""

    def __init__(self) -> None:
        self._events: list[RouteTraceEvent] = []
        self._lock = Lock()
        self._served: dict[LayerTag, int] = {tag: 0 for tag in LayerTag}
        self._unserved = 0

    def append(self, event: RouteTraceEvent) -> None:
        with self._lock:
            self._events.append(event)
            if event.serving_layer is None:
                self._unserved += 1
            else:
                self._served[event.serving_layer] += 1

    def events(self) -> tuple[RouteTraceEvent, ...]:
        with self._lock:
            return tuple(self._events)

    def served_counts(self) -> dict[LayerTag, int]:
        with self._lock:
            return dict(self._served)

    def __len__(self) -> int:
        with self._lock:
            return len(self._events)

    def clear(self) -> None:
        with self._lock:
            self._events.clear()
            self._served = {tag: 0 for tag in LayerTag}
            self._unserved = 0


class CascadeRouter:
    """Wires the caches, retrievers, and backend into the first-hit cascade.

    ``latency_model`` (optional) replaces measured wall-clock latency with a
    deterministic synthetic sample keyed by the serving layer; the
    simulator uses this to make whole session logs byte-reproducible.
    ``clock_ns`` is injectable for the same reason.
    """

    def __init__(
        self,
        *,
        embedder: Embedder,
        backend: GenerationBackend,
        knowledge_base: MainKnowledgeBase,
        config: RouterConfig | None = None,
        kv_cache: FixedKVCache | None = None,
        semantic_cache: SemanticCache | None = None,
        adaptive_memory: AdaptiveKnowledgeMemory | None = None,
        latency_model=None,
        clock_ns: Callable[[], int] = time.monotonic_ns,
        trace_log: TraceLog | None = None,
    ):
        self.config = config or RouterConfig()
        self.embedder = embedder
        self.backend = backend
        self.knowledge_base = knowledge_base
        self.kv_cache = kv_cache or FixedKVCache()
        self.semantic_cache = semantic_cache or SemanticCache(
            embedder, threshold=self.config.semantic_threshold
        )
        self.adaptive_memory = adaptive_memory or AdaptiveKnowledgeMemory(
            threshold=self.config.akm_threshold,
            deterministic=self.config.deterministic_settle,
        )
        self.latency_model = latency_model
        self.clock_ns = clock_ns
        self.trace = trace_log or TraceLog()

    # -- probing helpers ----------------------------------------------------

    def _probe(
        self, layer: LayerTag, query: Query, get_vector: Callable[[], EmbeddingVector]
    ) -> tuple[str, AnswerRecord | None, Sequence]:
        """Probe one layer; returns (outcome, answer or None, passages)."""
        if layer is LayerTag.FIXED_KV:
            cached = self.kv_cache.get(query.text)
            if cached is not None:
                return "hit", cached.served_as(LayerTag.FIXED_KV, 0.0), ()
            return "miss", None, ()

        if layer is LayerTag.SEMANTIC_CACHE:
            found = self.semantic_cache.lookup(get_vector())
            if found is not None:
                answer, _score = found
                return "hit", answer.served_as(LayerTag.SEMANTIC_CACHE, 0.0), ()
            return "miss", None, ()

        if layer is LayerTag.MEMORY_RECALL:
            recalled = generation.memory_recall(
                self.backend, query, self.config.recall_threshold
            )
            if recalled is not None:
                return "hit", recalled, ()
            return "rejected", None, ()

        if layer is LayerTag.ADAPTIVE_MEMORY:
            passages = self.adaptive_memory.retrieve(
                get_vector(), k=self.config.retrieval_k
            )
            if passages:
                answer = generation.generate_with_context(
                    self.backend, query, passages, LayerTag.ADAPTIVE_MEMORY
                )
                return "hit", answer, ()
            return "miss", None, ()

        # NAIVE_RAG: full retrieval over the main knowledge base.
        try:
            top_k, seeds = self.knowledge_base.retrieve(
                get_vector(), k=self.config.retrieval_k, seed_k=self.config.akm_seed_k
            )
        except EmptyKnowledgeBase:
            return "miss", None, ()
        answer = generation.generate_with_context(
            self.backend, query, top_k, LayerTag.NAIVE_RAG
        )
        return "hit", answer, seeds

    def route(self, query: Query) -> tuple[AnswerRecord, RouteTraceEvent]:
        """Serve a query with the first accepting layer.

        Write-back to both caches completes before this call returns
        (answers from every layer are written, refreshing recency). Seeds
        from a full-retrieval search are queued for adaptive memory without
        blocking; in deterministic-settle mode queued seeds from earlier
        queries are applied before probing starts.
        """
        if self.config.deterministic_settle:
            self.adaptive_memory.settle()

        start_ns = self.clock_ns()
        synthetic = self.latency_model is not None
        probes: list[LayerProbe] = []
        vector_box: list[EmbeddingVector] = []

        def get_vector() -> EmbeddingVector:
            if not vector_box:
                vector_box.append(self.embedder.embed(query.text))
            return vector_box[0]

        answer: AnswerRecord | None = None
        seeds: Sequence = ()
        for layer in self.config.probe_order():
            probe_start = self.clock_ns()
            outcome, candidate, layer_seeds = self._probe(layer, query, get_vector)
            probe_seconds = 0.0 if synthetic else (self.clock_ns() - probe_start) / 1e9
            probes.append(LayerProbe(layer=layer, outcome=outcome, probe_seconds=probe_seconds))
            if outcome == "hit":
                answer = candidate
                seeds = layer_seeds
                break

        if answer is None:
            latency = (self.clock_ns() - start_ns) / 1e9
            event = RouteTraceEvent(
                query_id=query.id,
                session_id=query.session_id,
                query_text=query.text,
                layers_probed=tuple(probes),
                serving_layer=None,
                latency_seconds=latency,
                timestamp_ns=query.issued_at,
            )
            self.trace.append(event)
            raise AllLayersMissed(
                f"no layer answered query {query.id}", trace_event=event
            )

        serving_layer = probes[-1].layer
        if synthetic:
            latency = self.latency_model.sample(serving_layer)
            probes[-1] = replace(probes[-1], probe_seconds=latency)
        else:
            latency = (self.clock_ns() - start_ns) / 1e9
        answer = generation.answer_with_latency(answer, latency)

        if seeds:
            self.adaptive_memory.enqueue(list(seeds))

        vector = vector_box[0] if vector_box else None
        writeback(self.kv_cache, self.semantic_cache, query, answer, vector=vector)

        passage_pairs: tuple[tuple[str, str], ...] = ()
        if answer.supporting_passage_ids:
            texts = {p.id: p.text for p in seeds} if seeds else {}
            resolved = []
            for pid in answer.supporting_passage_ids:
                if pid in texts:
                    resolved.append((pid, texts[pid]))
                elif pid in self.knowledge_base:
                    resolved.append((pid, self.knowledge_base.get(pid).text))
                elif pid in self.adaptive_memory.index:
                    resolved.append((pid, self.adaptive_memory.index.payload(pid).text))
            passage_pairs = tuple(resolved)

        event = RouteTraceEvent(
            query_id=query.id,
            session_id=query.session_id,
            query_text=query.text,
            layers_probed=tuple(probes),
            serving_layer=serving_layer,
            latency_seconds=latency,
            timestamp_ns=query.issued_at,
            answer_text=answer.text,
            supporting_passages=passage_pairs,
        )
        self.trace.append(event)
        return answer, event

    def reset_session(self, *, clear_adaptive_memory: bool = True) -> None:
        """Clear the session-scoped stores (both caches, and by default the
        adaptive memory). The main knowledge base is never touched."""
        self.kv_cache.clear()
        self.semantic_cache.clear()
        if clear_adaptive_memory:
            self.adaptive_memory.clear()

    def stats(self) -> dict[str, Any]:
        served = self.trace.served_counts()
        total = sum(served.values())
        return {
            "total_queries": total,
            "layer_counts": {tag.wire_name: served[tag] for tag in LayerTag},
            "fixed_kv": self.kv_cache.stats(),
            "semantic_cache": self.semantic_cache.stats(),
            "adaptive_memory": self.adaptive_memory.stats(),
            "knowledge_base_size": len(self.knowledge_base),
            "knowledge_base_searches": self.knowledge_base.index.search_count,
        }


def export_triples(events: Iterable[RouteTraceEvent]) -> Iterator[TrainingTriple]:
    """Distill context-generated answers into training triples.

    One triple per ADAPTIVE_MEMORY- or NAIVE_RAG-served query; the context
    concatenates the supporting passage texts in rank order. Cache and
    recall serves are skipped (nothing new to distill).
    """
    eligible = {LayerTag.ADAPTIVE_MEMORY, LayerTag.NAIVE_RAG}
    for event in events:
        if event.serving_layer not in eligible:
            continue
        context = CONTEXT_JOINER.join(text for _, text in event.supporting_passages)
        yield TrainingTriple(
            question=event.query_text,
            context=context,
            answer=event.answer_text or "",
        )

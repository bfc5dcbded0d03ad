"""Five-layer query-routing cascade for retrieval-augmented serving.

A query flows through a fixed key-value cache, a semantic cache, a
confidence-gated memory-recall mode, an adaptive session memory, and a
conventional retrieval-augmentation layer; the first accepting layer
serves. Served answers write through to both caches, and full-retrieval
hit lists seed the adaptive memory, so traffic shifts toward the cheap
paths as a session warms up.
"""

from .caches import FixedKVCache, SemanticCache, writeback
from .embedding import (
    DIMENSION,
    EmbeddingVector,
    HashEmbedder,
    RemoteEmbedder,
    cosine,
)
from .errors import (
    AllLayersMissed,
    BackendUnavailable,
    CascadeError,
    ConfigError,
    CorruptSnapshot,
    DimensionMismatch,
    EmptyContext,
    EmptyInput,
    EmptyKnowledgeBase,
    EmptyQuery,
    EmptyTrace,
    InvalidVector,
    MalformedJsonl,
    NoClaims,
    PoolExhausted,
    PortBindError,
    RatioMismatch,
    ZeroElapsed,
)
from .generation import (
    RemoteBackend,
    StubBackend,
    StubKnowledgeTable,
    generate_with_context,
    memory_recall,
)
from .index import FlatIndex, SearchHit
from .knowledge import (
    AdaptiveKnowledgeMemory,
    MainKnowledgeBase,
    ingest_corpus,
)
from .metrics import (
    CostSample,
    LayerCostModel,
    RelevancyInputs,
    SyntheticLatencyModel,
    UsageRatios,
    answer_relevancy,
    faithfulness,
    gpu_time_per_query,
    latency_distribution,
    measure_qps,
    usage_ratio,
    warmup_curve,
    weighted_cost,
    weighted_qps,
)
from .model import (
    AnswerRecord,
    LayerTag,
    Passage,
    Query,
    TrainingTriple,
    validate_query,
)
from .router import (
    CascadeRouter,
    RouteTraceEvent,
    RouterConfig,
    TraceLog,
    export_triples,
)
from .simulation import (
    SessionLog,
    SimulationConfig,
    next_query,
    perturb,
    replay_probability,
    run_simulation,
)

__version__ = "0.1.0"

__all__ = [
    "AdaptiveKnowledgeMemory",
    "AllLayersMissed",
    "AnswerRecord",
    "BackendUnavailable",
    "CascadeError",
    "CascadeRouter",
    "ConfigError",
    "CorruptSnapshot",
    "CostSample",
    "DIMENSION",
    "DimensionMismatch",
    "EmbeddingVector",
    "EmptyContext",
    "EmptyInput",
    "EmptyKnowledgeBase",
    "EmptyQuery",
    "EmptyTrace",
    "FixedKVCache",
    "FlatIndex",
    "HashEmbedder",
    "InvalidVector",
    "LayerCostModel",
    "LayerTag",
    "MainKnowledgeBase",
    "MalformedJsonl",
    "NoClaims",
    "Passage",
    "PoolExhausted",
    "PortBindError",
    "Query",
    "RatioMismatch",
    "RelevancyInputs",
    "RemoteBackend",
    "RemoteEmbedder",
    "RouteTraceEvent",
    "RouterConfig",
    "SearchHit",
    "SemanticCache",
    "SessionLog",
    "SimulationConfig",
    "StubBackend",
    "StubKnowledgeTable",
    "SyntheticLatencyModel",
    "TraceLog",
    "TrainingTriple",
    "UsageRatios",
    "ZeroElapsed",
    "answer_relevancy",
    "cosine",
    "export_triples",
    "faithfulness",
    "generate_with_context",
    "gpu_time_per_query",
    "ingest_corpus",
    "latency_distribution",
    "measure_qps",
    "memory_recall",
    "next_query",
    "perturb",
    "replay_probability",
    "run_simulation",
    "usage_ratio",
    "validate_query",
    "warmup_curve",
    "weighted_cost",
    "weighted_qps",
    "writeback",
]

"""Exception taxonomy shared across the whole library.

Every error carries a short machine-readable ``code`` that the HTTP API and
the CLI use when reporting failures.
"""

from __future__ import annotations


class CascadeError(Exception):
    """Base class for all library errors."""

    code = "cascade_error"


class EmptyQuery(CascadeError):
    """Query text is empty or whitespace-only."""

    code = "empty_query"


class EmptyInput(CascadeError):
    """Embedder received an empty string."""

    code = "empty_input"


class DimensionMismatch(CascadeError):
    """Two vectors of different lengths were combined."""

    code = "dimension_mismatch"


class InvalidVector(CascadeError):
    """Vector is not unit-norm or contains NaN/Inf components."""

    code = "invalid_vector"


class CorruptSnapshot(CascadeError):
    """Snapshot bytes failed magic, version, size, or checksum validation."""

    code = "corrupt_snapshot"


class EmptyKnowledgeBase(CascadeError):
    """Retrieval was attempted against a knowledge base with no passages."""

    code = "empty_knowledge_base"


class BackendUnavailable(CascadeError):
    """A remote generation or embedding endpoint could not be reached."""

    code = "backend_unavailable"


class EmptyContext(CascadeError):
    """Context generation was invoked with no passages."""

    code = "empty_context"


class AllLayersMissed(CascadeError):
    """Every enabled layer declined the query; no answer was produced.

    The router attaches the full trace event so callers can inspect which
    layers were probed and why each one declined.
    """

    code = "all_layers_missed"

    def __init__(self, message: str, trace_event=None):
        super().__init__(message)
        self.trace_event = trace_event


class RatioMismatch(CascadeError):
    """Usage ratios do not sum to 1 within tolerance."""

    code = "ratio_mismatch"


class ZeroElapsed(CascadeError):
    """Throughput was requested over a non-positive elapsed time."""

    code = "zero_elapsed"


class EmptyTrace(CascadeError):
    """A metric over trace events received an empty trace."""

    code = "empty_trace"


class NoClaims(CascadeError):
    """Faithfulness was requested with zero total claims."""

    code = "no_claims"


class PoolExhausted(CascadeError):
    """The simulator ran out of fresh questions; the dataset is too small."""

    code = "pool_exhausted"


class MalformedJsonl(CascadeError):
    """A JSONL line failed to parse or validate.

    ``line_number`` is 1-based and refers to the offending input line.
    """

    code = "malformed_jsonl"

    def __init__(self, message: str, line_number: int | None = None):
        super().__init__(message)
        self.line_number = line_number


class ConfigError(CascadeError):
    """Configuration file failed validation (bad value or unknown key)."""

    code = "config_error"


class PortBindError(CascadeError):
    """The service could not bind its listen address."""

    code = "port_bind_error"

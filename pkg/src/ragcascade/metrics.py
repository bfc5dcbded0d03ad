"""Efficiency and quality metrics over routed traffic.

Cost side: GPU-seconds per query (sum over devices of wall time times
utilization), queries-per-second (count over elapsed), weighted aggregates
of a per-layer cost model under observed usage ratios, per-layer latency
distributions, and the session warm-up curve.

Quality side: the two formula-defined metrics. Faithfulness is the fraction
of an answer's claims supported by the retrieved context; answer relevancy
is the mean cosine similarity between embeddings of questions generated
from the answer and the embedding of the original input. Claim extraction
and question generation are pluggable; the built-ins are deterministic (a
sentence splitter with exact-substring support checks, and an identity
generator that returns the answer's sentences).

Quantiles use linear interpolation between closest ranks throughout, i.e.
the value at fractional position (n - 1) * q of the sorted sample.
"""

from __future__ import annotations

import csv
import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Protocol, Sequence

import numpy as np

from .embedding import Embedder, EmbeddingVector, cosine
from .errors import EmptyTrace, NoClaims, RatioMismatch, ZeroElapsed
from .model import LayerTag
from .router import RouteTraceEvent

#: Per-layer GPU-seconds per query measured on the reference deployment
#: (four RTX 8000 class devices). These seed the synthetic latency model
#: and the weighted-cost defaults.
DEFAULT_GPU_SECONDS_PER_QUERY: dict[LayerTag, float] = {
    LayerTag.NAIVE_RAG: 0.53866,
    LayerTag.ADAPTIVE_MEMORY: 0.53866,
    LayerTag.MEMORY_RECALL: 0.25703,
    LayerTag.SEMANTIC_CACHE: 9.4e-4,
    LayerTag.FIXED_KV: 0.0,
}

#: Per-layer sustained queries-per-second from the same reference runs.
DEFAULT_QPS: dict[LayerTag, float] = {
    LayerTag.NAIVE_RAG: 0.45579,
    LayerTag.ADAPTIVE_MEMORY: 1.81431,
    LayerTag.MEMORY_RECALL: 2.51,
    LayerTag.SEMANTIC_CACHE: 208.33,
    LayerTag.FIXED_KV: 419_430.0,
}

#: Long-run usage shares observed on the reference deployment; handy as a
#: weighting default when no live trace is available.
REFERENCE_USAGE_RATIOS: dict[LayerTag, float] = {
    LayerTag.NAIVE_RAG: 0.144,
    LayerTag.ADAPTIVE_MEMORY: 0.279,
    LayerTag.MEMORY_RECALL: 0.078,
    LayerTag.SEMANTIC_CACHE: 0.255,
    LayerTag.FIXED_KV: 0.244,
}

_RATIO_TOLERANCE = 1e-6


@dataclass(frozen=True)
class CostSample:
    """One device's contribution to serving a query."""

    wall_time: float
    utilization: float
    device_id: str = "gpu0"

    def __post_init__(self) -> None:
        if self.wall_time < 0.0:
            raise ValueError(f"negative wall_time {self.wall_time}")
        if not 0.0 <= self.utilization <= 1.0:
            raise ValueError(f"utilization {self.utilization} outside [0, 1]")


@dataclass(frozen=True)
class LayerCostModel:
    """Per-layer GPU-seconds/query and QPS used for weighted aggregation."""

    gpu_seconds_per_query: Mapping[LayerTag, float] = field(
        default_factory=lambda: dict(DEFAULT_GPU_SECONDS_PER_QUERY)
    )
    qps: Mapping[LayerTag, float] = field(default_factory=lambda: dict(DEFAULT_QPS))

    def __post_init__(self) -> None:
        for name, table in (("gpu_seconds_per_query", self.gpu_seconds_per_query), ("qps", self.qps)):
            missing = [tag.wire_name for tag in LayerTag if tag not in table]
            if missing:
                raise ValueError(f"{name} missing layers: {missing}")
        for tag, cost in self.gpu_seconds_per_query.items():
            if cost < 0.0:
                raise ValueError(f"negative gpu cost for {tag.wire_name}")
        for tag, rate in self.qps.items():
            if rate <= 0.0:
                raise ValueError(f"non-positive qps for {tag.wire_name}")


@dataclass(frozen=True)
class UsageRatios:
    """Per-layer serving fractions; always sums to 1 on non-empty traffic."""

    by_layer: Mapping[LayerTag, float]

    def __post_init__(self) -> None:
        missing = [tag.wire_name for tag in LayerTag if tag not in self.by_layer]
        if missing:
            raise ValueError(f"usage ratios missing layers: {missing}")
        for tag, ratio in self.by_layer.items():
            if not 0.0 <= ratio <= 1.0:
                raise ValueError(f"ratio for {tag.wire_name} outside [0, 1]")
        total = sum(self.by_layer.values())
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"usage ratios sum to {total}, expected 1 within 1e-9")

    def as_wire(self) -> dict[str, float]:
        return {tag.wire_name: self.by_layer[tag] for tag in LayerTag}


def _ratio_table(ratios) -> Mapping[LayerTag, float]:
    table = ratios.by_layer if isinstance(ratios, UsageRatios) else ratios
    total = sum(table.values())
    if abs(total - 1.0) > _RATIO_TOLERANCE:
        raise RatioMismatch(f"ratios sum to {total}, expected 1 within {_RATIO_TOLERANCE}")
    return table


def gpu_time_per_query(samples: Iterable[CostSample]) -> float:
    """Total GPU seconds for one query: sum of wall_time x utilization."""
    return float(sum(s.wall_time * s.utilization for s in samples))


def weighted_cost(cost_model: LayerCostModel, usage_ratios) -> float:
    """Usage-weighted mean GPU seconds per query."""
    table = _ratio_table(usage_ratios)
    return float(
        sum(cost_model.gpu_seconds_per_query[tag] * ratio for tag, ratio in table.items())
    )


def weighted_qps(cost_model: LayerCostModel, usage_ratios) -> float:
    """Usage-weighted aggregate throughput."""
    table = _ratio_table(usage_ratios)
    return float(sum(cost_model.qps[tag] * ratio for tag, ratio in table.items()))


def measure_qps(query_count: int, elapsed: float) -> float:
    """Throughput of a run: query count over elapsed wall-clock seconds."""
    if elapsed <= 0.0:
        raise ZeroElapsed(f"elapsed must be positive, got {elapsed}")
    if query_count < 0:
        raise ValueError("query_count must be >= 0")
    return query_count / elapsed


def throughput_from_trace(events: Sequence[RouteTraceEvent]) -> tuple[int, float]:
    """Replay harness helper: (query count, elapsed seconds) of a trace.

    Elapsed spans the first query's start through the last query's finish.
    """
    if not events:
        raise EmptyTrace("trace has no events")
    start = events[0].timestamp_ns
    end = events[-1].timestamp_ns + int(round(events[-1].latency_seconds * 1e9))
    return len(events), (end - start) / 1e9


def usage_ratio(events: Sequence[RouteTraceEvent]) -> UsageRatios:
    """Per-layer serving fractions over a trace.

    Layers with zero traffic are present with ratio 0. Events that ended
    with no serving layer are excluded from both numerator and denominator.
    """
    if not events:
        raise EmptyTrace("cannot compute usage ratios over an empty trace")
    counts = {tag: 0 for tag in LayerTag}
    total = 0
    for event in events:
        if event.serving_layer is None:
            continue
        counts[event.serving_layer] += 1
        total += 1
    if total == 0:
        raise EmptyTrace("trace contains no served queries")
    return UsageRatios(by_layer={tag: counts[tag] / total for tag in LayerTag})


# -- quality metrics ---------------------------------------------------------

_SENTENCE_SPLIT = re.compile(r"(?<=[.!?])\s+|\n+")


def split_sentences(text: str) -> list[str]:
    return [part.strip() for part in _SENTENCE_SPLIT.split(text) if part.strip()]


class ClaimExtractor(Protocol):
    """Splits an answer into claims and checks support in a context."""

    def extract(self, answer: str) -> list[str]: ...

    def supports(self, claim: str, context: str) -> bool: ...


class SentenceClaimExtractor:
    """Deterministic built-in: sentence claims, exact-substring support."""

    def extract(self, answer: str) -> list[str]:
        return split_sentences(answer)

    def supports(self, claim: str, context: str) -> bool:
        return claim in context


def faithfulness(supported_claims: int, total_claims: int) -> float:
    """Fraction of claims backed by the context."""
    if total_claims == 0:
        raise NoClaims("faithfulness needs at least one claim")
    if total_claims < 0 or supported_claims < 0:
        raise ValueError("claim counts must be non-negative")
    if supported_claims > total_claims:
        raise ValueError("supported_claims exceeds total_claims")
    return supported_claims / total_claims


def evaluate_faithfulness(
    answer: str, context: str, extractor: ClaimExtractor | None = None
) -> tuple[float, int, int]:
    """Extract claims from the answer, count support, apply the formula.

    Returns (score, supported, total). Raises :class:`NoClaims` when the
    extractor finds nothing to check.
    """
    extractor = extractor or SentenceClaimExtractor()
    claims = extractor.extract(answer)
    if not claims:
        raise NoClaims("extractor produced no claims")
    supported = sum(1 for claim in claims if extractor.supports(claim, context))
    return faithfulness(supported, len(claims)), supported, len(claims)


@dataclass(frozen=True)
class RelevancyInputs:
    """Embeddings feeding answer relevancy: the user input's vector and the
    vectors of the questions generated from the answer."""

    input_embedding: EmbeddingVector
    question_embeddings: tuple[EmbeddingVector, ...]

    def __post_init__(self) -> None:
        if len(self.question_embeddings) < 1:
            raise ValueError("at least one generated-question embedding is required")
        object.__setattr__(
            self, "question_embeddings", tuple(self.question_embeddings)
        )


def answer_relevancy(inputs: RelevancyInputs) -> float:
    """Mean cosine between each generated question and the original input.

    Cosines can be negative, so the score lies in [-1, 1]; well-formed
    answers land in [0, 1] in practice.
    """
    scores = [cosine(q, inputs.input_embedding) for q in inputs.question_embeddings]
    return float(np.mean(scores))


class QuestionGenerator(Protocol):
    def generate(self, answer: str) -> list[str]: ...


class SentenceQuestionGenerator:
    """Identity generator: the answer's own sentences stand in for
    model-generated questions."""

    def generate(self, answer: str) -> list[str]:
        return split_sentences(answer)


def evaluate_answer_relevancy(
    answer: str,
    input_text: str,
    embedder: Embedder,
    generator: QuestionGenerator | None = None,
) -> float:
    generator = generator or SentenceQuestionGenerator()
    questions = generator.generate(answer)
    if not questions:
        raise NoClaims("generator produced no questions")
    inputs = RelevancyInputs(
        input_embedding=embedder.embed(input_text),
        question_embeddings=tuple(embedder.embed(q) for q in questions),
    )
    return answer_relevancy(inputs)


# -- latency statistics ------------------------------------------------------


def quantile(values: Sequence[float], q: float) -> float:
    """Linear interpolation between closest ranks of the sorted sample."""
    if not values:
        raise ValueError("quantile of empty sequence")
    if not 0.0 <= q <= 1.0:
        raise ValueError(f"q {q} outside [0, 1]")
    ordered = sorted(values)
    position = (len(ordered) - 1) * q
    low = int(position)
    high = min(low + 1, len(ordered) - 1)
    fraction = position - low
    return ordered[low] + (ordered[high] - ordered[low]) * fraction


@dataclass(frozen=True)
class WarmupPoint:
    index: int
    mean: float
    q1: float
    q3: float


@dataclass(frozen=True)
class WarmupCurve:
    """Cross-session latency decay curve.

    ``insufficient_data`` flags that at least one session produced fewer
    qualifying queries than requested, in which case the curve is truncated
    to the shortest session rather than failing.
    """

    points: tuple[WarmupPoint, ...]
    insufficient_data: bool


def warmup_curve_from_latencies(
    sessions: Sequence[Sequence[float]],
    *,
    max_points: int = 100,
    latency_ceiling: float = 6.0,
) -> WarmupCurve:
    """Warm-up curve over per-session latency sequences (session order).

    Per session: keep the first ``max_points`` latencies below
    ``latency_ceiling`` seconds, sort them in descending order. At each
    index across sessions, report the mean and the Q1/Q3 band.
    """
    if not sessions:
        raise ValueError("at least one session is required")
    prepared: list[list[float]] = []
    for latencies in sessions:
        qualifying = [lat for lat in latencies if lat < latency_ceiling][:max_points]
        prepared.append(sorted(qualifying, reverse=True))
    usable = min(len(p) for p in prepared)
    insufficient = usable < max_points
    points = []
    for i in range(usable):
        column = [p[i] for p in prepared]
        points.append(
            WarmupPoint(
                index=i,
                mean=float(np.mean(column)),
                q1=quantile(column, 0.25),
                q3=quantile(column, 0.75),
            )
        )
    return WarmupCurve(points=tuple(points), insufficient_data=insufficient)


def warmup_curve(
    sessions,
    *,
    max_points: int = 100,
    latency_ceiling: float = 6.0,
) -> WarmupCurve:
    """Warm-up curve over session logs (or raw latency sequences)."""
    latency_sessions = []
    for session in sessions:
        events = getattr(session, "events", session)
        latency_sessions.append(
            [e.latency_seconds if isinstance(e, RouteTraceEvent) else float(e) for e in events]
        )
    return warmup_curve_from_latencies(
        latency_sessions, max_points=max_points, latency_ceiling=latency_ceiling
    )


@dataclass(frozen=True)
class LatencyStats:
    q1: float
    median: float
    q3: float
    p5: float
    p95: float
    outliers: tuple[float, ...]
    count: int


def latency_distribution(
    events: Sequence[RouteTraceEvent],
) -> dict[LayerTag, LatencyStats]:
    """Per-serving-layer latency statistics (box plot material).

    Whiskers span the 5th to 95th percentile; outliers are the individual
    points strictly outside that span. Layers that served no traffic are
    absent from the result.
    """
    if not events:
        raise EmptyTrace("cannot compute latency distribution over an empty trace")
    grouped: dict[LayerTag, list[float]] = {}
    for event in events:
        if event.serving_layer is None:
            continue
        grouped.setdefault(event.serving_layer, []).append(event.latency_seconds)
    stats = {}
    for tag, values in grouped.items():
        p5 = quantile(values, 0.05)
        p95 = quantile(values, 0.95)
        stats[tag] = LatencyStats(
            q1=quantile(values, 0.25),
            median=quantile(values, 0.5),
            q3=quantile(values, 0.75),
            p5=p5,
            p95=p95,
            outliers=tuple(v for v in values if v < p5 or v > p95),
            count=len(values),
        )
    return stats


# -- synthetic latency model -------------------------------------------------


class SyntheticLatencyModel:
    """Per-layer latency draws: base cost times lognormal jitter.

    The bases default to the per-layer GPU-time figures, which makes
    simulated warm-up and distribution trends meaningful without GPUs.
    A zero base (the fixed KV-cache) always yields zero latency.
    """

    def __init__(
        self,
        cost_model: LayerCostModel | None = None,
        sigma: float = 0.25,
        rng: np.random.Generator | None = None,
    ):
        if sigma < 0.0:
            raise ValueError("sigma must be >= 0")
        self.cost_model = cost_model or LayerCostModel()
        self.sigma = sigma
        self.rng = rng or np.random.default_rng()

    def reseed(self, seed) -> None:
        self.rng = np.random.default_rng(seed)

    def sample(self, layer: LayerTag) -> float:
        base = self.cost_model.gpu_seconds_per_query[layer]
        jitter = float(self.rng.lognormal(mean=0.0, sigma=self.sigma))
        return base * jitter


# -- report export -------------------------------------------------------------


def write_warmup_csv(curve: WarmupCurve, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["index", "mean", "q1", "q3"])
        for point in curve.points:
            writer.writerow([point.index, point.mean, point.q1, point.q3])


def write_boxplot_csv(stats: Mapping[LayerTag, LatencyStats], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["layer", "q1", "median", "q3", "p5", "p95"])
        for tag in LayerTag:
            if tag in stats:
                s = stats[tag]
                writer.writerow([tag.wire_name, s.q1, s.median, s.q3, s.p5, s.p95])


def write_usage_csv(usage: UsageRatios, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["layer", "ratio"])
        for tag in LayerTag:
            writer.writerow([tag.wire_name, usage.by_layer[tag]])


def write_summary_json(
    cost_model: LayerCostModel, usage: UsageRatios, path: str | Path
) -> None:
    summary = {
        "weighted_gpu_s_per_query": weighted_cost(cost_model, usage),
        "weighted_qps": weighted_qps(cost_model, usage),
        "usage_ratios": usage.as_wire(),
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2)
        fh.write("\n")


def generate_reports(
    sessions,
    out_dir: str | Path,
    cost_model: LayerCostModel | None = None,
) -> dict[str, Path]:
    """Emit the plot-ready report bundle for a set of session logs.

    Writes warmup.csv, boxplot.csv, usage.csv, and summary.json into
    ``out_dir`` and returns the paths.
    """
    cost_model = cost_model or LayerCostModel()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    all_events: list[RouteTraceEvent] = []
    for session in sessions:
        all_events.extend(getattr(session, "events", session))
    curve = warmup_curve(sessions)
    usage = usage_ratio(all_events)
    paths = {
        "warmup": out / "warmup.csv",
        "boxplot": out / "boxplot.csv",
        "usage": out / "usage.csv",
        "summary": out / "summary.json",
    }
    write_warmup_csv(curve, paths["warmup"])
    write_boxplot_csv(latency_distribution(all_events), paths["boxplot"])
    write_usage_csv(usage, paths["usage"])
    write_summary_json(cost_model, usage, paths["summary"])
    return paths

"""Multi-session runtime workload simulation.

Each session starts with empty caches and adaptive memory and issues a
fixed number of questions. The chance of replaying a past question ramps
from 0 to 1 over the session (linear by default; the schedule is
pluggable). A replay is emitted verbatim half the time and lightly
perturbed otherwise, which exercises the exact cache, the semantic cache,
and the fall-through paths in realistic proportions.

Runs are fully deterministic given a seed: query ids, timestamps, and
synthetic latencies all come from seeded sources, so two runs with the
same seed produce byte-identical session log files.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Iterable, Sequence

import numpy as np

from .errors import MalformedJsonl, PoolExhausted
from .jsonl import iter_jsonl, read_jsonl
from .metrics import LayerCostModel, SyntheticLatencyModel
from .model import Query, validate_query
from .router import CascadeRouter, RouteTraceEvent

ORIGIN_FRESH = "fresh"
ORIGIN_EXACT = "exact_replay"
ORIGIN_PERTURBED = "perturbed_replay"

_WORD_RE = re.compile(r"\w+", re.UNICODE)

#: Function words eligible for the drop-one-stop-word perturbation.
STOP_WORDS = frozenset(
    "a an the of in on at to for by with and or is are was were does do did "
    "what which who whom whose when where why how about".split()
)


def linear_ramp(i: int, n: int) -> float:
    """p = i / (n - 1): 0 at the first query, 1 at the last."""
    if n < 2:
        return 0.0
    return i / (n - 1)


def step_ramp(i: int, n: int) -> float:
    """0 for the first half of the session, 1 afterward."""
    return 0.0 if i < n // 2 else 1.0


def sigmoid_ramp(i: int, n: int) -> float:
    """Smooth 0-to-1 transition centered mid-session."""
    if n < 2:
        return 0.0
    x = i / (n - 1)
    return 1.0 / (1.0 + math.exp(-12.0 * (x - 0.5)))


#: Pluggable ramp schedules, keyed by config name.
RAMPS: dict[str, Callable[[int, int], float]] = {
    "linear": linear_ramp,
    "step": step_ramp,
    "sigmoid": sigmoid_ramp,
}


def replay_probability(i: int, n: int) -> float:
    """Default (linear) replay probability for query ``i`` of ``n``."""
    if not 0 <= i < n:
        raise ValueError(f"query index {i} outside [0, {n})")
    return linear_ramp(i, n)


def token_overlap(a: str, b: str) -> float:
    """Multiset token overlap: |intersection| / max(|a|, |b|)."""
    tokens_a = _WORD_RE.findall(a)
    tokens_b = _WORD_RE.findall(b)
    if not tokens_a and not tokens_b:
        return 1.0
    if not tokens_a or not tokens_b:
        return 0.0
    from collections import Counter

    shared = sum((Counter(tokens_a) & Counter(tokens_b)).values())
    return shared / max(len(tokens_a), len(tokens_b))


def _swap_candidates(words: list[str]) -> list[int]:
    return [j for j in range(len(words) - 1) if words[j] != words[j + 1]]


def _stopword_positions(words: list[str]) -> list[int]:
    return [j for j, w in enumerate(words) if w.lower().strip(".,!?;:") in STOP_WORDS]


def perturb(text: str, rng: np.random.Generator) -> str:
    """Apply one random light edit; output always differs from the input.

    Edits: swap two adjacent words, drop one stop-word, or toggle terminal
    punctuation, chosen uniformly among the applicable ones. Each edit
    preserves at least 70% token overlap with the input by construction
    (the stop-word drop is only applicable at four or more words).
    """
    if not text:
        raise ValueError("cannot perturb empty text")
    words = text.split()
    edits: list[str] = []
    swap_at = _swap_candidates(words)
    if swap_at:
        edits.append("swap")
    drop_at = _stopword_positions(words)
    if drop_at and len(words) >= 4:
        edits.append("drop")
    edits.append("punct")

    choice = edits[int(rng.integers(len(edits)))]
    if choice == "swap":
        j = swap_at[int(rng.integers(len(swap_at)))]
        out = list(words)
        out[j], out[j + 1] = out[j + 1], out[j]
        return " ".join(out)
    if choice == "drop":
        j = drop_at[int(rng.integers(len(drop_at)))]
        out = [w for idx, w in enumerate(words) if idx != j]
        return " ".join(out)
    # punct: toggle terminal punctuation, always a byte-level change.
    if text and text[-1] in ".?!":
        return text[:-1]
    return text + "?"


@dataclass(frozen=True)
class SimulationConfig:
    """Knobs for the multi-session runtime simulation."""

    n_sessions: int = 9
    queries_per_session: int = 1000
    replay_split: float = 0.5
    ramp: str = "linear"
    perturber: str = "composite"
    seed: int = 0
    latency_sigma: float = 0.25

    def __post_init__(self) -> None:
        if self.n_sessions < 1:
            raise ValueError("n_sessions must be >= 1")
        if self.queries_per_session < 2:
            raise ValueError("queries_per_session must be >= 2")
        if not 0.0 <= self.replay_split <= 1.0:
            raise ValueError(f"replay_split {self.replay_split} outside [0, 1]")
        if self.ramp not in RAMPS:
            raise ValueError(f"unknown ramp {self.ramp!r}; options: {sorted(RAMPS)}")
        if self.perturber != "composite":
            raise ValueError(f"unknown perturber {self.perturber!r}")


@dataclass
class SessionLog:
    """Ordered routed-query trace of one session plus per-query origins."""

    session_id: str
    events: list[RouteTraceEvent] = field(default_factory=list)
    origins: list[str] = field(default_factory=list)

    def to_jsonl_lines(self) -> Iterable[str]:
        for event, origin in zip(self.events, self.origins):
            record = event.to_dict()
            record["origin"] = origin
            yield json.dumps(record, ensure_ascii=False)

    def write(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for line in self.to_jsonl_lines():
                fh.write(line)
                fh.write("\n")

    @classmethod
    def read(cls, path: str | Path) -> "SessionLog":
        events: list[RouteTraceEvent] = []
        origins: list[str] = []
        session_id = ""
        for obj in read_jsonl(path):
            origins.append(obj.pop("origin", ORIGIN_FRESH))
            event = RouteTraceEvent.from_dict(obj)
            events.append(event)
            session_id = event.session_id or session_id
        return cls(session_id=session_id, events=events, origins=origins)


class SimClock:
    """Deterministic monotonic clock: advances only by simulated latency."""

    def __init__(self, start_ns: int = 0):
        self._now_ns = start_ns

    def now_ns(self) -> int:
        return self._now_ns

    def advance(self, seconds: float) -> None:
        self._now_ns += int(round(seconds * 1e9))


@dataclass
class SessionState:
    """Mutable per-session draw state for :func:`next_query`."""

    session_id: str
    questions: Sequence[str]
    queries_per_session: int
    ramp: Callable[[int, int], float]
    replay_split: float
    clock: SimClock = field(default_factory=SimClock)
    index: int = 0
    past: list[str] = field(default_factory=list)
    unused: list[int] = field(default_factory=list)

    def __post_init__(self) -> None:
        if not self.unused:
            self.unused = list(range(len(self.questions)))

    def make_query(self, text: str) -> Query:
        query = validate_query(
            text,
            self.session_id,
            query_id=f"{self.session_id}-q{self.index:05d}",
            issued_at_ns=self.clock.now_ns(),
        )
        return query

    def record_issued(self, text: str) -> None:
        self.past.append(text)
        self.index += 1


def next_query(state: SessionState, rng: np.random.Generator) -> tuple[Query, str]:
    """Draw the next query: a fresh question, an exact replay, or a
    perturbed replay of a uniformly chosen past question.

    The replay probability follows the session ramp. Perturbations compound
    naturally because the past pool stores issued questions verbatim,
    including earlier perturbations. Raises :class:`PoolExhausted` when a
    fresh question is needed but the dataset pool is empty.
    """
    p = state.ramp(state.index, state.queries_per_session)
    if state.past and float(rng.random()) < p:
        source = state.past[int(rng.integers(len(state.past)))]
        if float(rng.random()) < state.replay_split:
            text, origin = source, ORIGIN_EXACT
        else:
            text, origin = perturb(source, rng), ORIGIN_PERTURBED
    else:
        if not state.unused:
            raise PoolExhausted(
                f"dataset exhausted after {state.index} queries in {state.session_id}"
            )
        pick = int(rng.integers(len(state.unused)))
        state.unused[pick], state.unused[-1] = state.unused[-1], state.unused[pick]
        text, origin = state.questions[state.unused.pop()], ORIGIN_FRESH
    return state.make_query(text), origin


def run_simulation(
    config: SimulationConfig,
    router: CascadeRouter,
    dataset: Sequence[dict[str, Any]],
) -> list[SessionLog]:
    """Run the configured sessions against an ingested system.

    The router's main knowledge base must already hold the evaluation
    corpus. Caches, adaptive memory, and the past-question pool reset
    between sessions. Deterministic-settle mode is required, a synthetic
    latency model is installed when absent, and all randomness derives from
    ``config.seed``, so identical seeds give byte-identical logs.
    """
    if not router.config.deterministic_settle:
        raise ValueError("run_simulation requires deterministic_settle mode")
    if router.latency_model is None:
        router.latency_model = SyntheticLatencyModel(
            LayerCostModel(), sigma=config.latency_sigma
        )
    questions = [str(row["question"]) for row in dataset]
    ramp = RAMPS[config.ramp]
    logs: list[SessionLog] = []
    for s in range(config.n_sessions):
        router.reset_session()
        rng = np.random.default_rng([config.seed, s, 0])
        if hasattr(router.latency_model, "reseed"):
            router.latency_model.reseed([config.seed, s, 1])
        clock = SimClock()
        router.clock_ns = clock.now_ns
        state = SessionState(
            session_id=f"session_{s:02d}",
            questions=questions,
            queries_per_session=config.queries_per_session,
            ramp=ramp,
            replay_split=config.replay_split,
            clock=clock,
        )
        log = SessionLog(session_id=state.session_id)
        for _ in range(config.queries_per_session):
            query, origin = next_query(state, rng)
            answer, event = router.route(query)
            clock.advance(answer.latency_seconds)
            state.record_issued(query.text)
            log.events.append(event)
            log.origins.append(origin)
        logs.append(log)
    return logs


def write_session_logs(logs: Sequence[SessionLog], out_dir: str | Path) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for log in logs:
        path = out / f"{log.session_id}.jsonl"
        log.write(path)
        paths.append(path)
    return paths


def read_session_logs(log_dir: str | Path) -> list[SessionLog]:
    paths = sorted(Path(log_dir).glob("session_*.jsonl"))
    return [SessionLog.read(path) for path in paths]


# -- datasets -----------------------------------------------------------------


def load_qa_dataset(path: str | Path, *, lenient: bool = False) -> list[dict[str, str]]:
    """Load a QA dataset: JSONL of {"question", "answer", "context"}."""
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, obj in iter_jsonl(fh, lenient=lenient):
            for key in ("question", "answer", "context"):
                if key not in obj:
                    raise MalformedJsonl(
                        f"line {lineno}: missing field {key!r}", line_number=lineno
                    )
            rows.append(
                {
                    "question": str(obj["question"]),
                    "answer": str(obj["answer"]),
                    "context": str(obj["context"]),
                }
            )
    return rows


def load_triviaqa(path: str | Path, limit: int | None = None) -> list[dict[str, str]]:
    """Convert a TriviaQA-format JSON file into the QA dataset schema.

    Accepts the upstream layout ({"Data": [{"Question", "Answer": {"Value"},
    ...}]}). The context falls back to the answer sentence when no evidence
    snippet is available.
    """
    with open(path, "r", encoding="utf-8") as fh:
        raw = json.load(fh)
    items = raw.get("Data", raw if isinstance(raw, list) else [])
    rows = []
    for item in items:
        question = item.get("Question")
        answer = (item.get("Answer") or {}).get("Value")
        if not question or not answer:
            continue
        context = None
        for result in item.get("SearchResults", []) or []:
            snippet = result.get("Description") or result.get("Snippet")
            if snippet:
                context = snippet
                break
        if context is None:
            pages = item.get("EntityPages", []) or []
            for page in pages:
                if page.get("Title"):
                    context = f"{page['Title']}: {answer}"
                    break
        if context is None:
            context = f"The answer to this question is {answer}."
        rows.append({"question": question, "answer": answer, "context": context})
        if limit is not None and len(rows) >= limit:
            break
    return rows


def dataset_to_corpus(
    rows: Sequence[dict[str, str]], source: str = "qa-dataset"
) -> list[dict[str, str]]:
    """Turn QA dataset rows into ingestible passage records.

    The passage text is the context; the answer rides along as the QA
    annotation the stub backend reads.
    """
    corpus = []
    for i, row in enumerate(rows):
        corpus.append(
            {
                "id": f"{source}-{i:05d}",
                "text": row["context"],
                "source": source,
                "answer": row["answer"],
            }
        )
    return corpus

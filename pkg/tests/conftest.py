"""Shared fixtures and independent oracles.

The oracles here deliberately avoid the library's own code paths: scalar
Python loops for dot products and sums, and a sort-based exhaustive top-k
for index checks. Tests compare library output against these.
"""

from __future__ import annotations

import json

import numpy as np
import pytest

from ragcascade import (
    CascadeRouter,
    HashEmbedder,
    MainKnowledgeBase,
    StubBackend,
    ingest_corpus,
)
from ragcascade.datagen import synthetic_qa_dataset
from ragcascade.simulation import dataset_to_corpus


def cosine_oracle(a, b) -> float:
    """Scalar-loop dot product at 64-bit precision."""
    va = np.asarray(a).tolist()
    vb = np.asarray(b).tolist()
    assert len(va) == len(vb)
    return sum(float(x) * float(y) for x, y in zip(va, vb))


def brute_force_top_k(vectors, query, k: int) -> list[tuple[int, float]]:
    """Exhaustive top-k over float32 row vectors: (row, score) pairs sorted
    by score descending, ties by ascending row (insertion) order."""
    q64 = np.asarray(query, dtype=np.float32).astype(np.float64)
    scores = [float(np.dot(np.asarray(v, dtype=np.float32).astype(np.float64), q64)) for v in vectors]
    ranked = sorted(range(len(scores)), key=lambda i: (-scores[i], i))
    return [(i, scores[i]) for i in ranked[:k]]


def random_unit_vectors(rng: np.random.Generator, n: int, dim: int) -> np.ndarray:
    raw = rng.normal(size=(n, dim))
    norms = np.linalg.norm(raw, axis=1, keepdims=True)
    return (raw / norms).astype(np.float32)


@pytest.fixture(scope="session")
def embedder() -> HashEmbedder:
    return HashEmbedder()


@pytest.fixture()
def rng() -> np.random.Generator:
    return np.random.default_rng(20240817)


@pytest.fixture(scope="session")
def qa_rows() -> list[dict]:
    return synthetic_qa_dataset(300, seed=42)


def build_kb(rows, embedder) -> MainKnowledgeBase:
    kb = MainKnowledgeBase()
    lines = (json.dumps(r) for r in dataset_to_corpus(rows))
    ingest_corpus(lines, embedder, kb=kb)
    return kb


def build_router(rows, embedder, **router_kwargs) -> CascadeRouter:
    kb = build_kb(rows, embedder)
    return CascadeRouter(
        embedder=embedder,
        backend=StubBackend(),
        knowledge_base=kb,
        **router_kwargs,
    )


@pytest.fixture()
def small_router(qa_rows, embedder) -> CascadeRouter:
    return build_router(qa_rows[:60], embedder)


def pytest_runtest_logreport(report):
    """One visible pass/fail line per acceptance criterion."""
    if report.when != "call" or "test_acceptance.py" not in report.nodeid:
        return
    name = report.nodeid.split("::")[-1]
    verdict = "PASS" if report.passed else "FAIL"
    print(f"\nACCEPTANCE {verdict}: {name}", flush=True)

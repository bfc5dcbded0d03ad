"""Walk one query through the five-layer cascade, then watch it short-circuit.

Run:  python3 demos/01_cascade_walkthrough.py
"""

import json

from ragcascade import (
    CascadeRouter,
    HashEmbedder,
    MainKnowledgeBase,
    StubBackend,
    ingest_corpus,
    validate_query,
)
from ragcascade.datagen import synthetic_qa_dataset
from ragcascade.simulation import dataset_to_corpus, perturb

import numpy as np


def show(label, answer, event):
    probes = " -> ".join(f"{p.layer.wire_name}:{p.outcome}" for p in event.layers_probed)
    print(f"{label:<18} served_by={answer.layer.wire_name:<15} probes: {probes}")
    print(f"{'':<18} answer={answer.text!r}")


def main():
    rows = synthetic_qa_dataset(50, seed=7)
    embedder = HashEmbedder()
    kb = MainKnowledgeBase()
    ingest_corpus((json.dumps(r) for r in dataset_to_corpus(rows)), embedder, kb=kb)
    router = CascadeRouter(embedder=embedder, backend=StubBackend(), knowledge_base=kb)
    print(f"knowledge base holds {len(kb)} passages\n")

    question = rows[0]["question"]
    print(f"question: {question!r}\n")

    # 1. Fresh question: every cheap layer declines, full retrieval answers.
    answer, event = router.route(validate_query(question, "demo"))
    show("fresh", answer, event)

    # 2. Byte-identical repeat: the fixed KV-cache answers instantly.
    answer, event = router.route(validate_query(question, "demo"))
    show("exact repeat", answer, event)

    # 3. Lightly perturbed phrasing: the semantic cache catches it.
    rng = np.random.default_rng(3)
    rephrased = perturb(question, rng)
    print(f"\nperturbed to: {rephrased!r}\n")
    answer, event = router.route(validate_query(rephrased, "demo"))
    show("perturbed", answer, event)

    print("\nrouter stats:")
    for key, value in router.stats().items():
        print(f"  {key}: {value}")


if __name__ == "__main__":
    main()

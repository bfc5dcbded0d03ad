"""Knowledge migration: retrieval-served answers become recallable.

A session's (question, context, answer) triples are exported, loaded into
the stub backend's knowledge table (the desk-scale analog of periodic
fine-tuning), and the same questions are then answered by the recall layer
without touching the caches or the knowledge base.

Run:  python3 demos/06_knowledge_migration.py
"""

import json
from collections import Counter

from ragcascade import (
    CascadeRouter,
    HashEmbedder,
    MainKnowledgeBase,
    SimulationConfig,
    StubBackend,
    StubKnowledgeTable,
    export_triples,
    ingest_corpus,
    run_simulation,
    validate_query,
)
from ragcascade.datagen import synthetic_qa_dataset
from ragcascade.simulation import dataset_to_corpus


def main():
    rows = synthetic_qa_dataset(200, seed=23)
    embedder = HashEmbedder()
    kb = MainKnowledgeBase()
    ingest_corpus((json.dumps(r) for r in dataset_to_corpus(rows)), embedder, kb=kb)
    router = CascadeRouter(embedder=embedder, backend=StubBackend(), knowledge_base=kb)

    (log,) = run_simulation(
        SimulationConfig(n_sessions=1, queries_per_session=150, seed=5), router, rows
    )
    served = Counter(e.serving_layer.wire_name for e in log.events)
    print(f"session served: {dict(served)}")

    triples = list(export_triples(log.events))
    print(f"exported {len(triples)} training triples")
    print(f"sample: question={triples[0].question!r} answer={triples[0].answer!r}")

    table = StubKnowledgeTable()
    for triple in triples:
        table.add(triple.question, triple.answer)
    router.backend = StubBackend(knowledge=table)
    router.latency_model = None
    router.reset_session()
    print("\nknowledge table loaded; caches and adaptive memory reset")

    replay = Counter()
    for triple in triples:
        answer, _ = router.route(validate_query(triple.question, "after-reload"))
        replay[answer.layer.wire_name] += 1
    print(f"replaying the exported questions: {dict(replay)}")
    print("every previously retrieval-served question now answers from recall")


if __name__ == "__main__":
    main()

"""The HTTP API driven in-process (no sockets needed).

Run:  python3 demos/05_http_service.py

For a real server:  ragcascade serve --config config.yaml
"""

import json

from fastapi.testclient import TestClient

from ragcascade import CascadeRouter, HashEmbedder, MainKnowledgeBase, StubBackend, ingest_corpus
from ragcascade.config import ServiceConfig
from ragcascade.datagen import synthetic_qa_dataset
from ragcascade.service import create_app
from ragcascade.simulation import dataset_to_corpus


def main():
    rows = synthetic_qa_dataset(30, seed=11)
    embedder = HashEmbedder()
    kb = MainKnowledgeBase()
    ingest_corpus((json.dumps(r) for r in dataset_to_corpus(rows)), embedder, kb=kb)
    router = CascadeRouter(embedder=embedder, backend=StubBackend(), knowledge_base=kb)
    app = create_app(router, ServiceConfig())

    with TestClient(app) as client:
        print("GET /healthz ->", client.get("/healthz").json())

        question = rows[0]["question"]
        first = client.post("/query", json={"text": question, "session_id": "demo"}).json()
        print(f"\nfirst ask : layer={first['layer']} answer={first['text']!r}")
        again = client.post("/query", json={"text": question, "session_id": "demo"}).json()
        print(f"second ask: layer={again['layer']} (instant cache path)")

        extra = json.dumps({"id": "live1", "text": "A fresh passage arriving at runtime.", "source": "live"})
        print("\nPOST /ingest ->", client.post("/ingest", content=extra.encode()).json())

        stats = client.get("/stats").json()
        print("\nGET /stats ->")
        print(f"  total_queries: {stats['total_queries']}")
        print(f"  layer_counts:  {stats['layer_counts']}")
        print(f"  weighted_gpu_seconds_per_query: {stats['weighted_gpu_seconds_per_query']}")

        print("\nPOST /session/reset ->", client.post("/session/reset").json())
        fresh = client.post("/query", json={"text": question, "session_id": "demo"}).json()
        print(f"after reset: layer={fresh['layer']} (retrieval again)")

        missing = client.post("/query", json={"text": "   ", "session_id": "demo"})
        print(f"\nempty query -> HTTP {missing.status_code}: {missing.json()}")


if __name__ == "__main__":
    main()

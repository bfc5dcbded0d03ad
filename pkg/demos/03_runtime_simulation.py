"""Multi-session workload replay: cache warm-up and traffic shift.

Reproduces the serving dynamics at desk scale: sessions start cold, the
replay probability ramps up, and traffic migrates from full retrieval to
the cache layers. Latencies come from the synthetic per-layer cost model.

Run:  python3 demos/03_runtime_simulation.py
"""

import json
import tempfile
from pathlib import Path

import numpy as np

from ragcascade import (
    CascadeRouter,
    HashEmbedder,
    MainKnowledgeBase,
    SimulationConfig,
    StubBackend,
    ingest_corpus,
    run_simulation,
    usage_ratio,
)
from ragcascade.datagen import synthetic_qa_dataset
from ragcascade.metrics import generate_reports, warmup_curve
from ragcascade.simulation import dataset_to_corpus


def main():
    rows = synthetic_qa_dataset(600, seed=42)
    embedder = HashEmbedder()
    kb = MainKnowledgeBase()
    ingest_corpus((json.dumps(r) for r in dataset_to_corpus(rows)), embedder, kb=kb)
    router = CascadeRouter(embedder=embedder, backend=StubBackend(), knowledge_base=kb)

    config = SimulationConfig(n_sessions=5, queries_per_session=400, seed=0)
    print(f"running {config.n_sessions} sessions x {config.queries_per_session} queries ...")
    logs = run_simulation(config, router, rows)

    events = [e for log in logs for e in log.events]
    print("\nusage ratios over all sessions:")
    for layer, ratio in usage_ratio(events).as_wire().items():
        print(f"  {layer:<15} {ratio:6.1%}")

    print("\nwarm-up (mean latency by decile, averaged over sessions):")
    deciles = np.zeros(10)
    for log in logs:
        lats = np.array([e.latency_seconds for e in log.events])
        deciles += lats.reshape(10, -1).mean(axis=1)
    deciles /= len(logs)
    for i, value in enumerate(deciles):
        bar = "#" * int(value * 80)
        print(f"  decile {i}: {value:6.3f}s {bar}")

    curve = warmup_curve(logs)
    print(f"\nwarm-up curve has {len(curve.points)} points; head:")
    for point in curve.points[:5]:
        print(f"  idx {point.index}: mean={point.mean:.3f} q1={point.q1:.3f} q3={point.q3:.3f}")

    out_dir = Path(tempfile.mkdtemp(prefix="ragcascade-report-"))
    paths = generate_reports(logs, out_dir)
    print("\nplot-ready reports written:")
    for name, path in paths.items():
        print(f"  {name}: {path}")


if __name__ == "__main__":
    main()

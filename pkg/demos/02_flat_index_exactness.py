"""Exact flat index: 100% recall against a brute-force scan, plus snapshots.

Run:  python3 demos/02_flat_index_exactness.py
"""

import numpy as np

from ragcascade import FlatIndex


def brute_force(vectors, query, k):
    q64 = query.astype(np.float64)
    scores = [float(np.dot(v.astype(np.float64), q64)) for v in vectors]
    order = sorted(range(len(scores)), key=lambda i: (-scores[i], i))
    return order[:k]


def main():
    rng = np.random.default_rng(0)
    n, dim, k = 5000, 64, 10
    vectors = rng.normal(size=(n, dim))
    vectors /= np.linalg.norm(vectors, axis=1, keepdims=True)
    vectors = vectors.astype(np.float32)
    vectors[100] = vectors[42]  # duplicate: exact tie, broken by insertion order

    index = FlatIndex(dim=dim)
    for i in range(n):
        index.insert(f"vec{i}", vectors[i])

    agreements = 0
    trials = 50
    for _ in range(trials):
        q = rng.normal(size=dim)
        q = (q / np.linalg.norm(q)).astype(np.float32)
        expected = [f"vec{i}" for i in brute_force(vectors, q, k)]
        got = [h.entry_id for h in index.search(q, k=k)]
        agreements += got == expected
    print(f"{agreements}/{trials} random queries match the exhaustive scan exactly")

    hits = index.search(vectors[42], k=2)
    print(f"duplicate-vector tie: {[(h.entry_id, h.score) for h in hits]}")
    print("(vec42 wins the tie because it was inserted first)")

    blob = index.snapshot()
    restored = FlatIndex.restore(blob)
    q = vectors[7]
    same = [h.entry_id for h in index.search(q, k=5)] == [
        h.entry_id for h in restored.search(q, k=5)
    ]
    print(f"snapshot is {len(blob):,} bytes; restored index agrees: {same}")


if __name__ == "__main__":
    main()

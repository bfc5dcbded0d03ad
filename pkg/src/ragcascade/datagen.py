"""Synthetic QA fixtures for demos, tests, and desk-scale simulation runs.

Generated questions are lexically diverse on purpose. Each question carries
four row-unique content tokens out of roughly twelve, so under the built-in
1024-bucket feature-hash embedder two distinct questions stay below the
0.85 semantic-cache threshold even if a couple of their unique tokens
collide into shared hash buckets, while single-edit perturbations of one
question keep nearly all of its tokens and land far above the threshold.

Contexts embed the question's content words and the answer, so retrieval
ranks each question's own context first and the stub backend can answer it.
"""

from __future__ import annotations

import numpy as np

# Each template holds slots a (shared adjective pool) and b, c, d, e
# (row-unique tokens). Worst-case shared fraction between two rows from the
# same template with the same adjective is (t - 4 + collisions) / t with
# t = 12 tokens, which stays below 0.85 for up to two bucket collisions.
_TEMPLATES = (
    "What does the {a} {b} report say about {c} near {d} {e}?",
    "Which {a} {b} facility processed {c} shipments for {d} {e}?",
    "Who maintains the {a} {b} registry covering {c} under {d} {e}?",
    "When was the {a} {b} survey of {c} completed for {d} {e}?",
    "Where is the {a} {b} archive for {c} stored inside {d} {e}?",
    "How often does the {a} {b} audit review {c} within {d} {e}?",
)

_ADJECTIVES = (
    "coastal", "northern", "annual", "regional", "municipal", "federated",
    "seasonal", "upstream", "granite", "maritime", "orbital", "alpine",
)

_ANSWER_LEADS = (
    "It is handled by",
    "Records attribute it to",
    "The registry lists",
    "Official filings name",
)

_FILLER = (
    "The surrounding documentation covers procurement cycles and archival policies.",
    "Adjacent records describe staffing rosters and equipment manifests.",
    "Related filings track inspection outcomes and renewal deadlines.",
    "Supplementary notes cover logistics corridors and transfer schedules.",
)


def synthetic_qa_dataset(n: int, seed: int = 0) -> list[dict[str, str]]:
    """Generate ``n`` QA rows with pairwise-dissimilar questions."""
    rng = np.random.default_rng(seed)
    rows = []
    for i in range(n):
        template = _TEMPLATES[int(rng.integers(len(_TEMPLATES)))]
        question = template.format(
            a=_ADJECTIVES[int(rng.integers(len(_ADJECTIVES)))],
            b=f"ledger{i:04d}",
            c=f"sector{i:04d}",
            d=f"basin{i:04d}",
            e=f"cohort{i:04d}",
        )
        answer = f"unit{i:04d}"
        lead = _ANSWER_LEADS[int(rng.integers(len(_ANSWER_LEADS)))]
        filler = _FILLER[int(rng.integers(len(_FILLER)))]
        context = (
            f"The ledger{i:04d} file for sector{i:04d} in basin{i:04d} "
            f"covers cohort{i:04d}. {lead} {answer}. {filler}"
        )
        rows.append({"question": question, "answer": answer, "context": context})
    return rows

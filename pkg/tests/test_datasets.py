"""Dataset loaders, fixture generator properties, JSONL helpers."""

import json

import numpy as np
import pytest

from ragcascade import MalformedJsonl
from ragcascade.datagen import synthetic_qa_dataset
from ragcascade.jsonl import iter_jsonl, read_jsonl, write_jsonl
from ragcascade.simulation import dataset_to_corpus, load_qa_dataset, load_triviaqa


class TestSyntheticDataset:
    def test_shape_and_determinism(self):
        rows = synthetic_qa_dataset(25, seed=1)
        assert len(rows) == 25
        assert rows == synthetic_qa_dataset(25, seed=1)
        for row in rows:
            assert set(row) == {"question", "answer", "context"}
            assert row["answer"] in row["context"]

    def test_questions_pairwise_dissimilar(self, embedder):
        rows = synthetic_qa_dataset(250, seed=6)
        matrix = np.stack(
            [embedder.embed(r["question"]).values for r in rows]
        ).astype(np.float64)
        gram = matrix @ matrix.T
        np.fill_diagonal(gram, 0.0)
        assert float(gram.max()) < 0.85

    def test_own_context_ranks_first(self, embedder):
        from conftest import build_kb

        rows = synthetic_qa_dataset(40, seed=2)
        kb = build_kb(rows, embedder)
        for i in (0, 7, 23):
            top, _ = kb.retrieve(embedder.embed(rows[i]["question"]), k=1, seed_k=10)
            assert top[0].answer == rows[i]["answer"]

    def test_corpus_conversion(self):
        rows = synthetic_qa_dataset(3, seed=0)
        corpus = dataset_to_corpus(rows, source="fixtures")
        assert len(corpus) == 3
        assert corpus[0]["id"] == "fixtures-00000"
        assert corpus[0]["text"] == rows[0]["context"]
        assert corpus[0]["answer"] == rows[0]["answer"]


class TestQaDatasetLoader:
    def test_round_trip(self, tmp_path):
        rows = synthetic_qa_dataset(5, seed=3)
        path = tmp_path / "d.jsonl"
        write_jsonl(path, rows)
        assert load_qa_dataset(path) == rows

    def test_missing_field_reported_with_line(self, tmp_path):
        path = tmp_path / "d.jsonl"
        path.write_text('{"question": "q", "answer": "a", "context": "c"}\n{"question": "q2"}\n')
        with pytest.raises(MalformedJsonl) as err:
            load_qa_dataset(path)
        assert err.value.line_number == 2


class TestTriviaQaLoader:
    def test_upstream_layout(self, tmp_path):
        payload = {
            "Data": [
                {
                    "Question": "Which river flows through Vienna?",
                    "Answer": {"Value": "Danube"},
                    "SearchResults": [{"Description": "The Danube flows through Vienna."}],
                },
                {
                    "Question": "No evidence question?",
                    "Answer": {"Value": "Something"},
                    "EntityPages": [{"Title": "Some Page"}],
                },
                {"Question": "Broken entry"},
            ]
        }
        path = tmp_path / "trivia.json"
        path.write_text(json.dumps(payload))
        rows = load_triviaqa(path)
        assert len(rows) == 2
        assert rows[0] == {
            "question": "Which river flows through Vienna?",
            "answer": "Danube",
            "context": "The Danube flows through Vienna.",
        }
        assert "Some Page" in rows[1]["context"]

    def test_limit(self, tmp_path):
        payload = {
            "Data": [
                {"Question": f"q{i}", "Answer": {"Value": f"a{i}"}} for i in range(10)
            ]
        }
        path = tmp_path / "trivia.json"
        path.write_text(json.dumps(payload))
        assert len(load_triviaqa(path, limit=4)) == 4


class TestJsonlHelpers:
    def test_line_numbers_skip_blanks(self):
        lines = ["", '{"a": 1}', "   ", '{"b": 2}']
        got = list(iter_jsonl(lines))
        assert got == [(2, {"a": 1}), (4, {"b": 2})]

    def test_non_object_rejected(self):
        with pytest.raises(MalformedJsonl) as err:
            list(iter_jsonl(["[1, 2]"]))
        assert err.value.line_number == 1

    def test_lenient_collects_errors(self):
        seen = []
        got = list(
            iter_jsonl(
                ['{"ok": 1}', "{bad", "[3]"],
                lenient=True,
                on_error=lambda n, m: seen.append(n),
            )
        )
        assert got == [(1, {"ok": 1})]
        assert seen == [2, 3]

    def test_write_read_round_trip(self, tmp_path):
        path = tmp_path / "x.jsonl"
        records = [{"i": i} for i in range(4)]
        assert write_jsonl(path, records) == 4
        assert read_jsonl(path) == records

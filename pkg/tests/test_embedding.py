"""Embedder determinism, normalization, cosine arithmetic, remote client."""

import httpx
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ragcascade import (
    DIMENSION,
    BackendUnavailable,
    DimensionMismatch,
    EmbeddingVector,
    EmptyInput,
    HashEmbedder,
    InvalidVector,
    RemoteEmbedder,
    cosine,
)
from ragcascade.embedding import tokenize

from conftest import cosine_oracle


@pytest.fixture(scope="module")
def emb() -> HashEmbedder:
    return HashEmbedder()


def collision_free(emb: HashEmbedder, words: list[str]) -> list[str]:
    """Filter a vocabulary to words with pairwise-distinct hash buckets."""
    seen: dict[int, str] = {}
    kept = []
    for word in words:
        bucket, _ = emb._bucket_sign(word)
        if bucket not in seen:
            seen[bucket] = word
            kept.append(word)
    return kept


VOCAB = [f"term{i:03d}" for i in range(80)]


class TestHashEmbedder:
    def test_deterministic(self, emb):
        a = emb.embed("abc def")
        b = emb.embed("abc def")
        assert np.array_equal(a.values, b.values)

    def test_unit_norm(self, emb):
        for text in ("abc", "a much longer sentence with many words", "x y z " * 40):
            v = emb.embed(text)
            assert abs(np.linalg.norm(v.values.astype(np.float64)) - 1.0) <= 1e-5

    def test_float32_storage(self, emb):
        assert emb.embed("abc").values.dtype == np.float32
        assert len(emb.embed("abc")) == DIMENSION

    def test_empty_input(self, emb):
        with pytest.raises(EmptyInput):
            emb.embed("")

    def test_tokenless_fallback_is_deterministic_unit(self, emb):
        # Punctuation-only text has no tokens; the byte-hash fallback kicks in.
        v1 = emb.embed("?!...")
        v2 = emb.embed("?!...")
        assert np.array_equal(v1.values, v2.values)
        assert abs(np.linalg.norm(v1.values) - 1.0) <= 1e-5
        assert np.count_nonzero(v1.values) == 1

    def test_shared_tokens_raise_cosine(self, emb):
        # Verified against the scalar-loop oracle before asserting the ordering.
        q = "alpha beta gamma delta"
        close = "alpha beta gamma epsilon"
        unrelated = "zeta eta theta iota"
        c_close = cosine_oracle(emb.embed(q).values, emb.embed(close).values)
        c_far = cosine_oracle(emb.embed(q).values, emb.embed(unrelated).values)
        assert cosine(emb.embed(q), emb.embed(close)) == pytest.approx(c_close, abs=1e-9)
        assert cosine(emb.embed(q), emb.embed(unrelated)) == pytest.approx(c_far, abs=1e-9)
        assert c_close > c_far

    def test_token_overlap_monotonicity(self, emb):
        # Same-length candidates sharing strictly more tokens with the query
        # never score lower. Uses a collision-free vocabulary so bucket
        # collisions cannot blur the ordering.
        words = collision_free(emb, VOCAB)
        assert len(words) >= 20
        rng = np.random.default_rng(7)
        for _ in range(50):
            picks = rng.choice(len(words), size=12, replace=False)
            q_tokens = [words[i] for i in picks[:6]]
            fresh = [words[i] for i in picks[6:]]
            for shared_more in range(1, 6):
                for shared_less in range(0, shared_more):
                    c1 = q_tokens[:shared_more] + fresh[: 6 - shared_more]
                    c2 = q_tokens[:shared_less] + fresh[: 6 - shared_less]
                    s1 = cosine(emb.embed(" ".join(q_tokens)), emb.embed(" ".join(c1)))
                    s2 = cosine(emb.embed(" ".join(q_tokens)), emb.embed(" ".join(c2)))
                    assert s1 >= s2

    def test_tokenize_splits_punctuation_and_whitespace(self):
        assert tokenize("Who wrote Hamlet?") == ["Who", "wrote", "Hamlet"]
        assert tokenize("a,b;c\td") == ["a", "b", "c", "d"]


class TestEmbeddingVector:
    def test_wrap_rejects_wrong_length(self):
        with pytest.raises(DimensionMismatch):
            EmbeddingVector.wrap(np.ones(8, dtype=np.float32))

    def test_wrap_rejects_nan(self):
        arr = np.zeros(DIMENSION, dtype=np.float32)
        arr[0] = np.nan
        with pytest.raises(InvalidVector):
            EmbeddingVector.wrap(arr)

    def test_wrap_rejects_non_unit(self):
        with pytest.raises(InvalidVector):
            EmbeddingVector.wrap(np.ones(DIMENSION, dtype=np.float32))

    def test_normalized_rejects_zero(self):
        with pytest.raises(InvalidVector):
            EmbeddingVector.normalized(np.zeros(DIMENSION))


class TestCosine:
    def test_identical_vectors(self, emb):
        v = emb.embed("hello world")
        assert cosine(v, v) == pytest.approx(1.0, abs=1e-6)

    def test_orthogonal_one_hot(self):
        e1 = np.zeros(8, dtype=np.float32)
        e2 = np.zeros(8, dtype=np.float32)
        e1[0] = 1.0
        e2[3] = 1.0
        assert cosine(e1, e2) == 0.0

    def test_random_pair_matches_scalar_oracle(self, rng):
        raw1 = rng.normal(size=8)
        raw2 = rng.normal(size=8)
        v1 = (raw1 / np.linalg.norm(raw1)).astype(np.float32)
        v2 = (raw2 / np.linalg.norm(raw2)).astype(np.float32)
        assert cosine(v1, v2) == pytest.approx(cosine_oracle(v1, v2), abs=1e-6)

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            cosine(np.ones(4, dtype=np.float32), np.ones(8, dtype=np.float32))

    def test_clamped(self):
        v = np.zeros(4, dtype=np.float32)
        v[0] = 1.0
        assert -1.0 <= cosine(v, -v) <= 1.0

    @settings(max_examples=60, deadline=None)
    @given(st.lists(st.text(alphabet="abcdefg hi", min_size=1, max_size=30), min_size=2, max_size=2))
    def test_symmetry_property(self, texts):
        emb = HashEmbedder()
        a = emb.embed(texts[0] or "x")
        b = emb.embed(texts[1] or "y")
        assert cosine(a, b) == cosine(b, a)

    @settings(max_examples=60, deadline=None)
    @given(st.text(alphabet="abcdefgh ijkl", min_size=1, max_size=60))
    def test_self_similarity_property(self, text):
        emb = HashEmbedder()
        v = emb.embed(text)
        assert cosine(v, v) == pytest.approx(1.0, abs=1e-6)


class TestRemoteEmbedder:
    def _client(self, handler):
        return httpx.Client(transport=httpx.MockTransport(handler))

    def test_round_trip(self, emb):
        def handler(request: httpx.Request) -> httpx.Response:
            import json

            texts = json.loads(request.content)["texts"]
            vectors = [emb.embed(t).values.tolist() for t in texts]
            return httpx.Response(200, json={"vectors": vectors})

        remote = RemoteEmbedder("http://embed.test/v1", client=self._client(handler))
        got = remote.embed_many(["alpha beta", "gamma delta"])
        assert len(got) == 2
        assert cosine(got[0], emb.embed("alpha beta")) == pytest.approx(1.0, abs=1e-6)

    def test_http_error_maps_to_backend_unavailable(self):
        def handler(request):
            return httpx.Response(500, text="boom")

        remote = RemoteEmbedder("http://embed.test/v1", client=self._client(handler))
        with pytest.raises(BackendUnavailable):
            remote.embed("alpha")

    def test_wrong_count_rejected(self):
        def handler(request):
            return httpx.Response(200, json={"vectors": []})

        remote = RemoteEmbedder("http://embed.test/v1", client=self._client(handler))
        with pytest.raises(BackendUnavailable):
            remote.embed("alpha")

    def test_empty_input_rejected_client_side(self):
        def handler(request):  # pragma: no cover - never reached
            return httpx.Response(200, json={"vectors": [[0.0] * DIMENSION]})

        remote = RemoteEmbedder("http://embed.test/v1", client=self._client(handler))
        with pytest.raises(EmptyInput):
            remote.embed("")

import math
import random

import numpy as np
import pytest

from ontomine.errors import TransportError
from ontomine.retrieval import (
    Candidate,
    DimensionMismatchError,
    EmptyIndexError,
    HashingEmbedder,
    IndexEntry,
    RemoteEmbedder,
    SimilarityIndex,
    build_index,
    load_index,
    save_index,
    similarity,
    top_k,
    top_k_by_vector,
)
from stubserver import StubServer


def brute_force_top_k(index: SimilarityIndex, qvec, k: int) -> list[tuple[int, float]]:
    scored = []
    for i, entry in enumerate(index.entries):
        dist = math.sqrt(sum((a - b) ** 2 for a, b in zip(entry.vector, qvec)))
        scored.append((i, 1.0 / (1.0 + dist)))
    scored.sort(key=lambda t: (-t[1], t[0]))
    return scored[:k]


class TestSimilarity:
    def test_identity(self):
        assert similarity([1.0, 2.0], [1.0, 2.0]) == 1.0

    def test_hand_computed(self):
        assert abs(similarity([0.0, 0.0], [3.0, 4.0]) - 1.0 / 6.0) < 1e-12

    def test_symmetry(self):
        a, b = [0.5, 1.5, -2.0], [1.0, 0.0, 3.0]
        assert similarity(a, b) == similarity(b, a)

    def test_monotone_in_distance(self):
        base = [0.0, 0.0]
        scores = [similarity(base, [float(x), 0.0]) for x in range(5)]
        assert scores == sorted(scores, reverse=True)

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatchError):
            similarity([1.0], [1.0, 2.0])


class TestHashingEmbedder:
    def test_deterministic(self, embedder):
        a = embedder.embed("seizure disorder with fever")
        b = embedder.embed("seizure disorder with fever")
        assert np.array_equal(a, b)

    def test_dimension_and_norm(self, embedder):
        vec = embedder.embed("renal cyst")
        assert vec.shape == (256,)
        assert abs(np.linalg.norm(vec) - 1.0) < 1e-12

    def test_shared_token_similarity(self, embedder):
        anchor = embedder.embed("seizure disorder")
        assert similarity(anchor, embedder.embed("seizure")) > similarity(
            anchor, embedder.embed("renal cyst")
        )

    def test_empty_text_rejected(self, embedder):
        with pytest.raises(Exception):
            embedder.embed("")


class TestTopK:
    def test_self_retrieval(self, embedder):
        index = build_index([("alpha beta", 1), ("gamma delta", 2)], embedder)
        best = top_k(index, "alpha beta", 1, embedder)[0]
        assert best.entry.payload == 1
        assert best.score == 1.0

    def test_k_larger_than_index(self, embedder):
        index = build_index([("a", 1), ("b", 2), ("c", 3)], embedder)
        assert len(top_k(index, "a", 5, embedder)) == 3

    def test_sorted_descending(self, embedder):
        index = build_index([(f"w{i}", i) for i in range(10)], embedder)
        scores = [c.score for c in top_k(index, "w3 w4", 10, embedder)]
        assert scores == sorted(scores, reverse=True)

    def test_tie_break_by_load_order(self):
        vec = np.asarray([1.0, 0.0])
        entries = [IndexEntry(f"k{i}", i, vec) for i in range(4)]
        index = SimilarityIndex(entries=entries, dimension=2, provider_id="test")
        result = top_k_by_vector(index, np.asarray([0.0, 1.0]), 3)
        assert [c.entry.payload for c in result] == [0, 1, 2]

    def test_matches_brute_force_oracle(self):
        rng = np.random.default_rng(7)
        for _ in range(10):
            n, d = int(rng.integers(5, 400)), int(rng.integers(2, 32))
            matrix = rng.uniform(-1, 1, size=(n, d))
            entries = [IndexEntry(f"e{i}", i, matrix[i]) for i in range(n)]
            index = SimilarityIndex(entries=entries, dimension=d, provider_id="test")
            qvec = rng.uniform(-1, 1, size=d)
            k = int(rng.integers(1, 8))
            got = top_k_by_vector(index, qvec, k)
            expected = brute_force_top_k(index, qvec, k)
            assert [c.entry.payload for c in got] == [i for i, _ in expected]

    def test_empty_index(self, embedder):
        index = SimilarityIndex(entries=[], dimension=256, provider_id="x")
        with pytest.raises(EmptyIndexError):
            top_k(index, "q", 1, embedder)

    def test_k_must_be_positive(self, embedder, hpo_index):
        with pytest.raises(ValueError):
            top_k(hpo_index, "q", 0, embedder)


class TestBuildAndPersist:
    def test_build_counts(self, embedder):
        index = build_index([("a", 1), ("b", 2), ("c", 3)], embedder)
        assert len(index) == 3
        assert index.dimension == embedder.dimension

    def test_duplicate_keys_retained(self, embedder):
        index = build_index([("same", 1), ("same", 2)], embedder)
        assert [e.payload for e in index.entries] == [1, 2]

    def test_empty_items_rejected(self, embedder):
        with pytest.raises(EmptyIndexError):
            build_index([], embedder)

    def test_round_trip_scores_bit_exact(self, tmp_path, embedder, hpo_index):
        path = tmp_path / "hpo.idx.jsonl"
        save_index(hpo_index, path)
        reloaded = load_index(path)
        for query in ("seizure", "low hemoglobin", "chest pain at night"):
            before = top_k(hpo_index, query, 5, embedder)
            after = top_k(reloaded, query, 5, embedder)
            assert [(c.entry.key, c.score) for c in before] == [
                (c.entry.key, c.score) for c in after
            ]

    def test_count_mismatch_detected(self, tmp_path, embedder):
        index = build_index([("a", 1), ("b", 2)], embedder)
        path = tmp_path / "x.idx.jsonl"
        save_index(index, path)
        lines = path.read_text().splitlines()
        path.write_text("\n".join(lines[:-1]) + "\n")
        with pytest.raises(Exception):
            load_index(path)


class TestRemoteEmbedder:
    def test_wire_format_and_response(self):
        server = StubServer().start()
        try:
            server.responses.append(
                (200, {"data": [{"embedding": [1.0, 0.0]}, {"embedding": [0.0, 1.0]}]})
            )
            remote = RemoteEmbedder(server.url, "medembed-small", 2, backoff_base=0)
            vectors = remote.embed_batch(["alpha", "beta"])
            assert server.requests[0]["body"] == {
                "model": "medembed-small",
                "input": ["alpha", "beta"],
            }
            assert np.array_equal(vectors[0], np.asarray([1.0, 0.0]))
        finally:
            server.stop()

    def test_retry_then_success(self):
        server = StubServer().start()
        try:
            server.responses.extend(
                [(500, {}), (500, {}), (200, {"data": [{"embedding": [0.5]}]})]
            )
            remote = RemoteEmbedder(server.url, "m", 1, retries=3, backoff_base=0)
            assert remote.embed("x")[0] == 0.5
            assert len(server.requests) == 3
        finally:
            server.stop()

    def test_retries_exhausted(self):
        server = StubServer().start()
        try:
            server.responses.extend([(500, {})] * 3)
            remote = RemoteEmbedder(server.url, "m", 1, retries=3, backoff_base=0)
            with pytest.raises(TransportError):
                remote.embed("x")
            assert len(server.requests) == 3
        finally:
            server.stop()

    def test_dimension_checked(self):
        server = StubServer().start()
        try:
            server.responses.append((200, {"data": [{"embedding": [1.0, 2.0, 3.0]}]}))
            remote = RemoteEmbedder(server.url, "m", 2, backoff_base=0)
            with pytest.raises(DimensionMismatchError):
                remote.embed("x")
        finally:
            server.stop()

"""Index, search, fusion, and recall contracts."""

import numpy as np
import pytest

from stylesearch.errors import DegenerateInputError, EvaluationError, InputShapeError
from stylesearch.retrieval import (
    EmbeddingIndex,
    RankedResult,
    fuse_queries,
    recall_at_k,
    search,
)


def unit(v) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    return (v / np.linalg.norm(v)).astype(np.float32)


def make_index(rows, ids=None) -> EmbeddingIndex:
    matrix = np.stack([unit(r) for r in rows])
    ids = ids or [f"g{i:04d}" for i in range(len(rows))]
    return EmbeddingIndex(ids=ids, matrix=matrix, fingerprint="test")


class TestEmbeddingIndex:
    def test_row_id_count_mismatch_rejected(self):
        with pytest.raises(InputShapeError):
            EmbeddingIndex(ids=["a"], matrix=np.zeros((2, 3), dtype=np.float32), fingerprint="x")

    def test_duplicate_ids_rejected(self):
        with pytest.raises(InputShapeError):
            EmbeddingIndex(ids=["a", "a"], matrix=np.eye(2, dtype=np.float32), fingerprint="x")

    def test_save_load_round_trip(self, tmp_path):
        index = make_index(np.random.default_rng(0).normal(size=(5, 8)))
        path = tmp_path / "index.npz"
        index.save(path)
        loaded = EmbeddingIndex.load(path)
        assert loaded.ids == index.ids
        assert loaded.fingerprint == index.fingerprint
        np.testing.assert_array_equal(loaded.matrix, index.matrix)


class TestSearch:
    def test_self_query_ranks_first_with_score_one(self):
        rng = np.random.default_rng(1)
        index = make_index(rng.normal(size=(6, 16)))
        result = search(index.matrix[3], index, k=3)
        assert result.entries[0][0] == "g0003"
        assert result.entries[0][1] == pytest.approx(1.0, abs=1e-6)

    def test_hand_sorted_toy_case(self):
        # three gallery rows with cosines (0.9, 0.1, 0.5) against the query
        query = np.array([1.0, 0.0])
        rows = []
        for cos in (0.9, 0.1, 0.5):
            rows.append([cos, np.sqrt(1 - cos**2)])
        index = make_index(rows)
        result = search(query, index, k=3)
        assert [gid for gid, _ in result.entries] == ["g0000", "g0002", "g0001"]
        scores = [s for _, s in result.entries]
        np.testing.assert_allclose(scores, [0.9, 0.5, 0.1], atol=1e-6)

    def test_scores_non_increasing_and_k_respected(self):
        rng = np.random.default_rng(2)
        index = make_index(rng.normal(size=(20, 8)))
        result = search(rng.normal(size=8), index, k=7)
        scores = [s for _, s in result.entries]
        assert len(result.entries) == 7
        assert scores == sorted(scores, reverse=True)

    def test_ties_break_by_ascending_id(self):
        row = unit([1.0, 1.0])
        index = make_index([row, row, row], ids=["g0002", "g0000", "g0001"])
        result = search(row, index, k=3)
        assert [gid for gid, _ in result.entries] == ["g0000", "g0001", "g0002"]

    def test_k_larger_than_gallery(self):
        index = make_index(np.eye(3))
        assert len(search(np.array([1.0, 0, 0]), index, k=10).entries) == 3

    def test_dim_mismatch_rejected(self):
        index = make_index(np.eye(3))
        with pytest.raises(InputShapeError):
            search(np.ones(4), index, k=1)

    def test_zero_query_rejected(self):
        index = make_index(np.eye(3))
        with pytest.raises(DegenerateInputError):
            search(np.zeros(3), index, k=1)

    def test_rotation_invariance(self):
        rng = np.random.default_rng(3)
        rows = rng.normal(size=(15, 10))
        query = rng.normal(size=10)
        q_mat, _ = np.linalg.qr(rng.normal(size=(10, 10)))
        base = search(query, make_index(rows), k=15)
        rotated = search(q_mat @ query, make_index(rows @ q_mat.T), k=15)
        assert [g for g, _ in base.entries] == [g for g, _ in rotated.entries]
        for (_, a), (_, b) in zip(base.entries, rotated.entries):
            assert abs(a - b) <= 1e-5


class TestFuseQueries:
    def test_single_embedding_identity(self):
        e = unit([0.2, 0.5, -0.1])
        np.testing.assert_allclose(fuse_queries([e]), e, atol=1e-7)

    def test_idempotent_on_duplicates(self):
        e = unit([1.0, 2.0, 3.0])
        np.testing.assert_allclose(fuse_queries([e, e]), e, atol=1e-7)

    def test_orthogonal_pair(self):
        e1 = np.array([1.0, 0.0])
        e2 = np.array([0.0, 1.0])
        np.testing.assert_allclose(fuse_queries([e1, e2]), np.array([1.0, 1.0]) / np.sqrt(2), atol=1e-7)

    def test_permutation_invariant(self):
        rng = np.random.default_rng(4)
        embs = [unit(rng.normal(size=6)) for _ in range(4)]
        a = fuse_queries(embs)
        b = fuse_queries(embs[::-1])
        np.testing.assert_allclose(a, b, atol=1e-7)

    def test_zero_mean_rejected(self):
        with pytest.raises(DegenerateInputError):
            fuse_queries([np.array([1.0, 0.0]), np.array([-1.0, 0.0])])

    def test_empty_rejected(self):
        with pytest.raises(DegenerateInputError):
            fuse_queries([])

    def test_dim_mismatch_rejected(self):
        with pytest.raises(InputShapeError):
            fuse_queries([np.ones(3), np.ones(4)])


def ranked(ids) -> RankedResult:
    return RankedResult(entries=[(g, 1.0 - 0.01 * i) for i, g in enumerate(ids)])


class TestRecallAtK:
    def test_perfect_retrieval(self):
        results = [ranked([f"g{i}", "x", "y"]) for i in range(4)]
        truth = [f"g{i}" for i in range(4)]
        assert recall_at_k(results, truth, 1) == 100.0
        assert recall_at_k(results, truth, 5) == 100.0

    def test_manual_rank_counts(self):
        # ground-truth ranks 1, 3, 7
        gallery = [f"g{i}" for i in range(8)]
        results = [
            ranked(["t0"] + gallery[:7]),
            ranked(gallery[:2] + ["t1"] + gallery[2:6]),
            ranked(gallery[:6] + ["t2"] + gallery[6:7]),
        ]
        truth = ["t0", "t1", "t2"]
        assert recall_at_k(results, truth, 1) == pytest.approx(100 / 3)
        assert recall_at_k(results, truth, 5) == pytest.approx(200 / 3)

    def test_monotone_in_k(self):
        rng = np.random.default_rng(5)
        gallery = [f"g{i}" for i in range(30)]
        results, truth = [], []
        for q in range(10):
            order = list(rng.permutation(gallery))
            results.append(ranked(order))
            truth.append(gallery[q])
        r1 = recall_at_k(results, truth, 1)
        r5 = recall_at_k(results, truth, 5)
        assert 0.0 <= r1 <= r5 <= 100.0

    def test_unaffected_by_items_outside_top_k(self):
        results = [ranked(["a", "b", "c"])]
        assert recall_at_k(results, ["a"], 1) == recall_at_k([ranked(["a", "z", "w"])], ["a"], 1)

    def test_length_mismatch_rejected(self):
        with pytest.raises(EvaluationError):
            recall_at_k([ranked(["a"])], ["a", "b"], 1)

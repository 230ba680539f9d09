import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.cluster.hierarchy import linkage
from scipy.spatial.distance import squareform

from oracles import best_two_partition, upgma_brute
from uts.clustering import Dendrogram, average_linkage, best_silhouette, kmeans, silhouette
from uts.core import Metric, PointCloud
from uts.errors import BoundsError, PreconditionError, UndefinedStatisticError


def blobs(rng, centres, per=20, spread=0.05):
    centres = np.asarray(centres, dtype=float)
    return np.vstack([c + spread * rng.normal(size=(per, centres.shape[1])) for c in centres])


class TestKMeans:
    def test_two_blobs_match_exhaustive_oracle(self, rng):
        x = blobs(rng, [[0, 0], [10, 10]], per=5, spread=0.3)
        best_inertia, best_labels = best_two_partition(x)
        run = kmeans(PointCloud(x), 2, seed=0)
        assert run.inertia == pytest.approx(best_inertia)
        same = (run.labels == run.labels[0]) == (best_labels == best_labels[0])
        assert same.all()

    def test_k_equals_n(self, rng):
        run = kmeans(PointCloud(rng.normal(size=(6, 2))), 6)
        assert sorted(run.labels) == list(range(6))
        assert run.inertia == pytest.approx(0.0, abs=1e-20)

    def test_identical_points(self):
        run = kmeans(PointCloud(np.ones((5, 3))), 2)
        assert set(run.labels) == {0, 1}
        assert run.inertia == 0.0

    def test_bounds(self, rng):
        with pytest.raises(BoundsError):
            kmeans(PointCloud(rng.normal(size=(3, 2))), 4)
        with pytest.raises(BoundsError):
            kmeans(PointCloud(rng.normal(size=(3, 2))), 1)

    @given(st.integers(0, 2**32 - 1), st.integers(2, 8))
    def test_inertia_history_nonincreasing(self, seed, k):
        x = np.random.default_rng(seed).normal(size=(60, 3))
        run = kmeans(PointCloud(x), k, seed)
        assert all(b <= a + 1e-9 for a, b in zip(run.history, run.history[1:]))
        assert np.all(run.sizes() > 0)
        again = kmeans(PointCloud(x), k, seed)
        np.testing.assert_array_equal(run.labels, again.labels)


class TestSilhouette:
    def test_far_blobs(self, rng):
        x = blobs(rng, [[0, 0], [20, 0]])
        labels = np.repeat([0, 1], 20)
        assert silhouette(PointCloud(x), labels) >= 0.95

    def test_random_labels_near_zero(self, rng):
        x = rng.random((400, 2))
        labels = rng.integers(0, 2, 400)
        assert abs(silhouette(PointCloud(x), labels)) <= 0.1

    def test_singletons(self):
        assert silhouette(PointCloud([[0.0], [1.0]]), [0, 1]) == 0.0

    def test_single_cluster(self):
        with pytest.raises(UndefinedStatisticError):
            silhouette(PointCloud(np.eye(3)), [0, 0, 0])

    def test_against_sklearn(self, rng):
        from sklearn.metrics import silhouette_score

        x = rng.normal(size=(50, 4))
        labels = rng.integers(0, 3, 50)
        for metric in ("euclidean", "cosine"):
            assert silhouette(PointCloud(x), labels, metric) == pytest.approx(silhouette_score(x, labels, metric=metric), abs=1e-12)

    @given(st.integers(0, 2**32 - 1))
    def test_relabel_and_isometry_invariance(self, seed):
        rng = np.random.default_rng(seed)
        x = rng.normal(size=(30, 3))
        labels = rng.integers(0, 3, 30)
        if len(set(labels)) < 2:
            return
        s = silhouette(PointCloud(x), labels)
        assert -1 <= s <= 1
        perm = rng.permutation(3)
        q, _ = np.linalg.qr(rng.normal(size=(3, 3)))
        assert silhouette(PointCloud(x @ q + 5.0), perm[labels]) == pytest.approx(s, abs=1e-9)


class TestBestSilhouette:
    def test_three_blobs(self, rng):
        x = blobs(rng, [[0, 0], [10, 0], [0, 10]])
        k, score = best_silhouette(PointCloud(x), (3, 5), seed=0)
        assert k == 3 and score > 0.9

    def test_skips_large_k(self, rng):
        k, _ = best_silhouette(PointCloud(rng.normal(size=(4, 2))))
        assert k == 3

    def test_all_skipped(self, rng):
        with pytest.raises(BoundsError):
            best_silhouette(PointCloud(rng.normal(size=(4, 2))), (5, 10))

    def test_tie_prefers_smaller_k(self, rng, monkeypatch):
        import uts.clustering as mod

        monkeypatch.setattr(mod, "silhouette", lambda *a, **k: 0.5)
        k, score = best_silhouette(PointCloud(rng.normal(size=(30, 2))), (10, 3, 5))
        assert (k, score) == (3, 0.5)

    def test_per_metric(self, rng):
        x = blobs(rng, [[1, 0], [0, 1]], spread=0.02)
        out = best_silhouette(PointCloud(x), (2, 3), metric=("euclidean", "cosine"))
        assert set(out) == {Metric.EUCLIDEAN, Metric.COSINE}
        assert all(k == 2 for k, _ in out.values())


def merge_sets(dendro):
    members = dendro.members()
    return [(tuple(members[a]), tuple(members[b]), h) for a, b, h, _ in dendro.merges]


class TestLinkage:
    def test_three_items(self):
        d = np.array([[0, 1, 10], [1, 0, 10], [10, 10, 0]], dtype=float)
        dendro = average_linkage(d)
        assert dendro.merges[0][:3] == (0, 1, 1.0)
        assert dendro.merges[1][2] == 10.0

    def test_all_equal(self):
        d = np.ones((4, 4)) - np.eye(4)
        dendro = average_linkage(d)
        assert [m[:2] for m in dendro.merges] == [(0, 1), (2, 3), (4, 5)]
        assert all(m[2] == 1.0 for m in dendro.merges)

    def test_asymmetric(self):
        with pytest.raises(PreconditionError):
            average_linkage(np.array([[0.0, 1.0], [2.0, 0.0]]))

    @given(st.integers(0, 2**32 - 1), st.integers(2, 9))
    def test_matches_brute_force(self, seed, n):
        x = np.random.default_rng(seed).normal(size=(n, 3))
        d = np.linalg.norm(x[:, None] - x[None], axis=2)
        got = merge_sets(average_linkage(d))
        want = upgma_brute(d)
        assert len(got) == len(want)
        for (a1, b1, h1), (a2, b2, h2) in zip(got, want):
            assert {a1, b1} == {a2, b2}
            assert h1 == pytest.approx(h2, abs=1e-12)

    @given(st.integers(0, 2**32 - 1))
    def test_heights_match_scipy(self, seed):
        x = np.random.default_rng(seed).normal(size=(15, 4))
        d = np.linalg.norm(x[:, None] - x[None], axis=2)
        ours = [m[2] for m in average_linkage(d).merges]
        theirs = linkage(squareform(d, checks=False), "average")[:, 2]
        np.testing.assert_allclose(ours, theirs, atol=1e-12)

    @given(st.integers(0, 2**32 - 1))
    def test_ultrametric(self, seed):
        x = np.random.default_rng(seed).normal(size=(10, 2))
        d = np.linalg.norm(x[:, None] - x[None], axis=2)
        dendro = average_linkage(d)
        heights = [m[2] for m in dendro.merges]
        assert heights == sorted(heights)
        c = dendro.cophenetic()
        assert np.all(c >= 0)
        for i in range(10):
            for j in range(10):
                for k in range(10):
                    assert c[i, j] <= max(c[i, k], c[k, j]) + 1e-12

    def test_cut_and_json(self):
        d = np.array([[0, 1, 9, 9], [1, 0, 9, 9], [9, 9, 0, 2], [9, 9, 2, 0]], dtype=float)
        dendro = average_linkage(d, labels=["a", "b", "c", "d"])
        assert list(dendro.cut(2)) == [0, 0, 1, 1]
        assert list(dendro.cut(4)) == [0, 1, 2, 3]
        back = Dendrogram.from_json(dendro.to_json())
        assert back == dendro
        assert json.loads(dendro.to_json())["linkage"] == "average"
        with pytest.raises(BoundsError):
            dendro.cut(5)

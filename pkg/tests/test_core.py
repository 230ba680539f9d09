import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from uts.core import (
    Metric,
    PointCloud,
    SampleSpec,
    knn,
    load_embeddings,
    normalize_rows,
    pairwise_distances,
    sample,
    save_embeddings,
)
from uts.errors import BoundsError, DegenerateInputError, ParseError, PreconditionError

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False, width=32)


class TestLoad:
    def test_binary_round_trip(self, tmp_path):
        x = np.arange(6, dtype=np.float32).reshape(3, 2) / 7
        save_embeddings(x, tmp_path / "a.utse")
        cloud = load_embeddings(tmp_path / "a.utse")
        assert (cloud.n, cloud.dim) == (3, 2)
        assert cloud.data.astype(np.float32).tobytes() == x.tobytes()

    @given(arrays(np.float32, st.tuples(st.integers(1, 6), st.integers(1, 5)), elements=finite))
    def test_binary_bit_exact(self, x):
        import tempfile
        from pathlib import Path

        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "x.utse"
            save_embeddings(x.astype(np.float64), path)
            back = load_embeddings(path).data.astype("<f4")
            assert back.tobytes() == x.astype("<f4").tobytes()

    def test_header_layout(self, tmp_path):
        save_embeddings(np.ones((2, 3)), tmp_path / "h.utse")
        raw = (tmp_path / "h.utse").read_bytes()
        assert raw[:4] == b"UTSE"
        assert int.from_bytes(raw[4:8], "little") == 1
        assert int.from_bytes(raw[8:16], "little") == 2
        assert int.from_bytes(raw[16:24], "little") == 3
        assert len(raw) == 24 + 2 * 3 * 4

    def test_csv(self, tmp_path):
        p = tmp_path / "x.csv"
        p.write_text("0.0,1.0\n1.0,0.0")
        cloud = load_embeddings(p)
        np.testing.assert_array_equal(cloud.data, [[0, 1], [1, 0]])

    def test_csv_nan_rejected(self, tmp_path):
        p = tmp_path / "x.csv"
        p.write_text("0.0,1.0\nnan,0.0\n")
        with pytest.raises(ParseError, match="line 2"):
            load_embeddings(p)

    def test_csv_ragged(self, tmp_path):
        p = tmp_path / "x.csv"
        p.write_text("0,1\n1,2,3\n")
        with pytest.raises(ParseError, match="line 2"):
            load_embeddings(p)

    def test_binary_nan_names_offset(self, tmp_path):
        x = np.zeros((2, 2))
        x[1, 0] = np.nan
        p = tmp_path / "n.utse"
        save_embeddings(x, p)
        with pytest.raises(ParseError, match="byte 32"):
            load_embeddings(p)

    def test_bad_magic_and_truncation(self, tmp_path):
        p = tmp_path / "b.utse"
        save_embeddings(np.ones((2, 2)), p)
        raw = p.read_bytes()
        p.write_bytes(b"XXXX" + raw[4:])
        with pytest.raises(ParseError, match="magic"):
            load_embeddings(p)
        p.write_bytes(raw[:-4])
        with pytest.raises(ParseError, match="length"):
            load_embeddings(p)
        p.write_bytes(raw[:10])
        with pytest.raises(ParseError, match="truncated"):
            load_embeddings(p)


class TestNormalize:
    def test_examples(self):
        np.testing.assert_allclose(normalize_rows(PointCloud([[3.0, 4.0]])).data, [[0.6, 0.8]])
        np.testing.assert_array_equal(normalize_rows(PointCloud([[1.0, 0.0]])).data, [[1.0, 0.0]])

    def test_zero_row(self):
        with pytest.raises(DegenerateInputError, match="row 1"):
            normalize_rows(PointCloud([[1.0, 0.0], [0.0, 0.0]]))

    @given(arrays(np.float64, st.tuples(st.integers(1, 8), st.integers(1, 6)), elements=st.floats(0.1, 10)))
    def test_unit_norm_and_direction(self, x):
        out = normalize_rows(PointCloud(x)).data
        np.testing.assert_allclose(np.linalg.norm(out, axis=1), 1.0, atol=1e-12)
        np.testing.assert_allclose(out * np.linalg.norm(x, axis=1)[:, None], x, rtol=1e-10)

    def test_nonfinite_cloud_rejected(self):
        with pytest.raises(PreconditionError):
            PointCloud([[np.inf, 0.0]])


class TestSample:
    def test_deterministic(self, rng):
        cloud = PointCloud(rng.normal(size=(10, 3)))
        a = sample(cloud, SampleSpec(5, 7))
        b = sample(cloud, SampleSpec(5, 7))
        np.testing.assert_array_equal(a.data, b.data)
        assert len({tuple(r) for r in a.data}) == 5

    def test_full_and_clamped(self, rng):
        cloud = PointCloud(rng.normal(size=(10, 3)))
        full = sample(cloud, SampleSpec(10, 1))
        assert sorted(map(tuple, full.data)) == sorted(map(tuple, cloud.data))
        small = PointCloud(rng.normal(size=(100, 2)))
        assert sample(small, SampleSpec(1000, 0)).n == 100

    def test_bad_size(self):
        with pytest.raises(PreconditionError):
            SampleSpec(0)


class TestDistances:
    def test_examples(self):
        assert pairwise_distances(np.array([[0.0, 0.0], [3.0, 4.0]])).d[0, 1] == 5.0
        assert pairwise_distances(np.array([[1.0, 0.0], [0.0, 1.0]]), "cosine").d[0, 1] == pytest.approx(1.0)
        assert not pairwise_distances(np.ones((4, 3))).d.any()
        assert not pairwise_distances(np.ones((4, 3)), Metric.COSINE).d.any()

    def test_cosine_matches_definition(self, rng):
        x = rng.normal(size=(20, 5))
        d = pairwise_distances(x, "cosine").d
        u = x / np.linalg.norm(x, axis=1, keepdims=True)
        np.testing.assert_allclose(d, np.clip(1 - u @ u.T, 0, 2), atol=1e-12)

    @given(arrays(np.float64, (12, 4), elements=st.floats(-10, 10)))
    def test_metric_axioms(self, x):
        d = pairwise_distances(x).d
        assert np.all(d >= 0) and np.all(np.diag(d) == 0)
        np.testing.assert_array_equal(d, d.T)

    def test_triangle_inequality(self, rng):
        x = rng.normal(size=(60, 7))
        d = pairwise_distances(x).d
        for _ in range(100):
            i, j, k = rng.integers(0, 60, 3)
            assert d[i, k] <= d[i, j] + d[j, k] + 1e-12


class TestKnn:
    def test_examples(self):
        cloud = PointCloud([[0.0, 1.0], [0.0, 0.9], [1.0, 0.0]])
        assert list(knn(cloud, 0, 1, "cosine")) == [1]
        assert sorted(knn(cloud, 0, 2)) == [1, 2]

    def test_tie_lower_index_first(self):
        cloud = PointCloud([[1.0, 0.0], [0.0, 1.0], [0.0, -1.0], [-1.0, 0.0]])
        assert list(knn(cloud, 0, 2, "euclidean")) == [1, 2]

    def test_bounds(self):
        cloud = PointCloud(np.eye(3))
        with pytest.raises(BoundsError):
            knn(cloud, 0, 3)
        with pytest.raises(BoundsError):
            knn(cloud, 5, 1)

    @given(st.integers(0, 2**32 - 1), st.integers(1, 29), st.sampled_from(["cosine", "euclidean"]))
    def test_matches_sorted_row(self, seed, k, metric):
        x = np.random.default_rng(seed).normal(size=(30, 4))
        cloud = PointCloud(x)
        anchor = seed % 30
        row = pairwise_distances(x, metric).d[anchor]
        order = [j for j in sorted(range(30), key=lambda j: (row[j], j)) if j != anchor]
        assert list(knn(cloud, anchor, k, metric)) == order[:k]

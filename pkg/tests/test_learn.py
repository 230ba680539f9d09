import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import spearmanr

from uts.errors import DegenerateTargetError, GroupingError, SchemaError, UndefinedStatisticError
from uts.learn import (
    Forest,
    ForestParams,
    SupervisedTable,
    Tree,
    balanced_accuracy,
    cross_validate,
    feature_importance,
    fit_forest,
    group_kfold,
    predict,
    regression_scores,
)

SMALL = ForestParams(n_trees=25, seed=4)


def blobs(rng, n=60):
    x = np.vstack([rng.normal(-2, 0.5, size=(n // 2, 2)), rng.normal(2, 0.5, size=(n // 2, 2))])
    y = np.repeat(["neg", "pos"], n // 2)
    return SupervisedTable(x, y, np.arange(n) % 6)


def stump(value) -> Tree:
    tree = Tree()
    tree.add(0, value)
    return tree


class TestForest:
    def test_separable(self, rng):
        table = blobs(rng)
        model = fit_forest(table, SMALL)
        assert np.mean(predict(model, table.features) == table.targets) >= 0.95

    def test_constant_features(self, rng):
        y = np.array(["a"] * 7 + ["b"] * 3)
        model = fit_forest(SupervisedTable(np.ones((10, 3)), y, np.arange(10)), SMALL)
        assert set(predict(model, rng.normal(size=(5, 3)))) == {"a"}
        assert all(v == 0 for v in feature_importance(model).values())

    def test_deterministic(self, rng):
        table = blobs(rng)
        a, b = fit_forest(table, SMALL), fit_forest(table, SMALL)
        assert a.to_json() == b.to_json()

    def test_row_order_invariance(self, rng):
        table = blobs(rng)
        perm = rng.permutation(len(table.targets))
        shuffled = table.subset(perm)
        assert fit_forest(table, SMALL).to_json() == fit_forest(shuffled, SMALL).to_json()

    def test_depth_bound(self, rng):
        x = rng.normal(size=(200, 4))
        y = (np.sin(3 * x[:, 0]) + x[:, 1] ** 2 > 0.5).astype(int)
        for depth in (1, 3, 5):
            model = fit_forest(SupervisedTable(x, y, np.zeros(200)), ForestParams(n_trees=5, max_depth=depth))
            assert max(t.max_depth for t in model.trees) <= depth

    def test_single_class(self):
        with pytest.raises(DegenerateTargetError):
            fit_forest(SupervisedTable(np.eye(5), ["a"] * 5, range(5)))
        with pytest.raises(DegenerateTargetError):
            fit_forest(SupervisedTable(np.eye(5), [1.0] * 5, range(5)), ForestParams(task="regress"))

    def test_json_round_trip(self, rng):
        table = blobs(rng)
        model = fit_forest(table, SMALL)
        back = Forest.from_json(model.to_json())
        np.testing.assert_array_equal(predict(back, table.features), predict(model, table.features))

    def test_width_mismatch(self, rng):
        model = fit_forest(blobs(rng), SMALL)
        with pytest.raises(SchemaError):
            predict(model, np.zeros((2, 3)))


class TestPredictRules:
    def test_single_tree_leaf(self):
        model = Forest([stump(2.5)], ForestParams(task="regress", n_trees=1), n_features=2)
        assert predict(model, np.zeros((3, 2))).tolist() == [2.5] * 3

    def test_agreement(self):
        model = Forest([stump(1), stump(1)], ForestParams(n_trees=2), classes=["a", "b"], n_features=1)
        assert predict(model, [[0.0]]).tolist() == ["b"]

    def test_vote_tie(self):
        model = Forest([stump(1), stump(0)], ForestParams(n_trees=2), classes=["a", "b"], n_features=1)
        assert predict(model, [[0.0]]).tolist() == ["a"]


class TestImportance:
    def test_single_signal(self, rng):
        x = rng.normal(size=(300, 5))
        y = (x[:, 2] > 0).astype(int)
        imp = feature_importance(fit_forest(SupervisedTable(x, y, np.zeros(300)), ForestParams(n_trees=30, max_features=5)))
        assert imp["f2"] > 0.9
        assert sum(imp.values()) == pytest.approx(1.0, abs=1e-9)

    def test_never_split(self, rng):
        x = np.column_stack([rng.normal(size=100), np.zeros(100)])
        imp = feature_importance(fit_forest(SupervisedTable(x, x[:, 0] > 0, np.zeros(100)), SMALL))
        assert imp["f1"] == 0.0


class TestGroupKFold:
    def test_one_group_per_fold(self):
        splits = group_kfold(["a", "a", "b", "c", "c", "c"], 3)
        assert sorted(len(set(np.array(list("aabccc"))[test])) for _, test in splits) == [1, 1, 1]

    def test_eleven_groups(self):
        groups = np.repeat(np.arange(11), 4)
        splits = group_kfold(groups, 3)
        assert [len(set(groups[test])) for _, test in splits] == [4, 4, 3]

    @given(st.lists(st.integers(0, 9), min_size=10, max_size=80), st.integers(2, 4))
    def test_no_leakage(self, groups, folds):
        g = np.array(groups)
        if len(set(groups)) < folds:
            with pytest.raises(GroupingError):
                group_kfold(g, folds)
            return
        splits = group_kfold(g, folds)
        covered = np.concatenate([test for _, test in splits])
        assert sorted(covered) == list(range(len(g)))
        for train, test in splits:
            assert not set(g[train]) & set(g[test])

    def test_deterministic(self):
        g = list("abcdefgabc")
        a, b = group_kfold(g, 3), group_kfold(g, 3)
        assert all((x[1] == y[1]).all() for x, y in zip(a, b))


class TestScores:
    def test_balanced_accuracy(self):
        assert balanced_accuracy(["a", "b"], ["a", "b"]) == 1.0
        truth = ["x"] * 90 + ["y"] * 10
        assert balanced_accuracy(truth, ["x"] * 100) == 0.5
        with pytest.raises(UndefinedStatisticError):
            balanced_accuracy(["a"], ["a"], classes=["a", "b"])

    def test_regression(self, rng):
        t = rng.normal(size=20)
        assert regression_scores(t, t) == (1.0, 1.0)
        assert regression_scores(t, np.exp(t))[1] == pytest.approx(1.0)
        assert regression_scores(t, np.full(20, t.mean()))[0] == pytest.approx(0.0, abs=1e-12)
        with pytest.raises(UndefinedStatisticError):
            regression_scores([1, 1, 1], [1, 2, 3])

    @settings(max_examples=30)
    @given(st.lists(st.integers(0, 5), min_size=4, max_size=30), st.integers(0, 2**32 - 1))
    def test_spearman_with_ties(self, truth, seed):
        if len(set(truth)) < 2:
            return
        pred = np.random.default_rng(seed).integers(0, 4, size=len(truth))
        if len(set(pred)) < 2:
            return
        assert regression_scores(truth, pred)[1] == pytest.approx(spearmanr(truth, pred)[0], abs=1e-12)


class TestCrossValidate:
    def test_clean_audit_and_scores(self, rng):
        table = blobs(rng)
        result = cross_validate(table, SMALL)
        assert result.audit.violations() == []
        assert len(result.folds) == 3
        assert result.summary()["balanced_accuracy"][0] >= 0.9
        assert set(result.predictions) == set(table.row_ids)

    def test_regression_with_pca(self, rng):
        x = rng.normal(size=(90, 6))
        y = x[:, 0] * 3 + 0.1 * rng.normal(size=90)
        table = SupervisedTable(x, y, np.arange(90) % 9)
        result = cross_validate(table, ForestParams(task="regress", n_trees=25), pca_components=3)
        assert result.audit.violations() == []
        assert result.importances == {}
        assert np.isfinite(result.summary()["r2"][0])

    def test_shuffled_labels_near_chance(self, rng):
        table = blobs(rng, 120)
        shuffled = SupervisedTable(table.features, rng.permutation(table.targets), table.groups)
        assert cross_validate(shuffled, SMALL).summary()["balanced_accuracy"][0] < 0.75

    def test_csv(self, rng, tmp_path):
        cross_validate(blobs(rng), SMALL).to_csv(tmp_path / "cv.csv")
        lines = (tmp_path / "cv.csv").read_text().splitlines()
        assert lines[0] == "fold,test_groups,n_test,accuracy,balanced_accuracy"
        assert lines[-2].startswith("mean") and lines[-1].startswith("sd")

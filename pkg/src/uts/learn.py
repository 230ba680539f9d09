"""Random forests of CART trees, grouped cross-validation and scores."""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
from scipy.stats import rankdata

from .errors import (
    DegenerateTargetError,
    GroupingError,
    PreconditionError,
    SchemaError,
    UndefinedStatisticError,
)

MODEL_VERSION = 1
_MIN_GAIN = 1e-12


@dataclass
class SupervisedTable:
    features: np.ndarray
    targets: np.ndarray
    groups: np.ndarray
    row_ids: tuple = ()
    feature_names: tuple = ()

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.targets = np.asarray(self.targets)
        self.groups = np.asarray(self.groups)
        m = len(self.features)
        if self.features.ndim != 2:
            raise SchemaError("features must be a 2-D matrix")
        if len(self.targets) != m or len(self.groups) != m:
            raise SchemaError("features, targets and groups need equal row counts")
        if not np.all(np.isfinite(self.features)):
            raise SchemaError("features must be finite")
        if not self.row_ids:
            self.row_ids = tuple(str(i) for i in range(m))
        self.row_ids = tuple(str(r) for r in self.row_ids)
        if len(set(self.row_ids)) != m:
            raise SchemaError("row ids must be unique")
        if not self.feature_names:
            self.feature_names = tuple(f"f{i}" for i in range(self.features.shape[1]))
        if len(self.feature_names) != self.features.shape[1]:
            raise SchemaError("one name per feature column required")

    def subset(self, rows) -> "SupervisedTable":
        rows = np.asarray(rows, dtype=np.intp)
        return SupervisedTable(
            self.features[rows],
            self.targets[rows],
            self.groups[rows],
            tuple(self.row_ids[i] for i in rows),
            self.feature_names,
        )


@dataclass(frozen=True)
class ForestParams:
    task: str = "classify"
    n_trees: int = 200
    max_depth: int = 5
    max_features: int | None = None  # None means ceil(sqrt(K))
    bootstrap: bool = True
    min_samples_split: int = 2
    seed: int = 0

    def __post_init__(self):
        if self.task not in ("classify", "regress"):
            raise PreconditionError(f"unknown task {self.task!r}")
        if self.n_trees < 1 or self.max_depth < 0:
            raise PreconditionError("n_trees must be >= 1 and max_depth >= 0")


@dataclass
class Tree:
    """Flat CART tree; ``feature == -1`` marks a leaf."""

    feature: list = field(default_factory=list)
    threshold: list = field(default_factory=list)
    left: list = field(default_factory=list)
    right: list = field(default_factory=list)
    value: list = field(default_factory=list)
    depth: list = field(default_factory=list)

    def add(self, depth: int, value) -> int:
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(value)
        self.depth.append(depth)
        return len(self.feature) - 1

    def apply(self, x: np.ndarray) -> np.ndarray:
        node = np.zeros(len(x), dtype=np.intp)
        feature = np.array(self.feature)
        threshold = np.array(self.threshold)
        left = np.array(self.left)
        right = np.array(self.right)
        active = feature[node] >= 0
        while active.any():
            rows = np.flatnonzero(active)
            f = feature[node[rows]]
            go_left = x[rows, f] <= threshold[node[rows]]
            node[rows] = np.where(go_left, left[node[rows]], right[node[rows]])
            active = feature[node] >= 0
        return node

    @property
    def max_depth(self) -> int:
        return max(self.depth)


@dataclass
class Forest:
    trees: list
    params: ForestParams
    classes: list = field(default_factory=list)
    n_features: int = 0
    importances: np.ndarray | None = None
    feature_names: tuple = ()

    def to_json(self) -> str:
        payload = {
            "version": MODEL_VERSION,
            "params": asdict(self.params),
            "classes": [c.item() if hasattr(c, "item") else c for c in self.classes],
            "n_features": self.n_features,
            "feature_names": list(self.feature_names),
            "importances": None if self.importances is None else self.importances.tolist(),
            "trees": [asdict(t) for t in self.trees],
        }
        return json.dumps(payload)

    @classmethod
    def from_json(cls, text: str) -> "Forest":
        obj = json.loads(text)
        if obj.get("version") != MODEL_VERSION:
            raise SchemaError(f"unsupported model version {obj.get('version')!r}")
        imp = obj.get("importances")
        return cls(
            trees=[Tree(**t) for t in obj["trees"]],
            params=ForestParams(**obj["params"]),
            classes=list(obj["classes"]),
            n_features=int(obj["n_features"]),
            importances=None if imp is None else np.asarray(imp),
            feature_names=tuple(obj.get("feature_names", ())),
        )


def _tree_seed(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed & 0xFFFFFFFFFFFFFFFF, index]))


def _gini_curve(y_sorted: np.ndarray, n_classes: int) -> np.ndarray:
    """Size-weighted child impurity for every split position of sorted labels."""
    onehot = np.eye(n_classes)[y_sorted]
    left = np.cumsum(onehot, axis=0)[:-1]
    right = onehot.sum(axis=0) - left
    nl = np.arange(1, len(y_sorted), dtype=np.float64)
    nr = len(y_sorted) - nl
    gl = 1.0 - np.sum(left**2, axis=1) / nl**2
    gr = 1.0 - np.sum(right**2, axis=1) / nr**2
    return nl * gl + nr * gr


def _sse_curve(y_sorted: np.ndarray) -> np.ndarray:
    csum = np.cumsum(y_sorted)[:-1]
    csq = np.cumsum(y_sorted**2)[:-1]
    tot, totsq = y_sorted.sum(), np.sum(y_sorted**2)
    nl = np.arange(1, len(y_sorted), dtype=np.float64)
    nr = len(y_sorted) - nl
    left = csq - csum**2 / nl
    right = (totsq - csq) - (tot - csum) ** 2 / nr
    return left + right


def _impurity(y: np.ndarray, task: str, n_classes: int) -> float:
    """Node impurity times node size (Gini or SSE)."""
    if task == "classify":
        p = np.bincount(y, minlength=n_classes) / len(y)
        return len(y) * (1.0 - float(np.sum(p**2)))
    return float(np.sum((y - y.mean()) ** 2))


def _best_split(x, y, features, task, n_classes):
    parent = _impurity(y, task, n_classes)
    best = None  # (gain, feature, threshold)
    for f in sorted(features):
        order = np.argsort(x[:, f], kind="stable")
        xs = x[order, f]
        distinct = np.flatnonzero(xs[1:] > xs[:-1])
        if len(distinct) == 0:
            continue
        ys = y[order]
        child = _gini_curve(ys, n_classes) if task == "classify" else _sse_curve(ys)
        child = child[distinct]
        pos = int(np.argmin(child))  # first minimum is the lowest threshold
        gain = parent - float(child[pos])
        if gain <= _MIN_GAIN * max(parent, 1.0):
            continue
        threshold = (xs[distinct[pos]] + xs[distinct[pos] + 1]) / 2.0
        # strict improvement only, so ties keep the lower feature
        if best is None or gain > best[0] + 1e-12 * max(abs(best[0]), 1.0):
            best = (gain, f, float(threshold))
    return best, parent


def _leaf_value(y, task, n_classes):
    if task == "classify":
        return int(np.argmax(np.bincount(y, minlength=n_classes)))
    return float(y.mean())


def _grow(x, y, params: ForestParams, n_classes: int, rng: np.random.Generator, importance: np.ndarray) -> Tree:
    tree = Tree()
    k = x.shape[1]
    per_split = params.max_features or math.ceil(math.sqrt(k))
    per_split = min(per_split, k)
    total = len(y)

    def build(rows, depth):
        node = tree.add(depth, _leaf_value(y[rows], params.task, n_classes))
        if depth >= params.max_depth or len(rows) < params.min_samples_split:
            return node
        features = rng.choice(k, size=per_split, replace=False)
        best, _ = _best_split(x[rows], y[rows], features, params.task, n_classes)
        if best is None:
            return node
        gain, f, thr = best
        importance[f] += gain / total
        mask = x[rows, f] <= thr
        tree.feature[node] = int(f)
        tree.threshold[node] = thr
        tree.left[node] = build(rows[mask], depth + 1)
        tree.right[node] = build(rows[~mask], depth + 1)
        return node

    build(np.arange(len(y)), 0)
    return tree


def fit_forest(table: SupervisedTable, params: ForestParams | None = None) -> Forest:
    """Grow a bootstrap forest of depth-limited CART trees.

    Rows are first put into row-id order so that the model does not depend
    on the order of the input table. Tree ``t`` draws its bootstrap sample
    and per-split feature subsets from a generator seeded by
    ``(seed, t)``.
    """
    params = params or ForestParams()
    m = len(table.targets)
    if m < 5:
        raise PreconditionError(f"need at least 5 rows, got {m}")
    canon = np.array(sorted(range(m), key=lambda i: table.row_ids[i]))
    x = table.features[canon]
    raw = table.targets[canon]
    if params.task == "classify":
        classes, y = np.unique(raw, return_inverse=True)
        if len(classes) < 2:
            raise DegenerateTargetError("classification needs at least two classes")
        n_classes = len(classes)
    else:
        y = raw.astype(np.float64)
        if len(np.unique(y)) < 2:
            raise DegenerateTargetError("regression needs at least two distinct targets")
        classes, n_classes = [], 0
    trees = []
    imp_total = np.zeros(x.shape[1])
    for t in range(params.n_trees):
        rng = _tree_seed(params.seed, t)
        rows = rng.integers(0, m, size=m) if params.bootstrap else np.arange(m)
        imp = np.zeros(x.shape[1])
        trees.append(_grow(x[rows], y[rows], params, n_classes, rng, imp))
        if imp.sum() > 0:
            imp_total += imp / imp.sum()
    importances = imp_total / imp_total.sum() if imp_total.sum() > 0 else imp_total
    return Forest(trees, params, list(classes), x.shape[1], importances, tuple(table.feature_names))


def predict(model: Forest, features) -> np.ndarray:
    """Plurality vote (ties to the smallest class) or mean of tree outputs."""
    x = np.asarray(features, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.shape[1] != model.n_features:
        raise SchemaError(f"model expects {model.n_features} features, got {x.shape[1]}")
    leaves = np.array([np.asarray(t.value)[t.apply(x)] for t in model.trees])
    if model.params.task == "regress":
        return leaves.mean(axis=0)
    votes = np.zeros((len(x), len(model.classes)), dtype=np.int64)
    for row in leaves.astype(np.intp):
        votes[np.arange(len(x)), row] += 1
    # classes are sorted, so argmax's first maximum is the smallest class
    return np.array([model.classes[i] for i in np.argmax(votes, axis=1)])


def feature_importance(model: Forest) -> dict:
    names = model.feature_names or tuple(f"f{i}" for i in range(model.n_features))
    return dict(zip(names, model.importances.tolist()))


def group_kfold(groups: Sequence, folds: int = 3) -> list[tuple[np.ndarray, np.ndarray]]:
    """Assign whole groups to folds, largest first, each to the lightest fold.

    Group size ties are broken by group id; fold ties by fold index.
    """
    g = np.asarray(groups)
    ids, counts = np.unique(g, return_counts=True)
    if folds < 2:
        raise GroupingError("need at least 2 folds")
    if folds > len(ids):
        raise GroupingError(f"{folds} folds requested but only {len(ids)} groups")
    order = sorted(range(len(ids)), key=lambda i: (-counts[i], str(ids[i])))
    load = [0] * folds
    members: list[list] = [[] for _ in range(folds)]
    for i in order:
        f = min(range(folds), key=lambda j: (load[j], j))
        load[f] += counts[i]
        members[f].append(ids[i])
    splits = []
    for f in range(folds):
        test = np.isin(g, members[f])
        splits.append((np.flatnonzero(~test), np.flatnonzero(test)))
    return splits


def balanced_accuracy(truth: Sequence, pred: Sequence, classes: Sequence | None = None) -> float:
    t = np.asarray(truth)
    p = np.asarray(pred)
    if len(t) != len(p):
        raise SchemaError("truth and predictions differ in length")
    classes = np.unique(t) if classes is None else np.asarray(classes)
    recalls = []
    for c in classes:
        mask = t == c
        if not mask.any():
            raise UndefinedStatisticError(f"class {c!r} has no true members")
        recalls.append(float(np.mean(p[mask] == c)))
    return float(np.mean(recalls))


def regression_scores(truth: Sequence[float], pred: Sequence[float]) -> tuple[float, float]:
    """R^2 and Spearman's rho; rho is NaN when the predictions are constant."""
    t = np.asarray(truth, dtype=np.float64)
    p = np.asarray(pred, dtype=np.float64)
    if len(t) != len(p) or len(t) < 3:
        raise PreconditionError("need at least 3 paired values")
    ss_tot = float(np.sum((t - t.mean()) ** 2))
    if ss_tot == 0:
        raise UndefinedStatisticError("truth is constant")
    r2 = 1.0 - float(np.sum((t - p) ** 2)) / ss_tot
    rt, rp = rankdata(t), rankdata(p)
    if np.all(rp == rp[0]):
        return r2, float("nan")
    return r2, float(np.corrcoef(rt, rp)[0, 1])


# -- grouped cross-validation with train-only preprocessing -------------------


@dataclass
class LeakageAudit:
    """Rows each fitted statistic saw, checked against the fold's test rows."""

    records: list = field(default_factory=list)  # (fold, statistic, frozenset of row ids)
    test_rows: dict = field(default_factory=dict)  # fold -> frozenset of row ids

    def record(self, fold: int, statistic: str, rows) -> None:
        self.records.append((fold, statistic, frozenset(rows)))

    def violations(self) -> list[tuple[int, str, int]]:
        out = []
        for fold, stat, rows in self.records:
            leaked = rows & self.test_rows.get(fold, frozenset())
            if leaked:
                out.append((fold, stat, len(leaked)))
        return out

    def assert_clean(self) -> None:
        bad = self.violations()
        if bad:
            detail = ", ".join(f"fold {f} {s} ({n} rows)" for f, s, n in bad)
            raise PreconditionError(f"test rows leaked into fitted statistics: {detail}")


@dataclass
class CVResult:
    task: str
    folds: list  # per-fold dicts
    importances: dict
    audit: LeakageAudit
    predictions: dict = field(default_factory=dict)  # row id -> prediction

    def summary(self) -> dict:
        keys = [k for k in self.folds[0] if k not in ("fold", "test_groups", "n_test")]
        out = {}
        for k in keys:
            vals = np.array([f[k] for f in self.folds], dtype=np.float64)
            out[k] = (float(np.nanmean(vals)), float(np.nanstd(vals)))
        return out

    def to_csv(self, path) -> None:
        keys = [k for k in self.folds[0] if k not in ("fold", "test_groups", "n_test")]
        with open(path, "w") as fh:
            fh.write("fold,test_groups,n_test," + ",".join(keys) + "\n")
            for f in self.folds:
                groups = "|".join(str(g) for g in f["test_groups"])
                fh.write(f"{f['fold']},{groups},{f['n_test']}," + ",".join(repr(float(f[k])) for k in keys) + "\n")
            summ = self.summary()
            fh.write("mean,,," + ",".join(repr(float(summ[k][0])) for k in keys) + "\n")
            fh.write("sd,,," + ",".join(repr(float(summ[k][1])) for k in keys) + "\n")


def _zscore(values: np.ndarray, groups: np.ndarray, rows: np.ndarray) -> tuple[np.ndarray, dict]:
    """Per-group z-scores of ``values[rows]`` with parameters from those rows only."""
    out = np.empty(len(rows))
    params = {}
    sub_g = groups[rows]
    for gid in dict.fromkeys(sub_g.tolist()):
        mask = sub_g == gid
        v = values[rows][mask]
        mu, sd = float(v.mean()), float(v.std())
        params[gid] = (mu, sd)
        out[mask] = 0.0 if sd == 0 else (v - mu) / sd
    return out, params


def cross_validate(
    table: SupervisedTable,
    params: ForestParams | None = None,
    folds: int = 3,
    normalize: bool = True,
    pca_components: int | float | None = None,
    zscore_targets: bool = True,
) -> CVResult:
    """Grouped k-fold evaluation where every fitted statistic sees train rows only.

    Features are scaled by their train-fold maximum absolute value and
    optionally projected on a train-fold PCA. Regression targets are
    z-scored within each group; each group's parameters come from that
    group's own rows, so a held-out group never informs training.
    """
    params = params or ForestParams()
    audit = LeakageAudit()
    fold_rows = []
    imp_sum = None
    names = table.feature_names
    predictions = {}
    for f, (train, test) in enumerate(group_kfold(table.groups, folds)):
        train_ids = [table.row_ids[i] for i in train]
        test_ids = [table.row_ids[i] for i in test]
        audit.test_rows[f] = frozenset(test_ids)
        if set(table.groups[train].tolist()) & set(table.groups[test].tolist()):
            raise PreconditionError(f"fold {f}: a group spans train and test")
        xtr, xte = table.features[train], table.features[test]
        if normalize:
            scale = np.max(np.abs(xtr), axis=0)
            audit.record(f, "feature max-abs normalisation", train_ids)
            keep = scale > 0
            xtr, xte = xtr[:, keep] / scale[keep], xte[:, keep] / scale[keep]
            fold_names = tuple(n for n, k in zip(names, keep) if k)
        else:
            keep = np.ones(xtr.shape[1], dtype=bool)
            fold_names = names
        if pca_components is not None:
            from .signature import pca_reduce

            model_pca = pca_reduce(xtr, pca_components, ids=fold_names, row_ids=train_ids)
            audit.record(f, "PCA loadings", model_pca.fitted_on)
            xtr, xte = model_pca.coordinates, model_pca.transform(xte)
            fold_names = tuple(f"pc{i + 1}" for i in range(model_pca.n_components))
        if params.task == "regress" and zscore_targets:
            raw = table.targets.astype(np.float64)
            ytr, _ = _zscore(raw, table.groups, train)
            audit.record(f, "training target z-score parameters", train_ids)
            # held-out targets are expressed in their own group's z-units;
            # this defines the evaluation scale and never reaches the model
            yte, _ = _zscore(raw, table.groups, test)
        else:
            ytr, yte = table.targets[train], table.targets[test]
        tr = SupervisedTable(xtr, ytr, table.groups[train], tuple(train_ids), fold_names)
        model = fit_forest(tr, params)
        pred = predict(model, xte)
        for rid, p in zip(test_ids, pred):
            predictions[rid] = p.item() if hasattr(p, "item") else p
        row = {"fold": f, "test_groups": sorted(set(table.groups[test].tolist()), key=str), "n_test": len(test)}
        if params.task == "classify":
            row["accuracy"] = float(np.mean(pred == yte))
            row["balanced_accuracy"] = balanced_accuracy(yte, pred)
        else:
            r2, rho = regression_scores(yte, pred)
            row["r2"], row["spearman"] = r2, rho
        fold_rows.append(row)
        if pca_components is None:
            full = np.zeros(len(names))
            full[np.flatnonzero(keep)] = model.importances
            imp_sum = full if imp_sum is None else imp_sum + full
    audit.assert_clean()
    importances = {}
    if imp_sum is not None and imp_sum.sum() > 0:
        importances = dict(zip(names, (imp_sum / imp_sum.sum()).tolist()))
    elif imp_sum is not None:
        warnings.warn("no tree made a split; importances are all zero", stacklevel=2)
        importances = dict(zip(names, imp_sum.tolist()))
    return CVResult(params.task, fold_rows, importances, audit, predictions)

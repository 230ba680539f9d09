"""k-means, silhouette scoring and average-linkage hierarchical clustering."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist

from .core import DistanceMatrix, Metric, PointCloud, pairwise_distances
from .errors import BoundsError, PreconditionError, UndefinedStatisticError

DEFAULT_K_SET = (3, 5, 10, 20, 50, 100)
MAX_ITER = 300
SHIFT_TOL = 1e-6


@dataclass(frozen=True)
class ClusterAssignment:
    labels: np.ndarray
    k: int
    inertia: float
    history: tuple[float, ...] = field(default=(), compare=False)

    def sizes(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.k)


def _plusplus(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = len(x)
    chosen = [int(rng.integers(n))]
    closest = cdist(x[chosen], x, "sqeuclidean")[0]
    for _ in range(1, k):
        total = closest.sum()
        if total > 0:
            nxt = int(rng.choice(n, p=closest / total))
        else:
            # every point coincides with a centre; pick an unused index
            free = np.setdiff1d(np.arange(n), chosen)
            nxt = int(rng.choice(free))
        chosen.append(nxt)
        closest = np.minimum(closest, cdist(x[nxt : nxt + 1], x, "sqeuclidean")[0])
    return x[chosen].copy()


def _assign(x: np.ndarray, centres: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    sq = cdist(x, centres, "sqeuclidean")
    labels = np.argmin(sq, axis=1)
    return labels, sq[np.arange(len(x)), labels]


def _repair(labels: np.ndarray, sq: np.ndarray, k: int) -> np.ndarray:
    """Move the farthest points of multi-member clusters into empty ones."""
    labels = labels.copy()
    sq = sq.copy()
    for empty in np.flatnonzero(np.bincount(labels, minlength=k) == 0):
        counts = np.bincount(labels, minlength=k)
        donors = counts[labels] > 1
        # farthest point, lowest index on ties
        cand = np.flatnonzero(donors)
        pick = cand[np.argmax(sq[cand])]
        labels[pick] = empty
        sq[pick] = 0.0
    return labels


def _centroids(x: np.ndarray, labels: np.ndarray, k: int) -> np.ndarray:
    centres = np.zeros((k, x.shape[1]))
    np.add.at(centres, labels, x)
    return centres / np.bincount(labels, minlength=k)[:, None]


def kmeans(cloud: PointCloud, k: int, seed: int = 0) -> ClusterAssignment:
    """Lloyd's algorithm from a k-means++ start.

    Stops after ``MAX_ITER`` rounds or once no centroid moves more than
    ``SHIFT_TOL``. Empty clusters are refilled with the point farthest from
    its current centroid.
    """
    x = cloud.data
    n = len(x)
    if not 2 <= k <= n:
        raise BoundsError(f"k={k} must lie in [2, n={n}]")
    rng = np.random.default_rng(seed & 0xFFFFFFFFFFFFFFFF)
    centres = _plusplus(x, k, rng)
    history = []
    for _ in range(MAX_ITER):
        labels, sq = _assign(x, centres)
        labels = _repair(labels, sq, k)
        new = _centroids(x, labels, k)
        history.append(float(np.sum((x - new[labels]) ** 2)))
        shift = float(np.max(np.linalg.norm(new - centres, axis=1)))
        centres = new
        if shift < SHIFT_TOL:
            break
    labels, sq = _assign(x, centres)
    labels = _repair(labels, sq, k)
    centres = _centroids(x, labels, k)
    inertia = float(np.sum((x - centres[labels]) ** 2))
    return ClusterAssignment(labels, k, inertia, tuple(history))


def silhouette(
    cloud: PointCloud,
    labels,
    metric: Metric | str = Metric.EUCLIDEAN,
    dm: DistanceMatrix | None = None,
) -> float:
    """Mean silhouette coefficient; members of singleton clusters score 0.

    ``dm`` may carry precomputed distances for ``cloud`` under ``metric``.
    """
    labels = np.asarray(labels.labels if isinstance(labels, ClusterAssignment) else labels)
    if len(labels) != cloud.n:
        raise PreconditionError("one label per point required")
    if cloud.n < 2:
        raise UndefinedStatisticError("silhouette needs at least two points")
    ids, labels = np.unique(labels, return_inverse=True)
    if len(ids) < 2:
        raise UndefinedStatisticError("silhouette needs at least two clusters")
    d = (dm if dm is not None else pairwise_distances(cloud, metric)).d
    counts = np.bincount(labels)
    # per-point sum of distances to every cluster
    sums = np.zeros((cloud.n, len(ids)))
    for c in range(len(ids)):
        sums[:, c] = d[:, labels == c].sum(axis=1)
    own = counts[labels]
    a = sums[np.arange(cloud.n), labels] / np.maximum(own - 1, 1)
    means = sums / counts
    means[np.arange(cloud.n), labels] = np.inf
    b = means.min(axis=1)
    denom = np.maximum(a, b)
    s = np.where((own > 1) & (denom > 0), (b - a) / np.where(denom > 0, denom, 1.0), 0.0)
    return float(s.mean())


def best_silhouette(
    cloud: PointCloud,
    k_set=DEFAULT_K_SET,
    seed: int = 0,
    metric: Metric | str | tuple = Metric.EUCLIDEAN,
):
    """Best (k, score) over ``k_set``; ``k > n`` is skipped, ties keep the smaller k.

    Passing a tuple of metrics scores one set of k-means runs under each
    metric and returns a dict keyed by metric.
    """
    metrics = [Metric.parse(m) for m in metric] if isinstance(metric, (tuple, list)) else [Metric.parse(metric)]
    ks = [k for k in sorted(set(int(k) for k in k_set)) if 2 <= k <= cloud.n]
    if not ks:
        raise BoundsError(f"no k in {sorted(k_set)} fits a cloud of {cloud.n} points")
    runs = [kmeans(cloud, k, seed) for k in ks]
    out = {}
    for m in metrics:
        dm = pairwise_distances(cloud, m)
        best = None
        for k, run in zip(ks, runs):
            score = silhouette(cloud, run, m, dm)
            if best is None or score > best[1]:
                best = (k, score)
        out[m] = best
    if isinstance(metric, (tuple, list)):
        return out
    return out[metrics[0]]


@dataclass(frozen=True)
class Dendrogram:
    """Merge list ``(left, right, height, new_id)``; leaves are ``0..n-1``."""

    merges: tuple[tuple[int, int, float, int], ...]
    n_leaves: int
    labels: tuple[str, ...] | None = None

    def to_json(self) -> str:
        payload = {
            "linkage": "average",
            "n_leaves": self.n_leaves,
            "labels": list(self.labels) if self.labels is not None else None,
            "merges": [
                {"left": a, "right": b, "height": h, "id": c} for a, b, h, c in self.merges
            ],
        }
        return json.dumps(payload, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "Dendrogram":
        obj = json.loads(text)
        merges = tuple((m["left"], m["right"], float(m["height"]), m["id"]) for m in obj["merges"])
        labels = tuple(obj["labels"]) if obj.get("labels") is not None else None
        return cls(merges, int(obj["n_leaves"]), labels)

    def members(self) -> dict[int, list[int]]:
        groups = {i: [i] for i in range(self.n_leaves)}
        for a, b, _, c in self.merges:
            groups[c] = sorted(groups[a] + groups[b])
        return groups

    def cut(self, k: int) -> np.ndarray:
        """Flat labels after undoing the last ``k - 1`` merges."""
        if not 1 <= k <= self.n_leaves:
            raise BoundsError(f"cannot cut {self.n_leaves} leaves into {k} clusters")
        groups = {i: [i] for i in range(self.n_leaves)}
        for a, b, _, c in self.merges[: self.n_leaves - k]:
            groups[c] = groups.pop(a) + groups.pop(b)
        labels = np.empty(self.n_leaves, dtype=np.intp)
        for lab, leaves in enumerate(sorted(groups.values(), key=min)):
            labels[leaves] = lab
        return labels

    def cophenetic(self) -> np.ndarray:
        out = np.zeros((self.n_leaves, self.n_leaves))
        groups = {i: [i] for i in range(self.n_leaves)}
        for a, b, h, c in self.merges:
            left, right = groups.pop(a), groups.pop(b)
            out[np.ix_(left, right)] = h
            out[np.ix_(right, left)] = h
            groups[c] = left + right
        return out


def average_linkage(distances, labels=None, tie_tol: float = 1e-12) -> Dendrogram:
    """UPGMA over a symmetric zero-diagonal matrix.

    Cluster distances are recomputed as exact means over the original leaf
    block. Values within ``tie_tol`` (relative) of the minimum count as
    tied; the pair with the smallest ids then merges first.
    """
    d = np.asarray(distances, dtype=np.float64)
    if d.ndim != 2 or d.shape[0] != d.shape[1]:
        raise PreconditionError("distance matrix must be square")
    if not np.allclose(d, d.T, rtol=0, atol=1e-12):
        raise PreconditionError("distance matrix must be symmetric")
    if np.any(np.diag(d) != 0) or np.any(d < 0) or not np.all(np.isfinite(d)):
        raise PreconditionError("distance matrix needs a zero diagonal and finite non-negative entries")
    n = len(d)
    clusters = {i: [i] for i in range(n)}
    between = {(a, b): float(d[a, b]) for a in range(n) for b in range(a + 1, n)}
    merges = []
    last = -np.inf
    for new_id in range(n, 2 * n - 1):
        low = min(between.values())
        bound = low + tie_tol * max(abs(low), 1.0)
        a, b = min(pair for pair, v in between.items() if v <= bound)
        h = max(between[(a, b)], last)
        last = h
        merges.append((a, b, h, new_id))
        members = clusters.pop(a) + clusters.pop(b)
        between = {pair: v for pair, v in between.items() if a not in pair and b not in pair}
        for c, leaves in clusters.items():
            between[(c, new_id)] = float(d[np.ix_(leaves, members)].mean())
        clusters[new_id] = members
    return Dendrogram(tuple(merges), n, tuple(labels) if labels is not None else None)

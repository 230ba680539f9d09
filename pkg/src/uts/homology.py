"""Vietoris-Rips persistent homology and the descriptors derived from it.

H0 comes from union-find over the sorted edge list. H1 comes from reducing
the triangle boundary matrix, restricted to the rows of cycle-creating
edges (edges that merge components can never be pivots). Triangles are
enumerated on the fly in filtration order, keyed by their longest edge, so
they are never stored. Reduction stops as soon as every cycle-creating edge
has been paired. H2 reduces the tetrahedron boundary first and clears the
triangle columns it pairs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numba import njit

from .core import DistanceMatrix, Metric, PointCloud, SampleSpec, pairwise_distances, sample_indices
from .errors import CapabilityError, DegenerateInputError, DivergenceError, ParseError, PreconditionError, UndefinedStatisticError

MAX_SUPPORTED_DIM = 2


@dataclass(frozen=True)
class PersistenceDiagram:
    """Rows of ``(dim, birth, death)``; ``death`` is ``inf`` for essential classes."""

    pairs: np.ndarray
    max_dim: int = 1

    def __post_init__(self):
        pairs = np.asarray(self.pairs, dtype=np.float64).reshape(-1, 3)
        object.__setattr__(self, "pairs", pairs)

    def __len__(self):
        return len(self.pairs)

    def in_dim(self, dim: int) -> np.ndarray:
        return self.pairs[self.pairs[:, 0] == dim, 1:]

    def finite(self, dim: int) -> np.ndarray:
        pts = self.in_dim(dim)
        return pts[np.isfinite(pts[:, 1])]

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("dim,birth,death\n")
            for dim, birth, death in self.pairs:
                fh.write(f"{int(dim)},{float(birth)!r},{'inf' if math.isinf(death) else repr(float(death))}\n")

    @classmethod
    def from_csv(cls, path) -> "PersistenceDiagram":
        rows = []
        for lineno, line in enumerate(Path(path).read_text().splitlines()[1:], start=2):
            if line.strip():
                try:
                    dim, birth, death = line.split(",")
                    rows.append((int(dim), float(birth), float(death)))
                except ValueError:
                    raise ParseError(f"{path}: malformed diagram row on line {lineno}") from None
        max_dim = int(max((r[0] for r in rows), default=0))
        return cls(np.array(rows).reshape(-1, 3), max_dim=max_dim)


@dataclass(frozen=True)
class BettiProfile:
    tau: float
    betti: tuple


# -- kernels -----------------------------------------------------------------


@njit(cache=True)
def _find(parent, x):
    root = x
    while parent[root] != root:
        root = parent[root]
    while parent[x] != root:
        nxt = parent[x]
        parent[x] = root
        x = nxt
    return root


@njit(cache=True)
def _union_find(edge_u, edge_v, n):
    parent = np.arange(n)
    rank = np.zeros(n, np.int64)
    negative = np.zeros(edge_u.shape[0], np.bool_)
    merges = 0
    for p in range(edge_u.shape[0]):
        ru = _find(parent, edge_u[p])
        rv = _find(parent, edge_v[p])
        if ru == rv:
            continue
        if rank[ru] < rank[rv]:
            ru, rv = rv, ru
        parent[rv] = ru
        if rank[ru] == rank[rv]:
            rank[ru] += 1
        negative[p] = True
        merges += 1
        if merges == n - 1:
            break
    return negative


@njit(cache=True)
def _symdiff(a, la, b, out):
    i = 0
    j = 0
    k = 0
    lb = b.shape[0]
    while i < la and j < lb:
        if a[i] < b[j]:
            out[k] = a[i]
            i += 1
            k += 1
        elif a[i] > b[j]:
            out[k] = b[j]
            j += 1
            k += 1
        else:
            i += 1
            j += 1
    while i < la:
        out[k] = a[i]
        i += 1
        k += 1
    while j < lb:
        out[k] = b[j]
        j += 1
        k += 1
    return k


@njit(cache=True)
def _reduce_triangles(epos, edge_u, edge_v, row_of_edge, n_rows, last_pos, cleared, collect_zero):
    """Column-reduce the triangle boundary matrix.

    Returns ``(pivot_rows, death_positions, zero_keys)``. Triangle keys are
    ``p * n + k`` where ``p`` is the longest edge position and ``k`` the
    opposite vertex; that key order is the column order.
    """
    n = epos.shape[0]
    pivot_start = np.full(n_rows, -1, np.int64)
    pivot_len = np.zeros(n_rows, np.int64)
    pool = np.empty(max(16, 4 * n_rows), np.int64)
    pool_size = 0
    out_rows = np.empty(n_rows, np.int64)
    out_death = np.empty(n_rows, np.int64)
    n_pairs = 0
    zero_keys = np.empty(16, np.int64)
    n_zero = 0
    col = np.empty(64, np.int64)
    tmp = np.empty(64, np.int64)
    ci = 0
    n_cleared = cleared.shape[0]
    unpaired = n_rows
    if unpaired == 0 and not collect_zero:
        return out_rows[:0], out_death[:0], zero_keys[:0]
    cands = np.empty(n, np.int64)
    for p in range(last_pos + 1):
        i = edge_u[p]
        j = edge_v[p]
        n_cands = 0
        for k in range(n):
            if epos[i, k] < p and epos[j, k] < p:
                cands[n_cands] = k
                n_cands += 1
        for c in range(n_cands):
            k = cands[c]
            # (p, k) is the youngest facet of its oldest cofacet when some
            # earlier vertex w completes a tetrahedron below p; such
            # apparent triangles always reduce to zero
            apparent = False
            for c2 in range(c):
                if epos[k, cands[c2]] < p:
                    apparent = True
                    break
            if apparent:
                continue
            a = epos[i, k]
            b = epos[j, k]
            key = p * n + k
            if n_cleared > 0:
                while ci < n_cleared and cleared[ci] < key:
                    ci += 1
                if ci < n_cleared and cleared[ci] == key:
                    continue
            length = 0
            for e in (a, b, p):
                r = row_of_edge[e]
                if r >= 0:
                    col[length] = r
                    length += 1
            # sort the (at most three) rows
            for x in range(1, length):
                y = x
                while y > 0 and col[y - 1] > col[y]:
                    col[y - 1], col[y] = col[y], col[y - 1]
                    y -= 1
            while length > 0:
                low = col[length - 1]
                start = pivot_start[low]
                if start < 0:
                    while pool_size + length > pool.shape[0]:
                        grown = np.empty(2 * pool.shape[0], np.int64)
                        grown[:pool_size] = pool[:pool_size]
                        pool = grown
                    pool[pool_size : pool_size + length] = col[:length]
                    pivot_start[low] = pool_size
                    pivot_len[low] = length
                    pool_size += length
                    out_rows[n_pairs] = low
                    out_death[n_pairs] = p
                    n_pairs += 1
                    unpaired -= 1
                    break
                other = pool[start : start + pivot_len[low]]
                need = length + other.shape[0]
                if need > tmp.shape[0]:
                    tmp = np.empty(2 * need, np.int64)
                    grown = np.empty(2 * need, np.int64)
                    grown[:length] = col[:length]
                    col = grown
                length = _symdiff(col, length, other, tmp)
                col, tmp = tmp, col
            if length == 0 and collect_zero:
                if n_zero == zero_keys.shape[0]:
                    grown = np.empty(2 * n_zero, np.int64)
                    grown[:n_zero] = zero_keys[:n_zero]
                    zero_keys = grown
                zero_keys[n_zero] = key
                n_zero += 1
            if unpaired == 0 and not collect_zero:
                return out_rows[:n_pairs], out_death[:n_pairs], zero_keys[:0]
    return out_rows[:n_pairs], out_death[:n_pairs], zero_keys[:n_zero]


# -- filtration helpers --------------------------------------------------------


def _sorted_edges(d: np.ndarray, threshold: float):
    n = d.shape[0]
    ii, jj = np.triu_indices(n, k=1)
    lengths = d[ii, jj]
    keep = lengths <= threshold
    ii, jj, lengths = ii[keep], jj[keep], lengths[keep]
    order = np.lexsort((jj, ii, lengths))
    return ii[order].astype(np.int64), jj[order].astype(np.int64), lengths[order]


def enclosing_radius(d: np.ndarray) -> float:
    return float(np.min(np.max(d, axis=1)))


def _tetrahedra_pass(epos, edge_u, edge_v, lengths, last_pos):
    """Reduce the tetrahedron boundary; returns H2 pairs and cleared triangle keys."""
    n = epos.shape[0]

    def tri_key(x, y, z):
        exy, exz, eyz = epos[x, y], epos[x, z], epos[y, z]
        top = max(exy, exz, eyz)
        if top == exy:
            return top * n + z
        if top == exz:
            return top * n + y
        return top * n + x

    pivots = {}
    pairs = []
    for p in range(last_pos + 1):
        i, j = int(edge_u[p]), int(edge_v[p])
        cands = [k for k in range(n) if epos[i, k] < p and epos[j, k] < p]
        for a_idx, k in enumerate(cands):
            for l in cands[a_idx + 1 :]:
                if epos[k, l] >= p:
                    continue
                col = {tri_key(i, j, k), tri_key(i, j, l), tri_key(i, k, l), tri_key(j, k, l)}
                while col:
                    low = max(col)
                    if low not in pivots:
                        pivots[low] = col
                        pairs.append((lengths[low // n], lengths[p]))
                        break
                    col = col ^ pivots[low]
    return pairs, np.array(sorted(pivots), dtype=np.int64)


def rips_persistence(dm: DistanceMatrix | np.ndarray, max_dim: int = 1, threshold: float | None = None) -> PersistenceDiagram:
    """Persistence diagram of the Vietoris-Rips filtration of ``dm``.

    Parameters
    ----------
    dm : DistanceMatrix or ndarray
        Symmetric matrix of pairwise distances.
    max_dim : int
        Highest homology dimension (0, 1 or 2).
    threshold : float, optional
        Largest edge length admitted; defaults to the diameter.

    Pairs with zero persistence are dropped.
    """
    d = dm.d if isinstance(dm, DistanceMatrix) else np.asarray(dm, dtype=np.float64)
    if max_dim < 0:
        raise PreconditionError("max_dim must be >= 0")
    if max_dim > MAX_SUPPORTED_DIM:
        raise CapabilityError(f"homology above dimension {MAX_SUPPORTED_DIM} is not supported")
    n = d.shape[0]
    if n < 2:
        return PersistenceDiagram(np.array([[0.0, 0.0, np.inf]]), max_dim)
    diameter = float(d.max())
    if threshold is None:
        threshold = diameter
    if threshold <= 0 and diameter > 0:
        raise PreconditionError("threshold must be positive")

    edge_u, edge_v, lengths = _sorted_edges(d, threshold)
    negative = _union_find(edge_u, edge_v, n)
    deaths = lengths[negative]
    rows = [(0.0, 0.0, float(x)) for x in deaths if x > 0.0]
    rows += [(0.0, 0.0, math.inf)] * (n - int(negative.sum()))

    if max_dim >= 1 and len(lengths):
        # every Rips complex past the enclosing radius is a cone, so no
        # class of dimension >= 1 survives beyond it
        cut = min(threshold, enclosing_radius(d))
        last_pos = int(np.searchsorted(lengths, cut, side="right")) - 1
        n_edges = len(lengths)
        epos = np.full((n, n), n_edges, dtype=np.int64)
        epos[edge_u, edge_v] = np.arange(n_edges)
        epos[edge_v, edge_u] = np.arange(n_edges)

        positive = ~negative
        positive[last_pos + 1 :] = False
        row_of_edge = np.full(n_edges + 1, -1, dtype=np.int64)
        edge_of_row = np.flatnonzero(positive)
        row_of_edge[edge_of_row] = np.arange(len(edge_of_row))

        cleared = np.empty(0, dtype=np.int64)
        if max_dim >= 2:
            h2_pairs, cleared = _tetrahedra_pass(epos, edge_u, edge_v, lengths, last_pos)
            rows += [(2.0, float(b), float(dd)) for b, dd in h2_pairs if dd > b]

        piv_rows, death_pos, zero_keys = _reduce_triangles(
            epos, edge_u, edge_v, row_of_edge, len(edge_of_row), last_pos, cleared, max_dim >= 2
        )
        births = lengths[edge_of_row[piv_rows]]
        h1_deaths = lengths[death_pos]
        rows += [(1.0, float(b), float(dd)) for b, dd in zip(births, h1_deaths) if dd > b]
        unpaired = np.ones(len(edge_of_row), dtype=bool)
        unpaired[piv_rows] = False
        rows += [(1.0, float(b), math.inf) for b in lengths[edge_of_row[unpaired]]]
        if max_dim >= 2:
            essential = np.setdiff1d(zero_keys, cleared)
            rows += [(2.0, float(lengths[key // n]), math.inf) for key in essential]

    pairs = np.array(rows, dtype=np.float64).reshape(-1, 3)
    order = np.lexsort((pairs[:, 2], pairs[:, 1], pairs[:, 0]))
    return PersistenceDiagram(pairs[order], max_dim)


# -- descriptors -------------------------------------------------------------


def ph_stats(diag: PersistenceDiagram, dim: int) -> tuple[float, float]:
    """Mean lifetime and mean midlife over the finite pairs of one dimension."""
    pts = diag.finite(dim)
    if len(pts) == 0:
        raise UndefinedStatisticError(f"no finite H{dim} pairs")
    return float(np.mean(pts[:, 1] - pts[:, 0])), float(np.mean((pts[:, 0] + pts[:, 1]) / 2.0))


def persistence_entropy(diag: PersistenceDiagram, dim: int) -> float:
    pts = diag.finite(dim)
    life = pts[:, 1] - pts[:, 0]
    life = life[life > 0]
    if len(life) == 0:
        raise UndefinedStatisticError(f"no finite H{dim} pairs with positive lifetime")
    p = life / life.sum()
    return float(-np.sum(p * np.log(p)))


def total_persistence(diag: PersistenceDiagram, dim: int, alpha: float = 1.0) -> float:
    pts = diag.finite(dim)
    return float(np.sum((pts[:, 1] - pts[:, 0]) ** alpha))


@njit(cache=True)
def _mst_lengths(d):
    """Edge lengths of a minimum spanning tree (dense Prim, O(n^2))."""
    n = d.shape[0]
    best = np.full(n, np.inf)
    done = np.zeros(n, dtype=np.bool_)
    out = np.empty(n - 1)
    cur = 0
    done[0] = True
    for step in range(n - 1):
        nxt = -1
        val = np.inf
        for v in range(n):
            if not done[v]:
                if d[cur, v] < best[v]:
                    best[v] = d[cur, v]
                if best[v] < val:
                    val = best[v]
                    nxt = v
        out[step] = val
        done[nxt] = True
        cur = nxt
    return out


def h0_lifetimes(dm: DistanceMatrix | np.ndarray) -> np.ndarray:
    """Finite H0 lifetimes without building the diagram.

    Every finite H0 pair is born at 0 and dies at a minimum-spanning-tree
    edge, so the multiset of lifetimes equals the positive MST edge lengths.
    """
    d = dm.d if isinstance(dm, DistanceMatrix) else np.asarray(dm, dtype=np.float64)
    if len(d) < 2:
        return np.empty(0)
    lengths = _mst_lengths(np.ascontiguousarray(d))
    return np.sort(lengths[lengths > 0])


def default_ph_sizes(n: int, count: int = 8) -> list[int]:
    lo = 64 if n >= 128 else max(8, n // 4)
    return sorted({int(round(s)) for s in np.geomspace(lo, n, count)})


def ph_dimension(
    cloud: PointCloud,
    metric: Metric | str = Metric.EUCLIDEAN,
    alpha: float = 1.0,
    sizes: list[int] | None = None,
    trials: int = 5,
    seed: int = 0,
    dim: int = 0,
) -> float:
    """PH dimension from the growth of alpha-weighted total persistence.

    For every subset size the alpha-weighted sum of H``dim`` lifetimes is
    averaged over ``trials`` random subsets; the slope ``m`` of log-sum
    against log-size gives ``alpha / (1 - m)``.
    """
    if alpha <= 0:
        raise PreconditionError("alpha must be positive")
    if sizes is None:
        sizes = default_ph_sizes(cloud.n)
    sizes = [int(s) for s in sizes]
    if len(sizes) < 4 or sorted(set(sizes)) != sizes:
        raise PreconditionError("need at least 4 strictly ascending sizes")
    if sizes[-1] > cloud.n or sizes[0] < 2:
        raise PreconditionError(f"sizes must lie in [2, {cloud.n}]")
    means = []
    for j, size in enumerate(sizes):
        totals = []
        for t in range(trials):
            idx = sample_indices(cloud.n, SampleSpec(size, _mix_seed(seed, j, t)))
            dm = pairwise_distances(cloud.data[idx], metric)
            if dim == 0:
                totals.append(float(np.sum(h0_lifetimes(dm) ** alpha)))
            else:
                totals.append(total_persistence(rips_persistence(dm, max_dim=dim), dim, alpha))
        means.append(float(np.mean(totals)))
    means = np.array(means)
    if np.any(means <= 0):
        raise DegenerateInputError("total persistence vanishes; the cloud has no metric spread")
    slope = float(np.polyfit(np.log(sizes), np.log(means), 1)[0])
    if slope >= 1:
        raise DivergenceError(f"persistence growth slope {slope:.4f} >= 1", slope=slope)
    return alpha / (1.0 - slope)


def _mix_seed(seed: int, *parts: int) -> int:
    ss = np.random.SeedSequence([seed & 0xFFFFFFFFFFFFFFFF, *parts])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def betti_profile(diag: PersistenceDiagram, tau: float) -> BettiProfile:
    betti = []
    for dim in range(diag.max_dim + 1):
        pts = diag.in_dim(dim)
        betti.append(int(np.sum((pts[:, 0] <= tau) & (tau < pts[:, 1]))))
    return BettiProfile(float(tau), tuple(betti))


def euler_characteristic(diag: PersistenceDiagram, tau: float) -> int:
    if tau < 0:
        raise PreconditionError("tau must be >= 0")
    betti = betti_profile(diag, tau).betti
    return int(sum((-1) ** i * b for i, b in enumerate(betti)))


def median_distance(dm: DistanceMatrix) -> float:
    n = dm.n
    if n < 2:
        return 0.0
    return float(np.median(dm.d[np.triu_indices(n, k=1)]))

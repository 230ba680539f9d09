"""Dense retrieval, TREC-style evaluation, retrievability and Gini bias."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .core import PointCloud
from .errors import BoundsError, GroupingError, ParseError, PreconditionError, SchemaError, UndefinedStatisticError

DEFAULT_CUTOFF = 100
DEFAULT_EVAL_CUTOFFS = (5, 20, 100)


@dataclass(frozen=True)
class RankedRun:
    """Per-query ranked lists of ``(doc_id, score)``."""

    results: dict  # qid -> list of (docid, score)
    cutoff: int
    tag: str = "uts"

    def __post_init__(self):
        for qid, hits in self.results.items():
            docs = [d for d, _ in hits]
            if len(set(docs)) != len(docs):
                raise SchemaError(f"query {qid}: duplicate document ids in ranked list")
            scores = [s for _, s in hits]
            if any(b > a for a, b in zip(scores, scores[1:])):
                raise SchemaError(f"query {qid}: scores must be non-increasing")
            if len(hits) > self.cutoff:
                raise SchemaError(f"query {qid}: {len(hits)} results exceed cutoff {self.cutoff}")

    @property
    def query_ids(self) -> list[str]:
        return list(self.results)

    def to_trec(self, path) -> None:
        with open(path, "w") as fh:
            for qid, hits in self.results.items():
                for rank, (doc, score) in enumerate(hits, start=1):
                    fh.write(f"{qid} Q0 {doc} {rank} {float(score)!r} {self.tag}\n")

    @classmethod
    def from_trec(cls, path, cutoff: int | None = None) -> "RankedRun":
        """Read a TREC run; lines are re-sorted by rank within each query."""
        rows: dict[str, list[tuple[int, str, float]]] = {}
        tag = "uts"
        with open(path) as fh:
            for lineno, line in enumerate(fh, start=1):
                parts = line.split()
                if not parts:
                    continue
                if len(parts) != 6:
                    raise ParseError(f"{path}: line {lineno} has {len(parts)} fields, expected 6")
                qid, _, doc, rank, score, tag = parts
                try:
                    rows.setdefault(qid, []).append((int(rank), doc, float(score)))
                except ValueError:
                    raise ParseError(f"{path}: bad rank or score on line {lineno}") from None
        results = {q: [(d, s) for _, d, s in sorted(r)] for q, r in rows.items()}
        longest = max((len(r) for r in results.values()), default=0)
        return cls(results, cutoff if cutoff is not None else longest, tag)


def read_qrels(path) -> dict:
    """TREC qrels ``qid 0 docid grade`` into ``{qid: {docid: grade}}``."""
    qrels: dict[str, dict[str, int]] = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 4:
                raise ParseError(f"{path}: line {lineno} has {len(parts)} fields, expected 4")
            qid, _, doc, grade = parts
            try:
                g = int(grade)
            except ValueError:
                raise ParseError(f"{path}: non-integer grade on line {lineno}") from None
            if g < 0:
                raise ParseError(f"{path}: negative grade on line {lineno}")
            qrels.setdefault(qid, {})[doc] = g
    return qrels


def write_qrels(path, qrels: Mapping[str, Mapping[str, int]]) -> None:
    with open(path, "w") as fh:
        for qid, docs in qrels.items():
            for doc, grade in docs.items():
                fh.write(f"{qid} 0 {doc} {int(grade)}\n")


def dense_retrieve(
    queries: PointCloud,
    docs: PointCloud,
    c: int = DEFAULT_CUTOFF,
    query_ids: Sequence[str] | None = None,
    doc_ids: Sequence[str] | None = None,
    chunk: int = 256,
) -> RankedRun:
    """Exact top-``c`` documents per query by inner product.

    Inputs must be unit-normalised, so the inner product is the cosine
    similarity. Equal scores rank the lower document index first.
    """
    if not queries.is_unit_normalized() or not docs.is_unit_normalized():
        raise PreconditionError("queries and documents must be unit-normalised")
    if queries.dim != docs.dim:
        raise PreconditionError(f"dimension mismatch: queries {queries.dim}, documents {docs.dim}")
    if not 1 <= c <= docs.n:
        raise BoundsError(f"cutoff c={c} must lie in [1, {docs.n}]")
    qids = list(query_ids) if query_ids is not None else [str(i) for i in range(queries.n)]
    dids = list(doc_ids) if doc_ids is not None else [str(i) for i in range(docs.n)]
    results = {}
    for start in range(0, queries.n, chunk):
        scores = queries.data[start : start + chunk] @ docs.data.T
        # stable sort on negated scores keeps index order within ties
        order = np.argsort(-scores, axis=1, kind="stable")[:, :c]
        for row, idx in enumerate(order):
            results[qids[start + row]] = [(dids[j], float(scores[row, j])) for j in idx]
    return RankedRun(results, c)


@dataclass(frozen=True)
class RetrievabilityTable:
    counts: dict  # docid -> r(d), in corpus order
    n_queries: int
    cutoff: int

    def array(self) -> np.ndarray:
        return np.array(list(self.counts.values()), dtype=np.float64)

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("docid,retrievability\n")
            for doc, r in self.counts.items():
                fh.write(f"{doc},{r}\n")


def retrievability(run: RankedRun, doc_ids: Sequence[str]) -> RetrievabilityTable:
    """``r(d)``: the number of queries whose top-c list contains ``d``."""
    counts = {d: 0 for d in doc_ids}
    for hits in run.results.values():
        for doc, _ in hits[: run.cutoff]:
            if doc not in counts:
                raise SchemaError(f"run references unknown document {doc!r}")
            counts[doc] += 1
    return RetrievabilityTable(counts, len(run.results), run.cutoff)


def gini(table: RetrievabilityTable | Sequence[float]) -> float:
    """Gini coefficient over all documents, zero counts included."""
    r = table.array() if isinstance(table, RetrievabilityTable) else np.asarray(table, dtype=np.float64)
    n = len(r)
    total = r.sum()
    if n == 0 or total <= 0:
        raise UndefinedStatisticError("Gini coefficient needs at least one positive count")
    # sum_ij |r_i - r_j| = 2 sum_i (2i - n - 1) r_(i) over the sorted values
    r = np.sort(r)
    i = np.arange(1, n + 1)
    return float(np.sum((2 * i - n - 1) * r) / (n * total))


def select_extremes(table: RetrievabilityTable, m: int = 100) -> tuple[list[str], list[str]]:
    """Top ``m`` documents by descending ``r`` and bottom ``m`` by ascending ``r``.

    Ties go to the lower corpus index; the bottom set is drawn from the
    documents not already in the top set.
    """
    docs = list(table.counts)
    if m < 1 or 2 * m > len(docs):
        raise BoundsError(f"cannot select 2*{m} extremes from {len(docs)} documents")
    r = table.array()
    idx = np.arange(len(docs))
    top = np.lexsort((idx, -r))[:m]
    rest = np.setdiff1d(idx, top)
    bottom = rest[np.lexsort((rest, r[rest]))][:m]
    return [docs[i] for i in top], [docs[i] for i in bottom]


@dataclass
class EvalReport:
    per_query: dict = field(default_factory=dict)  # qid -> {metric@k: value}
    skipped: list = field(default_factory=list)

    @property
    def mean(self) -> dict:
        if not self.per_query:
            return {}
        keys = next(iter(self.per_query.values())).keys()
        return {k: float(np.mean([row[k] for row in self.per_query.values()])) for k in keys}

    def to_csv(self, path) -> None:
        keys = list(self.mean)
        with open(path, "w") as fh:
            fh.write("qid," + ",".join(keys) + "\n")
            for qid, row in self.per_query.items():
                fh.write(qid + "," + ",".join(repr(float(row[k])) for k in keys) + "\n")
            fh.write("all," + ",".join(repr(float(v)) for v in self.mean.values()) + "\n")


def _query_metrics(ranked: list[str], rel: Mapping[str, int], k: int) -> dict:
    relevant = {d for d, g in rel.items() if g > 0}
    top = ranked[:k]
    hits = [i for i, d in enumerate(top) if d in relevant]
    recall = len(hits) / len(relevant)
    precision_sum = sum((n + 1) / (i + 1) for n, i in enumerate(hits))
    ap = precision_sum / min(k, len(relevant))
    dcg = sum((2 ** rel.get(d, 0) - 1) / math.log2(i + 2) for i, d in enumerate(top))
    ideal = sorted((g for g in rel.values() if g > 0), reverse=True)[:k]
    idcg = sum((2**g - 1) / math.log2(i + 2) for i, g in enumerate(ideal))
    return {f"recall@{k}": recall, f"map@{k}": ap, f"ndcg@{k}": dcg / idcg}


def eval_metrics(run: RankedRun, qrels: Mapping[str, Mapping[str, int]], cutoffs=DEFAULT_EVAL_CUTOFFS) -> EvalReport:
    """Recall, MAP and NDCG at each cutoff, per query and averaged.

    MAP@k divides by ``min(k, R)``; NDCG uses gain ``2^grade - 1`` with a
    ``log2(rank + 1)`` discount. Queries without any relevant document are
    skipped with a warning.
    """
    report = EvalReport()
    for qid, hits in run.results.items():
        rel = qrels.get(qid, {})
        if not any(g > 0 for g in rel.values()):
            report.skipped.append(qid)
            continue
        ranked = [d for d, _ in hits]
        row = {}
        for k in cutoffs:
            row.update(_query_metrics(ranked, rel, int(k)))
        report.per_query[qid] = row
    if report.skipped:
        warnings.warn(f"{len(report.skipped)} queries without relevant documents were skipped", stacklevel=2)
    return report


def znormalize_by_group(values: Sequence[float], groups: Sequence) -> np.ndarray:
    """Per-group z-scores with the population standard deviation."""
    v = np.asarray(values, dtype=np.float64)
    g = np.asarray(groups)
    if len(v) != len(g):
        raise GroupingError("one group id per value required")
    out = np.empty_like(v)
    for gid in dict.fromkeys(g.tolist()):
        mask = g == gid
        if mask.sum() < 2:
            raise GroupingError(f"group {gid!r} has a single value")
        sd = v[mask].std()
        if sd == 0:
            warnings.warn(f"group {gid!r} is constant; z-scores set to zero", stacklevel=2)
            out[mask] = 0.0
        else:
            out[mask] = (v[mask] - v[mask].mean()) / sd
    return out


def group_stats(values: Sequence[float], groups: Sequence) -> dict:
    """``{group: (mean, population sd)}``; the parameters ``znormalize_by_group`` uses."""
    v = np.asarray(values, dtype=np.float64)
    g = np.asarray(groups)
    return {gid: (float(v[g == gid].mean()), float(v[g == gid].std())) for gid in dict.fromkeys(g.tolist())}


def load_ids(path) -> list[str]:
    return [line.strip() for line in Path(path).read_text().splitlines() if line.strip()]

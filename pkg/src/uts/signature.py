"""Global and local signatures, normalisation, PCA reduction and comparison."""

from __future__ import annotations

import hashlib
import json
import math
import warnings
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from . import clustering, dimension, diversity, homology
from .core import Metric, PointCloud, SampleSpec, knn, normalize_rows, pairwise_distances, sample_indices
from .errors import (
    ComponentFailure,
    PairingError,
    PreconditionError,
    SchemaError,
    UTSError,
)

# sample budgets from the descriptor table; desk scale divides them by ten
FULL_BUDGETS = {
    "ph_dimension": 5_000,
    "ph_stats": 5_000,
    "persistence_entropy": 20_000,
    "euler_characteristic": 5_000,
    "twonn_dimension": 50_000,
    "pca_dimension": 50_000,
    "effective_rank": 100_000,
    "magnitude_dimension": 5_000,
    "magnitude_area": 5_000,
    "spread": 10_000,
    "vendi_score": 20_000,
    "mean_pairwise_similarity": 50_000,
    "uniformity": 20_000,
    "isoscore": 500_000,
    "silhouette": 20_000,
}
DESK_BUDGETS = {name: size // 10 for name, size in FULL_BUDGETS.items()}
MIN_BUDGETS = {
    "ph_dimension": 8,
    "ph_stats": 2,
    "persistence_entropy": 2,
    "euler_characteristic": 1,
    "twonn_dimension": 3,
    "pca_dimension": 2,
    "effective_rank": 2,
    "magnitude_dimension": 2,
    "magnitude_area": 2,
    "spread": 1,
    "vendi_score": 1,
    "mean_pairwise_similarity": 1,
    "uniformity": 1,
    "isoscore": 2,
    "silhouette": 3,
}
DESCRIPTORS = tuple(FULL_BUDGETS)
KERNEL_OF_METRIC = {Metric.COSINE: "cosine", Metric.EUCLIDEAN: "exp_euclidean"}
SCHEMA_VERSION = 1


@dataclass(frozen=True)
class DescriptorConfig:
    """Which descriptors to compute and on how many points.

    ``h1_max_points`` caps the sample used for diagrams above H0, whose
    reduction grows roughly cubically; H0 quantities always use the full
    budget.
    """

    budgets: dict = field(default_factory=lambda: dict(DESK_BUDGETS))
    descriptors: tuple[str, ...] = DESCRIPTORS
    metrics: tuple[str, ...] = ("euclidean", "cosine")
    max_dim: int = 1
    h1_max_points: int = 300
    ph_alpha: float = 1.0
    ph_trials: int = 5
    alpha_fo: float = 0.5
    magnitude_grid: int = 32
    uniformity_t: float = 2.0
    k_set: tuple[int, ...] = clustering.DEFAULT_K_SET

    def __post_init__(self):
        unknown = set(self.descriptors) - set(DESCRIPTORS)
        if unknown:
            raise SchemaError(f"unknown descriptors: {sorted(unknown)}")
        budgets = {**DESK_BUDGETS, **self.budgets}
        for name, size in budgets.items():
            if name not in FULL_BUDGETS:
                raise SchemaError(f"budget for unknown descriptor {name!r}")
            if int(size) < MIN_BUDGETS[name]:
                raise PreconditionError(f"budget for {name} must be >= {MIN_BUDGETS[name]}, got {size}")
        object.__setattr__(self, "budgets", {k: int(budgets[k]) for k in DESCRIPTORS})
        object.__setattr__(self, "descriptors", tuple(d for d in DESCRIPTORS if d in self.descriptors))
        object.__setattr__(self, "metrics", tuple(Metric.parse(m).value for m in self.metrics))
        object.__setattr__(self, "k_set", tuple(int(k) for k in self.k_set))
        if not self.metrics:
            raise PreconditionError("at least one metric variant is required")
        if self.max_dim not in (0, 1, 2):
            raise PreconditionError("max_dim must be 0, 1 or 2")

    @classmethod
    def full_scale(cls, **kw) -> "DescriptorConfig":
        return cls(budgets=dict(FULL_BUDGETS), **kw)

    @classmethod
    def from_mapping(cls, mapping: dict, desk_scale: bool = True) -> "DescriptorConfig":
        kw = dict(mapping)
        base = dict(DESK_BUDGETS if desk_scale else FULL_BUDGETS)
        base.update(kw.pop("budgets", {}))
        for key in ("descriptors", "metrics", "k_set"):
            if key in kw:
                kw[key] = tuple(kw[key])
        known = {f for f in cls.__dataclass_fields__}
        extra = set(kw) - known
        if extra:
            raise SchemaError(f"unknown descriptor config keys: {sorted(extra)}")
        return cls(budgets=base, **kw)

    def to_dict(self) -> dict:
        out = asdict(self)
        for key in ("descriptors", "metrics", "k_set"):
            out[key] = list(out[key])
        return out

    def config_hash(self) -> str:
        blob = json.dumps({"schema": SCHEMA_VERSION, **self.to_dict()}, sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def without_sampling(self, n: int) -> "DescriptorConfig":
        return replace(self, budgets={k: max(v, n) for k, v in self.budgets.items()})

    def component_ids(self) -> list[str]:
        ids = []
        for name in self.descriptors:
            ids.extend(_component_names(name, self))
        return ids


def _component_names(name: str, cfg: DescriptorConfig) -> list[str]:
    per_metric = lambda base: [f"{base}:{m}" for m in cfg.metrics]  # noqa: E731
    dims = range(cfg.max_dim + 1)
    if name == "ph_stats":
        return [
            cid
            for d in dims
            for base in (f"ph_mean_lifetime_h{d}", f"ph_mean_midlife_h{d}")
            for cid in per_metric(base)
        ]
    if name == "persistence_entropy":
        return [cid for d in dims for cid in per_metric(f"persistence_entropy_h{d}")]
    if name in ("pca_dimension", "effective_rank", "vendi_score", "uniformity", "isoscore"):
        return [name]
    return per_metric(name)


@dataclass
class SignatureVector:
    """Ordered descriptor values with provenance."""

    components: dict
    source: dict = field(default_factory=lambda: {"model": "", "dataset": ""})
    seed: int = 0
    config_hash: str = ""
    realized_sizes: dict = field(default_factory=dict)
    labels: dict = field(default_factory=dict)
    anchor: int | None = None
    diagnostics: dict = field(default_factory=dict)

    @property
    def ids(self) -> tuple[str, ...]:
        return tuple(self.components)

    def values(self, ids: Sequence[str] | None = None) -> np.ndarray:
        if ids is None:
            return np.array(list(self.components.values()), dtype=np.float64)
        missing = [i for i in ids if i not in self.components]
        if missing:
            raise SchemaError(f"signature lacks components {missing}")
        return np.array([self.components[i] for i in ids], dtype=np.float64)

    @property
    def key(self) -> str:
        return f"{self.source.get('model', '')}/{self.source.get('dataset', '')}"

    def to_dict(self) -> dict:
        out = {
            "source": dict(self.source),
            "seed": self.seed,
            "config_hash": self.config_hash,
            "realized_sizes": dict(self.realized_sizes),
            "components": {k: float(v) for k, v in self.components.items()},
        }
        if self.labels:
            out["labels"] = dict(self.labels)
        if self.anchor is not None:
            out["anchor"] = int(self.anchor)
        if self.diagnostics:
            out["diagnostics"] = dict(self.diagnostics)
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=False)

    @classmethod
    def from_dict(cls, obj: dict) -> "SignatureVector":
        try:
            comps = obj["components"]
            if not isinstance(comps, dict):
                raise TypeError("components must be an object")
            comps = {str(k): float(v) for k, v in comps.items()}
            source = obj.get("source", {})
            vec = cls(
                components=comps,
                source={"model": str(source.get("model", "")), "dataset": str(source.get("dataset", ""))},
                seed=int(obj.get("seed", 0)),
                config_hash=str(obj.get("config_hash", "")),
                realized_sizes=dict(obj.get("realized_sizes", {})),
                labels=dict(obj.get("labels", {})),
                anchor=obj.get("anchor"),
                diagnostics=dict(obj.get("diagnostics", {})),
            )
        except (KeyError, TypeError, ValueError) as err:
            raise SchemaError(f"malformed signature record: {err}") from None
        if not all(math.isfinite(v) for v in comps.values()):
            raise SchemaError("signature components must be finite")
        return vec


def write_signatures(path, vectors: Iterable[SignatureVector]) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w") as fh:
        for v in vectors:
            fh.write(v.to_json() + "\n")
    tmp.replace(path)


def read_signatures(path) -> list[SignatureVector]:
    """Read a JSON-lines file, or a single JSON object."""
    text = Path(path).read_text()
    stripped = text.strip()
    if not stripped:
        return []
    out = []
    if stripped.startswith("{") and "\n{" not in stripped:
        try:
            return [SignatureVector.from_dict(json.loads(stripped))]
        except json.JSONDecodeError:
            pass
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as err:
            raise SchemaError(f"{path}: invalid JSON on line {lineno}: {err.msg}") from None
        out.append(SignatureVector.from_dict(obj))
    return out


# -- computation -------------------------------------------------------------


def _descriptor_seed(seed: int, index: int) -> int:
    ss = np.random.SeedSequence([seed & 0xFFFFFFFFFFFFFFFF, index])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def _draw(cloud: PointCloud, budget: int, seed: int) -> PointCloud:
    # a budget covering the whole cloud uses it as-is, so neighbourhood
    # signatures coincide with unsampled global ones
    if budget >= cloud.n:
        return cloud
    return cloud.take(sample_indices(cloud.n, SampleSpec(budget, seed)))


def _metrics(cfg: DescriptorConfig) -> list[Metric]:
    return [Metric.parse(m) for m in cfg.metrics]


def _diagram_stats(name: str, sub: PointCloud, cfg: DescriptorConfig, sizes: dict) -> dict:
    """PH statistics or persistence entropy on one sample."""
    out = {}
    high = sub.take(np.arange(min(sub.n, cfg.h1_max_points)))
    if cfg.max_dim >= 1:
        sizes[f"{name}_h1"] = high.n
    for m in _metrics(cfg):
        lifetimes0 = homology.h0_lifetimes(pairwise_distances(sub, m))
        if cfg.max_dim >= 1:
            upper = homology.rips_persistence(pairwise_distances(high, m), max_dim=cfg.max_dim)
        for d in range(cfg.max_dim + 1):
            if d == 0:
                pairs = np.column_stack([np.zeros(len(lifetimes0)), np.zeros(len(lifetimes0)), lifetimes0])
                diag = homology.PersistenceDiagram(pairs.reshape(-1, 3), max_dim=0)
            else:
                diag = upper
            # an empty H1 must not take the H0 components down with it
            if name == "ph_stats":
                try:
                    life, mid = homology.ph_stats(diag, d)
                except UTSError as err:
                    life = mid = err
                out[(f"ph_mean_lifetime_h{d}", m)] = life
                out[(f"ph_mean_midlife_h{d}", m)] = mid
            else:
                try:
                    out[(f"persistence_entropy_h{d}", m)] = homology.persistence_entropy(diag, d)
                except UTSError as err:
                    out[(f"persistence_entropy_h{d}", m)] = err
    return out


def _compute_descriptor(name: str, sub: PointCloud, cfg: DescriptorConfig, seed: int, sizes: dict, diag: dict) -> dict:
    """Return ``{(base, metric_or_None): value}`` for one descriptor."""
    ms = _metrics(cfg)
    if name == "ph_dimension":
        return {
            (name, m): homology.ph_dimension(sub, m, alpha=cfg.ph_alpha, trials=cfg.ph_trials, seed=seed)
            for m in ms
        }
    if name in ("ph_stats", "persistence_entropy"):
        return _diagram_stats(name, sub, cfg, sizes)
    if name == "euler_characteristic":
        sub = sub.take(np.arange(min(sub.n, cfg.h1_max_points)))
        sizes[name] = sub.n
        out = {}
        for m in ms:
            dm = pairwise_distances(sub, m)
            tau = homology.median_distance(dm)
            out[(name, m)] = float(homology.euler_characteristic(homology.rips_persistence(dm, max_dim=cfg.max_dim), tau))
        return out
    if name == "twonn_dimension":
        return {(name, m): dimension.twonn_dimension(sub, m) for m in ms}
    if name == "pca_dimension":
        return {(name, None): float(dimension.pca_fo_dimension(dimension.covariance_spectrum(sub), cfg.alpha_fo))}
    if name == "effective_rank":
        return {(name, None): dimension.effective_rank(dimension.covariance_spectrum(sub))}
    if name in ("magnitude_dimension", "magnitude_area"):
        out = {}
        for m in ms:
            curve = diversity.magnitude_function(pairwise_distances(sub, m), grid_size=cfg.magnitude_grid)
            fn = diversity.magnitude_dimension if name == "magnitude_dimension" else diversity.magnitude_area
            out[(name, m)] = fn(curve)
            diag[f"{name}_t_cut:{m.value}"] = curve.t_cut
        return out
    if name == "spread":
        return {(name, m): diversity.spread(pairwise_distances(sub, m)) for m in ms}
    if name == "vendi_score":
        return {(name, None): diversity.vendi_score(sub)}
    if name == "mean_pairwise_similarity":
        return {(name, m): diversity.mean_pairwise_similarity(sub, KERNEL_OF_METRIC[m]) for m in ms}
    if name == "uniformity":
        return {(name, None): diversity.uniformity(sub, cfg.uniformity_t)}
    if name == "isoscore":
        return {(name, None): dimension.isoscore(sub)}
    if name == "silhouette":
        best = clustering.best_silhouette(sub, cfg.k_set, seed=seed, metric=tuple(ms))
        out = {}
        for m, (k, score) in best.items():
            out[(name, m)] = score
            diag[f"silhouette_k:{m.value}"] = k
        return out
    raise SchemaError(f"no routine for descriptor {name!r}")


def compute_global_signature(
    cloud: PointCloud,
    config: DescriptorConfig | None = None,
    seed: int = 0,
    source: dict | None = None,
) -> SignatureVector:
    """Signature of a whole cloud; each descriptor draws its own sample.

    Samples come from one seeded stream per signature, one independent draw
    per descriptor, shared by that descriptor's metric variants. Any
    failing component rejects the whole vector.
    """
    cfg = config or DescriptorConfig()
    if not cloud.is_unit_normalized():
        raise PreconditionError("signature input rows must be unit-normalised")
    comps: dict = {}
    sizes: dict = {}
    diag: dict = {}
    failures: dict = {}
    for index, name in enumerate(DESCRIPTORS):
        if name not in cfg.descriptors:
            continue
        dseed = _descriptor_seed(seed, index)
        sub = _draw(cloud, cfg.budgets[name], dseed)
        sizes[name] = sub.n
        try:
            values = _compute_descriptor(name, sub, cfg, dseed, sizes, diag)
        except UTSError as err:
            for cid in _component_names(name, cfg):
                failures[cid] = err
            continue
        for (base, m), value in values.items():
            cid = base if m is None else f"{base}:{m.value}"
            if isinstance(value, UTSError):
                failures[cid] = value
            else:
                comps[cid] = float(value)
    if failures:
        raise ComponentFailure(failures)
    ordered = {cid: comps[cid] for cid in cfg.component_ids()}
    bad = [cid for cid, v in ordered.items() if not math.isfinite(v)]
    if bad:
        raise ComponentFailure({cid: ArithmeticError("non-finite value") for cid in bad})
    return SignatureVector(
        components=ordered,
        source=dict(source or {"model": cloud.id or "", "dataset": ""}),
        seed=int(seed),
        config_hash=cfg.config_hash(),
        realized_sizes=sizes,
        diagnostics=diag,
    )


def neighbourhood(cloud: PointCloud, anchor: int, k: int = 100) -> np.ndarray:
    """Cosine k-nearest neighbours of ``anchor`` in ascending row order."""
    return np.sort(knn(cloud, anchor, k, Metric.COSINE))


def compute_local_signature(
    cloud: PointCloud,
    anchor: int,
    k: int = 100,
    config: DescriptorConfig | None = None,
    seed: int = 0,
    source: dict | None = None,
) -> SignatureVector:
    """Signature of the ``k`` cosine neighbours of ``anchor`` (anchor excluded).

    Every descriptor sees the whole neighbourhood; budgets are ignored.
    """
    cfg = config or DescriptorConfig()
    rows = neighbourhood(cloud, anchor, k)
    vec = compute_global_signature(cloud.take(rows), cfg.without_sampling(k), seed, source)
    vec.config_hash = cfg.config_hash()
    vec.anchor = int(anchor)
    return vec


# -- normalisation and reduction ---------------------------------------------


def _common_ids(vectors: Sequence[SignatureVector]) -> tuple[str, ...]:
    if not vectors:
        raise SchemaError("empty signature set")
    ids = vectors[0].ids
    for v in vectors[1:]:
        if v.ids != ids:
            raise SchemaError(f"inconsistent component sets between {vectors[0].key} and {v.key}")
    return ids


def signature_matrix(vectors: Sequence[SignatureVector], ids: Sequence[str] | None = None) -> np.ndarray:
    ids = _common_ids(vectors) if ids is None else tuple(ids)
    return np.vstack([v.values(ids) for v in vectors])


@dataclass(frozen=True)
class NormalizationState:
    """Per-component maximum absolute value over a fitting set."""

    ids: tuple[str, ...]
    maxima: np.ndarray
    fitted_on: tuple[str, ...] = ()

    @property
    def constant(self) -> tuple[str, ...]:
        return tuple(i for i, m in zip(self.ids, self.maxima) if m == 0)

    @property
    def kept(self) -> tuple[str, ...]:
        return tuple(i for i, m in zip(self.ids, self.maxima) if m > 0)

    def to_dict(self) -> dict:
        return {"ids": list(self.ids), "maxima": [float(m) for m in self.maxima], "fitted_on": list(self.fitted_on)}

    @classmethod
    def from_dict(cls, obj: dict) -> "NormalizationState":
        try:
            return cls(tuple(obj["ids"]), np.asarray(obj["maxima"], dtype=np.float64), tuple(obj.get("fitted_on", ())))
        except (KeyError, TypeError, ValueError) as err:
            raise SchemaError(f"malformed normalisation state: {err}") from None


def fit_normalization(vectors: Sequence[SignatureVector], row_ids: Sequence[str] | None = None) -> NormalizationState:
    """Record ``max |s_i|`` per component; zero maxima flag constant components."""
    ids = _common_ids(vectors)
    maxima = np.max(np.abs(signature_matrix(vectors, ids)), axis=0)
    if np.any(maxima == 0):
        flagged = [i for i, m in zip(ids, maxima) if m == 0]
        warnings.warn(f"constant-zero components excluded from normalised output: {flagged}", stacklevel=2)
    fitted = tuple(row_ids) if row_ids is not None else tuple(v.key for v in vectors)
    return NormalizationState(ids, maxima, fitted)


def apply_normalization(vector: SignatureVector, state: NormalizationState) -> SignatureVector:
    """Divide by the stored maxima; unseen data is not clamped to [-1, 1]."""
    if vector.ids != state.ids:
        raise SchemaError(f"signature {vector.key} does not match the normalisation schema")
    keep = state.maxima > 0
    vals = vector.values(state.ids)[keep] / state.maxima[keep]
    comps = dict(zip(np.array(state.ids)[keep].tolist(), vals.tolist()))
    return replace(vector, components=comps)


@dataclass(frozen=True)
class SignaturePCA:
    """Mean-centred PCA of a signature matrix."""

    ids: tuple[str, ...]
    mean: np.ndarray
    loadings: np.ndarray  # L x K
    explained: np.ndarray
    coordinates: np.ndarray  # m x L
    fitted_on: tuple[str, ...] = ()

    @property
    def n_components(self) -> int:
        return self.loadings.shape[0]

    def transform(self, matrix: np.ndarray) -> np.ndarray:
        return (np.asarray(matrix) - self.mean) @ self.loadings.T

    def inverse_transform(self, coords: np.ndarray) -> np.ndarray:
        return np.asarray(coords) @ self.loadings + self.mean


def pca_reduce(
    vectors: Sequence[SignatureVector] | np.ndarray,
    target: float | int = 0.91,
    ids: Sequence[str] | None = None,
    row_ids: Sequence[str] | None = None,
) -> SignaturePCA:
    """Project onto the leading principal axes.

    ``target`` is a variance fraction when it is a float in (0, 1] and an
    explicit component count when it is an int. The count never exceeds the
    numerical rank; each axis is signed so its largest loading is positive.
    """
    if isinstance(vectors, np.ndarray):
        x = np.asarray(vectors, dtype=np.float64)
        ids = tuple(ids) if ids is not None else tuple(f"c{i}" for i in range(x.shape[1]))
        fitted = tuple(row_ids) if row_ids is not None else ()
    else:
        ids = _common_ids(vectors)
        x = signature_matrix(vectors, ids)
        fitted = tuple(row_ids) if row_ids is not None else tuple(v.key for v in vectors)
    if len(x) < 2:
        raise PreconditionError("PCA needs at least two signatures")
    mean = x.mean(axis=0)
    u, s, vt = np.linalg.svd(x - mean, full_matrices=False)
    var = s**2
    total = var.sum()
    if total == 0:
        raise PreconditionError("all signatures are identical")
    rank = int(np.sum(s > s[0] * max(x.shape) * np.finfo(float).eps))
    ratios = var / total
    if isinstance(target, (int, np.integer)) and not isinstance(target, bool):
        count = int(target)
        if count < 1:
            raise PreconditionError("component count must be >= 1")
    else:
        if not 0 < target <= 1:
            raise PreconditionError("variance target must lie in (0, 1]")
        count = int(np.searchsorted(np.cumsum(ratios), target - 1e-12) + 1)
    if count > rank:
        warnings.warn(f"requested {count} components but the signature matrix has rank {rank}", stacklevel=2)
        count = rank
    vt = vt[:count]
    signs = np.sign(vt[np.arange(count), np.argmax(np.abs(vt), axis=1)])
    vt = vt * signs[:, None]
    return SignaturePCA(ids, mean, vt, ratios[:count], (x - mean) @ vt.T, fitted)


# -- comparison --------------------------------------------------------------


def componentwise_distance(a: SignatureVector, b: SignatureVector) -> np.ndarray:
    if a.ids != b.ids:
        raise SchemaError(f"signatures {a.key} and {b.key} have different schemas")
    return np.abs(a.values() - b.values())


def signature_distance(a: SignatureVector, b: SignatureVector) -> float:
    """Manhattan distance between two normalised signatures."""
    return float(componentwise_distance(a, b).sum())


def distance_matrix(vectors: Sequence[SignatureVector]) -> np.ndarray:
    _common_ids(vectors)
    x = signature_matrix(vectors)
    return np.abs(x[:, None, :] - x[None, :, :]).sum(axis=2)


def cka(x: PointCloud | np.ndarray, y: PointCloud | np.ndarray) -> float:
    """Linear centred kernel alignment between paired representations."""
    a = np.asarray(x.data if isinstance(x, PointCloud) else x, dtype=np.float64)
    b = np.asarray(y.data if isinstance(y, PointCloud) else y, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[0] != b.shape[0]:
        raise PairingError(f"CKA needs paired rows, got {a.shape} and {b.shape}")
    a = a - a.mean(axis=0)
    b = b - b.mean(axis=0)
    cross = np.linalg.norm(b.T @ a, "fro") ** 2
    denom = np.linalg.norm(a.T @ a, "fro") * np.linalg.norm(b.T @ b, "fro")
    if denom == 0:
        raise PreconditionError("CKA undefined for a constant representation")
    return float(np.clip(cross / denom, 0.0, 1.0))


@dataclass(frozen=True)
class CorrelationReport:
    names: tuple[str, ...]
    mean: np.ndarray
    variance: np.ndarray
    groups: np.ndarray  # number of groups with a defined correlation

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("row,col,mean_corr,var_corr,groups\n")
            for i, a in enumerate(self.names):
                for j, b in enumerate(self.names):
                    m = "" if np.isnan(self.mean[i, j]) else repr(float(self.mean[i, j]))
                    v = "" if np.isnan(self.variance[i, j]) else repr(float(self.variance[i, j]))
                    fh.write(f"{a},{b},{m},{v},{int(self.groups[i, j])}\n")

    def matrix_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("," + ",".join(self.names) + "\n")
            for i, a in enumerate(self.names):
                cells = ["" if np.isnan(v) else repr(float(v)) for v in self.mean[i]]
                fh.write(a + "," + ",".join(cells) + "\n")


def correlation_report(
    vectors: Sequence[SignatureVector],
    extras: dict | None = None,
    group_of: Callable[[SignatureVector], str] | None = None,
) -> CorrelationReport:
    """Pearson correlations between components, pooled over groups.

    Vectors are grouped by dataset (or ``group_of``). ``extras`` maps a
    source model name to additional per-source properties that join the
    component columns. Correlations involving a constant column are
    missing for that group. Rows and columns are ordered by average
    linkage on ``1 - |mean correlation|``.
    """
    ids = _common_ids(vectors)
    group_of = group_of or (lambda v: v.source.get("dataset", ""))
    extra_names: list[str] = []
    if extras:
        extra_names = sorted({k for props in extras.values() for k in props})
    names = tuple(ids) + tuple(extra_names)
    groups: dict[str, list[SignatureVector]] = {}
    for v in vectors:
        groups.setdefault(group_of(v), []).append(v)
    per_group = []
    for gid, members in groups.items():
        if len(members) < 3:
            raise PreconditionError(f"group {gid!r} has {len(members)} signatures; need at least 3")
        cols = signature_matrix(members, ids)
        if extra_names:
            props = []
            for v in members:
                row = extras.get(v.source.get("model", ""), {})
                props.append([float(row.get(k, np.nan)) for k in extra_names])
            cols = np.hstack([cols, np.array(props)])
        with np.errstate(invalid="ignore", divide="ignore"):
            centred = cols - cols.mean(axis=0)
            norms = np.sqrt((centred**2).sum(axis=0))
            corr = (centred.T @ centred) / np.outer(norms, norms)
        bad = (norms == 0) | np.isnan(norms)
        corr[bad, :] = np.nan
        corr[:, bad] = np.nan
        per_group.append(np.clip(corr, -1.0, 1.0))
    stack = np.array(per_group)
    counts = np.sum(~np.isnan(stack), axis=0)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        mean = np.nanmean(stack, axis=0)
        var = np.nanvar(stack, axis=0)
    dist = 1.0 - np.abs(np.nan_to_num(mean, nan=0.0))
    np.fill_diagonal(dist, 0.0)
    dist = (dist + dist.T) / 2
    order = _leaf_order(clustering.average_linkage(dist)) if len(names) > 1 else [0]
    idx = np.ix_(order, order)
    return CorrelationReport(tuple(names[i] for i in order), mean[idx], var[idx], counts[idx])


def _leaf_order(dendro: clustering.Dendrogram) -> list[int]:
    children = {c: (a, b) for a, b, _, c in dendro.merges}

    def walk(node):
        if node < dendro.n_leaves:
            return [node]
        a, b = children[node]
        return walk(a) + walk(b)

    return walk(2 * dendro.n_leaves - 2)


def ensure_unit(cloud: PointCloud) -> PointCloud:
    return cloud if cloud.is_unit_normalized() else normalize_rows(cloud)

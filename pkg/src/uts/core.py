"""Point clouds, metrics, sampling and exact nearest-neighbour search."""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.spatial.distance import cdist, pdist, squareform

from .errors import BoundsError, DegenerateInputError, ParseError, PreconditionError

MAGIC = b"UTSE"
VERSION = 1
_HEADER = struct.Struct("<4sIQQ")


class Metric(str, enum.Enum):
    EUCLIDEAN = "euclidean"
    COSINE = "cosine"

    @classmethod
    def parse(cls, value: "Metric | str") -> "Metric":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise PreconditionError(f"unknown metric {value!r}") from None


@dataclass(frozen=True)
class PointCloud:
    """An ``n x D`` matrix of embeddings with an optional source label."""

    data: np.ndarray
    id: str | None = None

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim == 1:
            data = data[None, :]
        if data.ndim != 2 or data.shape[0] < 1 or data.shape[1] < 1:
            raise PreconditionError(f"point cloud must be a non-empty 2-D matrix, got shape {data.shape}")
        if not np.all(np.isfinite(data)):
            row = int(np.argwhere(~np.isfinite(data))[0, 0])
            raise PreconditionError(f"point cloud contains a non-finite value in row {row}")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def dim(self) -> int:
        return self.data.shape[1]

    def __len__(self):
        return self.n

    def take(self, rows) -> "PointCloud":
        return PointCloud(self.data[np.asarray(rows, dtype=np.intp)], id=self.id)

    def is_unit_normalized(self, atol: float = 1e-6) -> bool:
        return bool(np.all(np.abs(np.linalg.norm(self.data, axis=1) - 1.0) <= atol))


@dataclass(frozen=True)
class DistanceMatrix:
    d: np.ndarray
    metric: Metric = Metric.EUCLIDEAN

    @property
    def n(self) -> int:
        return self.d.shape[0]

    def scaled(self, t: float) -> "DistanceMatrix":
        return DistanceMatrix(self.d * t, self.metric)


@dataclass(frozen=True)
class SampleSpec:
    size: int
    seed: int = 0

    def __post_init__(self):
        if self.size < 1:
            raise PreconditionError("sample size must be >= 1")


# -- I/O ---------------------------------------------------------------------


def save_embeddings(cloud: PointCloud | np.ndarray, path, format: str = "binary") -> None:
    data = cloud.data if isinstance(cloud, PointCloud) else np.asarray(cloud, dtype=np.float64)
    path = Path(path)
    if format == "binary":
        n, dim = data.shape
        with open(path, "wb") as fh:
            fh.write(_HEADER.pack(MAGIC, VERSION, n, dim))
            fh.write(np.ascontiguousarray(data, dtype="<f4").tobytes())
    elif format == "csv":
        np.savetxt(path, data, delimiter=",", fmt="%.17g")
    else:
        raise PreconditionError(f"unknown embedding format {format!r}")


def load_embeddings(path, format: str | None = None) -> PointCloud:
    """Read a ``UTSE`` binary file or a header-less CSV file.

    The format is inferred from the suffix when not given (``.csv`` means
    CSV, everything else binary).
    """
    path = Path(path)
    if format is None:
        format = "csv" if path.suffix.lower() == ".csv" else "binary"
    if format == "binary":
        return _load_binary(path)
    if format == "csv":
        return _load_csv(path)
    raise PreconditionError(f"unknown embedding format {format!r}")


def _load_binary(path: Path) -> PointCloud:
    raw = path.read_bytes()
    if len(raw) < _HEADER.size:
        raise ParseError(f"{path}: truncated header at byte {len(raw)}")
    magic, version, n, dim = _HEADER.unpack_from(raw, 0)
    if magic != MAGIC:
        raise ParseError(f"{path}: bad magic {magic!r} at byte 0")
    if version != VERSION:
        raise ParseError(f"{path}: unsupported version {version} at byte 4")
    if n < 1 or dim < 1:
        raise ParseError(f"{path}: empty shape n={n}, D={dim} at byte 8")
    expected = _HEADER.size + 4 * n * dim
    if len(raw) != expected:
        raise ParseError(f"{path}: payload length mismatch, expected {expected} bytes, got {len(raw)}")
    data = np.frombuffer(raw, dtype="<f4", offset=_HEADER.size).reshape(n, dim)
    bad = np.argwhere(~np.isfinite(data))
    if len(bad):
        i, j = (int(v) for v in bad[0])
        offset = _HEADER.size + 4 * (i * dim + j)
        raise ParseError(f"{path}: non-finite value at byte {offset} (row {i}, column {j})")
    return PointCloud(data.astype(np.float64), id=path.stem)


def _load_csv(path: Path) -> PointCloud:
    rows = []
    width = None
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                values = [float(tok) for tok in line.split(",")]
            except ValueError:
                raise ParseError(f"{path}: unparseable value on line {lineno}") from None
            if width is None:
                width = len(values)
            elif len(values) != width:
                raise ParseError(f"{path}: line {lineno} has {len(values)} values, expected {width}")
            if not all(np.isfinite(values)):
                raise ParseError(f"{path}: non-finite value on line {lineno}")
            rows.append(values)
    if not rows:
        raise ParseError(f"{path}: no rows")
    return PointCloud(np.array(rows), id=path.stem)


# -- operations --------------------------------------------------------------


def normalize_rows(cloud: PointCloud) -> PointCloud:
    norms = np.linalg.norm(cloud.data, axis=1)
    zero = np.flatnonzero(norms == 0)
    if len(zero):
        raise DegenerateInputError(f"row {int(zero[0])} has zero norm")
    return PointCloud(cloud.data / norms[:, None], id=cloud.id)


def sample_indices(n: int, spec: SampleSpec) -> np.ndarray:
    rng = np.random.default_rng(spec.seed & 0xFFFFFFFFFFFFFFFF)
    return rng.permutation(n)[: min(spec.size, n)]


def sample(cloud: PointCloud, spec: SampleSpec) -> PointCloud:
    """Draw ``min(size, n)`` distinct rows without replacement."""
    return cloud.take(sample_indices(cloud.n, spec))


def _unit_rows(data: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(data, axis=1)
    zero = np.flatnonzero(norms == 0)
    if len(zero):
        raise DegenerateInputError(f"cosine distance undefined for zero-norm row {int(zero[0])}")
    return data / norms[:, None]


def pairwise_distances(cloud: PointCloud | np.ndarray, metric: Metric | str = Metric.EUCLIDEAN) -> DistanceMatrix:
    metric = Metric.parse(metric)
    data = cloud.data if isinstance(cloud, PointCloud) else np.asarray(cloud, dtype=np.float64)
    if data.shape[0] == 1:
        return DistanceMatrix(np.zeros((1, 1)), metric)
    if metric is Metric.EUCLIDEAN:
        d = squareform(pdist(data, "euclidean"))
    else:
        # 1 - cos(x, y) == |u - v|^2 / 2 for unit u, v; exact zero on duplicates
        d = squareform(pdist(_unit_rows(data), "sqeuclidean")) / 2.0
        np.clip(d, 0.0, 2.0, out=d)
    return DistanceMatrix(d, metric)


def distance_row(cloud: PointCloud, anchor: int, metric: Metric | str = Metric.EUCLIDEAN) -> np.ndarray:
    metric = Metric.parse(metric)
    data = cloud.data
    if metric is Metric.EUCLIDEAN:
        return cdist(data[anchor : anchor + 1], data, "euclidean")[0]
    unit = _unit_rows(data)
    return np.clip(cdist(unit[anchor : anchor + 1], unit, "sqeuclidean")[0] / 2.0, 0.0, 2.0)


def knn(cloud: PointCloud, anchor: int, k: int, metric: Metric | str = Metric.COSINE) -> np.ndarray:
    """Exact ``k`` nearest neighbours of ``anchor``, ties broken by lower index."""
    n = cloud.n
    if not 0 <= anchor < n:
        raise BoundsError(f"anchor {anchor} out of range for n={n}")
    if not 1 <= k <= n - 1:
        raise BoundsError(f"k={k} must lie in [1, n-1] for n={n}")
    row = distance_row(cloud, anchor, metric)
    order = np.lexsort((np.arange(n), row))
    order = order[order != anchor]
    return order[:k]

"""Intrinsic dimension and isotropy descriptors."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from .core import Metric, PointCloud
from .errors import DegenerateInputError, PreconditionError


@dataclass(frozen=True)
class SpectrumSummary:
    """Descending, non-negative covariance eigenvalues."""

    eigenvalues: np.ndarray

    @property
    def total(self) -> float:
        return float(self.eigenvalues.sum())

    @property
    def proportions(self) -> np.ndarray:
        return self.eigenvalues / self.total


def covariance_spectrum(cloud: PointCloud) -> SpectrumSummary:
    """Eigenvalues of the sample covariance (divisor ``n - 1``).

    Uses the ``D x D`` covariance when ``D <= n`` and the ``n x n`` Gram
    matrix of the centred data otherwise; both share their non-zero
    spectrum.
    """
    x = cloud.data
    n, dim = x.shape
    if n < 2:
        raise DegenerateInputError("covariance needs at least two points")
    xc = x - x.mean(axis=0)
    if dim <= n:
        vals = np.linalg.eigvalsh(xc.T @ xc / (n - 1))
    else:
        vals = np.linalg.eigvalsh(xc @ xc.T / (n - 1))
        vals = np.concatenate([vals, np.zeros(dim - n)])
    vals = np.sort(vals)[::-1]
    return SpectrumSummary(np.clip(vals, 0.0, None))


def _two_nearest(points: np.ndarray, chunk: int = 512) -> np.ndarray:
    n = len(points)
    out = np.empty((n, 2))
    for start in range(0, n, chunk):
        block = cdist(points[start : start + chunk], points, "sqeuclidean")
        rows = np.arange(block.shape[0])
        block[rows, start + rows] = np.inf
        out[start : start + chunk] = np.partition(block, 1, axis=1)[:, :2]
    return out


def twonn_dimension(cloud: PointCloud, metric: Metric | str = Metric.EUCLIDEAN) -> float:
    """TwoNN estimate from the ratio of second to first neighbour distances.

    Fits ``-log(1 - F(mu)) = d log(mu)`` through the origin, dropping the
    largest ratio where the empirical CDF reaches one.
    """
    metric = Metric.parse(metric)
    x = cloud.data
    if metric is Metric.COSINE:
        norms = np.linalg.norm(x, axis=1)
        if np.any(norms == 0):
            raise DegenerateInputError("cosine distance undefined for zero-norm rows")
        x = x / norms[:, None]
    x = np.unique(x, axis=0)
    if len(x) < 3:
        raise DegenerateInputError("TwoNN needs at least 3 distinct points")
    sq = _two_nearest(x)
    # both metrics are monotone in the squared Euclidean distance of the
    # (possibly normalised) rows; cosine distance is half of it
    if metric is Metric.EUCLIDEAN:
        d1, d2 = np.sqrt(sq[:, 0]), np.sqrt(sq[:, 1])
    else:
        d1, d2 = sq[:, 0] / 2.0, sq[:, 1] / 2.0
    mu = np.sort(d2 / d1)
    count = len(mu)
    cdf = np.arange(1, count + 1) / count
    xs = np.log(mu[:-1])
    ys = -np.log(1.0 - cdf[:-1])
    denom = float(xs @ xs)
    if denom == 0:
        raise DegenerateInputError("all neighbour ratios equal one")
    return float(xs @ ys / denom)


def pca_fo_dimension(spectrum: SpectrumSummary, alpha_fo: float = 0.5) -> int:
    if not 0 < alpha_fo < 1:
        raise PreconditionError("alpha_fo must lie in (0, 1)")
    lam = spectrum.eigenvalues
    if lam.size == 0 or lam.max() <= 0:
        raise DegenerateInputError("spectrum has no positive eigenvalue")
    return int(np.sum(lam >= alpha_fo * lam.max()))


def effective_rank(spectrum: SpectrumSummary) -> float:
    if spectrum.total <= 0:
        raise DegenerateInputError("zero total variance")
    p = spectrum.proportions
    p = p[p > 0]
    return float(np.exp(-np.sum(p * np.log(p))))


def isoscore(cloud: PointCloud) -> float:
    """Isotropy of the cloud in ``[0, 1]``; 1 means variance is spread evenly.

    After rotating onto the principal axes the covariance diagonal equals
    the covariance spectrum, which is rescaled to norm ``sqrt(D)``. Its
    distance to the all-ones vector gives the isotropy defect, which is
    mapped to the fraction of dimensions used.
    """
    dim = cloud.dim
    spectrum = covariance_spectrum(cloud)
    diag = spectrum.eigenvalues
    norm = np.linalg.norm(diag)
    if norm == 0:
        raise DegenerateInputError("zero covariance")
    if dim == 1:
        return 1.0
    root = np.sqrt(dim)
    diag = root * diag / norm
    defect = np.linalg.norm(diag - 1.0) / np.sqrt(2.0 * (dim - root))
    used = dim - defect**2 * (dim - root)
    score = (used**2 - dim) / (dim * (dim - 1))
    return float(np.clip(score, 0.0, 1.0))

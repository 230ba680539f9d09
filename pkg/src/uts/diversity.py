"""Magnitude, kernel and density descriptors."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg
from scipy.spatial.distance import cdist

from ._fpenv import flush_subnormals
from .core import DistanceMatrix, PointCloud
from .errors import ConditioningError, EstimationError, PreconditionError

CONVERGENCE_FRACTION = 0.95
RESIDUAL_TOL = 1e-8


@dataclass(frozen=True)
class MagnitudeCurve:
    t_grid: np.ndarray
    values: np.ndarray
    t_cut: float

    def __post_init__(self):
        t = np.asarray(self.t_grid, dtype=np.float64)
        v = np.asarray(self.values, dtype=np.float64)
        if t.shape != v.shape or t.ndim != 1:
            raise PreconditionError("grid and values must be 1-D arrays of equal length")
        if np.any(np.diff(t) <= 0):
            raise PreconditionError("magnitude grid must be strictly ascending")
        object.__setattr__(self, "t_grid", t)
        object.__setattr__(self, "values", v)

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("t,magnitude\n")
            for t, v in zip(self.t_grid, self.values):
                fh.write(f"{float(t)!r},{float(v)!r}\n")


def _closest_pair(d: np.ndarray) -> tuple[int, int]:
    masked = d + np.diag(np.full(len(d), np.inf))
    i, j = np.unravel_index(np.argmin(masked), masked.shape)
    return (int(min(i, j)), int(max(i, j)))


def magnitude(dm: DistanceMatrix | np.ndarray, t: float = 1.0) -> float:
    """Sum of the weights ``w`` solving ``exp(-t d) w = 1``."""
    d = dm.d if isinstance(dm, DistanceMatrix) else np.asarray(dm, dtype=np.float64)
    if t <= 0:
        raise PreconditionError("scale t must be positive")
    n = len(d)
    if n == 1:
        return 1.0
    i, j = _closest_pair(d)
    if d[i, j] == 0:
        raise ConditioningError(f"similarity matrix is singular: points {i} and {j} coincide")
    ones = np.ones(n)
    with flush_subnormals():
        zeta = np.exp(-t * d)
        try:
            w = linalg.cho_solve(linalg.cho_factor(zeta, check_finite=False), ones, check_finite=False)
        except linalg.LinAlgError:
            try:
                w = linalg.lu_solve(linalg.lu_factor(zeta, check_finite=False), ones, check_finite=False)
            except (linalg.LinAlgError, ValueError):
                raise ConditioningError(f"similarity matrix is singular near points {i} and {j}") from None
        residual = np.max(np.abs(zeta @ w - ones)) / (np.max(np.abs(w)) * n + 1.0)
    # normwise backward error; the kernel is positive definite but badly
    # conditioned at small scales, so an absolute residual is too strict
    if not np.isfinite(residual) or residual > RESIDUAL_TOL:
        raise ConditioningError(
            f"magnitude solve residual {residual:.3g} at t={t:.4g}; closest pair is ({i}, {j})"
        )
    return float(w.sum())


def convergence_scale(dm: DistanceMatrix | np.ndarray, fraction: float = CONVERGENCE_FRACTION, rtol: float = 1e-3) -> float:
    """Smallest ``t`` with ``Mag(tX) >= fraction * n``.

    The scale is bracketed by repeated eightfold steps from ``t = 1`` and
    then bisected geometrically to relative width ``rtol``.
    """
    if not isinstance(dm, DistanceMatrix):
        dm = DistanceMatrix(np.asarray(dm, dtype=np.float64))
    n = dm.n
    if n == 1:
        return 1.0
    target = fraction * n
    lo, hi = 1.0, 1.0
    if magnitude(dm, 1.0) >= target:
        while magnitude(dm, lo) >= target:
            hi, lo = lo, lo / 8.0
    else:
        while magnitude(dm, hi) < target:
            lo, hi = hi, hi * 8.0
    while hi / lo - 1.0 > rtol:
        mid = np.sqrt(lo * hi)
        if magnitude(dm, mid) >= target:
            hi = mid
        else:
            lo = mid
    return float(hi)


def magnitude_function(dm: DistanceMatrix | np.ndarray, grid_size: int = 32, span: float = 1000.0) -> MagnitudeCurve:
    """Magnitude on a log-spaced grid ending at the convergence scale."""
    if not isinstance(dm, DistanceMatrix):
        dm = DistanceMatrix(np.asarray(dm, dtype=np.float64))
    t_cut = convergence_scale(dm)
    grid = np.geomspace(t_cut / span, t_cut, grid_size)
    values = np.array([magnitude(dm, t) for t in grid])
    return MagnitudeCurve(grid, values, t_cut)


def magnitude_dimension(curve: MagnitudeCurve, window: int = 5) -> float:
    """Steepest growth rate of log magnitude against log scale.

    A least-squares slope is fitted on every run of ``window`` consecutive
    grid points and the largest one is returned. Finite samples saturate at
    ``n`` for large scales, so the steepest stretch is the best available
    proxy for the asymptotic rate.
    """
    if len(curve.t_grid) < 8:
        raise EstimationError("magnitude dimension needs at least 8 grid points")
    if window < 4 or window > len(curve.t_grid):
        raise EstimationError("fitting window must hold between 4 and len(grid) points")
    log_t = np.log(curve.t_grid)
    log_m = np.log(curve.values)
    slopes = [
        np.polyfit(log_t[i : i + window], log_m[i : i + window], 1)[0]
        for i in range(len(log_t) - window + 1)
    ]
    return float(max(slopes))


def magnitude_area(curve: MagnitudeCurve) -> float:
    return float(np.trapezoid(curve.values, curve.t_grid))


def spread(dm: DistanceMatrix | np.ndarray) -> float:
    d = dm.d if isinstance(dm, DistanceMatrix) else np.asarray(dm, dtype=np.float64)
    return float(np.sum(1.0 / np.exp(-d).sum(axis=1)))


def _require_unit(cloud: PointCloud, what: str) -> None:
    if not cloud.is_unit_normalized():
        raise PreconditionError(f"{what} requires unit-normalised rows")


def vendi_score(cloud: PointCloud) -> float:
    """Exponentiated entropy of the eigenvalues of ``K / n`` for the cosine Gram ``K``."""
    _require_unit(cloud, "vendi score")
    x = cloud.data
    n, dim = x.shape
    # K / n = X X^T / n shares its non-zero spectrum with X^T X / n
    small = x.T @ x if dim < n else x @ x.T
    lam = np.linalg.eigvalsh(small / n)
    lam = lam[lam > 0]
    return float(np.exp(-np.sum(lam * np.log(lam))))


def _kernel_mean(x: np.ndarray, fn, chunk: int = 1024) -> float:
    total = 0.0
    for start in range(0, len(x), chunk):
        total += float(fn(cdist(x[start : start + chunk], x, "sqeuclidean")).sum())
    return total / len(x) ** 2


def mean_pairwise_similarity(cloud: PointCloud, kernel: str = "cosine") -> float:
    """Average kernel value over all ordered pairs, diagonal included."""
    x = cloud.data
    if kernel == "cosine":
        _require_unit(cloud, "cosine similarity")
        s = x.sum(axis=0)
        return float(s @ s) / len(x) ** 2
    if kernel in ("exp_euclidean", "euclidean"):
        return _kernel_mean(x, lambda sq: np.exp(-np.sqrt(sq)))
    raise PreconditionError(f"unknown kernel {kernel!r}")


def uniformity(cloud: PointCloud, t: float = 2.0) -> float:
    """Log of the mean Gaussian potential ``exp(-t |x - y|^2)`` over ordered pairs."""
    if t <= 0:
        raise PreconditionError("t must be positive")
    _require_unit(cloud, "uniformity")
    return float(np.log(_kernel_mean(cloud.data, lambda sq: np.exp(-t * sq))))

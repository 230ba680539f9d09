"""Synthetic point clouds and retrieval corpora with known structure."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import PointCloud


def _rng(seed) -> np.random.Generator:
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def _unit(x: np.ndarray) -> np.ndarray:
    return x / np.linalg.norm(x, axis=1, keepdims=True)


def random_rotation(dim: int, seed=0) -> np.ndarray:
    q, r = np.linalg.qr(_rng(seed).normal(size=(dim, dim)))
    return q * np.sign(np.diag(r))


def segment(n: int, seed=0, dim: int = 2) -> np.ndarray:
    x = np.zeros((n, dim))
    x[:, 0] = _rng(seed).random(n)
    return x


def square(n: int, seed=0) -> np.ndarray:
    return _rng(seed).random((n, 2))


def sphere_shell(n: int, dim: int, seed=0) -> np.ndarray:
    return _unit(_rng(seed).normal(size=(n, dim)))


def anisotropic_gaussian(n: int, dim: int, decay: float = 0.5, seed=0) -> np.ndarray:
    """Centred Gaussian with axis scales ``decay**i``, randomly rotated."""
    rng = _rng(seed)
    scales = decay ** np.arange(dim)
    return (rng.normal(size=(n, dim)) * scales) @ random_rotation(dim, rng)


def blobs(n: int, dim: int, centers: int = 4, spread: float = 0.05, seed=0) -> np.ndarray:
    rng = _rng(seed)
    c = _unit(rng.normal(size=(centers, dim)))
    labels = np.arange(n) % centers
    return c[labels] + spread * rng.normal(size=(n, dim))


def noisy_line(n: int, dim: int, noise: float = 1e-4, seed=0) -> np.ndarray:
    """Points on a straight segment away from the origin, lightly jittered."""
    rng = _rng(seed)
    base = _unit(rng.normal(size=(2, dim)))
    s = rng.random(n)[:, None]
    return base[0] + s * (base[1] - base[0]) + noise * rng.normal(size=(n, dim))


def torus(n: int, dim: int, radii=(1.0, 0.4), seed=0) -> np.ndarray:
    """Flat-embedded 2-torus rotated into ``dim`` dimensions."""
    rng = _rng(seed)
    a, b = rng.random((2, n)) * 2 * np.pi
    x = np.zeros((n, dim))
    x[:, 0] = (radii[0] + radii[1] * np.cos(b)) * np.cos(a)
    x[:, 1] = (radii[0] + radii[1] * np.cos(b)) * np.sin(a)
    x[:, 2] = radii[1] * np.sin(b)
    return x @ random_rotation(dim, rng)


GENERATORS = {
    "sphere_shell": lambda n, dim, rng: sphere_shell(n, dim, rng),
    "anisotropic": lambda n, dim, rng: anisotropic_gaussian(n, dim, 0.5, rng),
    "blobs": lambda n, dim, rng: blobs(n, dim, 4, 0.08, rng),
    "torus": lambda n, dim, rng: torus(n, dim, seed=rng),
}


def family_clouds(n: int = 600, dim: int = 16, per_family: int = 5, seed: int = 0) -> list[tuple[str, PointCloud]]:
    """``per_family`` unit-normalised clouds from each generator in ``GENERATORS``."""
    rng = np.random.default_rng(seed)
    out = []
    for name, gen in GENERATORS.items():
        for i in range(per_family):
            x = gen(n, dim, rng)
            # shift off the origin so that row normalisation keeps the shape
            if name in ("anisotropic", "torus"):
                x = x + 3.0 * _unit(rng.normal(size=(1, dim)))
            out.append((name, PointCloud(_unit(x), id=f"{name}-{i}")))
    return out


@dataclass(frozen=True)
class Corpus:
    queries: np.ndarray
    docs: np.ndarray
    region: np.ndarray  # per-document generating region: 0 aligned, 1 dense, 2 sparse
    name: str = ""


def retrievability_corpus(
    seed=0,
    dim: int = 32,
    n_queries: int = 200,
    aligned: int = 150,
    dense_clusters: int = 2,
    dense_size: int = 200,
    sparse: int = 200,
    aligned_rank: int = 3,
    variance: float | None = None,
    name: str = "",
) -> Corpus:
    """Corpus whose retrievable documents form a query-aligned cluster.

    The aligned cluster varies along ``aligned_rank`` directions only. Dense
    distractor clusters share its total variance but spread it over all
    ``dim`` axes, so the two agree on average cosine similarity and differ
    in intrinsic dimension. Sparse distractors are uniform on the sphere.
    Document order is shuffled.
    """
    rng = _rng(seed)
    var = rng.uniform(0.15, 0.3) if variance is None else variance
    rot = random_rotation(dim, rng)
    centre = rot[0]
    queries = _unit(centre + 0.35 * rng.normal(size=(n_queries, dim)) / np.sqrt(dim))
    basis = rot[1 : 1 + aligned_rank]
    coef = rng.normal(size=(aligned, aligned_rank)) * np.sqrt(var / aligned_rank)
    parts = [centre + coef @ basis]
    region = [np.zeros(aligned, dtype=np.intp)]
    for c in range(dense_clusters):
        # far from the query direction
        v = _unit((-rot[0] + rng.normal(size=dim) * 0.6)[None, :])[0]
        parts.append(v + rng.normal(size=(dense_size, dim)) * np.sqrt(var / dim))
        region.append(np.ones(dense_size, dtype=np.intp))
    far = _unit(rng.normal(size=(sparse, dim)))
    far = far * np.sign(far @ centre)[:, None] * -1.0  # opposite hemisphere
    parts.append(far)
    region.append(np.full(sparse, 2, dtype=np.intp))
    docs = _unit(np.vstack(parts))
    region = np.concatenate(region)
    order = rng.permutation(len(docs))
    return Corpus(queries, docs[order], region[order], name)


def regular_polygon(n: int) -> np.ndarray:
    a = 2 * np.pi * np.arange(n) / n
    return np.column_stack([np.cos(a), np.sin(a)])

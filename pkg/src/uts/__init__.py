"""Topological and geometric signatures of embedding point clouds."""

from .core import Metric, PointCloud, load_embeddings, normalize_rows, pairwise_distances, save_embeddings
from .errors import ComponentFailure, InputError, NumericalError, UTSError
from .signature import (
    DescriptorConfig,
    SignatureVector,
    apply_normalization,
    cka,
    compute_global_signature,
    compute_local_signature,
    fit_normalization,
    pca_reduce,
    read_signatures,
    signature_distance,
    write_signatures,
)

__version__ = "0.1.0"

__all__ = [
    "ComponentFailure",
    "DescriptorConfig",
    "InputError",
    "Metric",
    "NumericalError",
    "PointCloud",
    "SignatureVector",
    "UTSError",
    "apply_normalization",
    "cka",
    "compute_global_signature",
    "compute_local_signature",
    "fit_normalization",
    "load_embeddings",
    "normalize_rows",
    "pairwise_distances",
    "pca_reduce",
    "read_signatures",
    "save_embeddings",
    "signature_distance",
    "write_signatures",
]

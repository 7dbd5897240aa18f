"""Convex hulls of perturbed random points on the sphere and their rescaled limits."""

__version__ = "0.1.0"

from .geometry import DomainError, SingularityError
from .hull import DegeneracyError, HullComplex, PointCloud, convex_hull, face_counts, is_extreme, xi_score
from .models import ModelParams, cloud_from_csv, cloud_to_csv, sample_cloud, stream
from .scaling import Regime, classify, make_context

__all__ = [
    "__version__",
    "DomainError",
    "SingularityError",
    "DegeneracyError",
    "HullComplex",
    "PointCloud",
    "convex_hull",
    "face_counts",
    "is_extreme",
    "xi_score",
    "ModelParams",
    "cloud_from_csv",
    "cloud_to_csv",
    "sample_cloud",
    "stream",
    "Regime",
    "classify",
    "make_context",
]

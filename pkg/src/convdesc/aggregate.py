"""Pooling of feature-map regions into channel vectors, and vector normalization."""

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateVectorError, NegativeInputError, RegionBoundsError
from .tensorio import FeatureMaps

POOLINGS = ("sum", "max")


@dataclass(frozen=True)
class Region:
    """A rectangular feature-map region, half-open in both axes."""

    row_start: int
    row_end: int
    col_start: int
    col_end: int

    def validate_for(self, height, width):
        ok = (
            0 <= self.row_start < self.row_end <= height
            and 0 <= self.col_start < self.col_end <= width
        )
        if not ok:
            raise RegionBoundsError(
                f"region rows [{self.row_start},{self.row_end}) cols "
                f"[{self.col_start},{self.col_end}) out of bounds for {height}x{width} map"
            )


def pool_region(fm: FeatureMaps, region: Region, pooling: str):
    """Pool one region of every channel into a K-vector.

    Sum-pooling accumulates in float64 and rounds to float32 on output, so
    the result is order-insensitive within ~1e-6 relative.
    """
    region.validate_for(fm.height, fm.width)
    patch = fm.data[:, region.row_start:region.row_end, region.col_start:region.col_end]
    if pooling == "sum":
        return patch.sum(axis=(1, 2), dtype=np.float64).astype(np.float32)
    if pooling == "max":
        return patch.max(axis=(1, 2))
    raise ValueError(f"unknown pooling {pooling!r}")


def normalize_l2(v):
    """Scale a vector to unit Euclidean norm."""
    v = np.asarray(v)
    norm = float(np.linalg.norm(v.astype(np.float64)))
    if norm == 0.0:
        raise DegenerateVectorError("cannot l2-normalize an all-zero vector")
    return (v.astype(np.float64) / norm).astype(v.dtype)


def normalize_rootsift(v):
    """l1-normalize a non-negative vector, then take element-wise square roots.

    The output has unit l2 norm by construction.
    """
    v = np.asarray(v)
    if v.size and float(v.min()) < 0:
        raise NegativeInputError("rootsift normalization requires non-negative input")
    total = float(v.sum(dtype=np.float64))
    if total == 0.0:
        raise DegenerateVectorError("cannot rootsift-normalize an all-zero vector")
    return np.sqrt(v.astype(np.float64) / total).astype(v.dtype)

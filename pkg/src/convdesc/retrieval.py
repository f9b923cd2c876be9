"""Exact cosine-similarity search over descriptor sets and layer-ensemble fusion."""

from dataclasses import dataclass

import numpy as np

from .aggregate import normalize_l2
from .errors import DegenerateVectorError
from .tensorio import DescriptorSet


@dataclass(frozen=True)
class Index:
    """An immutable brute-force index of unit-norm descriptors."""

    layer: str
    ids: tuple
    vectors: np.ndarray  # (N, d), unit rows

    def __len__(self):
        return len(self.ids)

    @property
    def dim(self):
        return self.vectors.shape[1]

    def vector_for(self, image_id):
        return self.vectors[self.ids.index(image_id)]


@dataclass(frozen=True)
class EnsembleSpec:
    """Per-layer fusion weights; a convex combination."""

    members: tuple  # of (layer, weight)

    def __post_init__(self):
        object.__setattr__(self, "members", tuple((str(l), float(w)) for l, w in self.members))
        if not self.members:
            raise ValueError("ensemble needs at least one member")
        if any(w < 0 for _, w in self.members):
            raise ValueError("ensemble weights must be >= 0")
        total = sum(w for _, w in self.members)
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"ensemble weights must sum to 1, got {total}")


def build_index(ds: DescriptorSet):
    """Build an index, defensively re-normalizing every vector on ingest."""
    if len(ds) == 0:
        raise ValueError("cannot index an empty descriptor set")
    rows = []
    for image_id, v in zip(ds.ids, ds.vectors):
        try:
            rows.append(normalize_l2(v.astype(np.float64)))
        except DegenerateVectorError:
            raise DegenerateVectorError(
                f"zero descriptor for image {image_id!r} cannot be indexed"
            ) from None
    return Index(layer=ds.layer, ids=tuple(ds.ids), vectors=np.stack(rows))


def similarity(a, b):
    """Dot product of two unit-norm descriptors (cosine similarity)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return float(a @ b)


def _ranked(ids, scores, exclude=None):
    order = sorted(range(len(ids)), key=lambda i: (-scores[i], ids[i]))
    return [(ids[i], float(scores[i])) for i in order if ids[i] != exclude]


def query(index: Index, q, exclude=None):
    """Full ranking of the index by descending score; ties break by ascending id."""
    q = np.asarray(q, dtype=np.float64)
    if q.shape != (index.dim,):
        raise ValueError(f"query has shape {q.shape}, index holds {index.dim}-d vectors")
    scores = index.vectors @ q
    return _ranked(index.ids, scores, exclude)


def ensemble_query(indexes, queries, spec: EnsembleSpec, exclude=None):
    """Rank by the weighted sum of per-layer cosine scores.

    indexes and queries map layer name to Index / query descriptor; all member
    layers must be present and all indexes must hold the same image ids.
    """
    for layer, _ in spec.members:
        if layer not in indexes:
            raise KeyError(f"no index for ensemble layer {layer!r}")
        if layer not in queries:
            raise KeyError(f"no query descriptor for ensemble layer {layer!r}")
    first_layer = spec.members[0][0]
    id_set = set(indexes[first_layer].ids)
    for layer, _ in spec.members[1:]:
        other = set(indexes[layer].ids)
        if other != id_set:
            diff = sorted(id_set ^ other)
            raise ValueError(
                f"indexes for {first_layer!r} and {layer!r} hold different ids: {diff}"
            )
    ids = indexes[first_layer].ids
    fused = np.zeros(len(ids))
    for layer, weight in spec.members:
        index = indexes[layer]
        q = np.asarray(queries[layer], dtype=np.float64)
        if q.shape != (index.dim,):
            raise ValueError(
                f"query for layer {layer!r} has shape {q.shape}, expected ({index.dim},)"
            )
        scores = index.vectors @ q
        # align to the first index's id order
        by_id = dict(zip(index.ids, scores))
        fused += weight * np.array([by_id[i] for i in ids])
    return _ranked(ids, fused, exclude)

"""Multi-scale region grids and pyramid descriptors.

Level 1 is always the whole map. Overlapping levels use fixed fractional
slices of the map side (identical sets for rows and columns); non-overlapping
levels partition the side evenly. Per-scale vectors are summed and
l2-normalized, then combined across scales (optionally with the coarse-to-fine
halving weights) and l2-normalized again.
"""

import warnings
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .aggregate import POOLINGS, Region, normalize_l2, pool_region
from .errors import DegenerateVectorError
from .tensorio import DescriptorSet, FeatureMaps, read_feature_maps

GRID_VERSIONS = ("v1", "v2", "v3")

# Grid sizes per level for the 4-scale variants.
_VERSION_GRIDS = {"v1": (1, 2, 3, 4), "v2": (1, 2, 3, 5), "v3": (1, 2, 3, 6)}

_F = Fraction

# Fractional (start, end) slices for overlapping levels, keyed by
# (levels, version, level). Exact rationals so integer boundaries are stable.
_OVERLAP_SLICES = {
    (3, None, 2): ((_F(0), _F(2, 3)), (_F(1, 3), _F(1))),
    (4, "v1", 2): ((_F(0), _F(3, 4)), (_F(1, 4), _F(1))),
    (4, "v1", 3): ((_F(0), _F(1, 2)), (_F(1, 4), _F(3, 4)), (_F(1, 2), _F(1))),
    (4, "v2", 2): ((_F(0), _F(3, 5)), (_F(2, 5), _F(1))),
    (4, "v2", 3): ((_F(0), _F(3, 5)), (_F(1, 5), _F(4, 5)), (_F(2, 5), _F(1))),
    (4, "v3", 2): ((_F(0), _F(2, 3)), (_F(1, 3), _F(1))),
    (4, "v3", 3): ((_F(0), _F(1, 2)), (_F(1, 6), _F(2, 3)), (_F(1, 2), _F(1))),
}


@dataclass(frozen=True)
class PyramidConfig:
    """Pyramid geometry plus pooling/normalization switches."""

    grids: tuple  # per-level grid sizes, grids[0] == 1
    overlap_levels: frozenset = frozenset()
    version: str | None = None  # required iff 4 levels
    weighted: bool = False
    pooling: str = "max"
    region_norm: str = "none"  # "none" or "l2"

    def __post_init__(self):
        object.__setattr__(self, "grids", tuple(int(n) for n in self.grids))
        object.__setattr__(self, "overlap_levels", frozenset(self.overlap_levels))
        levels = len(self.grids)
        if levels < 1 or self.grids[0] != 1:
            raise ValueError(f"grids must start with 1 at level 1, got {self.grids}")
        if any(n < 1 for n in self.grids):
            raise ValueError(f"grid sizes must be >= 1, got {self.grids}")
        if (levels == 4) != (self.version is not None):
            raise ValueError("version must be set exactly when the pyramid has 4 levels")
        if self.version is not None:
            if self.version not in GRID_VERSIONS:
                raise ValueError(f"unknown grid version {self.version!r}")
            if self.grids != _VERSION_GRIDS[self.version]:
                raise ValueError(
                    f"grids {self.grids} do not match version {self.version} "
                    f"({_VERSION_GRIDS[self.version]})"
                )
        if self.pooling not in POOLINGS:
            raise ValueError(f"unknown pooling {self.pooling!r}")
        if self.region_norm not in ("none", "l2"):
            raise ValueError(f"unknown region_norm {self.region_norm!r}")
        allowed = _allowed_overlap_levels(levels)
        bad = self.overlap_levels - allowed
        if bad:
            raise ValueError(
                f"overlap not defined for levels {sorted(bad)} in a {levels}-scale pyramid "
                f"(allowed: {sorted(allowed)})"
            )

    @property
    def levels(self):
        return len(self.grids)

    @classmethod
    def from_factors(cls, scales, version=None, overlap=(), weighted=False,
                     pooling="max", region_norm="none"):
        """Build a config from sweep-style factor values.

        overlap is an iterable of level numbers or "s2"/"s3" strings.
        """
        scales = int(scales)
        if scales == 4:
            if version is None:
                raise ValueError("4-scale pyramids need a grid version (v1/v2/v3)")
            grids = _VERSION_GRIDS[version]
        else:
            if version is not None:
                raise ValueError("grid version only applies to 4-scale pyramids")
            grids = tuple(range(1, scales + 1))
        levels = set()
        for item in overlap:
            if isinstance(item, str):
                item = item.strip().lstrip("s")
            levels.add(int(item))
        return cls(grids=grids, overlap_levels=frozenset(levels), version=version,
                   weighted=weighted, pooling=pooling, region_norm=region_norm)


def _allowed_overlap_levels(levels):
    # Overlap geometry is only defined for 3-scale level 2 and 4-scale levels 2-3.
    if levels == 3:
        return {2}
    if levels == 4:
        return {2, 3}
    return set()


# Table presets: (scales, version, overlap levels, weighted).
PRESETS = {
    "a1": (2, None, (), False),
    "a2": (2, None, (), True),
    "b1": (3, None, (), False),
    "b2": (3, None, (), True),
    "b3": (3, None, (2,), False),
    "c1": (4, "v1", (3,), False),
    "c2": (4, "v1", (3,), True),
    "c3": (4, "v1", (2, 3), False),
    "c4": (4, "v2", (2, 3), False),
    "c5": (4, "v2", (2, 3), True),
    "c6": (4, "v3", (), False),
    "c7": (4, "v3", (3,), False),
    "c8": (4, "v3", (2, 3), False),
}


def preset(name, pooling="max", region_norm="none"):
    """Return one of the named benchmark-table pyramid configurations."""
    scales, version, overlap, weighted = PRESETS[name]
    return PyramidConfig.from_factors(scales, version=version, overlap=overlap,
                                      weighted=weighted, pooling=pooling,
                                      region_norm=region_norm)


def default_config():
    """The proposed final configuration: 4-scale v3, overlap levels 2+3, max pooling."""
    return preset("c8")


def overlap_slices(cfg: PyramidConfig, level):
    """Fractional (start, end) row/column slices for an overlapping level."""
    key = (cfg.levels, cfg.version, level)
    if key not in _OVERLAP_SLICES:
        raise ValueError(f"no overlap slices defined for level {level} of {cfg}")
    return _OVERLAP_SLICES[key]


def _even_boundaries(n, size):
    return [(j * size) // n for j in range(n)] + [size]


def _slice_intervals(slices, size):
    # start = floor(a*size), end = ceil(b*size); exact via rational arithmetic
    out = []
    for a, b in slices:
        start = (a.numerator * size) // a.denominator
        end = -((-b.numerator * size) // b.denominator)
        out.append((start, end))
    return out


def region_grid(cfg: PyramidConfig, level, height, width):
    """All regions of one pyramid level for an H x W map, row-major."""
    if not 1 <= level <= cfg.levels:
        raise ValueError(f"level {level} outside pyramid with {cfg.levels} levels")
    n = cfg.grids[level - 1]
    if level in cfg.overlap_levels and n <= min(height, width):
        slices = overlap_slices(cfg, level)
        rows = _slice_intervals(slices, height)
        cols = _slice_intervals(slices, width)
    else:
        if level in cfg.overlap_levels:
            warnings.warn(
                f"map {height}x{width} too small for overlapping {n}x{n} grid; "
                "falling back to even partition", stacklevel=2)
        n_eff = min(n, height, width)
        if n_eff < n:
            warnings.warn(
                f"grid {n}x{n} clamped to {n_eff}x{n_eff} for {height}x{width} map",
                stacklevel=2)
        rb = _even_boundaries(n_eff, height)
        cb = _even_boundaries(n_eff, width)
        rows = list(zip(rb[:-1], rb[1:]))
        cols = list(zip(cb[:-1], cb[1:]))
    return [
        Region(row_start=r0, row_end=r1, col_start=c0, col_end=c1)
        for r0, r1 in rows
        for c0, c1 in cols
    ]


def scale_weights(levels, weighted):
    """Per-scale combination weights.

    Weighted: the coarsest level gets 1/2^(L-1) and level i >= 2 gets
    1/2^(L-i+1); the weights sum to 1. Unweighted: all ones.
    """
    if levels < 1:
        raise ValueError("levels must be >= 1")
    if not weighted:
        return np.ones(levels)
    w = [1.0 / 2 ** (levels - 1)]
    w += [1.0 / 2 ** (levels - i + 1) for i in range(2, levels + 1)]
    return np.array(w)


def level_descriptor(fm: FeatureMaps, cfg: PyramidConfig, level):
    """Pool every region of one level, sum the region vectors, l2-normalize."""
    regions = region_grid(cfg, level, fm.height, fm.width)
    vectors = []
    for region in regions:
        v = pool_region(fm, region, cfg.pooling)
        if cfg.region_norm == "l2":
            try:
                v = normalize_l2(v)
            except DegenerateVectorError:
                continue  # an all-zero region contributes nothing to the sum
        vectors.append(v)
    if not vectors:
        raise DegenerateVectorError(f"all regions of level {level} pooled to zero")
    total = np.sum(np.stack(vectors).astype(np.float64), axis=0).astype(np.float32)
    return normalize_l2(total)


def multiscale_descriptor(fm: FeatureMaps, cfg: PyramidConfig):
    """The full pyramid descriptor: weighted sum of per-level vectors, l2-normalized.

    Output length equals the tensor's channel count regardless of geometry.
    """
    per_level = [level_descriptor(fm, cfg, level) for level in range(1, cfg.levels + 1)]
    if cfg.levels == 1:
        return per_level[0]  # already unit norm; keeps the single-scale path bit-exact
    weights = scale_weights(cfg.levels, cfg.weighted)
    combined = np.zeros(fm.channels, dtype=np.float64)
    for w, f in zip(weights, per_level):
        combined += w * f.astype(np.float64)
    return normalize_l2(combined).astype(np.float32)


def batch_descriptors(manifest, layer, cfg: PyramidConfig, threads=None):
    """One pyramid descriptor per manifest image, in manifest order."""
    missing = []
    paths = []
    for img in manifest.images:
        path = manifest.root / img.layers.get(layer, "")
        if layer not in img.layers or not path.is_file():
            missing.append(img.image_id)
        else:
            paths.append((img.image_id, path))
    if missing:
        raise FileNotFoundError(
            f"missing {layer!r} feature files for images: {', '.join(missing)}"
        )

    def one(item):
        image_id, path = item
        fm = read_feature_maps(path, image_id=image_id, layer=layer)
        return multiscale_descriptor(fm, cfg)

    if threads and threads > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=threads) as pool:
            vectors = list(pool.map(one, paths))
    else:
        vectors = [one(item) for item in paths]
    return DescriptorSet(layer=layer, ids=[i for i, _ in paths], vectors=np.stack(vectors))

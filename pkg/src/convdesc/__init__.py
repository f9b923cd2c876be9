"""Multi-scale CNN feature-map descriptors and instance-retrieval experiments."""

from .aggregate import Region, normalize_l2, normalize_rootsift, pool_region
from .pyramid import PyramidConfig, multiscale_descriptor, preset, region_grid, scale_weights
from .retrieval import EnsembleSpec, build_index, ensemble_query, query, similarity
from .tensorio import (
    DatasetManifest,
    DescriptorSet,
    FeatureMaps,
    QueryGroundTruth,
    read_feature_maps,
    read_manifest,
    write_feature_maps,
)
from .whiten import WhiteningModel, apply_whitening, fit_whitening

__version__ = "0.1.0"

__all__ = [
    "DatasetManifest",
    "DescriptorSet",
    "EnsembleSpec",
    "FeatureMaps",
    "PyramidConfig",
    "QueryGroundTruth",
    "Region",
    "WhiteningModel",
    "apply_whitening",
    "build_index",
    "ensemble_query",
    "fit_whitening",
    "multiscale_descriptor",
    "normalize_l2",
    "normalize_rootsift",
    "pool_region",
    "preset",
    "query",
    "read_feature_maps",
    "read_manifest",
    "region_grid",
    "scale_weights",
    "similarity",
    "write_feature_maps",
]

import numpy as np
import pytest

from convdesc import pyramid
from convdesc.aggregate import Region, normalize_l2, pool_region
from convdesc.errors import DegenerateVectorError
from convdesc.pyramid import (
    PRESETS,
    PyramidConfig,
    batch_descriptors,
    multiscale_descriptor,
    preset,
    region_grid,
    scale_weights,
)
from convdesc.tensorio import (
    DatasetManifest,
    FeatureMaps,
    ManifestImage,
    write_descriptor_set,
    write_feature_maps,
)


def test_level1_is_whole_map():
    cfg = preset("c8")
    regions = region_grid(cfg, 1, 9, 13)
    assert regions == [Region(0, 9, 0, 13)]


def test_3scale_level2_overlap_h12():
    cfg = preset("b3")
    rows = {(r.row_start, r.row_end) for r in region_grid(cfg, 2, 12, 12)}
    assert rows == {(0, 8), (4, 12)}
    assert len(region_grid(cfg, 2, 12, 12)) == 4


def test_4scale_v3_level3_overlap_h12():
    cfg = preset("c8")
    rows = {(r.row_start, r.row_end) for r in region_grid(cfg, 3, 12, 12)}
    assert rows == {(0, 6), (2, 8), (6, 12)}
    assert len(region_grid(cfg, 3, 12, 12)) == 9


def test_even_partition_h7():
    cfg = PyramidConfig(grids=(1, 2, 3))
    regions = region_grid(cfg, 3, 7, 7)
    rows = sorted({(r.row_start, r.row_end) for r in regions})
    assert rows == [(0, 2), (2, 4), (4, 7)]
    # oracle: boundaries floor(j*7/3)
    assert [j * 7 // 3 for j in range(4)] == [0, 2, 4, 7]


def test_tiny_map_grid_clamped():
    cfg = PyramidConfig(grids=(1, 2, 3))
    with pytest.warns(UserWarning, match="clamped"):
        regions = region_grid(cfg, 3, 2, 2)
    assert len(regions) == 4  # 2x2 instead of 3x3


@pytest.mark.parametrize("name", sorted(PRESETS))
def test_coverage_and_partition_all_presets(name):
    cfg = preset(name)
    for size in range(1, 41):
        h = w = size
        for level in range(1, cfg.levels + 1):
            counts = np.zeros((h, w), dtype=int)
            import warnings as _warnings
            with _warnings.catch_warnings():
                _warnings.simplefilter("ignore")
                regions = region_grid(cfg, level, h, w)
            for r in regions:
                assert 0 <= r.row_start < r.row_end <= h
                assert 0 <= r.col_start < r.col_end <= w
                counts[r.row_start:r.row_end, r.col_start:r.col_end] += 1
            assert counts.min() >= 1, (name, level, size)
            if level not in cfg.overlap_levels:
                assert counts.max() == 1, (name, level, size)


def test_scale_weights_eq4():
    assert scale_weights(3, True).tolist() == [0.25, 0.25, 0.5]
    assert scale_weights(4, True).tolist() == [0.125, 0.125, 0.25, 0.5]
    assert scale_weights(1, True).tolist() == [1.0]
    assert scale_weights(3, False).tolist() == [1.0, 1.0, 1.0]


def test_scale_weights_sum_to_one():
    for levels in range(1, 9):
        assert abs(scale_weights(levels, True).sum() - 1.0) < 1e-12


def test_multiscale_worked_example():
    data = np.zeros((2, 2, 2), dtype=np.float32)
    data[0, 0, 0] = 1.0
    data[1, 1, 1] = 2.0
    fm = FeatureMaps("x", "l", data)
    cfg = PyramidConfig(grids=(1, 2), pooling="max")
    out = multiscale_descriptor(fm, cfg)
    assert np.allclose(out, [0.4472, 0.8944], atol=1e-4)


def test_constant_tensor_gives_uniform_descriptor():
    fm = FeatureMaps("x", "l", np.full((4, 6, 6), 3.0, dtype=np.float32))
    out = multiscale_descriptor(fm, preset("c8"))
    assert np.allclose(out, np.full(4, 0.5), atol=1e-6)


def test_single_level_equals_single_scale_pipeline_bitwise():
    rng = np.random.default_rng(5)
    for pooling in ("sum", "max"):
        fm = FeatureMaps("x", "l", rng.random((8, 5, 7), dtype=np.float32))
        cfg = PyramidConfig(grids=(1,), pooling=pooling)
        direct = normalize_l2(pool_region(fm, Region(0, 5, 0, 7), pooling))
        assert np.array_equal(multiscale_descriptor(fm, cfg), direct)


def test_global_scaling_invariance():
    rng = np.random.default_rng(6)
    data = rng.random((8, 12, 12), dtype=np.float32)
    cfg = preset("c8")
    base = multiscale_descriptor(FeatureMaps("x", "l", data), cfg)
    scaled = multiscale_descriptor(FeatureMaps("x", "l", 5.0 * data), cfg)
    assert np.allclose(base, scaled, atol=1e-6)


def test_dimensionality_fixed_at_channel_count():
    rng = np.random.default_rng(8)
    fm = FeatureMaps("x", "l", rng.random((11, 14, 10), dtype=np.float32))
    for name in sorted(PRESETS):
        assert multiscale_descriptor(fm, preset(name)).shape == (11,)


def test_zero_tensor_propagates_degenerate_error():
    fm = FeatureMaps("x", "l", np.zeros((2, 4, 4), dtype=np.float32))
    with pytest.raises(DegenerateVectorError):
        multiscale_descriptor(fm, preset("b1"))


def test_overlap_only_defined_levels():
    with pytest.raises(ValueError, match="overlap"):
        PyramidConfig(grids=(1, 2, 3), overlap_levels={3})
    with pytest.raises(ValueError, match="overlap"):
        PyramidConfig(grids=(1, 2), overlap_levels={2})


def test_version_requires_four_levels():
    with pytest.raises(ValueError):
        PyramidConfig(grids=(1, 2, 3), version="v1")
    with pytest.raises(ValueError):
        PyramidConfig(grids=(1, 2, 3, 4))
    assert PyramidConfig(grids=(1, 2, 3, 6), version="v3").levels == 4


def test_from_factors_presets_match_tables():
    assert pyramid.preset("c8").grids == (1, 2, 3, 6)
    assert pyramid.preset("c4").grids == (1, 2, 3, 5)
    assert pyramid.preset("c1").grids == (1, 2, 3, 4)
    assert pyramid.preset("b1").grids == (1, 2, 3)
    assert pyramid.preset("a1").grids == (1, 2)
    assert pyramid.preset("c8").overlap_levels == frozenset({2, 3})


def _toy_manifest(tmp_path, n=3):
    rng = np.random.default_rng(11)
    images = []
    for i in range(n):
        path = tmp_path / f"img{i}.fmap"
        write_feature_maps(
            FeatureMaps(f"img{i}", "conv5_4", rng.random((4, 8, 8), dtype=np.float32)),
            path)
        images.append(ManifestImage(f"img{i}", {"conv5_4": path.name}))
    return DatasetManifest(protocol="oxford_map", images=images, queries=[], root=tmp_path)


def test_batch_descriptors_order_and_determinism(tmp_path):
    manifest = _toy_manifest(tmp_path)
    cfg = preset("b1")
    ds1 = batch_descriptors(manifest, "conv5_4", cfg)
    ds2 = batch_descriptors(manifest, "conv5_4", cfg, threads=4)
    assert ds1.ids == ["img0", "img1", "img2"]
    assert np.array_equal(ds1.vectors, ds2.vectors)
    p1, p2 = tmp_path / "a.desc", tmp_path / "b.desc"
    write_descriptor_set(ds1, p1)
    write_descriptor_set(ds2, p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_batch_descriptors_missing_files_listed(tmp_path):
    manifest = _toy_manifest(tmp_path)
    (tmp_path / "img1.fmap").unlink()
    (tmp_path / "img2.fmap").unlink()
    with pytest.raises(FileNotFoundError) as err:
        batch_descriptors(manifest, "conv5_4", preset("b1"))
    assert "img1" in str(err.value) and "img2" in str(err.value)

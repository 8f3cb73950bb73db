import logging

import numpy as np
import pytest
from hypothesis import given, strategies as st

from planesweep.geometry import Camera, project_points
from planesweep.postprocess import (
    FilterConfig,
    confidence_map,
    depth_to_points,
    fuse,
    geometric_consistency,
    photometric_filter,
    reproject,
)

from support import erode, scene_with_geometry, views_with_outliers, visible_count

K = np.array([[100.0, 0, 15.5], [0, 100.0, 11.5], [0, 0, 1]])


def cam_at(x=0.0, R=np.eye(3)):
    # camera center at (x, 0, 0)
    return Camera(K, R, -R @ np.array([x, 0.0, 0.0]), 40.0, 60.0, 8)


@pytest.fixture(scope="module")
def sphere_scene():
    return scene_with_geometry(seed=3, width=128, height=96, num_views=4)


@pytest.fixture(scope="module")
def plane_scene():
    return scene_with_geometry(seed=3, width=128, height=96, num_views=4, spheres=[])


# -- confidence -------------------------------------------------------------------------

def test_confidence_of_one_hot_and_uniform_volumes():
    depths = np.arange(256) * 2.0 + 100.0
    prob = np.full((256, 3, 4), 1.0 / 256)
    est = np.full((3, 4), 300.3)
    np.testing.assert_allclose(confidence_map(prob, depths, est), 4 / 256, rtol=1e-12)
    one = np.zeros((256, 3, 4))
    one[100] = 1.0
    np.testing.assert_allclose(confidence_map(one, depths, np.full((3, 4), depths[100] + 0.5)), 1.0)


def test_confidence_window_clamps_at_range_edges():
    depths = np.arange(8, dtype=float) + 1.0
    prob = np.tile(np.arange(1.0, 9.0)[:, None, None], (1, 1, 3)) / 36
    est = np.array([[1.0, 8.0, 7.5]])
    conf = confidence_map(prob, depths, est)
    # k=0 -> indices 0..2; k=7 -> 6..7; k=6 -> 5..7
    np.testing.assert_allclose(conf[0], [(1 + 2 + 3) / 36, (7 + 8) / 36, (6 + 7 + 8) / 36])


@given(st.integers(0, 2**32 - 1), st.integers(2, 40))
def test_confidence_is_a_probability(seed, D):
    rng = np.random.default_rng(seed)
    p = rng.random((D, 2, 3))
    p /= p.sum(axis=0)
    depths = np.linspace(1, 5, D)
    est = rng.uniform(1, 5, (2, 3))
    c = confidence_map(p, depths, est)
    assert np.all(c >= 0) and np.all(c <= 1 + 1e-5)


def test_confidence_shape_errors():
    with pytest.raises(ValueError):
        confidence_map(np.ones((4, 2, 2)), np.arange(3.0), np.ones((2, 2)))
    with pytest.raises(ValueError):
        confidence_map(np.ones((4, 2, 2)), np.arange(4.0), np.ones((2, 3)))


# -- photometric ------------------------------------------------------------------------

def test_photometric_threshold_is_strict():
    d = np.full((3, 3), 5.0)
    assert photometric_filter(d, np.ones((3, 3)))[1].all()
    assert not photometric_filter(d, np.full((3, 3), 0.79))[1].any()
    kept, mask = photometric_filter(d, np.full((3, 3), 0.8))
    assert mask.all() and np.array_equal(kept, d)
    with pytest.raises(ValueError):
        photometric_filter(d, np.ones((2, 2)))


def test_filter_config_validation():
    with pytest.raises(ValueError):
        FilterConfig(prob_threshold=0)
    with pytest.raises(ValueError):
        FilterConfig(min_consistent_views=1)


# -- geometric consistency -------------------------------------------------------------

def test_consistent_depths_average():
    d0, d1, d2 = (np.full((4, 5), v) for v in (10.0, 10.02, 9.98))
    c = cam_at()
    count, fused = geometric_consistency((d0, c), [(d1, c), (d2, c)])
    assert np.all(count == 2)
    np.testing.assert_allclose(fused, 10.0, rtol=1e-14)


def test_reprojection_residual_vanishes_on_integer_disparity():
    # baseline 2 at depth 50 with focal 100 shifts every pixel by exactly 4 columns
    depth = np.full((24, 32), 50.0)
    r = reproject(depth, cam_at(), depth, cam_at(2.0))
    assert r.ok.sum() == 24 * 28
    assert r.pixel_error[r.ok].max() < 1e-6
    assert r.rel_depth_error[r.ok].max() < 1e-12


def test_perturbed_source_contributes_nothing():
    depth = np.full((24, 32), 50.0)
    ref, a, b = cam_at(), cam_at(2.0), cam_at(-2.0)
    count, _ = geometric_consistency((depth, ref), [(depth, a), (depth * 1.05, b)])
    r = reproject(depth, ref, depth, a)
    assert np.array_equal(count[r.ok], np.ones(r.ok.sum(), dtype=int))


def test_points_behind_source_are_inconsistent():
    depth = np.full((24, 32), 50.0)
    flipped = np.diag([-1.0, 1.0, -1.0])  # looks down -z
    count, _ = geometric_consistency((depth, cam_at()), [(depth, cam_at(0.0, flipped))])
    assert not count.any()


def test_exact_depths_are_consistent_with_every_covisible_view(plane_scene, sphere_scene):
    cfg = FilterConfig()
    for bundle, geo in (plane_scene, sphere_scene):
        for r in range(4):
            others = [(bundle.depths[s], bundle.cameras[s]) for s in range(4) if s != r]
            count, fused = geometric_consistency((bundle.depths[r], bundle.cameras[r]), others, cfg)
            interior = erode(visible_count(bundle, geo, r) == 3)
            # nearest-pixel lookup can push the widest pair just past 1 px on oblique surfaces
            assert np.mean(count[interior] == 3) > 0.99
            ok = count > 0
            np.testing.assert_allclose(fused[ok], bundle.depths[r][ok], rtol=cfg.rel_depth_threshold)


# -- unprojection ----------------------------------------------------------------------

def test_depth_to_points_on_fronto_parallel_plane():
    depth = np.full((24, 32), 7.5)
    depth[0, 0] = 0
    img = np.zeros((24, 32, 3), np.uint8)
    img[..., 1] = 200
    pts, col, pix = depth_to_points(depth, cam_at(), img)
    assert len(pts) == 24 * 32 - 1 and len(col) == len(pts)
    np.testing.assert_allclose(pts[:, 2], 7.5, rtol=1e-15)
    assert np.all(col == [0, 200, 0])
    empty = depth_to_points(depth, cam_at(), img, mask=np.zeros_like(depth, bool))
    assert empty[0].shape == (0, 3)
    with pytest.raises(ValueError):
        depth_to_points(depth, cam_at(), img[:3])


# -- fusion -----------------------------------------------------------------------------

def test_single_view_gives_empty_cloud(caplog):
    d = np.full((24, 32), 50.0)
    with caplog.at_level(logging.WARNING):
        cloud = fuse([(d, np.ones_like(d), cam_at(), np.zeros((24, 32, 3), np.uint8))])
    assert len(cloud) == 0 and "empty" in caplog.text


def _exact_views(bundle):
    return [(bundle.depths[v], bundle.masks[v].astype(float), bundle.cameras[v], bundle.images[v])
            for v in range(bundle.num_views)]


def test_fused_plane_points_lie_on_the_plane(plane_scene):
    bundle, _ = plane_scene
    cloud = fuse(_exact_views(bundle))
    assert len(cloud) > 1000
    assert np.abs(cloud.points[:, 2]).max() < 1e-6
    assert np.all(cloud.support >= 3)


def test_every_fused_point_reprojects_near_its_pixel(sphere_scene):
    bundle, _ = sphere_scene
    cfg = FilterConfig()
    cloud = fuse(_exact_views(bundle), cfg)
    for v in range(4):
        sel = cloud.view == v
        p, _ = project_points(bundle.cameras[v], cloud.points[sel])
        err = np.hypot(p[:, 0] - cloud.pixel[sel, 1], p[:, 1] - cloud.pixel[sel, 0])
        assert err.max() < cfg.pixel_threshold


def test_injected_outliers_never_reach_the_cloud(sphere_scene):
    bundle, geo = sphere_scene
    views, injected, inliers = views_with_outliers(bundle, geo, seed=1)
    cloud = fuse(views)
    for v in range(4):
        assert not (cloud.used[v] & injected[v]).any()
    kept = sum((cloud.used[v] & inliers[v]).sum() for v in range(4))
    assert kept / sum(m.sum() for m in inliers) >= 0.9


def test_fusion_is_independent_of_view_order(sphere_scene):
    bundle, geo = sphere_scene
    views, _, _ = views_with_outliers(bundle, geo, seed=2)
    a = fuse(views).points
    b = fuse([views[i] for i in (2, 0, 3, 1)]).points
    assert a.shape == b.shape
    np.testing.assert_allclose(a[np.lexsort(a.T)], b[np.lexsort(b.T)], atol=1e-9, rtol=0)


def test_stricter_filters_never_add_points(sphere_scene):
    bundle, geo = sphere_scene
    views, _, _ = views_with_outliers(bundle, geo, seed=3)
    rng = np.random.default_rng(0)
    views = [(d, np.where(c > 0, rng.uniform(0.5, 1.0, c.shape), 0), cam, img) for d, c, cam, img in views]
    sizes = [len(fuse(views, FilterConfig(prob_threshold=t))) for t in (0.5, 0.7, 0.8, 0.9)]
    assert sizes == sorted(sizes, reverse=True)
    sizes = [len(fuse(views, FilterConfig(min_consistent_views=m))) for m in (2, 3, 4)]
    assert sizes == sorted(sizes, reverse=True)

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from planesweep.geometry import (
    Camera,
    DepthHypotheses,
    SparseTrack,
    ViewSelectionParams,
    apply_homography,
    baseline_angle,
    depth_samples,
    homography,
    infinite_homography,
    look_at,
    pair_score,
    piecewise_gaussian,
    project,
    project_points,
    select_source_views,
    unproject,
    unproject_pixels,
    warp_coords,
    warp_to_volume,
)
from planesweep.tensor import Tensor


def K_of(f, cx, cy):
    return np.array([[f, 0, cx], [0, f, cy], [0, 0, 1.0]])


def random_rotation(rng, max_angle=0.6):
    axis = rng.standard_normal(3)
    axis /= np.linalg.norm(axis)
    a = rng.uniform(-max_angle, max_angle)
    S = np.array([[0, -axis[2], axis[1]], [axis[2], 0, -axis[0]], [-axis[1], axis[0], 0]])
    return np.eye(3) + math.sin(a) * S + (1 - math.cos(a)) * S @ S


def random_camera(rng):
    R = random_rotation(rng)
    center = rng.uniform(-1, 1, size=3)
    f = rng.uniform(50, 200)
    return Camera(K_of(f, rng.uniform(20, 40), rng.uniform(15, 30)), R, -R @ center, 1.0, 50.0, 8)


# -- camera -------------------------------------------------------------------------

def test_camera_validation():
    K = K_of(100, 10, 10)
    with pytest.raises(ValueError, match="orthonormal"):
        Camera(K, np.diag([1, 1, 1.1]), np.zeros(3))
    with pytest.raises(ValueError, match="determinant"):
        Camera(K, np.diag([1, 1, -1.0]), np.zeros(3))
    with pytest.raises(ValueError, match="focal"):
        Camera(K_of(-1, 0, 0), np.eye(3), np.zeros(3))
    with pytest.raises(ValueError, match="depth range"):
        Camera(K, np.eye(3), np.zeros(3), 5.0, 2.0)
    bad = K.copy()
    bad[0, 1] = 0.5
    with pytest.raises(ValueError, match="skew"):
        Camera(bad, np.eye(3), np.zeros(3))


def test_camera_center_and_scaling():
    R, t = look_at([3.0, 4.0, 5.0], [0.0, 0.0, 0.0])
    cam = Camera(K_of(80, 31.5, 23.5), R, t)
    np.testing.assert_allclose(cam.center, [3, 4, 5], atol=1e-12)
    np.testing.assert_allclose(cam.principal_axis, -np.array([3, 4, 5]) / np.sqrt(50), atol=1e-12)
    half = cam.scaled(0.25)
    np.testing.assert_allclose(half.K, K_of(20, 31.5 / 4, 23.5 / 4))
    assert half.same_as(half) and not half.same_as(cam)


# -- depth sampling -------------------------------------------------------------------

def test_depth_samples_examples():
    d = depth_samples(DepthHypotheses(425.0, 2.0, 256))
    assert d[-1] == 935.0
    assert np.all(np.diff(d) > 0)
    np.testing.assert_allclose(np.diff(d), 2.0, atol=1e-12)
    np.testing.assert_array_equal(depth_samples(DepthHypotheses(3.0, 1.0, 1)), [3.0])
    with pytest.raises(ValueError):
        DepthHypotheses(1.0, 0.0, 4)


# -- projection ------------------------------------------------------------------------

def test_project_examples():
    cam = Camera(K_of(100, 32, 24), np.eye(3), np.zeros(3))
    pix, depth = project(cam, [0.0, 0.0, 7.0])
    np.testing.assert_array_equal(pix, [32, 24])
    assert depth == 7.0
    np.testing.assert_array_equal(unproject(cam, [32, 24], 5.0), [0, 0, 5])
    with pytest.raises(ValueError):
        project(cam, cam.center)
    with pytest.raises(ValueError):
        project(cam, [0.0, 0.0, -1.0])
    p1 = unproject(cam, [10.0, 3.0], 2.0)
    p2 = unproject(cam, [10.0, 3.0], 6.0)
    np.testing.assert_allclose(p2, 3 * p1)


@given(st.integers(0, 10_000))
def test_project_unproject_roundtrip(seed):
    rng = np.random.default_rng(seed)
    cam = random_camera(rng)
    pix = rng.uniform(0, 64, size=(20, 2))
    d = rng.uniform(0.5, 30, size=20)
    X = unproject_pixels(cam, pix, d)
    back, z = project_points(cam, X)
    np.testing.assert_allclose(back, pix, atol=1e-9)
    np.testing.assert_allclose(z, d, rtol=1e-12)


# -- homography -----------------------------------------------------------------------

def test_homography_identity_for_same_camera():
    rng = np.random.default_rng(0)
    cam = random_camera(rng)
    for d in (0.1, 3.0, 1e6):
        np.testing.assert_array_equal(homography(cam, cam, d), np.eye(3))


def test_homography_translated_camera_shifts_two_pixels():
    K = K_of(100, 32, 24)
    ref = Camera(K, np.eye(3), np.zeros(3))
    src = Camera(K, np.eye(3), np.array([0.2, 0.0, 0.0]))
    out = apply_homography(homography(ref, src, 10.0), np.array([[5.0, 7.0]]))
    np.testing.assert_allclose(out, [[7.0, 7.0]], atol=1e-12)
    X = unproject(ref, [5.0, 7.0], 10.0)
    np.testing.assert_allclose(project(src, X)[0], [7.0, 7.0], atol=1e-12)


def test_homography_matches_projection_oracle():
    rng = np.random.default_rng(42)
    worst = 0.0
    for _ in range(100):
        ref, src = random_camera(rng), random_camera(rng)
        pix = rng.uniform(0, 64, size=(10, 2))
        d = rng.uniform(2.0, 40.0, size=10)
        X = unproject_pixels(ref, pix, d)
        expect, z = project_points(src, X)
        ok = z > 0.1
        got = np.stack([apply_homography(homography(ref, src, di), p[None])[0] for p, di in zip(pix, d)])
        worst = max(worst, float(np.max(np.abs(got - expect)[ok], initial=0.0)))
    assert worst < 1e-9


def test_homography_errors_and_infinite_limit():
    rng = np.random.default_rng(1)
    ref, src = random_camera(rng), random_camera(rng)
    with pytest.raises(ValueError):
        homography(ref, src, 0.0)
    H = homography(ref, src, 1e9)
    Hinf = infinite_homography(ref, src)
    pix = rng.uniform(0, 64, size=(50, 2))
    np.testing.assert_allclose(apply_homography(H, pix), apply_homography(Hinf, pix), atol=1e-6)


# -- warping ------------------------------------------------------------------------------

def test_warp_identity_is_bit_exact():
    rng = np.random.default_rng(0)
    K = K_of(160, 63.5, 47.5)
    cam = Camera(K, np.eye(3), np.zeros(3))
    feat = Tensor(rng.standard_normal((3, 24, 32)).astype(np.float32))
    vol = warp_to_volume(feat, cam, cam, [1.0, 2.0, 5.0])
    for k in range(3):
        assert np.array_equal(vol.data[:, k], feat.data)


def test_warp_translated_camera_is_shift_with_zero_border():
    K = K_of(400, 128, 96)  # quarter resolution: f = 100
    ref = Camera(K, np.eye(3), np.zeros(3))
    src = Camera(K, np.eye(3), np.array([0.2, 0.0, 0.0]))
    feat = Tensor(np.random.default_rng(0).standard_normal((2, 6, 8)))
    vol = warp_to_volume(feat, ref, src, [10.0])
    np.testing.assert_allclose(vol.data[:, 0, :, :-2], feat.data[:, :, 2:], atol=1e-9)
    np.testing.assert_allclose(vol.data[:, 0, :, -2:], 0.0, atol=1e-9)


def test_warp_zero_features_and_empty_depths():
    rng = np.random.default_rng(3)
    ref, src = random_camera(rng), random_camera(rng)
    zero = Tensor(np.zeros((2, 4, 4)))
    assert not warp_to_volume(zero, ref, src, [2.0, 3.0]).data.any()
    with pytest.raises(ValueError):
        warp_to_volume(zero, ref, src, [])


def test_warp_coords_behind_camera_reads_zero():
    K = K_of(10, 2, 2)
    ref = Camera(K, np.eye(3), np.zeros(3))
    R, t = look_at([0.0, 0.0, 10.0], [0.0, 0.0, 20.0], up=(0.0, -1.0, 0.0))  # past the plane, looking away
    src = Camera(K, R, t)
    coords = warp_coords(ref, src, [5.0], 4, 4)
    assert np.all(coords == -1e6)


# -- view selection ---------------------------------------------------------------------------

def test_piecewise_gaussian_examples():
    p = ViewSelectionParams()
    assert piecewise_gaussian(5.0, p) == 1.0
    assert piecewise_gaussian(4.0, p) == pytest.approx(math.exp(-0.5), abs=1e-12)
    assert piecewise_gaussian(15.0, p) == pytest.approx(math.exp(-0.5), abs=1e-12)
    eps = 1e-9
    assert abs(piecewise_gaussian(5 - eps, p) - piecewise_gaussian(5 + eps, p)) < 1e-12
    with pytest.raises(ValueError):
        ViewSelectionParams(sigma1=0.0)


def _ring(n, radius=10.0, step_deg=5.0):
    cams = []
    for k in range(n):
        a = math.radians(k * step_deg)
        R, t = look_at([radius * math.sin(a), -radius * math.cos(a), 3.0], [0.0, 0.0, 0.0])
        cams.append(Camera(K_of(50, 16, 16), R, t))
    return cams


def test_pair_score_examples():
    cams = _ring(3)
    assert pair_score([SparseTrack([0, 0, 0], {0, 2})], cams, 0, 1) == 0.0
    # a point placed so the baseline angle between views 0 and 1 is exactly theta0
    c0, c1 = cams[0].center, cams[1].center
    theta = baseline_angle(c0, c1, np.zeros(3))
    score = pair_score([SparseTrack([0, 0, 0], {0, 1})], cams, 0, 1, ViewSelectionParams(theta0=theta))
    assert score == 1.0
    coincident = SparseTrack(c0, {0, 1})
    assert pair_score([coincident], cams, 0, 1) == 0.0


@given(st.integers(0, 10_000))
def test_pair_score_is_symmetric(seed):
    rng = np.random.default_rng(seed)
    cams = [random_camera(rng) for _ in range(4)]
    tracks = [SparseTrack(rng.uniform(-5, 5, 3), rng.choice(4, size=rng.integers(2, 5), replace=False))
              for _ in range(30)]
    for i in range(4):
        for j in range(4):
            if i != j:
                assert pair_score(tracks, cams, i, j) == pair_score(tracks, cams, j, i)


def test_select_source_views():
    cams = _ring(5)
    assert select_source_views(0, cams, [], 2) == [1, 2]  # all scores zero: lowest indices
    rng = np.random.default_rng(0)
    tracks = [SparseTrack(rng.uniform(-1, 1, 3), range(5)) for _ in range(20)]
    scores = {j: pair_score(tracks, cams, 2, j) for j in range(5) if j != 2}
    oracle = sorted(scores, key=lambda j: (-scores[j], j))
    assert select_source_views(2, cams, tracks, 4) == oracle
    assert select_source_views(2, cams, tracks, 2) == oracle[:2]
    with pytest.raises(ValueError):
        select_source_views(0, cams, tracks, 5)

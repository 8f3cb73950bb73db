"""Pinhole cameras, plane-induced homographies, plane-sweep warping and view selection.

Conventions: ``R`` and ``t`` map world to camera (``X_cam = R X + t``), so the
camera centre is ``-R^T t``. Depth is the camera-frame z coordinate. Pixel
(i, j) (row, column) sits at coordinate (x=j, y=i); there is no half-pixel
offset, so downsampling by ``s`` multiplies fx, fy, cx and cy all by ``1/s``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .tensor import Tensor, bilinear_sample

# sample coordinate used for rays that land behind the source camera
_OUTSIDE = -1.0e6


@dataclass(frozen=True)
class DepthHypotheses:
    d_min: float
    interval: float
    count: int

    def __post_init__(self):
        if self.interval <= 0:
            raise ValueError(f"interval must be positive, got {self.interval}")
        if self.count < 1:
            raise ValueError(f"count must be >= 1, got {self.count}")
        if self.d_min <= 0:
            raise ValueError(f"d_min must be positive, got {self.d_min}")

    @property
    def d_max(self) -> float:
        return self.d_min + (self.count - 1) * self.interval


@dataclass
class Camera:
    """World-to-camera pinhole camera with its depth search range."""

    K: np.ndarray
    R: np.ndarray
    t: np.ndarray
    depth_min: float = 1.0
    depth_max: float = 2.0
    depth_num: int = 2
    depth_interval: Optional[float] = None

    def __post_init__(self):
        self.K = np.asarray(self.K, dtype=np.float64).reshape(3, 3)
        self.R = np.asarray(self.R, dtype=np.float64).reshape(3, 3)
        self.t = np.asarray(self.t, dtype=np.float64).reshape(3)
        self.depth_min = float(self.depth_min)
        self.depth_max = float(self.depth_max)
        self.depth_num = int(self.depth_num)
        if self.depth_interval is None:
            n = max(self.depth_num - 1, 1)
            self.depth_interval = (self.depth_max - self.depth_min) / n
        self.depth_interval = float(self.depth_interval)
        self.validate()

    def validate(self):
        K, R = self.K, self.R
        if not np.allclose(R.T @ R, np.eye(3), atol=1e-9, rtol=0):
            raise ValueError("R is not orthonormal")
        if np.linalg.det(R) <= 0:
            raise ValueError("R must have determinant +1")
        if K[0, 0] <= 0 or K[1, 1] <= 0:
            raise ValueError("focal lengths must be positive")
        if K[0, 1] != 0 or K[1, 0] != 0 or K[2, 0] != 0 or K[2, 1] != 0 or K[2, 2] != 1:
            raise ValueError(f"K must be upper-triangular with zero skew and K[2,2]=1, got\n{K}")
        if not 0 < self.depth_min < self.depth_max:
            raise ValueError(f"depth range must satisfy 0 < d_min < d_max, "
                             f"got ({self.depth_min}, {self.depth_max})")
        if self.depth_interval <= 0 or self.depth_num < 1:
            raise ValueError("depth sampling needs a positive interval and count")

    @property
    def center(self) -> np.ndarray:
        return -self.R.T @ self.t

    @property
    def principal_axis(self) -> np.ndarray:
        return self.R[2]

    @property
    def hypotheses(self) -> DepthHypotheses:
        return DepthHypotheses(self.depth_min, self.depth_interval, self.depth_num)

    def scaled(self, factor: float) -> "Camera":
        """Same pose with intrinsics scaled for a resized image."""
        K = self.K.copy()
        K[:2] *= factor
        return Camera(K, self.R.copy(), self.t.copy(), self.depth_min, self.depth_max,
                      self.depth_num, self.depth_interval)

    def same_as(self, other: "Camera") -> bool:
        return (np.array_equal(self.K, other.K) and np.array_equal(self.R, other.R)
                and np.array_equal(self.t, other.t))


def look_at(center, target, up=(0.0, 0.0, 1.0)) -> tuple[np.ndarray, np.ndarray]:
    """World-to-camera (R, t) for a camera at ``center`` looking at ``target``.

    Image x runs right and image y runs down, so camera y is -up projected.
    """
    center = np.asarray(center, dtype=np.float64)
    z = np.asarray(target, dtype=np.float64) - center
    z /= np.linalg.norm(z)
    x = np.cross(z, np.asarray(up, dtype=np.float64))
    if np.linalg.norm(x) < 1e-12:
        raise ValueError("viewing direction is parallel to the up vector")
    x /= np.linalg.norm(x)
    y = np.cross(z, x)
    R = np.stack([x, y, z])
    return R, -R @ center


def depth_samples(h: DepthHypotheses) -> np.ndarray:
    return h.d_min + np.arange(h.count, dtype=np.float64) * h.interval


# -- projection -----------------------------------------------------------------

def project_points(cam: Camera, X) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized projection of ``X[..., 3]``; returns (pixels[..., 2], depth[...]).

    Points at or behind the camera get NaN pixels.
    """
    X = np.asarray(X, dtype=np.float64)
    Xc = X @ cam.R.T + cam.t
    z = Xc[..., 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        uvw = Xc @ cam.K.T
        pix = uvw[..., :2] / uvw[..., 2:3]
    pix[z <= 0] = np.nan
    return pix, z


def unproject_pixels(cam: Camera, pixels, depth) -> np.ndarray:
    """Vectorized inverse of :func:`project_points`: pixels[..., 2], depth[...] -> X[..., 3]."""
    pixels = np.asarray(pixels, dtype=np.float64)
    depth = np.asarray(depth, dtype=np.float64)
    Kinv = np.linalg.inv(cam.K)
    hom = np.concatenate([pixels, np.ones(pixels.shape[:-1] + (1,))], axis=-1)
    rays = hom @ Kinv.T
    Xc = rays * depth[..., None]
    return (Xc - cam.t) @ cam.R


def project(cam: Camera, X) -> tuple[np.ndarray, float]:
    """Project one world point. Raises if it is not in front of the camera."""
    pix, z = project_points(cam, np.asarray(X, dtype=np.float64).reshape(3))
    if not z > 0:
        raise ValueError(f"point has non-positive depth {float(z)} in this camera")
    return pix, float(z)


def unproject(cam: Camera, pixel, depth: float) -> np.ndarray:
    return unproject_pixels(cam, np.asarray(pixel, dtype=np.float64).reshape(2), np.float64(depth))


# -- homographies -----------------------------------------------------------------

def _inv_K(K: np.ndarray) -> np.ndarray:
    if abs(np.linalg.det(K)) < 1e-300:
        raise ValueError("intrinsic matrix is not invertible")
    return np.linalg.inv(K)


def homography(ref: Camera, src: Camera, d: float) -> np.ndarray:
    """Pixel map from the reference view to ``src`` for the plane at depth ``d``.

    ``H(d) = K_s R_s (I - (c_s - c_r) n_r^T / d) R_r^T K_r^-1`` with camera
    centres ``c`` and reference principal axis ``n_r``. Written with
    world-to-camera translations this is the familiar
    ``I - (t_r - t_s) n^T / d`` form whenever both rotations are the identity.
    """
    if not d > 0:
        raise ValueError(f"plane depth must be positive, got {d}")
    Kr_inv = _inv_K(ref.K)
    if src.same_as(ref):
        return np.eye(3)
    n = ref.principal_axis
    middle = np.eye(3) - np.outer(src.center - ref.center, n) / d
    return src.K @ src.R @ middle @ ref.R.T @ Kr_inv


def infinite_homography(ref: Camera, src: Camera) -> np.ndarray:
    return src.K @ src.R @ ref.R.T @ _inv_K(ref.K)


def apply_homography(H: np.ndarray, pixels) -> np.ndarray:
    pixels = np.asarray(pixels, dtype=np.float64)
    hom = np.concatenate([pixels, np.ones(pixels.shape[:-1] + (1,))], axis=-1) @ H.T
    return hom[..., :2] / hom[..., 2:3]


def warp_coords(ref: Camera, src: Camera, depths, height: int, width: int) -> np.ndarray:
    """Source-view sampling coordinates ``[2, D, height, width]`` for every plane."""
    depths = np.asarray(depths, dtype=np.float64)
    ys, xs = np.mgrid[0:height, 0:width].astype(np.float64)
    grid = np.stack([xs.ravel(), ys.ravel(), np.ones(height * width)])
    out = np.empty((2, depths.size, height * width))
    for k, d in enumerate(depths):
        hom = homography(ref, src, float(d)) @ grid
        z = hom[2]
        with np.errstate(divide="ignore", invalid="ignore"):
            out[0, k] = hom[0] / z
            out[1, k] = hom[1] / z
        behind = ~(z > 0)
        out[:, k, behind] = _OUTSIDE
    return out.reshape(2, depths.size, height, width)


def warp_to_volume(src_feat: Tensor, ref: Camera, src: Camera, depths,
                   downsample: int = 4) -> Tensor:
    """Warp a source feature map onto the reference fronto-parallel planes.

    The cameras are given at image resolution; their intrinsics are scaled by
    ``1/downsample`` to match the feature map. Returns ``[F, D, h, w]``.
    """
    depths = np.asarray(depths, dtype=np.float64)
    if depths.size == 0:
        raise ValueError("need at least one depth hypothesis")
    _, h, w = src_feat.shape
    scale = 1.0 / downsample
    coords = warp_coords(ref.scaled(scale), src.scaled(scale), depths, h, w)
    return bilinear_sample(src_feat, coords)


# -- view selection -------------------------------------------------------------

@dataclass(frozen=True)
class ViewSelectionParams:
    theta0: float = 5.0
    sigma1: float = 1.0
    sigma2: float = 10.0

    def __post_init__(self):
        if self.sigma1 <= 0 or self.sigma2 <= 0:
            raise ValueError("sigma1 and sigma2 must be positive")


@dataclass
class SparseTrack:
    position: np.ndarray
    observing_views: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=np.float64).reshape(3)
        self.observing_views = frozenset(int(v) for v in self.observing_views)


def piecewise_gaussian(theta: float, p: ViewSelectionParams = ViewSelectionParams()) -> float:
    """Score peaking at ``theta0`` degrees, with separate widths on each side."""
    sigma = p.sigma1 if theta <= p.theta0 else p.sigma2
    return float(np.exp(-((theta - p.theta0) ** 2) / (2.0 * sigma * sigma)))


def baseline_angle(ci, cj, point) -> Optional[float]:
    """Angle in degrees between rays from ``point`` to two camera centres."""
    a = np.asarray(ci, dtype=np.float64) - point
    b = np.asarray(cj, dtype=np.float64) - point
    na = np.sqrt(a[0] * a[0] + a[1] * a[1] + a[2] * a[2])
    nb = np.sqrt(b[0] * b[0] + b[1] * b[1] + b[2] * b[2])
    if na < 1e-12 or nb < 1e-12:
        return None
    a = a / na
    b = b / nb
    cos = a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
    return float(np.degrees(np.arccos(min(1.0, max(-1.0, cos)))))


def pair_score(tracks: Sequence[SparseTrack], cams: Sequence[Camera], i: int, j: int,
               p: ViewSelectionParams = ViewSelectionParams()) -> float:
    ci, cj = cams[i].center, cams[j].center
    score = 0.0
    for tr in tracks:
        if i not in tr.observing_views or j not in tr.observing_views:
            continue
        theta = baseline_angle(ci, cj, tr.position)
        if theta is None:
            continue
        score += piecewise_gaussian(theta, p)
    return score


def select_source_views(ref_index: int, cams: Sequence[Camera], tracks: Sequence[SparseTrack],
                        count: int, p: ViewSelectionParams = ViewSelectionParams()) -> list[int]:
    """The ``count`` best-scoring views for ``ref_index``; ties go to the lower index."""
    if count > len(cams) - 1:
        raise ValueError(f"asked for {count} source views but only {len(cams) - 1} exist")
    scored = [(-pair_score(tracks, cams, ref_index, j, p), j)
              for j in range(len(cams)) if j != ref_index]
    scored.sort()
    return [j for _, j in scored[:count]]

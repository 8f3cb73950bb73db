"""Confidence, photometric and geometric filtering, and fusion into a point cloud.

Depth maps use 0 for invalid pixels. Every camera passed here must match the
resolution of the depth map it comes with (scale full-resolution cameras with
``Camera.scaled`` first).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .geometry import Camera, project_points, unproject_pixels

log = logging.getLogger(__name__)


@dataclass
class FilterConfig:
    prob_threshold: float = 0.8
    pixel_threshold: float = 1.0
    rel_depth_threshold: float = 0.01
    min_consistent_views: int = 3  # the reference view counts as one

    def __post_init__(self):
        for name in ("prob_threshold", "pixel_threshold", "rel_depth_threshold"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if self.min_consistent_views < 2:
            raise ValueError(f"min_consistent_views must be at least 2, got {self.min_consistent_views}")


@dataclass
class FusedPointCloud:
    points: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    colors: np.ndarray = field(default_factory=lambda: np.zeros((0, 3), dtype=np.uint8))
    support: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    view: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    pixel: np.ndarray = field(default_factory=lambda: np.zeros((0, 2), dtype=np.int64))  # (row, col)
    # per input view: which of its pixels produced a point or were merged into one
    used: list = field(default_factory=list)

    def __len__(self) -> int:
        return self.points.shape[0]


def confidence_map(prob: np.ndarray, depths, estimate: np.ndarray) -> np.ndarray:
    """Probability mass in the four hypotheses around each estimate.

    With ``k = floor((d - d_min) / interval)`` the window is ``k-1 .. k+2``,
    clamped to the valid index range; repeated indices count once.
    """
    prob = np.asarray(prob)
    depths = np.asarray(depths, dtype=np.float64)
    D = prob.shape[0]
    if depths.shape != (D,):
        raise ValueError(f"{depths.size} depths for a volume with {D} hypotheses")
    if estimate.shape != prob.shape[1:]:
        raise ValueError(f"estimate shape {estimate.shape} != volume plane shape {prob.shape[1:]}")
    interval = (depths[-1] - depths[0]) / (D - 1) if D > 1 else 1.0
    k = np.floor((np.asarray(estimate, dtype=np.float64) - depths[0]) / interval)
    k = np.clip(np.nan_to_num(k, nan=0.0), -1, D).astype(np.int64)
    lo = np.clip(k - 1, 0, D - 1)
    hi = np.clip(k + 2, 0, D - 1)
    csum = np.concatenate([np.zeros((1,) + prob.shape[1:]), np.cumsum(prob, axis=0, dtype=np.float64)])
    return (np.take_along_axis(csum, (hi + 1)[None], 0)[0]
            - np.take_along_axis(csum, lo[None], 0)[0])


def photometric_filter(depth: np.ndarray, conf: np.ndarray, cfg: FilterConfig = FilterConfig()):
    """Zero out pixels whose confidence is strictly below the threshold; returns (depth, mask)."""
    if depth.shape != conf.shape:
        raise ValueError(f"depth {depth.shape} and confidence {conf.shape} shapes differ")
    mask = (conf >= cfg.prob_threshold) & (depth > 0)
    return np.where(mask, depth, 0.0), mask


@dataclass
class Reprojection:
    """Per reference pixel, the round trip through one source view."""

    ok: np.ndarray  # landed on a valid source pixel in front of both cameras
    pixel_error: np.ndarray
    rel_depth_error: np.ndarray
    depth: np.ndarray  # reference-frame depth of the source's 3-D point
    src_index: np.ndarray  # flat index of the nearest source pixel
    points: np.ndarray  # [H, W, 3] world position of the source's 3-D point

    def consistent(self, cfg: FilterConfig) -> np.ndarray:
        with np.errstate(invalid="ignore"):
            return (self.ok & (self.pixel_error < cfg.pixel_threshold)
                    & (self.rel_depth_error < cfg.rel_depth_threshold))


def reproject(ref_depth: np.ndarray, ref_cam: Camera, src_depth: np.ndarray,
              src_cam: Camera) -> Reprojection:
    """Round trip every valid reference pixel through the source depth map.

    A reference pixel is lifted with its depth and projected into the source
    view; the nearest source pixel is lifted with its own depth and projected
    back. Pixels landing outside the source image, on an invalid source
    pixel, or behind either camera are marked not ok.
    """
    H, W = ref_depth.shape
    sh, sw = src_depth.shape
    ys, xs = np.mgrid[0:H, 0:W].astype(np.float64)
    pix = np.stack([xs, ys], axis=-1)
    valid = ref_depth > 0
    X = unproject_pixels(ref_cam, pix, np.where(valid, ref_depth, 1.0))
    p_src, z_src = project_points(src_cam, X)
    with np.errstate(invalid="ignore"):
        q = np.rint(p_src)
        inside = valid & (z_src > 0) & (q[..., 0] >= 0) & (q[..., 0] < sw) & (q[..., 1] >= 0) & (q[..., 1] < sh)
    qx = np.where(inside, q[..., 0], 0).astype(np.int64)
    qy = np.where(inside, q[..., 1], 0).astype(np.int64)
    d_src = src_depth[qy, qx]
    inside &= d_src > 0
    Xs = unproject_pixels(src_cam, np.stack([qx, qy], axis=-1).astype(np.float64),
                          np.where(inside, d_src, 1.0))
    p_back, z_back = project_points(ref_cam, Xs)
    ok = inside & (z_back > 0)
    with np.errstate(invalid="ignore"):
        perr = np.where(ok, np.hypot(p_back[..., 0] - xs, p_back[..., 1] - ys), np.inf)
        derr = np.where(ok, np.abs(z_back - ref_depth) / np.where(valid, ref_depth, 1.0), np.inf)
    return Reprojection(ok, perr, derr, np.where(ok, z_back, 0.0), qy * sw + qx, Xs)


def geometric_consistency(ref_view, others: Sequence, cfg: FilterConfig = FilterConfig()):
    """Count consistent source views and average the consistent depths.

    ``ref_view`` and each entry of ``others`` are ``(depth, camera)`` pairs.
    Returns ``(count, fused_depth)``; the fused depth averages the reference
    depth with every consistent reprojected depth (0 where the reference is
    invalid).
    """
    ref_depth, ref_cam = ref_view
    ref_depth = np.asarray(ref_depth, dtype=np.float64)
    count = np.zeros(ref_depth.shape, dtype=np.int64)
    total = np.where(ref_depth > 0, ref_depth, 0.0)
    for depth, cam in others:
        r = reproject(ref_depth, ref_cam, np.asarray(depth, dtype=np.float64), cam)
        c = r.consistent(cfg)
        count += c
        total += np.where(c, r.depth, 0.0)
    return count, total / (count + 1)


def depth_to_points(depth: np.ndarray, cam: Camera, image: np.ndarray, mask=None):
    """Lift every valid pixel; returns (points[M, 3], colors[M, 3], pixels[M, 2] as (row, col))."""
    depth = np.asarray(depth, dtype=np.float64)
    if image.shape[:2] != depth.shape:
        raise ValueError(f"image {image.shape[:2]} and depth {depth.shape} sizes differ")
    valid = depth > 0 if mask is None else (np.asarray(mask, dtype=bool) & (depth > 0))
    rows, cols = np.nonzero(valid)
    pix = np.stack([cols, rows], axis=1).astype(np.float64)
    pts = unproject_pixels(cam, pix, depth[rows, cols])
    colors = np.asarray(image)[rows, cols].reshape(-1, 3).astype(np.uint8)
    return pts, colors, np.stack([rows, cols], axis=1)


def _canonical_order(cams: Sequence[Camera]) -> list:
    def key(i):
        c = cams[i]
        return (tuple(c.center), c.R.tobytes(), c.K.tobytes(), c.t.tobytes())
    return sorted(range(len(cams)), key=key)


def fuse(views: Sequence, cfg: FilterConfig = FilterConfig()) -> FusedPointCloud:
    """Filter and merge per-view depth maps; ``views`` holds ``(depth, conf, cam, image)``.

    Views are visited in an order fixed by their cameras, so the cloud does
    not depend on how the inputs are listed. Each reference pixel that passes
    both filters emits one point, the average of its own 3-D point and those
    of the consistent source pixels; the source pixels it was matched with are
    then consumed and never emit points of their own.
    """
    n = len(views)
    if n < cfg.min_consistent_views:
        log.warning("fusion needs at least %d views, got %d; returning an empty cloud",
                    cfg.min_consistent_views, n)
        return FusedPointCloud(used=[np.zeros(np.shape(v[0]), dtype=bool) for v in views])
    filtered = []
    for depth, conf, cam, image in views:
        if np.shape(image)[:2] != np.shape(depth):
            raise ValueError(f"image {np.shape(image)[:2]} and depth {np.shape(depth)} sizes differ")
        d, _ = photometric_filter(np.asarray(depth, dtype=np.float64), np.asarray(conf), cfg)
        filtered.append(d)
    cams = [v[2] for v in views]
    consumed = [np.zeros(d.shape, dtype=bool) for d in filtered]
    used = [np.zeros(d.shape, dtype=bool) for d in filtered]
    out_pts, out_col, out_sup, out_view, out_pix = [], [], [], [], []
    order = _canonical_order(cams)
    for r in order:
        ref_depth = filtered[r]
        H, W = ref_depth.shape
        ys, xs = np.mgrid[0:H, 0:W].astype(np.float64)
        total = unproject_pixels(cams[r], np.stack([xs, ys], axis=-1), np.where(ref_depth > 0, ref_depth, 1.0))
        count = np.zeros(ref_depth.shape, dtype=np.int64)
        matches = []
        for s in order:
            if s == r:
                continue
            rp = reproject(ref_depth, cams[r], filtered[s], cams[s])
            c = rp.consistent(cfg)
            count += c
            total += np.where(c[..., None], rp.points, 0.0)
            matches.append((s, c, rp.src_index))
        keep = (ref_depth > 0) & ~consumed[r] & (count + 1 >= cfg.min_consistent_views)
        for s, c, idx in matches:
            hit = keep & c
            consumed[s].flat[idx[hit]] = True
            used[s].flat[idx[hit]] = True
        used[r] |= keep
        rows, cols = np.nonzero(keep)
        out_pts.append(total[rows, cols] / (count[rows, cols] + 1)[:, None])
        out_col.append(np.asarray(views[r][3])[rows, cols].reshape(-1, 3).astype(np.uint8))
        out_sup.append(count[rows, cols] + 1)
        out_view.append(np.full(len(rows), r, dtype=np.int64))
        out_pix.append(np.stack([rows, cols], axis=1))
    return FusedPointCloud(np.concatenate(out_pts), np.concatenate(out_col),
                           np.concatenate(out_sup), np.concatenate(out_view),
                           np.concatenate(out_pix), used)

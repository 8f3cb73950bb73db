"""Oracles shared by the postprocess and acceptance tests."""

import numpy as np

from planesweep.geometry import project_points, unproject_pixels
from planesweep.scene import SceneSpec, generate_scene
from planesweep.scene.synth import SceneGeometry


def scene_with_geometry(**kw):
    spec = SceneSpec(**kw)
    return generate_scene(spec), SceneGeometry(spec)


def visible_count(bundle, geo, v):
    """Per valid pixel of view ``v``: in how many other views its surface point is visible (ray cast)."""
    depth = bundle.depths[v]
    ys, xs = np.nonzero(bundle.masks[v])
    pts = unproject_pixels(bundle.cameras[v], np.stack([xs, ys], 1).astype(np.float64), depth[ys, xs])
    out = np.zeros(depth.shape, dtype=np.int64)
    for s, cam in enumerate(bundle.cameras):
        if s != v:
            out[ys, xs] += geo.visible(cam, pts)
    return out


def erode(mask):
    """Pixels whose whole 3x3 neighbourhood is set."""
    H, W = mask.shape
    p = np.pad(mask, 1)
    out = np.ones_like(mask)
    for dy in range(3):
        for dx in range(3):
            out &= p[dy:dy + H, dx:dx + W]
    return out


def near_observed_surface(bundle, v, pix, d, tol=0.03, extra=()):
    """True where the point at depth ``d`` lies within ``tol`` of a surface some view observes.

    Checks the true depth of view ``v`` and, in every other view, the 3x3
    pixels around the projection. ``extra`` holds further ``(view, depth map)``
    pairs to compare against.
    """
    X = unproject_pixels(bundle.cameras[v], pix, d)
    rows, cols = pix[:, 1].astype(int), pix[:, 0].astype(int)
    hit = np.abs(d - bundle.depths[v][rows, cols]) < tol * d
    maps = [(s, bundle.depths[s]) for s in range(len(bundle.cameras))] + list(extra)
    for s, dmap in maps:
        if s == v:
            continue
        p, z = project_points(bundle.cameras[s], X)
        H, W = dmap.shape
        for dy in (-1, 0, 1):
            for dx in (-1, 0, 1):
                qx = np.rint(p[:, 0]).astype(int) + dx
                qy = np.rint(p[:, 1]).astype(int) + dy
                ok = (z > 0) & (qx >= 0) & (qx < W) & (qy >= 0) & (qy < H)
                g = np.where(ok, dmap[np.clip(qy, 0, H - 1), np.clip(qx, 0, W - 1)], 0.0)
                hit |= ok & (g > 0) & (np.abs(g - z) < tol * z)
    return hit


def views_with_outliers(bundle, geo, fraction=0.05, conf=0.9, seed=0):
    """Exact depths with ``fraction`` of valid pixels replaced by off-surface random depths.

    Returns (views, injected masks, co-visible inlier masks). A random depth
    that lands on an observed surface, or on an outlier already placed in
    another view, would be corroborated by that view and is redrawn.
    """
    rng = np.random.default_rng(seed)
    views, injected, inliers = [], [], []
    for v, cam in enumerate(bundle.cameras):
        depth = bundle.depths[v].copy()
        mask = bundle.masks[v]
        ys, xs = np.nonzero(mask)
        idx = rng.choice(len(ys), int(round(fraction * len(ys))), replace=False)
        pix = np.stack([xs[idx], ys[idx]], 1).astype(np.float64)
        lo, hi = cam.hypotheses.d_min, cam.hypotheses.d_max
        r = rng.uniform(lo, hi, size=len(idx))
        while True:
            redo = near_observed_surface(bundle, v, pix, r, extra=[(s, vw[0]) for s, vw in enumerate(views)])
            if not redo.any():
                break
            r[redo] = rng.uniform(lo, hi, size=int(redo.sum()))
        depth[ys[idx], xs[idx]] = r
        bad = np.zeros_like(mask)
        bad[ys[idx], xs[idx]] = True
        confidence = np.where(mask, 1.0, 0.0)
        confidence[bad] = conf
        views.append((depth, confidence, cam, bundle.images[v]))
        injected.append(bad)
        inliers.append((visible_count(bundle, geo, v) >= 2) & ~bad)
    return views, injected, inliers

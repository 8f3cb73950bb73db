"""Vectorized numpy implementations of the hot kernels.

These are the reference path. The numba versions in ``_numba`` must return
the same values; the benchmark in ``benchmarks/bench_kernels.py`` times both.
"""

import numpy as np


def _corners(x, y, height, width):
    x0 = np.floor(x)
    y0 = np.floor(y)
    wx1 = x - x0
    wy1 = y - y0
    wx0 = 1.0 - wx1
    wy0 = 1.0 - wy1
    x0 = x0.astype(np.int64)
    y0 = y0.astype(np.int64)
    x1 = x0 + 1
    y1 = y0 + 1
    vx0 = (x0 >= 0) & (x0 < width)
    vx1 = (x1 >= 0) & (x1 < width)
    vy0 = (y0 >= 0) & (y0 < height)
    vy1 = (y1 >= 0) & (y1 < height)
    out = []
    for xi, yi, vx, vy in ((x0, y0, vx0, vy0), (x1, y0, vx1, vy0),
                           (x0, y1, vx0, vy1), (x1, y1, vx1, vy1)):
        valid = vx & vy
        flat = np.where(valid, np.clip(yi, 0, height - 1) * width + np.clip(xi, 0, width - 1), 0)
        out.append((flat, valid))
    return (wx0, wx1, wy0, wy1), out


def bilinear_forward(img, x, y):
    """Sample ``img[C, H, W]`` at flat coordinate arrays ``x``, ``y``.

    Neighbours outside the image contribute zero.
    """
    C, H, W = img.shape
    flat_img = img.reshape(C, H * W)
    (wx0, wx1, wy0, wy1), corners = _corners(x, y, H, W)
    weights = (wx0 * wy0, wx1 * wy0, wx0 * wy1, wx1 * wy1)
    out = np.zeros((C, x.shape[0]), dtype=img.dtype)
    for w, (flat, valid) in zip(weights, corners):
        out += (w * valid).astype(img.dtype) * flat_img[:, flat]
    return out


def bilinear_backward(img, x, y, grad_out, need_coords):
    """Gradients of ``bilinear_forward`` wrt the image and (optionally) coords."""
    C, H, W = img.shape
    flat_img = img.reshape(C, H * W)
    (wx0, wx1, wy0, wy1), corners = _corners(x, y, H, W)
    weights = (wx0 * wy0, wx1 * wy0, wx0 * wy1, wx1 * wy1)
    grad_img = np.zeros((C, H * W), dtype=img.dtype)
    idx = np.concatenate([flat[valid] for flat, valid in corners])
    for c in range(C):
        vals = np.concatenate([(grad_out[c] * w)[valid] for w, (_, valid) in zip(weights, corners)])
        grad_img[c] = np.bincount(idx, weights=vals, minlength=H * W)
    grad_img = grad_img.reshape(C, H, W)
    if not need_coords:
        return grad_img, None, None
    v = [flat_img[:, flat] * valid for flat, valid in corners]
    v00, v10, v01, v11 = v
    dx = wy0 * (v10 - v00) + wy1 * (v11 - v01)
    dy = wx0 * (v01 - v00) + wx1 * (v11 - v10)
    gx = np.sum(grad_out * dx, axis=0)
    gy = np.sum(grad_out * dy, axis=0)
    return grad_img, gx, gy


def _sqdist(a, b):
    d0 = a[..., 0] - b[..., 0]
    d1 = a[..., 1] - b[..., 1]
    d2 = a[..., 2] - b[..., 2]
    return d0 * d0 + d1 * d1 + d2 * d2


def nn_brute(queries, points):
    """Exact nearest neighbour by exhaustive search; ties go to the lower index."""
    n = queries.shape[0]
    chunk = max(1, 2_000_000 // max(1, points.shape[0]))
    index = np.empty(n, dtype=np.int64)
    dist2 = np.empty(n, dtype=np.float64)
    for start in range(0, n, chunk):
        q = queries[start:start + chunk]
        d = _sqdist(q[:, None, :], points[None, :, :])
        i = np.argmin(d, axis=1)  # first occurrence on ties
        index[start:start + chunk] = i
        dist2[start:start + chunk] = d[np.arange(len(q)), i]
    return index, np.sqrt(dist2)


def build_grid(points, cell):
    """Bucket points into a uniform grid. Returns (origin, dims, order, starts)."""
    origin = points.min(axis=0)
    cells = np.floor((points - origin) / cell).astype(np.int64)
    dims = cells.max(axis=0) + 1
    key = (cells[:, 0] * dims[1] + cells[:, 1]) * dims[2] + cells[:, 2]
    order = np.argsort(key, kind="stable")
    counts = np.bincount(key, minlength=int(np.prod(dims)))
    starts = np.zeros(counts.size + 1, dtype=np.int64)
    np.cumsum(counts, out=starts[1:])
    return origin, dims, order, starts


def nn_grid(queries, points, cell):
    """Grid-accelerated exact nearest neighbour.

    Candidates come from the 27 cells around each query. A result is only
    trusted when its distance is within one cell; the rest fall back to the
    exhaustive search.
    """
    origin, dims, order, starts = build_grid(points, cell)
    n = queries.shape[0]
    qc = np.floor((queries - origin) / cell).astype(np.int64)
    best = np.full(n, np.inf)
    best_i = np.full(n, np.iinfo(np.int64).max, dtype=np.int64)
    for dx in (-1, 0, 1):
        for dy in (-1, 0, 1):
            for dz in (-1, 0, 1):
                c = qc + np.array([dx, dy, dz])
                ok = np.all((c >= 0) & (c < dims), axis=1)
                qi = np.nonzero(ok)[0]
                if qi.size == 0:
                    continue
                key = (c[qi, 0] * dims[1] + c[qi, 1]) * dims[2] + c[qi, 2]
                lo = starts[key]
                cnt = starts[key + 1] - lo
                has = cnt > 0
                qi, lo, cnt = qi[has], lo[has], cnt[has]
                if qi.size == 0:
                    continue
                rep_q = np.repeat(qi, cnt)
                offs = np.arange(cnt.sum()) - np.repeat(np.cumsum(cnt) - cnt, cnt)
                pi = order[np.repeat(lo, cnt) + offs]
                d = _sqdist(queries[rep_q], points[pi])
                # lexicographic (distance, index) minimum per query
                sel = np.lexsort((pi, d, rep_q))
                rq = rep_q[sel]
                first = np.ones(rq.size, dtype=bool)
                first[1:] = rq[1:] != rq[:-1]
                cq, cd, ci = rq[first], d[sel][first], pi[sel][first]
                better = (cd < best[cq]) | ((cd == best[cq]) & (ci < best_i[cq]))
                best[cq[better]] = cd[better]
                best_i[cq[better]] = ci[better]
    fallback = ~(best <= (0.999 * cell) ** 2)
    if np.any(fallback):
        fi, _ = nn_brute(queries[fallback], points)
        best_i[fallback] = fi
        best[fallback] = _sqdist(queries[fallback], points[fi])
    return best_i, np.sqrt(best)

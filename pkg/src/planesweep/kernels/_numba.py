"""numba versions of the kernels in ``_numpy``; same signatures and results."""

import math

import numba as nb
import numpy as np

from ._numpy import build_grid

# no fastmath: the nearest-neighbour distances must match the numpy path bit for bit
_jit = nb.njit(cache=True, nogil=True)


@_jit
def _bilinear_forward(img, x, y, out):
    C, H, W = img.shape
    for m in range(x.shape[0]):
        fx = math.floor(x[m])
        fy = math.floor(y[m])
        wx1 = x[m] - fx
        wy1 = y[m] - fy
        wx0 = 1.0 - wx1
        wy0 = 1.0 - wy1
        x0 = int(fx)
        y0 = int(fy)
        for c in range(C):
            acc = 0.0
            if 0 <= y0 < H:
                if 0 <= x0 < W:
                    acc += wx0 * wy0 * img[c, y0, x0]
                if 0 <= x0 + 1 < W:
                    acc += wx1 * wy0 * img[c, y0, x0 + 1]
            if 0 <= y0 + 1 < H:
                if 0 <= x0 < W:
                    acc += wx0 * wy1 * img[c, y0 + 1, x0]
                if 0 <= x0 + 1 < W:
                    acc += wx1 * wy1 * img[c, y0 + 1, x0 + 1]
            out[c, m] = acc


@_jit
def _bilinear_backward(img, x, y, grad_out, grad_img, gx, gy, need_coords):
    C, H, W = img.shape
    for m in range(x.shape[0]):
        fx = math.floor(x[m])
        fy = math.floor(y[m])
        wx1 = x[m] - fx
        wy1 = y[m] - fy
        wx0 = 1.0 - wx1
        wy0 = 1.0 - wy1
        x0 = int(fx)
        y0 = int(fy)
        ok00 = 0 <= y0 < H and 0 <= x0 < W
        ok10 = 0 <= y0 < H and 0 <= x0 + 1 < W
        ok01 = 0 <= y0 + 1 < H and 0 <= x0 < W
        ok11 = 0 <= y0 + 1 < H and 0 <= x0 + 1 < W
        sx = 0.0
        sy = 0.0
        for c in range(C):
            g = grad_out[c, m]
            v00 = 0.0
            v10 = 0.0
            v01 = 0.0
            v11 = 0.0
            if ok00:
                grad_img[c, y0, x0] += g * (wx0 * wy0)
                v00 = img[c, y0, x0]
            if ok10:
                grad_img[c, y0, x0 + 1] += g * (wx1 * wy0)
                v10 = img[c, y0, x0 + 1]
            if ok01:
                grad_img[c, y0 + 1, x0] += g * (wx0 * wy1)
                v01 = img[c, y0 + 1, x0]
            if ok11:
                grad_img[c, y0 + 1, x0 + 1] += g * (wx1 * wy1)
                v11 = img[c, y0 + 1, x0 + 1]
            if need_coords:
                sx += g * (wy0 * (v10 - v00) + wy1 * (v11 - v01))
                sy += g * (wx0 * (v01 - v00) + wx1 * (v11 - v10))
        if need_coords:
            gx[m] = sx
            gy[m] = sy


def bilinear_forward(img, x, y):
    out = np.empty((img.shape[0], x.shape[0]), dtype=img.dtype)
    _bilinear_forward(np.ascontiguousarray(img), x, y, out)
    return out


def bilinear_backward(img, x, y, grad_out, need_coords):
    grad_img = np.zeros_like(img)
    gx = np.zeros(x.shape[0], dtype=np.result_type(x, img))
    gy = np.zeros_like(gx)
    _bilinear_backward(np.ascontiguousarray(img), x, y, np.ascontiguousarray(grad_out),
                       grad_img, gx, gy, need_coords)
    if not need_coords:
        return grad_img, None, None
    return grad_img, gx, gy


@_jit
def _sq(q, p):
    d0 = q[0] - p[0]
    d1 = q[1] - p[1]
    d2 = q[2] - p[2]
    return d0 * d0 + d1 * d1 + d2 * d2


@_jit
def _nn_brute(queries, points, index, dist2):
    for i in range(queries.shape[0]):
        best = np.inf
        bi = -1
        for j in range(points.shape[0]):
            d = _sq(queries[i], points[j])
            if d < best:
                best = d
                bi = j
        index[i] = bi
        dist2[i] = best


def nn_brute(queries, points):
    index = np.empty(queries.shape[0], dtype=np.int64)
    dist2 = np.empty(queries.shape[0], dtype=np.float64)
    _nn_brute(queries, points, index, dist2)
    return index, np.sqrt(dist2)


@_jit
def _nn_grid(queries, points, cell, origin, dims, order, starts, index, dist2):
    limit = (0.999 * cell) ** 2
    for i in range(queries.shape[0]):
        q = queries[i]
        cx = int(math.floor((q[0] - origin[0]) / cell))
        cy = int(math.floor((q[1] - origin[1]) / cell))
        cz = int(math.floor((q[2] - origin[2]) / cell))
        best = np.inf
        bi = -1
        for dx in range(-1, 2):
            gx = cx + dx
            if gx < 0 or gx >= dims[0]:
                continue
            for dy in range(-1, 2):
                gy = cy + dy
                if gy < 0 or gy >= dims[1]:
                    continue
                for dz in range(-1, 2):
                    gz = cz + dz
                    if gz < 0 or gz >= dims[2]:
                        continue
                    key = (gx * dims[1] + gy) * dims[2] + gz
                    for k in range(starts[key], starts[key + 1]):
                        j = order[k]
                        d = _sq(q, points[j])
                        if d < best or (d == best and j < bi):
                            best = d
                            bi = j
        if not best <= limit:
            best = np.inf
            for j in range(points.shape[0]):
                d = _sq(q, points[j])
                if d < best:
                    best = d
                    bi = j
        index[i] = bi
        dist2[i] = best


def nn_grid(queries, points, cell):
    origin, dims, order, starts = build_grid(points, cell)
    index = np.empty(queries.shape[0], dtype=np.int64)
    dist2 = np.empty(queries.shape[0], dtype=np.float64)
    _nn_grid(queries, points, float(cell), origin, dims, order, starts, index, dist2)
    return index, np.sqrt(dist2)

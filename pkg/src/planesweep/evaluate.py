"""Point-cloud reconstruction metrics."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import kernels

DEFAULT_CAP = 20.0
DEFAULT_THRESHOLDS = (1.0, 2.0)
NN_METHODS = ("grid", "brute")


def _as_cloud(points, what: str) -> np.ndarray:
    pts = np.ascontiguousarray(points, dtype=np.float64).reshape(-1, 3)
    if pts.shape[0] == 0:
        raise ValueError(f"{what} point cloud is empty")
    if not np.all(np.isfinite(pts)):
        raise ValueError(f"{what} point cloud has non-finite coordinates")
    return pts


def default_cell(points: np.ndarray) -> float:
    """Grid cell edge giving a handful of points per occupied cell."""
    ext = points.max(axis=0) - points.min(axis=0)
    ext = np.where(ext > 0, ext, max(float(ext.max()), 1.0))
    return float(2.0 * (np.prod(ext) / points.shape[0]) ** (1.0 / 3.0)) or 1.0


def _bounded_cell(points: np.ndarray, cell: float) -> float:
    # results are exact for any cell size; this only caps the grid's memory
    ext = points.max(axis=0) - points.min(axis=0)
    limit = 4 * points.shape[0] + 64
    while np.prod(np.floor(ext / cell) + 1) > limit:
        cell *= 2.0
    return cell


def nearest_neighbors(queries, cloud, method: str = "grid", cell: float = None):
    """Index and distance of the nearest ``cloud`` point for every query.

    Both methods return identical distances; ties go to the lower index.
    """
    q = np.ascontiguousarray(queries, dtype=np.float64).reshape(-1, 3)
    pts = _as_cloud(cloud, "search")
    if method == "brute":
        return kernels.nn_brute(q, pts)
    if method != "grid":
        raise ValueError(f"unknown nearest-neighbour method {method!r}; use one of {NN_METHODS}")
    if q.shape[0] == 0:
        return np.zeros(0, dtype=np.int64), np.zeros(0)
    cell = default_cell(pts) if cell is None else float(cell)
    if not cell > 0:
        raise ValueError("grid cell size must be positive")
    return kernels.nn_grid(q, pts, _bounded_cell(pts, cell))


def nearest_neighbor(query, cloud, method: str = "grid") -> tuple[int, float]:
    idx, dist = nearest_neighbors(np.asarray(query, dtype=np.float64).reshape(1, 3), cloud, method)
    return int(idx[0]), float(dist[0])


def _distances(a, b, method):
    return nearest_neighbors(_as_cloud(a, "query"), _as_cloud(b, "reference"), method)[1]


def accuracy_distance(recon, gt, cap: float = DEFAULT_CAP, method: str = "grid") -> float:
    """Mean distance from each reconstructed point to the ground truth, clamped at ``cap``."""
    return float(np.minimum(_distances(recon, gt, method), cap).mean())


def completeness_distance(recon, gt, cap: float = DEFAULT_CAP, method: str = "grid") -> float:
    """Mean distance from each ground-truth point to the reconstruction, clamped at ``cap``."""
    return accuracy_distance(gt, recon, cap, method)


def _fscore(p: float, r: float) -> float:
    return 0.0 if p + r == 0 else 2.0 * p * r / (p + r)


def percentage_metrics(recon, gt, threshold: float, method: str = "grid") -> tuple[float, float, float]:
    """(precision %, recall %, f-score %) at one distance threshold."""
    p = 100.0 * float(np.mean(_distances(recon, gt, method) <= threshold))
    r = 100.0 * float(np.mean(_distances(gt, recon, method) <= threshold))
    return p, r, _fscore(p, r)


@dataclass
class MetricReport:
    mean_accuracy: float
    mean_completeness: float
    overall: float
    thresholds: list
    precision: list
    recall: list
    f_score: list
    recon_points: int
    gt_points: int
    cap: float = DEFAULT_CAP

    def as_pairs(self) -> list:
        out = [("mean_accuracy", self.mean_accuracy), ("mean_completeness", self.mean_completeness),
               ("overall", self.overall)]
        for t, p, r, f in zip(self.thresholds, self.precision, self.recall, self.f_score):
            out += [(f"precision@{t:g}", p), (f"recall@{t:g}", r), (f"f_score@{t:g}", f)]
        out += [("recon_points", self.recon_points), ("gt_points", self.gt_points), ("cap", self.cap)]
        return out

    def to_keyvalue(self) -> str:
        return "".join(f"{k}={v!r}\n" if isinstance(v, float) else f"{k}={v}\n"
                       for k, v in self.as_pairs())

    def to_table(self) -> str:
        rows = [("metric", "value")] + [(k, f"{v:.6g}" if isinstance(v, float) else str(v))
                                        for k, v in self.as_pairs()]
        w = max(len(k) for k, _ in rows)
        lines = [f"{k:<{w}}  {v}" for k, v in rows]
        lines.insert(1, "-" * (w + 2 + max(len(v) for _, v in rows)))
        return "\n".join(lines) + "\n"


def evaluate(recon, gt, cap: float = DEFAULT_CAP,
             thresholds: Sequence[float] = DEFAULT_THRESHOLDS, method: str = "grid") -> MetricReport:
    recon = _as_cloud(recon, "reconstructed")
    gt = _as_cloud(gt, "ground-truth")
    d_acc = _distances(recon, gt, method)
    d_comp = _distances(gt, recon, method)
    acc = float(np.minimum(d_acc, cap).mean())
    comp = float(np.minimum(d_comp, cap).mean())
    prec, rec, fs = [], [], []
    for t in thresholds:
        p = 100.0 * float(np.mean(d_acc <= t))
        r = 100.0 * float(np.mean(d_comp <= t))
        prec.append(p)
        rec.append(r)
        fs.append(_fscore(p, r))
    return MetricReport(acc, comp, (acc + comp) / 2.0, [float(t) for t in thresholds], prec, rec, fs,
                        recon.shape[0], gt.shape[0], float(cap))


def read_report(path) -> dict:
    out = {}
    with open(path) as f:
        for line in f:
            if line.strip():
                k, v = line.rstrip("\n").split("=", 1)
                out[k] = float(v) if "." in v or "e" in v or "inf" in v or "nan" in v else int(v)
    return out

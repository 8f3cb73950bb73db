"""Training samples, the loss, the training loop and inference."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from ..geometry import Camera, ViewSelectionParams, depth_samples, select_source_views
from ..tensor import Adam, Tape, Tensor, masked_l1
from .model import FEATURE_DOWNSAMPLE, DepthNet, ForwardResult, normalize_image

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    lam: float = 1.0
    num_views: int = 3
    iterations: int = 1000
    lr: float = 1e-3
    seed: int = 0

    def __post_init__(self):
        if self.num_views < 2:
            raise ValueError(f"num_views must be at least 2, got {self.num_views}")
        if self.lam < 0:
            raise ValueError(f"lambda must be non-negative, got {self.lam}")
        if self.iterations < 0:
            raise ValueError("iterations must be non-negative")


@dataclass
class Sample:
    """One reference view with its sources; ``images`` are normalized ``[3, H, W]``."""

    images: list
    cams: list
    depths: np.ndarray
    gt: Optional[np.ndarray] = None  # [h, w] at feature resolution
    mask: Optional[np.ndarray] = None
    ref_index: int = 0
    view_indices: tuple = ()


def make_sample(bundle, ref: int, num_views: int,
                params: ViewSelectionParams = ViewSelectionParams(), dtype=np.float32) -> Sample:
    """Reference ``ref`` plus the ``num_views - 1`` best-scoring sources of ``bundle``."""
    if num_views < 2:
        raise ValueError("num_views must be at least 2")
    if num_views > bundle.num_views:
        raise ValueError(f"asked for {num_views} views, scene has {bundle.num_views}")
    srcs = select_source_views(ref, bundle.cameras, bundle.tracks, num_views - 1, params)
    idx = (ref, *srcs)
    images = [normalize_image(bundle.images[i], dtype) for i in idx]
    cams = [bundle.cameras[i] for i in idx]
    depths = depth_samples(cams[0].hypotheses)
    gt = mask = None
    if bundle.has_ground_truth:
        s = FEATURE_DOWNSAMPLE
        gt = np.asarray(bundle.depths[ref][::s, ::s], dtype=dtype)
        mask = np.asarray(bundle.masks[ref][::s, ::s], dtype=bool)
    return Sample(images, cams, depths, gt, mask, ref, idx)


def depth_loss(result: ForwardResult, gt, mask, lam: float = 1.0) -> Tensor:
    """Masked mean absolute error of the initial estimate plus ``lam`` times that of the refined one."""
    loss = masked_l1(result.initial, gt, mask)
    if result.refined is not None and lam != 0:
        loss = loss + masked_l1(result.refined, gt, mask) * lam
    return loss


@dataclass
class TrainResult:
    loss_history: list = field(default_factory=list)
    skipped: list = field(default_factory=list)


def train(net: DepthNet, samples: Sequence[Sample], cfg: TrainConfig,
          optimizer: Optional[Adam] = None) -> TrainResult:
    """Run ``cfg.iterations`` single-sample steps, visiting samples in a seeded order.

    Samples without ground truth or with an empty mask are skipped (and
    logged) before training starts.
    """
    usable = []
    result = TrainResult()
    for i, s in enumerate(samples):
        if s.gt is None or s.mask is None or not s.mask.any():
            log.warning("skipping sample %d (reference view %d): no valid ground-truth pixels",
                        i, s.ref_index)
            result.skipped.append(i)
        else:
            usable.append(s)
    if not usable and cfg.iterations:
        raise ValueError("no training sample has valid ground truth")
    opt = optimizer or Adam(net.parameters(), lr=cfg.lr)
    rng = np.random.default_rng(cfg.seed)
    order: list = []
    for step in range(cfg.iterations):
        if not order:
            order = list(rng.permutation(len(usable)))
        s = usable[order.pop()]
        opt.zero_grad()
        with Tape() as tape:
            out = net.forward(s.images, s.cams, s.depths, mode="train")
            loss = depth_loss(out, s.gt, s.mask, cfg.lam)
        loss.backward(tape)
        opt.step()
        result.loss_history.append(float(loss.item()))
        if step % 50 == 0 or step == cfg.iterations - 1:
            log.info("step %d loss %.6g", step, result.loss_history[-1])
    return result


def infer(net: DepthNet, images: Sequence[np.ndarray], cams: Sequence[Camera],
          depths=None, mode: str = "eval") -> tuple[np.ndarray, np.ndarray]:
    """Depth map and probability volume for ``images[0]``; any number of views >= 2.

    The refined depth is clipped to the hypothesis range, like the initial
    estimate.
    """
    if len(images) < 2:
        raise ValueError("inference needs a reference and at least one source view")
    if depths is None:
        depths = depth_samples(cams[0].hypotheses)
    depths = np.asarray(depths, dtype=np.float64)
    out = net.forward(images, cams, depths, mode=mode)
    depth = np.clip(out.depth.data, depths.min(), depths.max()).astype(out.depth.dtype)
    return depth, out.prob.data.copy()


def validation_loss(net: DepthNet, samples: Sequence[Sample], lam: float = 1.0) -> float:
    """Mean loss over ``samples`` in inference mode."""
    vals = []
    for s in samples:
        out = net.forward(s.images, s.cams, s.depths, mode="eval")
        vals.append(float(depth_loss(out, s.gt, s.mask, lam).item()))
    if not vals:
        raise ValueError("no validation samples")
    return float(np.mean(vals))


def median_depth_error(net: DepthNet, sample: Sample, mode: str = "eval") -> float:
    depth, _ = infer(net, sample.images, sample.cams, sample.depths, mode)
    return float(np.median(np.abs(depth - sample.gt)[sample.mask]))

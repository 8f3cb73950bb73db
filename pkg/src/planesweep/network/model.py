"""Feature towers, cost volume, 3-D U-Net regularizer, depth regression and refinement."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from ..geometry import Camera, warp_to_volume
from ..tensor import (
    Tensor,
    add,
    concat,
    expectation_along_depth,
    mean_across,
    reshape,
    softmax_axis,
    variance_across,
)
from ..tensor.core import make_result
from .layers import NORM_MODES, ConvBlock, DeconvBlock, ParamStore

FEATURE_DOWNSAMPLE = 4
COST_METRICS = ("variance", "mean")


@dataclass
class FeatureExtractorConfig:
    channels: tuple = (8, 8, 16, 16, 16, 32, 32, 32)
    strides: tuple = (1, 1, 2, 1, 1, 2, 1, 1)
    single_layer: bool = False
    single_kernel: int = 7

    def __post_init__(self):
        self.channels = tuple(int(c) for c in self.channels)
        self.strides = tuple(int(s) for s in self.strides)
        if len(self.channels) != len(self.strides):
            raise ValueError("channels and strides must have the same length")
        if int(np.prod(self.strides)) != FEATURE_DOWNSAMPLE:
            raise ValueError(f"strides must downsample by {FEATURE_DOWNSAMPLE} in total")

    @property
    def kernels(self) -> tuple:
        return tuple(5 if s == 2 else 3 for s in self.strides)

    @property
    def out_channels(self) -> int:
        return self.channels[-1]


@dataclass
class RegularizerConfig:
    base_channels: int = 8
    scales: int = 4

    @property
    def divisor(self) -> int:
        return 2 ** (self.scales - 1)


@dataclass
class RefinerConfig:
    channels: int = 32
    enabled: bool = True


@dataclass
class NetworkConfig:
    features: FeatureExtractorConfig = field(default_factory=FeatureExtractorConfig)
    regularizer: RegularizerConfig = field(default_factory=RegularizerConfig)
    refiner: RefinerConfig = field(default_factory=RefinerConfig)
    cost_metric: str = "variance"

    def __post_init__(self):
        if self.cost_metric not in COST_METRICS:
            raise ValueError(f"cost_metric must be one of {COST_METRICS}, got {self.cost_metric!r}")

    @classmethod
    def reduced(cls, **overrides) -> "NetworkConfig":
        """Small channel schedule used for desk-scale experiments and tests."""
        cfg = cls(FeatureExtractorConfig(channels=(4, 4, 8, 8, 8, 8, 8, 8)),
                  RegularizerConfig(base_channels=4), RefinerConfig(channels=8))
        for k, v in overrides.items():
            setattr(cfg, k, v)
        cfg.__post_init__()
        return cfg


def normalize_image(image: np.ndarray, dtype=np.float32) -> np.ndarray:
    """uint8 ``[H, W, 3]`` -> zero-mean unit-variance ``[3, H, W]``."""
    img = np.asarray(image, dtype=np.float64) / 255.0
    img = (img - img.mean()) / np.sqrt(img.var() + 1e-8)
    return np.ascontiguousarray(img.transpose(2, 0, 1)).astype(dtype)


def downsample_image(image: np.ndarray, factor: int = FEATURE_DOWNSAMPLE) -> np.ndarray:
    """Average-pool ``[C, H, W]`` by ``factor``."""
    C, H, W = image.shape
    return image.reshape(C, H // factor, factor, W // factor, factor).mean(axis=(2, 4))


class FeatureNet:
    def __init__(self, store: ParamStore, cfg: FeatureExtractorConfig):
        self.cfg = cfg
        if cfg.single_layer:
            self.layers = [ConvBlock(store, "feature.single", 3, cfg.out_channels, cfg.single_kernel,
                                     stride=FEATURE_DOWNSAMPLE, norm=False, act=False)]
            return
        self.layers = []
        cin = 3
        n = len(cfg.channels)
        for i, (c, s, k) in enumerate(zip(cfg.channels, cfg.strides, cfg.kernels)):
            last = i == n - 1
            self.layers.append(ConvBlock(store, f"feature.conv{i}", cin, c, k, stride=s,
                                         norm=not last, act=not last))
            cin = c

    def __call__(self, image: Tensor, mode: str) -> Tensor:
        x = image
        for layer in self.layers:
            x = layer(x, mode)
        return x


class CostRegNet:
    """Four-scale 3-D encoder-decoder with additive skips and a 1-channel head."""

    def __init__(self, store: ParamStore, in_channels: int, cfg: RegularizerConfig):
        self.cfg = cfg
        b = cfg.base_channels
        chans = [b * 2 ** s for s in range(cfg.scales)]
        self.enc = []
        cin = in_channels
        for s, c in enumerate(chans):
            stride = 1 if s == 0 else 2
            self.enc.append((ConvBlock(store, f"reg.enc{s}a", cin, c, 3, stride, nd=3),
                             ConvBlock(store, f"reg.enc{s}b", c, c, 3, 1, nd=3)))
            cin = c
        self.dec = [DeconvBlock(store, f"reg.dec{s}", chans[s + 1], chans[s])
                    for s in reversed(range(cfg.scales - 1))]
        self.head = ConvBlock(store, "reg.head", chans[0], 1, 3, nd=3, norm=False, act=False)

    def __call__(self, cost: Tensor, mode: str) -> Tensor:
        _, D, h, w = cost.shape
        k = self.cfg.divisor
        if D % k or h % k or w % k:
            raise ValueError(f"cost volume extents (D={D}, h={h}, w={w}) must be divisible by {k}")
        skips = []
        x = cost
        for a, b in self.enc:
            x = b(a(x, mode), mode)
            skips.append(x)
        for dec, skip in zip(self.dec, reversed(skips[:-1])):
            x = add(dec(x, mode), skip)
        logits = self.head(x, mode)
        return softmax_axis(reshape(logits, logits.shape[1:]), axis=0)


class RefineNet:
    def __init__(self, store: ParamStore, cfg: RefinerConfig):
        c = cfg.channels
        self.layers = [ConvBlock(store, "refine.conv0", 4, c, 3),
                       ConvBlock(store, "refine.conv1", c, c, 3),
                       ConvBlock(store, "refine.conv2", c, c, 3),
                       ConvBlock(store, "refine.res", c, 1, 3, norm=False, act=False,
                                 zero_init=True)]

    def __call__(self, depth: Tensor, image: np.ndarray, mode: str) -> Tensor:
        return refine_depth(depth, image, self.layers, mode)


def _minmax(depth: np.ndarray) -> tuple[float, float]:
    lo, hi = float(depth.min()), float(depth.max())
    return lo, hi


def refine_depth(depth: Tensor, image: np.ndarray, layers, mode: str = "eval") -> Tensor:
    """Residual refinement of ``depth[h, w]`` guided by ``image[3, h, w]``.

    The depth is rescaled to [0, 1] with its own min and max (held constant
    for differentiation), the residual predicted in that range is scaled back
    and added. A constant map is placed at 0.5.
    """
    image = np.asarray(image.data if isinstance(image, Tensor) else image)
    if image.shape[1:] != depth.shape:
        raise ValueError(f"image {image.shape[1:]} and depth {depth.shape} sizes differ")
    lo, hi = _minmax(depth.data)
    span = hi - lo
    if span > 0:
        normed = (depth - lo) * (1.0 / span)
    else:
        normed = make_result(np.full(depth.shape, 0.5, dtype=depth.dtype), (depth,),
                             lambda g: (np.zeros_like(g),), "constant_depth")
        span = 1.0
    x = concat([reshape(normed, (1,) + depth.shape), Tensor(image.astype(depth.dtype))], axis=0)
    for layer in layers:
        x = layer(x, mode)
    residual = reshape(x, depth.shape)
    return depth + residual * span


@dataclass
class ForwardResult:
    prob: Tensor
    initial: Tensor
    refined: Optional[Tensor]

    @property
    def depth(self) -> Tensor:
        return self.refined if self.refined is not None else self.initial


class DepthNet:
    """End-to-end network; parameters are shared by all feature towers."""

    def __init__(self, cfg: Optional[NetworkConfig] = None, seed: int = 0, dtype=np.float32):
        self.cfg = cfg or NetworkConfig()
        self.store = ParamStore(np.random.default_rng(seed), dtype)
        self.features = FeatureNet(self.store, self.cfg.features)
        self.regularizer = CostRegNet(self.store, self.cfg.features.out_channels, self.cfg.regularizer)
        self.refiner = RefineNet(self.store, self.cfg.refiner) if self.cfg.refiner.enabled else None

    @property
    def dtype(self):
        return self.store.dtype

    def parameters(self) -> list:
        return list(self.store.params.values())

    def state_dict(self) -> dict:
        return self.store.state()

    def load_state_dict(self, state: dict):
        self.store.load(state)

    @property
    def input_divisor(self) -> int:
        return FEATURE_DOWNSAMPLE * self.cfg.regularizer.divisor

    def check_image_size(self, height: int, width: int):
        k = self.input_divisor
        if height % k or width % k:
            ph = (-height) % k
            pw = (-width) % k
            raise ValueError(f"image size {width}x{height} must be divisible by {k}; "
                             f"pad by {pw} columns and {ph} rows")

    def extract_features(self, image: np.ndarray, mode: str = "eval") -> Tensor:
        """``image`` is a normalized ``[3, H, W]`` array."""
        if mode not in NORM_MODES:
            raise ValueError(f"unknown norm mode {mode!r}")
        self.check_image_size(*image.shape[1:])
        return self.features(Tensor(np.asarray(image, dtype=self.dtype)), mode)

    def forward(self, images: Sequence[np.ndarray], cams: Sequence[Camera], depths,
                mode: str = "eval") -> ForwardResult:
        """``images[0]``/``cams[0]`` are the reference; any number of views >= 2 works."""
        feats = [self.extract_features(img, mode) for img in images]
        cost = build_cost_volume(feats, cams, depths, self.cfg.cost_metric)
        prob = self.regularizer(cost, mode)
        initial = expectation_along_depth(prob, depths)
        refined = None
        if self.refiner is not None:
            small = downsample_image(np.asarray(images[0]))
            refined = self.refiner(initial, small, mode)
        return ForwardResult(prob, initial, refined)


def build_cost_volume(features: Sequence[Tensor], cams: Sequence[Camera], depths,
                      metric: str = "variance") -> Tensor:
    """Warp every feature map onto the reference planes and reduce across views.

    ``features[0]`` is the reference and is broadcast over depth without
    resampling. Cameras are at image resolution.
    """
    if len(features) != len(cams):
        raise ValueError(f"{len(features)} feature maps but {len(cams)} cameras")
    if len(features) < 2:
        raise ValueError("need a reference and at least one source view")
    if metric not in COST_METRICS:
        raise ValueError(f"unknown cost metric {metric!r}")
    depths = np.asarray(depths, dtype=np.float64)
    ref = features[0]
    F, h, w = ref.shape
    D = depths.size
    ref_volume = make_result(np.broadcast_to(ref.data[:, None], (F, D, h, w)).copy(), (ref,),
                             lambda g: (g.sum(axis=1),), "broadcast_depth")
    volumes = [ref_volume]
    for feat, cam in zip(features[1:], cams[1:]):
        if feat.shape != ref.shape:
            raise ValueError(f"feature map shapes differ: {feat.shape} vs {ref.shape}")
        volumes.append(warp_to_volume(feat, cams[0], cam, depths, FEATURE_DOWNSAMPLE))
    return variance_across(volumes) if metric == "variance" else mean_across(volumes)

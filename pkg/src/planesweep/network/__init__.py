from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .layers import NORM_MODES, ConvBlock, DeconvBlock, ParamStore
from .model import (
    COST_METRICS,
    FEATURE_DOWNSAMPLE,
    DepthNet,
    FeatureExtractorConfig,
    ForwardResult,
    NetworkConfig,
    RefinerConfig,
    RegularizerConfig,
    build_cost_volume,
    downsample_image,
    normalize_image,
    refine_depth,
)
from .train import (
    Sample,
    TrainConfig,
    TrainResult,
    depth_loss,
    infer,
    make_sample,
    median_depth_error,
    train,
    validation_loss,
)

__all__ = [
    "COST_METRICS",
    "CheckpointError",
    "ConvBlock",
    "DeconvBlock",
    "DepthNet",
    "FEATURE_DOWNSAMPLE",
    "FeatureExtractorConfig",
    "ForwardResult",
    "NORM_MODES",
    "NetworkConfig",
    "ParamStore",
    "RefinerConfig",
    "RegularizerConfig",
    "Sample",
    "TrainConfig",
    "TrainResult",
    "build_cost_volume",
    "depth_loss",
    "downsample_image",
    "infer",
    "load_checkpoint",
    "make_sample",
    "median_depth_error",
    "normalize_image",
    "refine_depth",
    "save_checkpoint",
    "train",
    "validation_loss",
]

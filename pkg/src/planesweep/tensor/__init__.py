from .core import (
    DEFAULT_DTYPE,
    Tape,
    Tensor,
    absolute,
    add,
    as_tensor,
    backward,
    concat,
    getitem,
    mul,
    reshape,
    square,
    stack,
    sub,
    tmean,
    tsum,
)
from .gradcheck import check_gradient
from .ops import (
    batch_norm,
    bilinear_sample,
    conv,
    conv2d,
    conv3d,
    expectation_along_depth,
    masked_l1,
    mean_across,
    relu,
    softmax_axis,
    transposed_conv,
    variance_across,
)
from .optim import Adam, OptimizerState, optimizer_step

__all__ = [
    "Adam",
    "DEFAULT_DTYPE",
    "OptimizerState",
    "Tape",
    "Tensor",
    "absolute",
    "add",
    "as_tensor",
    "backward",
    "batch_norm",
    "bilinear_sample",
    "check_gradient",
    "concat",
    "conv",
    "conv2d",
    "conv3d",
    "expectation_along_depth",
    "getitem",
    "masked_l1",
    "mean_across",
    "mul",
    "optimizer_step",
    "relu",
    "reshape",
    "softmax_axis",
    "square",
    "stack",
    "sub",
    "tmean",
    "transposed_conv",
    "tsum",
    "variance_across",
]

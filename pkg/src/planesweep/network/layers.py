"""Parameter containers for convolution blocks."""

from __future__ import annotations

from math import prod, sqrt

import numpy as np

from ..tensor import Tensor, batch_norm, conv, relu, transposed_conv

NORM_MODES = ("train", "eval", "frozen")


class ParamStore:
    """Ordered named parameters (trainable) and buffers (running statistics)."""

    def __init__(self, rng: np.random.Generator, dtype=np.float32):
        self.rng = rng
        self.dtype = dtype
        self.params: dict[str, Tensor] = {}
        self.buffers: dict[str, np.ndarray] = {}

    def add(self, name: str, data: np.ndarray) -> Tensor:
        if name in self.params:
            raise KeyError(f"duplicate parameter {name}")
        t = Tensor(np.asarray(data, dtype=self.dtype), requires_grad=True, name=name)
        self.params[name] = t
        return t

    def uniform(self, name: str, shape, fan_in: float) -> Tensor:
        bound = sqrt(6.0 / fan_in)
        return self.add(name, self.rng.uniform(-bound, bound, size=shape))

    def buffer(self, name: str, data: np.ndarray) -> np.ndarray:
        arr = np.asarray(data, dtype=self.dtype).copy()
        self.buffers[name] = arr
        return arr

    def state(self) -> dict:
        out = {k: t.data for k, t in self.params.items()}
        out.update(self.buffers)
        return out

    def load(self, state: dict):
        expected = set(self.params) | set(self.buffers)
        missing = expected - set(state)
        extra = set(state) - expected
        if missing or extra:
            raise ValueError(f"checkpoint mismatch: missing {sorted(missing)}, "
                             f"unexpected {sorted(extra)}")
        for k, t in self.params.items():
            if state[k].shape != t.shape:
                raise ValueError(f"{k}: checkpoint shape {state[k].shape} != model {t.shape}")
            t.data = np.array(state[k], dtype=self.dtype)
        for k, b in self.buffers.items():
            if state[k].shape != b.shape:
                raise ValueError(f"{k}: checkpoint shape {state[k].shape} != model {b.shape}")
            b[...] = state[k]


class ConvBlock:
    """Convolution, optionally followed by batch norm and ReLU.

    Blocks with normalization carry no conv bias (BN's shift replaces it).
    """

    def __init__(self, store: ParamStore, name: str, cin: int, cout: int, ksize: int,
                 stride: int = 1, nd: int = 2, norm: bool = True, act: bool = True,
                 zero_init: bool = False):
        shape = (cout, cin) + (ksize,) * nd
        if zero_init:
            self.weight = store.add(f"{name}.weight", np.zeros(shape))
        else:
            self.weight = store.uniform(f"{name}.weight", shape, cin * ksize ** nd)
        self.stride = stride
        self.norm = norm
        self.act = act
        self.bias = None if norm else store.add(f"{name}.bias", np.zeros(cout))
        if norm:
            self.gamma = store.add(f"{name}.bn.gamma", np.ones(cout))
            self.beta = store.add(f"{name}.bn.beta", np.zeros(cout))
            self.running_mean = store.buffer(f"{name}.bn.running_mean", np.zeros(cout))
            self.running_var = store.buffer(f"{name}.bn.running_var", np.ones(cout))

    def _post(self, y: Tensor, mode: str) -> Tensor:
        if self.norm:
            y = batch_norm(y, self.gamma, self.beta, mode, self.running_mean, self.running_var)
        return relu(y) if self.act else y

    def __call__(self, x: Tensor, mode: str = "train") -> Tensor:
        return self._post(conv(x, self.weight, self.bias, self.stride), mode)


class DeconvBlock(ConvBlock):
    """Stride-2 transposed convolution + batch norm + ReLU."""

    def __init__(self, store: ParamStore, name: str, cin: int, cout: int, ksize: int = 3,
                 stride: int = 2, nd: int = 3):
        shape = (cin, cout) + (ksize,) * nd
        self.weight = store.uniform(f"{name}.weight", shape, cin * prod(shape[2:]) / stride ** nd)
        self.stride = stride
        self.norm = True
        self.act = True
        self.bias = None
        self.gamma = store.add(f"{name}.bn.gamma", np.ones(cout))
        self.beta = store.add(f"{name}.bn.beta", np.zeros(cout))
        self.running_mean = store.buffer(f"{name}.bn.running_mean", np.zeros(cout))
        self.running_var = store.buffer(f"{name}.bn.running_var", np.ones(cout))

    def __call__(self, x: Tensor, mode: str = "train") -> Tensor:
        return self._post(transposed_conv(x, self.weight, None, self.stride), mode)

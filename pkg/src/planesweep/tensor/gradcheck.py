"""Central finite-difference verification of analytic gradients."""

from __future__ import annotations

from typing import Callable, Optional, Sequence

import numpy as np

from .core import Tensor


def _project(out: Tensor, weights: np.ndarray) -> Tensor:
    return (out * Tensor(weights)).sum()


def check_gradient(fn: Callable[..., Tensor], inputs: Sequence[Tensor], h: float = 1e-5,
                   floor: float = 1e-4, max_probes: Optional[int] = None,
                   seed: int = 0, skip: Optional[Callable[[int, tuple], bool]] = None) -> float:
    """Max relative error between backprop and central differences.

    The (possibly non-scalar) output of ``fn`` is reduced with fixed random
    weights so every output element contributes. For each probed element the
    error is ``|a - n| / max(|a|, |n|, floor)``. ``max_probes`` caps the number
    of elements checked per input (chosen at random); ``skip(i, idx)`` lets a
    caller exclude points where the op is not differentiable.
    """
    rng = np.random.default_rng(seed)
    for t in inputs:
        t.zero_grad()
    out = fn(*inputs)
    weights = rng.standard_normal(out.shape)
    _project(out, weights).backward()

    def value() -> float:
        return float((fn(*inputs).data * weights).sum())

    worst = 0.0
    for i, t in enumerate(inputs):
        if not t.requires_grad:
            continue
        analytic = t.grad if t.grad is not None else np.zeros_like(t.data)
        flat_idx = np.arange(t.size)
        if max_probes is not None and t.size > max_probes:
            flat_idx = rng.choice(t.size, size=max_probes, replace=False)
        for fi in flat_idx:
            idx = np.unravel_index(fi, t.shape)
            if skip is not None and skip(i, idx):
                continue
            orig = t.data[idx]
            t.data[idx] = orig + h
            fp = value()
            t.data[idx] = orig - h
            fm = value()
            t.data[idx] = orig
            numeric = (fp - fm) / (2 * h)
            a = float(analytic[idx])
            err = abs(a - numeric) / max(abs(a), abs(numeric), floor)
            worst = max(worst, err)
    return worst

"""Hot numeric kernels with a numba path and a pure-numpy fallback.

The numba path is used when numba imports cleanly, unless the environment
variable ``PLANESWEEP_DISABLE_NUMBA`` is set to a non-empty value other than
``0``. The flag is read once, at import time.
"""

import os

from . import _numpy

_flag = os.environ.get("PLANESWEEP_DISABLE_NUMBA", "")
NUMBA_REQUESTED = _flag in ("", "0")

backend = _numpy
if NUMBA_REQUESTED:
    try:
        from . import _numba as backend  # noqa: F811
    except ImportError:  # pragma: no cover - numba is a declared dependency
        backend = _numpy

USING_NUMBA = backend is not _numpy
BACKEND_NAME = "numba" if USING_NUMBA else "numpy"


def bilinear_forward(img, x, y):
    return backend.bilinear_forward(img, x, y)


def bilinear_backward(img, x, y, grad_out, need_coords=True):
    return backend.bilinear_backward(img, x, y, grad_out, need_coords)


def nn_brute(queries, points):
    return backend.nn_brute(queries, points)


def nn_grid(queries, points, cell):
    return backend.nn_grid(queries, points, cell)


__all__ = [
    "BACKEND_NAME",
    "USING_NUMBA",
    "bilinear_backward",
    "bilinear_forward",
    "nn_brute",
    "nn_grid",
]

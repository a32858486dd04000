"""Hot kernels with a numba path and a pure-numpy fallback.

The backend is chosen once at import time from the ``SCOREMEM_BACKEND``
environment variable (``numba`` by default, ``numpy`` to force the fallback).
If numba cannot be imported the numpy path is used silently.
"""

import os

from . import numpy_impl

_requested = os.environ.get("SCOREMEM_BACKEND", "numba").strip().lower()
if _requested not in ("numba", "numpy"):
    raise ImportError(f"SCOREMEM_BACKEND must be 'numba' or 'numpy', got {_requested!r}")

_impl = numpy_impl
if _requested == "numba":
    try:
        from . import numba_impl as _impl
    except ImportError:  # pragma: no cover - numba missing
        _impl = numpy_impl

BACKEND = "numba" if _impl is not numpy_impl else "numpy"

mixture_stats = _impl.mixture_stats
mixture_weights = _impl.mixture_weights
nearest_two = _impl.nearest_two
mlp_forward = _impl.mlp_forward
loss_and_grad = _impl.loss_and_grad
train_chunk = _impl.train_chunk

__all__ = ["BACKEND", "mixture_stats", "mixture_weights", "nearest_two",
           "mlp_forward", "loss_and_grad", "train_chunk"]

"""Kernel backend selection.

The compiled extension is used when importable; set ``OGSLDA_PURE_PYTHON=1``
to force the numpy fallback.
"""
import os

import numpy as np

from . import _fallback

BACKEND = "python"

if not os.environ.get("OGSLDA_PURE_PYTHON"):
    try:
        from . import _kernels as _impl

        BACKEND = "cython"
    except ImportError:
        _impl = _fallback
else:
    _impl = _fallback


def transition_counts(codes, n: int) -> np.ndarray:
    """N x N matrix of consecutive-pair counts for an integer-coded sequence."""
    return _impl.transition_counts(np.ascontiguousarray(codes, dtype=np.int64), n)


def pairwise_l1(x, y) -> np.ndarray:
    """Matrix of sum |x_a - y_b| over all row pairs."""
    return _impl.pairwise_l1(
        np.ascontiguousarray(x, dtype=np.float64), np.ascontiguousarray(y, dtype=np.float64)
    )

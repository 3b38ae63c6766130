"""Backend selection for the hot loops.

The compiled extension ``_kernels_cy`` is used when it imports; otherwise
the numpy implementation in ``_kernels_py`` is used.  Setting the
environment variable ``TRANSYNC_PURE_PYTHON=1`` forces the fallback.
"""

from __future__ import annotations

import os

from transync import _kernels_py

if os.environ.get("TRANSYNC_PURE_PYTHON", "") not in ("", "0"):
    _impl = _kernels_py
else:
    try:
        from transync import _kernels_cy as _impl
    except ImportError:
        _impl = _kernels_py

BACKEND = "cython" if _impl is not _kernels_py else "python"

pair_moments = _impl.pair_moments
all_pair_moments = _impl.all_pair_moments
max_triple_residual = _impl.max_triple_residual
pair_distance_sum = _impl.pair_distance_sum

__all__ = ["BACKEND", "pair_moments", "all_pair_moments", "max_triple_residual", "pair_distance_sum"]

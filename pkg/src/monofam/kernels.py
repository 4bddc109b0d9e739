"""Kernel backend selection.

The compiled extension is used when it imports and ``MONOFAM_PURE`` is not
set; otherwise the numpy versions are used. ``BACKEND`` names the choice.
"""
import os

from . import _kernels_py

if os.environ.get("MONOFAM_PURE"):
    _impl = _kernels_py
    BACKEND = "python"
else:
    try:
        from . import _kernels as _impl
        BACKEND = "cython"
    except ImportError:
        _impl = _kernels_py
        BACKEND = "python"

weighted_lq_rows = _impl.weighted_lq_rows
pair_gradient_violation = _impl.pair_gradient_violation
scalar_pair_violation = _impl.scalar_pair_violation

__all__ = [
    "BACKEND",
    "weighted_lq_rows",
    "pair_gradient_violation",
    "scalar_pair_violation",
]

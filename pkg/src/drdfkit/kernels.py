"""Kernel backend selection.

The compiled extension is used when importable; set ``DRDFKIT_PURE=1`` to
force the numpy fallback (the benchmark and some tests compare the two).
"""
from __future__ import annotations

import os

from . import _fallback

BACKEND = "numpy"
_impl = _fallback

if not os.environ.get("DRDFKIT_PURE"):
    try:
        from . import _kernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:
        _impl = _fallback

K_NONE, K_II, K_IO, K_OI, K_OO, K_SEP = 0, 1, 2, 3, 4, 5


def get_backend(name: str | None = None):
    """Return the kernel module for ``name`` ("cython", "numpy" or None=active)."""
    if name is None:
        return _impl
    if name == "numpy":
        return _fallback
    if name == "cython":
        from . import _kernels

        return _kernels
    raise ValueError(f"unknown kernel backend {name!r}")


cast_triangles = _impl.cast_triangles
segment_loss_grad = _impl.segment_loss_grad
objective_rows = _impl.objective_rows
momentum_rows = _impl.momentum_rows

"""Kernel backend selection.

The compiled Cython kernel is used when it was built; otherwise the numpy
fallback is used. ``RPCA_BACKEND=python`` forces the fallback and
``RPCA_BACKEND=cython`` makes a missing extension an import error.
"""

import os

from . import _threshold_py

_requested = os.environ.get("RPCA_BACKEND", "auto").lower()

try:
    if _requested == "python":
        raise ImportError("python backend requested")
    from . import _threshold as _compiled
except ImportError:
    if _requested == "cython":
        raise
    _compiled = None

BACKEND = "cython" if _compiled is not None else "python"

KERNELS = {"python": _threshold_py.mark_row_topk}
if _compiled is not None:
    KERNELS["cython"] = _compiled.mark_row_topk


def get_kernel(name=None):
    """Return the top-k marking kernel by name (default: active backend)."""
    name = name or BACKEND
    try:
        return KERNELS[name]
    except KeyError:
        raise ValueError(f"backend {name!r} unavailable; have {sorted(KERNELS)}") from None

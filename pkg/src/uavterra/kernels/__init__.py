"""Blockage kernel backends.

The hot operation of the whole package is "is this 3D segment interrupted
by any building cylinder".  A compiled Cython implementation is preferred;
a pure numpy implementation with identical semantics is the fallback.  Set
``UAVTERRA_PURE_PY=1`` to force the fallback default (the compiled kernel
can still be requested explicitly, e.g. by the benchmark).
"""

from __future__ import annotations

import os

import numpy as np

from uavterra.kernels import _blockage_np
from uavterra.kernels.index import GridIndex, build_grid_index

try:
    from uavterra.kernels import _blockage as _compiled
except ImportError:
    _compiled = None

_FORCE_PY = os.environ.get("UAVTERRA_PURE_PY", "") not in ("", "0")

#: Backend used when no explicit override is given.
BACKEND = "compiled" if (_compiled is not None and not _FORCE_PY) else "numpy"


def have_compiled() -> bool:
    return _compiled is not None


def _coerce(p, q):
    p = np.ascontiguousarray(np.atleast_2d(p), dtype=np.float64)
    q = np.ascontiguousarray(np.atleast_2d(q), dtype=np.float64)
    if p.shape != q.shape or p.shape[1] != 3:
        raise ValueError("segment endpoints must be (n, 3) arrays of equal shape")
    return p, q


def segments_blocked(p, q, bx, by, br, bh, index: GridIndex | None = None,
                     backend: str | None = None) -> np.ndarray:
    """Blocked flag per segment against the packed cylinder arrays.

    ``backend`` overrides the module default ("compiled" or "numpy"),
    mainly for cross-checking the two implementations.
    """
    p, q = _coerce(p, q)
    bx = np.ascontiguousarray(bx, dtype=np.float64)
    by = np.ascontiguousarray(by, dtype=np.float64)
    br = np.ascontiguousarray(br, dtype=np.float64)
    bh = np.ascontiguousarray(bh, dtype=np.float64)
    use = backend or BACKEND
    if use == "compiled":
        if _compiled is None:
            raise RuntimeError("compiled kernel not available in this install")
        return _compiled.segments_blocked(p, q, bx, by, br, bh, index)
    if use == "numpy":
        return _blockage_np.segments_blocked(p, q, bx, by, br, bh, index)
    raise ValueError(f"unknown kernel backend {use!r}")


__all__ = [
    "BACKEND",
    "GridIndex",
    "build_grid_index",
    "have_compiled",
    "segments_blocked",
]

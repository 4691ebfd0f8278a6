"""Pure numpy blockage kernel (fallback backend).

Semantics shared with the compiled kernel: a segment p->q is blocked by a
cylinder iff some interior point (parameter t strictly inside (0, 1)) is
strictly inside the cylinder wall and strictly below its roof.  Grazing
contact therefore never blocks.

The implementation broadcasts segments against all buildings in chunks; the
spatial index used by the compiled kernel is ignored here.
"""

from __future__ import annotations

import numpy as np

# Upper bound on broadcast elements per chunk, keeps memory flat.
_CHUNK_ELEMS = 4_000_000


def _blocked_chunk(p: np.ndarray, q: np.ndarray,
                   bx: np.ndarray, by: np.ndarray,
                   br: np.ndarray, bh: np.ndarray) -> np.ndarray:
    d = q - p                                # (n, 3)
    dx = d[:, 0:1]
    dy = d[:, 1:2]
    dz = d[:, 2:3]
    fx = p[:, 0:1] - bx[None, :]             # (n, m)
    fy = p[:, 1:2] - by[None, :]
    a = dx * dx + dy * dy                    # (n, 1)
    b = 2.0 * (fx * dx + fy * dy)
    c = fx * fx + fy * fy - br[None, :] ** 2

    with np.errstate(invalid="ignore", divide="ignore"):
        disc = b * b - 4.0 * a * c
        sq = np.sqrt(np.maximum(disc, 0.0))
        inv = np.where(a > 0.0, 0.5 / np.where(a > 0.0, a, 1.0), 0.0)
        t1 = (-b - sq) * inv
        t2 = (-b + sq) * inv

    # Horizontal-distance condition holds on (t1, t2) when a > 0 and the
    # discriminant is positive; for vertical segments (a == 0) it holds
    # everywhere iff c < 0.
    vertical = a <= 0.0                      # (n, 1) broadcast
    lo = np.where(vertical, 0.0, np.maximum(t1, 0.0))
    hi = np.where(vertical, 1.0, np.minimum(t2, 1.0))
    feasible = np.where(vertical, c < 0.0, (disc > 0.0) & (lo < hi))

    z_lo = p[:, 2:3] + lo * dz
    z_hi = p[:, 2:3] + hi * dz
    under_roof = np.minimum(z_lo, z_hi) < bh[None, :]
    return np.any(feasible & under_roof, axis=1)


def segments_blocked(p: np.ndarray, q: np.ndarray,
                     bx: np.ndarray, by: np.ndarray,
                     br: np.ndarray, bh: np.ndarray,
                     index=None) -> np.ndarray:
    """Blocked flag per segment; ``index`` accepted for API parity."""
    n = p.shape[0]
    m = bx.size
    out = np.zeros(n, dtype=bool)
    if n == 0 or m == 0:
        return out
    step = max(1, _CHUNK_ELEMS // m)
    for i in range(0, n, step):
        j = min(i + step, n)
        out[i:j] = _blocked_chunk(p[i:j], q[i:j], bx, by, br, bh)
    return out

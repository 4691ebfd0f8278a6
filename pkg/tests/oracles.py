"""Independent reference implementations used to pin module behaviour.

These deliberately avoid the package's analytic code paths: blockage is
checked by dense point sampling along the segment, and band classification
(for excluding grazing contacts) is computed from interval arithmetic that
is shared with no production code.
"""

import numpy as np


def sampled_blocked(p, q, bx, by, br, bh, n_points=10_000):
    """Blocked decision by testing n_points interior points for membership."""
    p = np.asarray(p, float)
    q = np.asarray(q, float)
    t = (np.arange(n_points) + 0.5) / n_points
    pts = p[None, :] + t[:, None] * (q - p)[None, :]
    for k in range(len(bx)):
        dx = pts[:, 0] - bx[k]
        dy = pts[:, 1] - by[k]
        inside = (dx * dx + dy * dy < br[k] ** 2) & (pts[:, 2] < bh[k])
        if inside.any():
            return True
    return False


def blocked_measure_and_margin(p, q, bx, by, br, bh):
    """Exact per-scene blocked t-measure and metric margin to the boundary.

    Returns (measure, margin_m): ``measure`` is the total parameter length
    of the blocked subset of (0, 1); ``margin_m`` is the smallest metre
    distance by which any cylinder either barely blocks or barely misses
    (radial wall clearance or roof clearance), used to define the grazing
    band.
    """
    p = np.asarray(p, float)
    q = np.asarray(q, float)
    d = q - p
    a = d[0] ** 2 + d[1] ** 2
    measure = 0.0
    margin = np.inf
    for k in range(len(bx)):
        fx, fy = p[0] - bx[k], p[1] - by[k]
        r, h = br[k], bh[k]
        if a <= 0.0:
            dmin = np.hypot(fx, fy)
            margin = min(margin, abs(dmin - r))
            if dmin >= r:
                continue
            lo, hi = 0.0, 1.0
        else:
            b2 = 2.0 * (fx * d[0] + fy * d[1])
            c = fx * fx + fy * fy - r * r
            t_star = np.clip(-b2 / (2.0 * a), 0.0, 1.0)
            dmin = np.sqrt(max((fx + t_star * d[0]) ** 2 + (fy + t_star * d[1]) ** 2, 0.0))
            margin = min(margin, abs(dmin - r))
            disc = b2 * b2 - 4.0 * a * c
            if disc <= 0.0:
                continue
            sq = np.sqrt(disc)
            lo = max((-b2 - sq) / (2.0 * a), 0.0)
            hi = min((-b2 + sq) / (2.0 * a), 1.0)
            if lo >= hi:
                continue
        z_lo = p[2] + lo * d[2]
        z_hi = p[2] + hi * d[2]
        margin = min(margin, abs(min(z_lo, z_hi) - h))
        if d[2] == 0.0:
            sub = (hi - lo) if p[2] < h else 0.0
        else:
            t_h = (h - p[2]) / d[2]
            if d[2] > 0.0:
                sub = min(hi, t_h) - lo
            else:
                sub = hi - max(lo, t_h)
        measure += max(sub, 0.0)
    return measure, margin


def grazing_band(p, q, bx, by, br, bh, eps=1e-3):
    """True when the case sits in the grazing band of width ``eps``.

    Either the blocked subset is shorter than ``eps`` along the segment
    parameter (a graze clip a point sampler may miss) or some cylinder
    boundary is within ``eps`` metres of deciding the outcome.
    """
    measure, margin = blocked_measure_and_margin(p, q, bx, by, br, bh)
    if 0.0 < measure < eps:
        return True
    return margin < eps

# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled blockage kernel.

Same contract as the numpy fallback: a segment is blocked iff an interior
point (t strictly in (0, 1)) lies strictly inside a cylinder wall and
strictly below its roof.  With a grid index the 2D projection of each
segment is walked cell by cell (Amanatides & Woo) and only buildings
registered in visited cells are tested; without an index all buildings are
tested with an early exit.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport sqrt, floor

cnp.import_array()


cdef inline bint _hits_cylinder(double px, double py, double pz,
                                double dx, double dy, double dz,
                                double bx, double by, double br, double bh) nogil:
    cdef double fx = px - bx
    cdef double fy = py - by
    cdef double a = dx * dx + dy * dy
    cdef double b, c, disc, sq, inv, t1, t2, lo, hi, z_lo, z_hi, z_min
    c = fx * fx + fy * fy - br * br
    if a <= 0.0:
        # vertical segment: inside the wall for all t, or never
        if c >= 0.0:
            return False
        lo = 0.0
        hi = 1.0
    else:
        b = 2.0 * (fx * dx + fy * dy)
        disc = b * b - 4.0 * a * c
        if disc <= 0.0:
            return False
        sq = sqrt(disc)
        inv = 0.5 / a
        t1 = (-b - sq) * inv
        t2 = (-b + sq) * inv
        lo = t1 if t1 > 0.0 else 0.0
        hi = t2 if t2 < 1.0 else 1.0
        if lo >= hi:
            return False
    z_lo = pz + lo * dz
    z_hi = pz + hi * dz
    z_min = z_lo if z_lo < z_hi else z_hi
    return z_min < bh


cdef bint _blocked_brute(double px, double py, double pz,
                         double qx, double qy, double qz,
                         const double[::1] bx, const double[::1] by,
                         const double[::1] br, const double[::1] bh) nogil:
    cdef Py_ssize_t m = bx.shape[0]
    cdef Py_ssize_t k
    cdef double dx = qx - px
    cdef double dy = qy - py
    cdef double dz = qz - pz
    for k in range(m):
        if _hits_cylinder(px, py, pz, dx, dy, dz, bx[k], by[k], br[k], bh[k]):
            return True
    return False


cdef bint _blocked_grid(double px, double py, double pz,
                        double qx, double qy, double qz,
                        const double[::1] bx, const double[::1] by,
                        const double[::1] br, const double[::1] bh,
                        double gx0, double gy0, double cell,
                        Py_ssize_t nx, Py_ssize_t ny,
                        const long long[::1] cell_start,
                        const int[::1] items,
                        long long[::1] stamp, long long gen) nogil:
    cdef double dx = qx - px
    cdef double dy = qy - py
    cdef double dz = qz - pz
    cdef double gx1 = gx0 + nx * cell
    cdef double gy1 = gy0 + ny * cell

    # Liang-Barsky clip of the 2D projection against the indexed rectangle;
    # anything outside is guaranteed free of buildings.
    cdef double t_in = 0.0
    cdef double t_out = 1.0
    cdef double pvals[4]
    cdef double qvals[4]
    cdef double r
    cdef int side
    pvals[0] = -dx; qvals[0] = px - gx0
    pvals[1] = dx;  qvals[1] = gx1 - px
    pvals[2] = -dy; qvals[2] = py - gy0
    pvals[3] = dy;  qvals[3] = gy1 - py
    for side in range(4):
        if pvals[side] == 0.0:
            if qvals[side] < 0.0:
                return False
        else:
            r = qvals[side] / pvals[side]
            if pvals[side] < 0.0:
                if r > t_in:
                    t_in = r
            else:
                if r < t_out:
                    t_out = r
    if t_in > t_out:
        return False

    cdef double sx = px + t_in * dx
    cdef double sy = py + t_in * dy
    cdef double ex = px + t_out * dx
    cdef double ey = py + t_out * dy

    cdef Py_ssize_t ix = <Py_ssize_t>floor((sx - gx0) / cell)
    cdef Py_ssize_t iy = <Py_ssize_t>floor((sy - gy0) / cell)
    cdef Py_ssize_t ix_end = <Py_ssize_t>floor((ex - gx0) / cell)
    cdef Py_ssize_t iy_end = <Py_ssize_t>floor((ey - gy0) / cell)
    if ix < 0: ix = 0
    if ix > nx - 1: ix = nx - 1
    if iy < 0: iy = 0
    if iy > ny - 1: iy = ny - 1
    if ix_end < 0: ix_end = 0
    if ix_end > nx - 1: ix_end = nx - 1
    if iy_end < 0: iy_end = 0
    if iy_end > ny - 1: iy_end = ny - 1

    cdef int step_x = 1 if dx > 0.0 else (-1 if dx < 0.0 else 0)
    cdef int step_y = 1 if dy > 0.0 else (-1 if dy < 0.0 else 0)
    cdef double t_max_x, t_max_y, t_delta_x, t_delta_y, boundary
    # Parameterised on the original t in [0, 1].
    if step_x != 0:
        boundary = gx0 + (ix + (1 if step_x > 0 else 0)) * cell
        t_max_x = (boundary - px) / dx
        t_delta_x = cell / dx if dx > 0.0 else -cell / dx
    else:
        t_max_x = 2.0
        t_delta_x = 2.0
    if step_y != 0:
        boundary = gy0 + (iy + (1 if step_y > 0 else 0)) * cell
        t_max_y = (boundary - py) / dy
        t_delta_y = cell / dy if dy > 0.0 else -cell / dy
    else:
        t_max_y = 2.0
        t_delta_y = 2.0

    cdef Py_ssize_t guard = nx + ny + 4
    cdef Py_ssize_t c_id, k, b_id
    cdef long long s0, s1
    while True:
        c_id = ix * ny + iy
        s0 = cell_start[c_id]
        s1 = cell_start[c_id + 1]
        for k in range(s0, s1):
            b_id = items[k]
            if stamp[b_id] != gen:
                stamp[b_id] = gen
                if _hits_cylinder(px, py, pz, dx, dy, dz,
                                  bx[b_id], by[b_id], br[b_id], bh[b_id]):
                    return True
        if ix == ix_end and iy == iy_end:
            return False
        guard -= 1
        if guard <= 0:
            return False
        if t_max_x < t_max_y:
            t_max_x += t_delta_x
            ix += step_x
            if ix < 0 or ix >= nx:
                return False
        else:
            t_max_y += t_delta_y
            iy += step_y
            if iy < 0 or iy >= ny:
                return False


def segments_blocked(cnp.ndarray[cnp.float64_t, ndim=2] p,
                     cnp.ndarray[cnp.float64_t, ndim=2] q,
                     cnp.ndarray[cnp.float64_t, ndim=1] bx,
                     cnp.ndarray[cnp.float64_t, ndim=1] by,
                     cnp.ndarray[cnp.float64_t, ndim=1] br,
                     cnp.ndarray[cnp.float64_t, ndim=1] bh,
                     index=None):
    """Blocked flag per segment.  ``index`` is a kernels.index.GridIndex."""
    cdef Py_ssize_t n = p.shape[0]
    cdef Py_ssize_t m = bx.shape[0]
    out = np.zeros(n, dtype=np.uint8)
    cdef cnp.uint8_t[::1] out_v = out
    cdef const double[:, ::1] pv = np.ascontiguousarray(p)
    cdef const double[:, ::1] qv = np.ascontiguousarray(q)
    cdef const double[::1] bxv = np.ascontiguousarray(bx)
    cdef const double[::1] byv = np.ascontiguousarray(by)
    cdef const double[::1] brv = np.ascontiguousarray(br)
    cdef const double[::1] bhv = np.ascontiguousarray(bh)
    cdef Py_ssize_t i
    if n == 0 or m == 0:
        return out.astype(bool)

    cdef double gx0, gy0, cell
    cdef Py_ssize_t nx, ny
    cdef const long long[::1] cell_start
    cdef const int[::1] items
    cdef long long[::1] stamp

    if index is not None:
        gx0 = index.x0
        gy0 = index.y0
        cell = index.cell
        nx = index.nx
        ny = index.ny
        cell_start = np.ascontiguousarray(index.cell_start, dtype=np.int64)
        items = np.ascontiguousarray(index.items, dtype=np.int32)
        stamp_arr = np.zeros(m, dtype=np.int64)
        stamp = stamp_arr
        with nogil:
            for i in range(n):
                if _blocked_grid(pv[i, 0], pv[i, 1], pv[i, 2],
                                 qv[i, 0], qv[i, 1], qv[i, 2],
                                 bxv, byv, brv, bhv,
                                 gx0, gy0, cell, nx, ny,
                                 cell_start, items, stamp, i + 1):
                    out_v[i] = 1
    else:
        with nogil:
            for i in range(n):
                if _blocked_brute(pv[i, 0], pv[i, 1], pv[i, 2],
                                  qv[i, 0], qv[i, 1], qv[i, 2],
                                  bxv, byv, brv, bhv):
                    out_v[i] = 1
    return out.astype(bool)

"""Uniform grid spatial index over cylinder footprints.

Buildings are binned into every grid cell their footprint's bounding box
overlaps.  A segment query then only tests buildings registered in the
cells its 2D projection crosses, which is what makes the compiled kernel
fast on dense scenes.  The numpy fallback ignores the index.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class GridIndex:
    x0: float
    y0: float
    cell: float
    nx: int
    ny: int
    cell_start: np.ndarray  # int64, nx*ny + 1, CSR offsets
    items: np.ndarray       # int32 building ids


def build_grid_index(bx: np.ndarray, by: np.ndarray, br: np.ndarray,
                     target_per_cell: float = 2.0) -> GridIndex | None:
    """Build the index, or None for an empty scene."""
    m = bx.size
    if m == 0:
        return None
    r_max = float(br.max())
    x_lo = float(bx.min() - r_max)
    x_hi = float(bx.max() + r_max)
    y_lo = float(by.min() - r_max)
    y_hi = float(by.max() + r_max)
    span = max(x_hi - x_lo, y_hi - y_lo, 1.0)
    # Cell edge: big enough that a footprint spans few cells, small enough
    # that a cell holds few footprints.
    area = max((x_hi - x_lo) * (y_hi - y_lo), 1.0)
    cell = max(2.0 * r_max, float(np.sqrt(target_per_cell * area / m)))
    cell = min(cell, span)
    nx = max(1, int(np.ceil((x_hi - x_lo) / cell)))
    ny = max(1, int(np.ceil((y_hi - y_lo) / cell)))

    ix0 = np.clip(np.floor((bx - br - x_lo) / cell).astype(np.int64), 0, nx - 1)
    ix1 = np.clip(np.floor((bx + br - x_lo) / cell).astype(np.int64), 0, nx - 1)
    iy0 = np.clip(np.floor((by - br - y_lo) / cell).astype(np.int64), 0, ny - 1)
    iy1 = np.clip(np.floor((by + br - y_lo) / cell).astype(np.int64), 0, ny - 1)

    # A footprint spans very few cells (cell >= 2*r_max), so loop over the
    # small dx/dy offsets and vectorise over buildings.
    cell_chunks = []
    item_chunks = []
    ids = np.arange(m, dtype=np.int32)
    max_dx = int((ix1 - ix0).max())
    max_dy = int((iy1 - iy0).max())
    for dx in range(max_dx + 1):
        for dy in range(max_dy + 1):
            sel = (ix0 + dx <= ix1) & (iy0 + dy <= iy1)
            if not sel.any():
                continue
            cell_chunks.append((ix0[sel] + dx) * ny + (iy0[sel] + dy))
            item_chunks.append(ids[sel])
    cell_ids = np.concatenate(cell_chunks)
    item_ids = np.concatenate(item_chunks)

    counts = np.zeros(nx * ny, dtype=np.int64)
    np.add.at(counts, cell_ids, 1)
    cell_start = np.zeros(nx * ny + 1, dtype=np.int64)
    np.cumsum(counts, out=cell_start[1:])
    order = np.argsort(cell_ids, kind="stable")
    return GridIndex(x0=x_lo, y0=y_lo, cell=float(cell), nx=nx, ny=ny,
                     cell_start=cell_start,
                     items=np.ascontiguousarray(item_ids[order]))

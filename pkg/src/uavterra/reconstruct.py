"""Carving a per-cell building height map from classified UAV links.

A UAV flies a scan lattice above a route corridor and measures received
power on links to ground nodes.  The large mean gap between the LoS and
NLoS channel laws makes individual links classifiable by comparing the
received power with the dB midpoint of the two laws at the known link
distance.  Classified links then carve a height field over the region:

* a LoS link upper-bounds every cell under its ground projection by the
  segment altitude over that cell;
* an NLoS link whose projection has exactly one cell still tall enough to
  block it lower-bounds that cell; links with several candidate cells are
  deferred and retried once the LoS carving has shrunk the ambiguity.

Cells never touched by any link stay unknown rather than being reported
as ground level.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from uavterra.channel import ChannelParams, mean_power_for_states
from uavterra.geometry import Corridor, Region
from uavterra.kernels import segments_blocked
from uavterra.terrain import BuildingSet

CELL_SIZE_DEFAULT = 4.0
SAMPLE_STEP_DEFAULT = 2.0
FADING_AVG_DEFAULT = 4
MAX_RANGE_DEFAULT = 200.0
ATTRIBUTION_MARGIN_DEFAULT = 0.25
MIN_CROSSING_DEFAULT = 2.0
_EPS = 1e-9


@dataclass(frozen=True)
class LinkMeasurement:
    """One UAV-to-ground power measurement (truth state kept for debug)."""

    uav: np.ndarray
    receiver: np.ndarray
    rx_power_dbm: float
    truth_blocked: bool

    def __post_init__(self):
        object.__setattr__(self, "uav",
                           np.asarray(self.uav, dtype=float).reshape(3))
        object.__setattr__(self, "receiver",
                           np.asarray(self.receiver, dtype=float).reshape(3))
        if not np.isfinite(self.rx_power_dbm):
            raise ValueError("rx_power_dbm must be finite")

    @property
    def distance(self) -> float:
        return float(np.linalg.norm(self.uav - self.receiver))


class HeightField:
    """Per-cell terrain height bounds over a region grid.

    ``lower[i, j]`` and ``upper[i, j]`` bound the maximum terrain height
    inside cell (i, j); ``upper`` starts at +inf meaning unknown and both
    only ever tighten.
    """

    def __init__(self, region: Region, cell_size: float = CELL_SIZE_DEFAULT):
        if cell_size <= 0:
            raise ValueError("cell_size must be > 0")
        self.region = region
        self.cell_size = float(cell_size)
        self.n_i = int(np.ceil(region.width / cell_size))
        self.n_j = int(np.ceil(region.height / cell_size))
        self.lower = np.zeros((self.n_i, self.n_j))
        self.upper = np.full((self.n_i, self.n_j), np.inf)

    @classmethod
    def from_buildings(cls, region: Region, b: BuildingSet,
                       cell_size: float = CELL_SIZE_DEFAULT) -> "HeightField":
        """Exact-knowledge field: both bounds at the rasterized truth."""
        hf = cls(region, cell_size)
        truth = hf.rasterize(b)
        hf.lower = truth.copy()
        hf.upper = truth.copy()
        return hf

    def rasterize(self, b: BuildingSet) -> np.ndarray:
        """Max building height at each cell center (0 on open ground)."""
        xx, yy = self.cell_centers()
        heights = np.zeros((self.n_i, self.n_j))
        bx, by, br, bh = b.packed()
        for x, y, r, h in zip(bx, by, br, bh):
            mask = (xx - x) ** 2 + (yy - y) ** 2 <= r ** 2
            heights[mask] = np.maximum(heights[mask], h)
        return heights

    def cell_centers(self):
        xs = self.region.x_min + self.cell_size * (np.arange(self.n_i) + 0.5)
        ys = self.region.y_min + self.cell_size * (np.arange(self.n_j) + 0.5)
        return np.meshgrid(xs, ys, indexing="ij")

    def cell_of(self, x, y):
        i = np.floor((np.asarray(x, dtype=float) - self.region.x_min)
                     / self.cell_size).astype(int)
        j = np.floor((np.asarray(y, dtype=float) - self.region.y_min)
                     / self.cell_size).astype(int)
        return (np.clip(i, 0, self.n_i - 1), np.clip(j, 0, self.n_j - 1))

    @property
    def known(self) -> np.ndarray:
        return np.isfinite(self.upper)

    def estimate(self) -> np.ndarray:
        """Midpoint height per cell; NaN where the cell is still unknown."""
        est = 0.5 * (self.lower + self.upper)
        est[~self.known] = np.nan
        return est

    def copy(self) -> "HeightField":
        out = HeightField(self.region, self.cell_size)
        out.lower = self.lower.copy()
        out.upper = self.upper.copy()
        return out


# --- scan geometry ----------------------------------------------------------

def _corridor_lattice(corridor: Corridor, spacing: float) -> np.ndarray:
    """(n, 2) lattice covering the corridor at pitch ``spacing``.

    Points step along each route and across the corridor width at the
    same pitch; a zero-width corridor degenerates to the routes only.
    """
    if spacing <= 0:
        raise ValueError("spacing must be > 0")
    n_side = int(np.floor(0.5 * corridor.width / spacing + _EPS))
    offsets = spacing * np.arange(-n_side, n_side + 1)
    xy = []
    for line in corridor.lines:
        svals = np.arange(0.0, line.length + _EPS, spacing)
        for s in svals:
            pt = line.point_at(s)
            ahead = line.point_at(min(s + 0.5 * spacing, line.length))
            behind = line.point_at(max(s - 0.5 * spacing, 0.0))
            tangent = ahead - behind
            norm = np.linalg.norm(tangent)
            if norm < _EPS:
                continue
            normal = np.array([-tangent[1], tangent[0]]) / norm
            xy.append(pt[None, :] + offsets[:, None] * normal[None, :])
    return np.unique(np.round(np.concatenate(xy), 6), axis=0)


def plan_scan(corridor: Corridor, altitudes: Sequence[float],
              spacing: float) -> np.ndarray:
    """Lattice of UAV sampling positions covering the corridor."""
    altitudes = np.asarray(altitudes, dtype=float).reshape(-1)
    if altitudes.size == 0:
        raise ValueError("need at least one altitude")
    xy = _corridor_lattice(corridor, spacing)
    cols = [np.column_stack([xy, np.full(len(xy), z)]) for z in altitudes]
    return np.concatenate(cols)


def plan_receivers(corridor: Corridor, spacing: float,
                   z: float = 1.5) -> np.ndarray:
    """Ground nodes covering the corridor band at a fixed pitch.

    Receivers spread across the corridor width like the crowd does; a
    zero-width corridor puts them on the route polylines only.
    """
    xy = _corridor_lattice(corridor, spacing)
    return np.column_stack([xy, np.full(len(xy), z)])


# --- measurement and classification -----------------------------------------

def measure_links(uav_positions, receivers, b: BuildingSet,
                  cp: ChannelParams, rng,
                  max_range: Optional[float] = MAX_RANGE_DEFAULT,
                  fading_avg: int = FADING_AVG_DEFAULT) -> list:
    """Sample one power measurement per UAV-receiver pair within range.

    Each measurement averages ``fading_avg`` unit-mean fading draws; a
    single draw would misclassify about a tenth of the links.
    """
    uav_positions = np.asarray(uav_positions, dtype=float).reshape(-1, 3)
    receivers = np.asarray(receivers, dtype=float).reshape(-1, 3)
    if receivers.shape[0] == 0:
        raise ValueError("need at least one receiver")
    if fading_avg < 1:
        raise ValueError("fading_avg must be >= 1")
    n_u, n_r = uav_positions.shape[0], receivers.shape[0]
    uavs = np.repeat(uav_positions, n_r, axis=0)
    rxs = np.tile(receivers, (n_u, 1))
    dist = np.linalg.norm(uavs - rxs, axis=1)
    keep = dist > _EPS
    if max_range is not None:
        keep &= dist <= max_range
    uavs, rxs, dist = uavs[keep], rxs[keep], dist[keep]
    bx, by, br, bh = b.packed()
    blocked = segments_blocked(np.ascontiguousarray(rxs),
                               np.ascontiguousarray(uavs),
                               bx, by, br, bh, index=b.index)
    mean_dbm = mean_power_for_states(dist, blocked, cp)
    m = np.where(blocked, cp.m_nlos, cp.m_los)[:, None]
    fades = rng.gamma(m, 1.0 / m, size=(dist.size, fading_avg)).mean(axis=1)
    rx_dbm = mean_dbm + 10.0 * np.log10(fades)
    return [LinkMeasurement(uav=u, receiver=r, rx_power_dbm=float(p),
                            truth_blocked=bool(s))
            for u, r, p, s in zip(uavs, rxs, rx_dbm, blocked)]


def classify(m: LinkMeasurement, cp: ChannelParams) -> bool:
    """True when the measurement reads NLoS (power below the dB midpoint
    of the two channel laws at the link distance); ties read LoS."""
    d = np.array([m.distance])
    mid = 0.5 * (mean_power_for_states(d, np.array([False]), cp)[0]
                 + mean_power_for_states(d, np.array([True]), cp)[0])
    return bool(m.rx_power_dbm < mid)


def classify_all(measurements: Sequence[LinkMeasurement],
                 cp: ChannelParams) -> np.ndarray:
    dist = np.array([m.distance for m in measurements])
    rx = np.array([m.rx_power_dbm for m in measurements])
    mid = 0.5 * (mean_power_for_states(dist, np.zeros(dist.size, bool), cp)
                 + mean_power_for_states(dist, np.ones(dist.size, bool), cp))
    return rx < mid


# --- carving ----------------------------------------------------------------

@dataclass(frozen=True)
class CarveReport:
    """Bookkeeping of one carve run over a measurement batch."""

    n_los: int
    n_nlos: int
    discarded_votes: int
    unresolved: int


def _segment_cells(hf: HeightField, m: LinkMeasurement, sample_step: float):
    """Unique crossed cells, lowest segment altitude over each, and the
    per-cell sample count (a proxy for the crossing length).

    The ground projection is sampled at ``sample_step``; samples outside
    the region are dropped.
    """
    span = m.uav - m.receiver
    length = float(np.linalg.norm(span[:2]))
    n = max(2, int(np.ceil(length / sample_step)) + 1)
    t = np.linspace(0.0, 1.0, n)
    pts = m.receiver[None, :] + t[:, None] * span[None, :]
    inside = hf.region.contains(pts[:, 0], pts[:, 1])
    if not inside.any():
        return (np.zeros(0, int), np.zeros(0, int), np.zeros(0),
                np.zeros(0, int))
    pts = pts[inside]
    ii, jj = hf.cell_of(pts[:, 0], pts[:, 1])
    flat = ii * hf.n_j + jj
    uniq, inv, counts = np.unique(flat, return_inverse=True,
                                  return_counts=True)
    z_min = np.full(uniq.size, np.inf)
    np.minimum.at(z_min, inv, pts[:, 2])
    return uniq // hf.n_j, uniq % hf.n_j, z_min, counts


def carve(measurements: Sequence[LinkMeasurement], hf: HeightField,
          cp: ChannelParams, states: Optional[np.ndarray] = None,
          sample_step: float = SAMPLE_STEP_DEFAULT,
          margin: float = ATTRIBUTION_MARGIN_DEFAULT,
          min_crossing: float = MIN_CROSSING_DEFAULT) -> CarveReport:
    """Tighten ``hf`` in place from a classified measurement batch.

    ``states`` overrides the power-based classification (True = NLoS),
    which makes noise-free carving oracles possible in tests.  LoS links
    are folded first; NLoS links are attributed under the single-
    ambiguous-cell rule with one deferred retry pass.

    Two guards absorb the sub-cell mismatch between square cells and
    round footprints: a LoS link only upper-bounds cells it crosses for
    at least ``min_crossing`` metres (corner clips can pass beside an
    obstacle that fills most of the cell), and a cell only counts as a
    blocking candidate when its upper bound clears the segment by
    ``margin``.  A lower bound contradicting a LoS-tightened upper bound
    is discarded (LoS wins) and counted.
    """
    if states is None:
        states = classify_all(measurements, cp) if measurements else \
            np.zeros(0, bool)
    states = np.asarray(states, dtype=bool).reshape(-1)
    if states.size != len(measurements):
        raise ValueError("states length must match measurements")
    discarded = 0
    need = 1 + int(np.ceil(min_crossing / sample_step))

    los_idx = np.flatnonzero(~states)
    for k in los_idx:
        ii, jj, z_min, counts = _segment_cells(hf, measurements[k],
                                               sample_step)
        solid = counts >= need
        np.minimum.at(hf.upper, (ii[solid], jj[solid]), z_min[solid])
    # LoS wins any contradiction with previously carved lower bounds.
    clash = hf.lower > hf.upper + _EPS
    if clash.any():
        discarded += int(clash.sum())
        hf.lower[clash] = 0.0

    pending = [int(k) for k in np.flatnonzero(states)]
    for _ in range(2):
        deferred = []
        for k in pending:
            ii, jj, z_min, _ = _segment_cells(hf, measurements[k],
                                              sample_step)
            can_block = hf.upper[ii, jj] > z_min + margin
            hits = np.flatnonzero(can_block)
            if hits.size == 0:
                discarded += 1
            elif hits.size == 1:
                h = hits[0]
                i, j = int(ii[h]), int(jj[h])
                hf.lower[i, j] = max(hf.lower[i, j], float(z_min[h]))
            else:
                deferred.append(k)
        pending = deferred
        if not pending:
            break
    return CarveReport(n_los=int(los_idx.size),
                       n_nlos=int(states.sum()),
                       discarded_votes=discarded,
                       unresolved=len(pending))


# --- evaluation -------------------------------------------------------------

@dataclass(frozen=True)
class BuildingEstimate:
    """Aggregated height bounds for one building's footprint cells.

    Descending links vote lower bounds onto the shadow-side edge cells
    and roof-skimming LoS links bound the top, so the roof is localized
    by the tightest pair over the footprint rather than cell by cell.
    """

    lower: float
    upper: float
    detected: bool

    @property
    def height(self) -> float:
        if not self.detected:
            return float("nan")
        if not np.isfinite(self.upper):
            return self.lower
        return 0.5 * (self.lower + self.upper)


def building_heights(hf: HeightField, b: BuildingSet) -> list:
    """Per-building height estimates from the carved field."""
    xx, yy = hf.cell_centers()
    out = []
    bx, by, br, bh = b.packed()
    for x, y, r, _ in zip(bx, by, br, bh):
        mask = (xx - x) ** 2 + (yy - y) ** 2 <= r ** 2
        ci, cj = hf.cell_of(x, y)
        mask[ci, cj] = True
        low = float(hf.lower[mask].max())
        ups = hf.upper[mask]
        above = ups[ups > low + _EPS]
        up = float(above.min()) if above.size else float(ups.max())
        detected = bool((mask & hf.known).any() or low > 0)
        out.append(BuildingEstimate(lower=low, upper=up, detected=detected))
    return out


@dataclass(frozen=True)
class ReconstructionError:
    """Height error split by corridor proximity plus detection counts."""

    mae_near: float
    mae_far: float
    undetected_count: int
    near_total: int
    far_total: int
    near_undetected: int
    far_undetected: int

    @property
    def near_detected_fraction(self) -> float:
        if self.near_total == 0:
            return float("nan")
        return 1.0 - self.near_undetected / self.near_total


def reconstruction_error(hf: HeightField, b: BuildingSet,
                         corridor: Corridor) -> ReconstructionError:
    """Compare the carved field against the rasterized truth.

    MAE is taken over building-occupied cells that the scan resolved
    (unknown cells are excluded); a building counts as undetected when
    none of its cells are known.  Buildings and cells are near when they
    fall inside the corridor band.
    """
    truth = hf.rasterize(b)
    est = hf.estimate()
    xx, yy = hf.cell_centers()
    centers = np.column_stack([xx.ravel(), yy.ravel()])
    near_cell = corridor.contains(centers).reshape(xx.shape)
    occupied = truth > 0
    scored = occupied & hf.known

    err = np.abs(est - truth)
    near_sel = scored & near_cell
    far_sel = scored & ~near_cell
    mae_near = float(err[near_sel].mean()) if near_sel.any() else float("nan")
    mae_far = float(err[far_sel].mean()) if far_sel.any() else float("nan")

    bx, by, br, bh = b.packed()
    near_total = far_total = near_undet = far_undet = 0
    for x, y, r, _ in zip(bx, by, br, bh):
        mask = (xx - x) ** 2 + (yy - y) ** 2 <= r ** 2
        ci, cj = hf.cell_of(x, y)
        mask[ci, cj] = True
        near = bool(corridor.distance_to(np.array([[x, y]]))[0]
                    <= 0.5 * corridor.width + r)
        detected = bool((mask & hf.known).any())
        near_total += near
        far_total += not near
        near_undet += near and not detected
        far_undet += (not near) and not detected
    return ReconstructionError(mae_near=mae_near, mae_far=mae_far,
                               undetected_count=near_undet + far_undet,
                               near_total=near_total, far_total=far_total,
                               near_undetected=near_undet,
                               far_undetected=far_undet)


# --- CSV --------------------------------------------------------------------

def write_height_field_csv(hf: HeightField, path) -> None:
    with open(path, "w") as fh:
        fh.write("i,j,lower_m,upper_m\n")
        for i in range(hf.n_i):
            for j in range(hf.n_j):
                up = hf.upper[i, j]
                text = "inf" if np.isinf(up) else f"{up:.3f}"
                fh.write(f"{i},{j},{hf.lower[i, j]:.3f},{text}\n")


def read_height_field_csv(path, region: Region,
                          cell_size: float = CELL_SIZE_DEFAULT) -> HeightField:
    hf = HeightField(region, cell_size)
    with open(path) as fh:
        header = fh.readline().strip()
        if header != "i,j,lower_m,upper_m":
            raise ValueError(f"unexpected header {header!r}")
        for line in fh:
            i_s, j_s, lo_s, up_s = line.strip().split(",")
            i, j = int(i_s), int(j_s)
            hf.lower[i, j] = float(lo_s)
            hf.upper[i, j] = float(up_s)
    return hf


def write_measurements_csv(measurements: Sequence[LinkMeasurement],
                           path) -> None:
    with open(path, "w") as fh:
        fh.write("uav_x,uav_y,uav_z,rx_x,rx_y,rx_z,"
                 "rx_power_dbm,truth_blocked\n")
        for m in measurements:
            fh.write(f"{m.uav[0]:.3f},{m.uav[1]:.3f},{m.uav[2]:.3f},"
                     f"{m.receiver[0]:.3f},{m.receiver[1]:.3f},"
                     f"{m.receiver[2]:.3f},{m.rx_power_dbm:.6f},"
                     f"{int(m.truth_blocked)}\n")

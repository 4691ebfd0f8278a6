"""Terrain-blind UAV placement by real-time max-min SNR search.

A UAV serving N ground devices wants the position maximizing the smallest
fading-averaged SNR among its links.  Without a terrain map it can only
probe: fly somewhere, talk to every device, observe which links are blocked.
The search engine implements two movement rules on the perpendicular
bisector plane of its two focus devices:

* c1 (all focus links LoS): estimate the in-plane objective gradient with
  two finite-difference probe legs and step along the steepest ascent.
* c2 (a focus link is blocked): skirt the shadow on the iso-SNR circle,
  which on the bisector plane keeps both focus distances exactly constant.

After local convergence the engine emits left and right iso-SNR excursions
and resumes only if one of them finds a strictly better spot.  Every probe
leg, including the finite-difference sensing legs and their returns, is
flown by the UAV and counts toward the trajectory budget.

The multi-device search repeatedly focuses on the two devices currently
farthest from the UAV, flies the shortest path to their bisector plane, and
reruns the plane search; a focus change restarts the cycle.  A grid
exhaustive search provides the complete-information upper bound, and
``search_length_sweep`` turns trajectory budget into mean user coverage.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import special

from uavterra import seeding
from uavterra.channel import ChannelParams, dbm_to_mw, mean_power_for_states
from uavterra.errors import ResourceLimitError
from uavterra.geometry import Region
from uavterra.kernels import segments_blocked
from uavterra.terrain import BuildingSet

GRANULARITY_DEFAULT = 0.2
CONV_WINDOW = 10
CONV_DELTA_DB = 0.05
EXCURSION_LENGTH = 250.0
PAIR_HYSTERESIS_STEPS = 2.0
_EPS = 1e-9


# --- problem statement ------------------------------------------------------

@dataclass(frozen=True)
class AllowedSpace:
    """Deployment set: a rectangle of sky between two altitudes."""

    region: Region
    z_min: float
    z_max: float

    def __post_init__(self):
        if not 0 < self.z_min < self.z_max:
            raise ValueError("need 0 < z_min < z_max")

    def contains(self, pos) -> bool:
        x, y, z = np.asarray(pos, dtype=float).reshape(3)
        return bool(self.region.contains(x, y)
                    and self.z_min - _EPS <= z <= self.z_max + _EPS)


@dataclass(frozen=True)
class SearchProblem:
    """Devices to serve, where the UAV may fly, and how far it may search."""

    served: np.ndarray
    space: AllowedSpace
    budget: float
    granularity: float = GRANULARITY_DEFAULT
    channel: ChannelParams = field(default_factory=ChannelParams)

    def __post_init__(self):
        served = np.asarray(self.served, dtype=float).reshape(-1, 3)
        if served.shape[0] < 1:
            raise ValueError("need at least one served device")
        object.__setattr__(self, "served", served)
        if self.granularity <= 0:
            raise ValueError("granularity must be > 0")
        if self.budget < 0:
            raise ValueError("budget must be >= 0")

    @property
    def n_served(self) -> int:
        return self.served.shape[0]


@dataclass(frozen=True)
class Probe:
    """One measured position: objective value and per-device blockage."""

    position: np.ndarray
    min_snr_db: float
    blocked: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "position",
                           np.asarray(self.position, dtype=float).reshape(3))
        object.__setattr__(self, "blocked",
                           np.asarray(self.blocked, dtype=bool).reshape(-1))


@dataclass(frozen=True)
class SearchTrace:
    """Ordered probe history of one search flight."""

    probes: list
    path_length: float
    best_index: int

    def __post_init__(self):
        if not self.probes:
            raise ValueError("trace needs at least one probe")
        walked = float(np.sum(self.step_lengths()))
        if abs(walked - self.path_length) > 1e-6:
            raise ValueError("path_length does not match probe spacing")
        values = [pr.min_snr_db for pr in self.probes]
        if self.probes[self.best_index].min_snr_db < max(values) - 1e-12:
            raise ValueError("best_index does not maximize min-SNR")

    def step_lengths(self) -> np.ndarray:
        pos = np.array([pr.position for pr in self.probes])
        return np.linalg.norm(np.diff(pos, axis=0), axis=1) if len(pos) > 1 \
            else np.zeros(0)

    def cumulative_path(self) -> np.ndarray:
        return np.concatenate([[0.0], np.cumsum(self.step_lengths())])

    @property
    def best(self) -> Probe:
        return self.probes[self.best_index]


# --- objective --------------------------------------------------------------

def link_snrs(pos, devices: np.ndarray, b: BuildingSet,
              cp: ChannelParams):
    """Mean SNR in dB and blocked flag for each device from ``pos``."""
    devices = np.asarray(devices, dtype=float).reshape(-1, 3)
    uavs = np.broadcast_to(np.asarray(pos, dtype=float).reshape(3),
                           devices.shape)
    bx, by, br, bh = b.packed()
    blocked = segments_blocked(np.ascontiguousarray(devices),
                               np.ascontiguousarray(uavs),
                               bx, by, br, bh, index=b.index)
    dist = np.linalg.norm(devices - uavs, axis=1)
    snr = mean_power_for_states(dist, blocked, cp) - cp.sigma2_dbm
    return snr, blocked


def objective(x, p: SearchProblem, b: BuildingSet) -> float:
    """Smallest fading-averaged SNR over the served devices, in dB."""
    if not p.space.contains(x):
        raise ValueError(f"position {x} outside the allowed space")
    snr, _ = link_snrs(x, p.served, b, p.channel)
    return float(snr.min())


# --- bisector plane ---------------------------------------------------------

@dataclass(frozen=True)
class Plane:
    """2D frame in 3D: origin plus in-plane unit axes e1 (level), e2 (up)."""

    origin: np.ndarray
    e1: np.ndarray
    e2: np.ndarray

    def point(self, a: float, bb: float) -> np.ndarray:
        return self.origin + a * self.e1 + bb * self.e2

    def coords(self, x) -> tuple:
        v = np.asarray(x, dtype=float).reshape(3) - self.origin
        return float(v @ self.e1), float(v @ self.e2)

    def project(self, x) -> np.ndarray:
        a, bb = self.coords(x)
        return self.point(a, bb)


def bisector_plane(u1, u2) -> Plane:
    """Perpendicular bisector plane of two device positions.

    Every point of this plane is equidistant from both devices, so an
    iso-SNR trajectory (while both are LoS, or while tracking either) is a
    circle around the in-plane origin.
    """
    u1 = np.asarray(u1, dtype=float).reshape(3)
    u2 = np.asarray(u2, dtype=float).reshape(3)
    n = u2 - u1
    norm = np.linalg.norm(n)
    if norm < 1e-9:
        raise ValueError("devices coincide; bisector plane undefined")
    n = n / norm
    e1 = np.cross(n, [0.0, 0.0, 1.0])
    e1_norm = np.linalg.norm(e1)
    if e1_norm < 1e-9:
        raise ValueError("devices are vertically aligned")
    e1 = e1 / e1_norm
    e2 = np.cross(n, e1)
    if e2[2] < 0:
        e2 = -e2
    return Plane(origin=0.5 * (u1 + u2), e1=e1, e2=e2)


def device_plane(device, toward) -> Plane:
    """Vertical plane through one device, oriented toward ``toward``.

    Used for single-device groups: iso-SNR circles are centered on the
    device itself.
    """
    device = np.asarray(device, dtype=float).reshape(3)
    toward = np.asarray(toward, dtype=float).reshape(3)
    horiz = toward[:2] - device[:2]
    norm = np.linalg.norm(horiz)
    e1 = np.array([1.0, 0.0, 0.0]) if norm < 1e-9 else \
        np.array([horiz[0] / norm, horiz[1] / norm, 0.0])
    return Plane(origin=device, e1=e1, e2=np.array([0.0, 0.0, 1.0]))


def _plane_b_bounds(plane: Plane, space: AllowedSpace) -> tuple:
    e2z = plane.e2[2]
    if e2z <= 1e-9:
        raise ValueError("plane has no vertical extent")
    z0 = plane.origin[2]
    return (space.z_min - z0) / e2z, (space.z_max - z0) / e2z


def _plane_a_bounds(plane: Plane, space: AllowedSpace, bb: float) -> tuple:
    """Feasible interval of the ``a`` coordinate at fixed ``b``."""
    lo, hi = -np.inf, np.inf
    r = space.region
    for axis, (mn, mx) in ((0, (r.x_min, r.x_max)), (1, (r.y_min, r.y_max))):
        base = plane.origin[axis] + bb * plane.e2[axis]
        slope = plane.e1[axis]
        if abs(slope) < 1e-12:
            if not mn - _EPS <= base <= mx + _EPS:
                return np.inf, -np.inf
            continue
        a0, a1 = (mn - base) / slope, (mx - base) / slope
        lo = max(lo, min(a0, a1))
        hi = min(hi, max(a0, a1))
    return lo, hi


def _clamp_plane(plane: Plane, space: AllowedSpace, a: float,
                 bb: float) -> Optional[tuple]:
    b_lo, b_hi = _plane_b_bounds(plane, space)
    bb = float(np.clip(bb, b_lo, b_hi))
    a_lo, a_hi = _plane_a_bounds(plane, space, bb)
    if a_lo > a_hi:
        return None
    return float(np.clip(a, a_lo, a_hi)), bb


# --- search engine ----------------------------------------------------------

_BUDGET, _CONVERGED, _PAIR_CHANGED, _RESUMED = range(4)


class _Engine:
    """Shared probe bookkeeping plus the c1/c2 plane walk."""

    def __init__(self, p: SearchProblem, b: BuildingSet,
                 focus: Optional[Sequence[int]] = None):
        self.p = p
        self.b = b
        self.g = p.granularity
        self.focus = None if focus is None else np.asarray(focus, dtype=int)
        self.probes = []
        self.path = 0.0
        self.pos = None
        self.blocked = None
        self.last_ctrl = -np.inf
        self.best_full = -np.inf
        self.best_index = 0
        self.best_ctrl = -np.inf
        self.c2_sense = None
        self.c2_swept = 0.0
        self.plane = None
        self.coords = None

    # probe/move primitives

    def probe(self, pos, coords=None) -> float:
        pos = np.asarray(pos, dtype=float).reshape(3)
        snr, blocked = link_snrs(pos, self.p.served, self.b, self.p.channel)
        full = float(snr.min())
        if self.pos is not None:
            self.path += float(np.linalg.norm(pos - self.pos))
        self.pos = pos
        self.coords = coords
        self.blocked = blocked
        self.probes.append(Probe(position=pos, min_snr_db=full,
                                 blocked=blocked))
        if full > self.best_full:
            self.best_full = full
            self.best_index = len(self.probes) - 1
        sel = snr if self.focus is None else snr[self.focus]
        ctrl = float(sel.min())
        self.last_ctrl = ctrl
        if ctrl > self.best_ctrl:
            self.best_ctrl = ctrl
        return ctrl

    def can_move(self, dist: float) -> bool:
        return self.path + dist <= self.p.budget + _EPS

    def move_to(self, pos, coords=None) -> bool:
        pos = np.asarray(pos, dtype=float).reshape(3)
        if not self.can_move(float(np.linalg.norm(pos - self.pos))):
            return False
        self.probe(pos, coords=coords)
        return True

    def move_plane(self, a: float, bb: float) -> bool:
        return self.move_to(self.plane.point(a, bb), coords=(a, bb))

    # plane phases

    def enter_plane(self, plane: Plane) -> bool:
        """Fly the shortest path onto ``plane`` in granularity steps."""
        self.plane = plane
        self.c2_sense = None
        self.c2_swept = 0.0
        target = plane.project(self.pos)
        clamped = _clamp_plane(plane, self.p.space, *plane.coords(target))
        if clamped is None:
            return False
        target = plane.point(*clamped)
        gap = float(np.linalg.norm(target - self.pos))
        while gap > _EPS:
            step = min(self.g, gap)
            nxt = self.pos + (target - self.pos) * (step / gap)
            coords = clamped if step == gap else None
            if not self.move_to(nxt, coords=coords):
                return False
            gap = float(np.linalg.norm(target - self.pos))
        if self.coords is None:
            self.coords = clamped
        return True

    def _focus_blocked(self) -> bool:
        sel = self.blocked if self.focus is None else self.blocked[self.focus]
        return bool(sel.any())

    def _c1_step(self) -> Optional[int]:
        a, bb = self.coords
        f0 = self.last_ctrl
        grad = np.zeros(2)
        for axis, unit in enumerate(((1.0, 0.0), (0.0, 1.0))):
            sign = 1.0
            da, db = self.g * unit[0], self.g * unit[1]
            tgt = _clamp_plane(self.plane, self.p.space, a + da, bb + db)
            if tgt is None or self._displacement(tgt, (a, bb)) < 0.5 * self.g:
                sign = -1.0
                tgt = _clamp_plane(self.plane, self.p.space, a - da, bb - db)
            if tgt is None or self._displacement(tgt, (a, bb)) < 0.5 * self.g:
                continue
            if not self.move_plane(*tgt):
                return _BUDGET
            grad[axis] = sign * (self.last_ctrl - f0)
            if not self.move_plane(a, bb):
                return _BUDGET
        norm = np.linalg.norm(grad)
        if norm < 1e-12:
            return None
        step = self.g * grad / norm
        tgt = _clamp_plane(self.plane, self.p.space, a + step[0], bb + step[1])
        if tgt is None or self._displacement(tgt, (a, bb)) < _EPS:
            return None
        if not self.move_plane(*tgt):
            return _BUDGET
        return None

    @staticmethod
    def _displacement(c1: tuple, c0: tuple) -> float:
        return float(np.hypot(c1[0] - c0[0], c1[1] - c0[1]))

    def _rotate(self, a: float, bb: float, sense: float) -> Optional[tuple]:
        rho = float(np.hypot(a, bb))
        if rho < self.g:
            return None
        phi = np.arctan2(bb, a) + sense * (self.g / rho)
        return rho * np.cos(phi), rho * np.sin(phi)

    def _pick_c2_sense(self, a: float, bb: float) -> float:
        """Prefer the rotation whose tangent points toward the nearest
        blocked device, tie-breaking toward lower altitude."""
        phi = np.arctan2(bb, a)
        tangent2 = np.array([-np.sin(phi), np.cos(phi)])
        tangent3 = tangent2[0] * self.plane.e1 + tangent2[1] * self.plane.e2
        idx = np.flatnonzero(self.blocked)
        score = 0.0
        if idx.size:
            dists = np.linalg.norm(self.p.served[idx] - self.pos, axis=1)
            target = self.p.served[idx[np.argmin(dists)]]
            score = float(tangent3 @ (target - self.pos))
        if abs(score) > 1e-9:
            return 1.0 if score > 0 else -1.0
        return -1.0 if tangent3[2] < 0 else 1.0

    def _c2_step(self) -> Optional[int]:
        a, bb = self.coords
        if self.c2_swept >= 2.0 * np.pi:
            # A full skirting circuit without regaining LoS: the whole
            # iso-SNR circle is shadowed, so tighten the radius one step
            # and keep skirting (documented fallback for blocked starts).
            self.c2_swept = 0.0
            rho = float(np.hypot(a, bb))
            if rho > self.g:
                scale = (rho - self.g) / rho
                tgt = _clamp_plane(self.plane, self.p.space,
                                   a * scale, bb * scale)
                if tgt is not None and \
                        self._displacement(tgt, (a, bb)) > _EPS:
                    if not self.move_plane(*tgt):
                        return _BUDGET
                    return None
        if self.c2_sense is None:
            self.c2_sense = self._pick_c2_sense(a, bb)
        for attempt in range(2):
            rotated = self._rotate(a, bb, self.c2_sense)
            if rotated is None:
                return None
            tgt = _clamp_plane(self.plane, self.p.space, *rotated)
            if tgt is not None and \
                    self._displacement(tgt, rotated) < 0.25 * self.g:
                if not self.move_plane(*tgt):
                    return _BUDGET
                self.c2_swept += self.g / max(float(np.hypot(a, bb)), self.g)
                return None
            # Clamped into the boundary: flip the skirting sense once.
            self.c2_sense = -self.c2_sense
        return None

    def run_plane(self, pair_check: Optional[Callable[[], bool]] = None) -> int:
        # Converged once the best control value gained no more than the
        # convergence delta over the last CONV_WINDOW counted steps.
        # Moving c2 steps are not counted: skirting is iso-SNR by design,
        # so stagnation there is normal, not a stopping signal.
        hist = deque([self.best_ctrl], maxlen=CONV_WINDOW + 1)
        while True:
            if len(hist) == hist.maxlen \
                    and self.best_ctrl - hist[0] <= CONV_DELTA_DB:
                return _CONVERGED
            if self._focus_blocked():
                before = len(self.probes)
                status = self._c2_step()
                counted = len(self.probes) == before
            else:
                self.c2_sense = None
                self.c2_swept = 0.0
                status = self._c1_step()
                counted = True
            if status == _BUDGET:
                return _BUDGET
            if counted:
                hist.append(self.best_ctrl)
            if pair_check is not None and pair_check():
                return _PAIR_CHANGED

    def excursions(self) -> int:
        """Left and right iso-SNR arcs from the converged position.

        Returns _RESUMED if an arc found a strictly better control value
        (search continues from there), _CONVERGED if both arcs came back
        empty, _BUDGET on exhaustion.
        """
        resume_level = self.best_ctrl + CONV_DELTA_DB
        for sense in (-1.0, 1.0):
            visited = [self.coords]
            arc = 0.0
            while arc + self.g <= EXCURSION_LENGTH:
                a, bb = self.coords
                rotated = self._rotate(a, bb, sense)
                if rotated is None:
                    break
                tgt = _clamp_plane(self.plane, self.p.space, *rotated)
                if tgt is None or \
                        self._displacement(tgt, rotated) >= 0.25 * self.g:
                    break
                if not self.move_plane(*tgt):
                    return _BUDGET
                visited.append(tgt)
                arc += self.g
                if self.last_ctrl > resume_level:
                    return _RESUMED
            # Walk the same arc back so both excursions leave the anchor.
            for back in reversed(visited[:-1]):
                if not self.move_plane(*back):
                    return _BUDGET
        return _CONVERGED

    def trace(self) -> SearchTrace:
        return SearchTrace(probes=self.probes, path_length=self.path,
                           best_index=self.best_index)


# --- public searches --------------------------------------------------------

def _plane_for_group(served: np.ndarray, pair: np.ndarray,
                     fallback_toward: np.ndarray) -> Plane:
    if pair.size == 1:
        return device_plane(served[pair[0]], fallback_toward)
    return bisector_plane(served[pair[0]], served[pair[1]])


def _run_search(p: SearchProblem, b: BuildingSet, start,
                dynamic_focus: bool) -> SearchTrace:
    start = np.asarray(start, dtype=float).reshape(3)
    if not p.space.contains(start):
        raise ValueError("start position outside the allowed space")
    eng = _Engine(p, b)
    eng.probe(start)
    n = p.n_served

    def top_pair() -> np.ndarray:
        d = np.linalg.norm(p.served - eng.pos, axis=1)
        order = np.argsort(-d, kind="stable")
        return np.sort(order[:min(2, n)])

    pair = top_pair()

    def pair_changed() -> bool:
        if not dynamic_focus:
            return False
        d = np.linalg.norm(p.served - eng.pos, axis=1)
        inside = d[pair].min()
        outside = np.delete(d, pair)
        if outside.size == 0:
            return False
        margin = PAIR_HYSTERESIS_STEPS * p.granularity
        return bool(outside.max() > inside + margin)

    while True:
        eng.focus = pair
        plane = _plane_for_group(p.served, pair, eng.pos)
        if not eng.enter_plane(plane):
            break
        status = eng.run_plane(pair_check=pair_changed)
        if status == _BUDGET:
            break
        if status == _PAIR_CHANGED:
            pair = top_pair()
            continue
        # Converged on this plane: try the two excursions.
        status = eng.excursions()
        if status == _RESUMED:
            continue
        if status == _BUDGET:
            break
        if pair_changed():
            pair = top_pair()
            continue
        break
    return eng.trace()


def relay_search(p: SearchProblem, b: BuildingSet, start,
                 rng=None) -> SearchTrace:
    """Two-device search on the fixed bisector plane.

    ``rng`` is accepted for interface symmetry; the walk itself is
    deterministic.  A start with both links blocked simply begins in the
    c2 skirting regime and proceeds normally.
    """
    if p.n_served != 2:
        raise ValueError("relay search expects exactly two devices")
    return _run_search(p, b, start, dynamic_focus=False)


def multiuser_search(p: SearchProblem, b: BuildingSet, start,
                     rng=None) -> SearchTrace:
    """N-device search focusing on the two currently farthest devices."""
    if p.n_served < 2:
        raise ValueError("multi-device search expects at least two devices")
    return _run_search(p, b, start, dynamic_focus=True)


# --- heat map ---------------------------------------------------------------

@dataclass(frozen=True)
class HeatMap:
    plane: Plane
    a_axis: np.ndarray
    b_axis: np.ndarray
    values: np.ndarray
    """values[i, j] is the objective at (a_axis[j], b_axis[i]); NaN marks
    nodes outside the allowed space."""


def snr_heatmap(p: SearchProblem, b: BuildingSet, grid_step: float,
                node_cap: int = 4_000_000) -> HeatMap:
    """Min-SNR field over the bisector plane of a two-device problem."""
    if p.n_served != 2:
        raise ValueError("heat map expects exactly two devices")
    if grid_step <= 0:
        raise ValueError("grid_step must be > 0")
    plane = bisector_plane(p.served[0], p.served[1])
    b_lo, b_hi = _plane_b_bounds(plane, p.space)
    lo0, hi0 = _plane_a_bounds(plane, p.space, b_lo)
    lo1, hi1 = _plane_a_bounds(plane, p.space, b_hi)
    a_lo, a_hi = min(lo0, lo1), max(hi0, hi1)
    if not np.isfinite([a_lo, a_hi]).all() or a_lo > a_hi:
        raise ValueError("plane does not intersect the allowed space")
    a_axis = a_lo + grid_step * np.arange(int((a_hi - a_lo) / grid_step) + 1)
    b_axis = b_lo + grid_step * np.arange(int((b_hi - b_lo) / grid_step) + 1)
    if a_axis.size * b_axis.size > node_cap:
        raise ResourceLimitError(
            f"heat map needs {a_axis.size * b_axis.size} nodes, cap {node_cap}")
    aa, bb = np.meshgrid(a_axis, b_axis)
    pts = (plane.origin[None, :] + aa.ravel()[:, None] * plane.e1[None, :]
           + bb.ravel()[:, None] * plane.e2[None, :])
    r = p.space.region
    ok = (r.contains(pts[:, 0], pts[:, 1])
          & (pts[:, 2] >= p.space.z_min - _EPS)
          & (pts[:, 2] <= p.space.z_max + _EPS))
    values = np.full(pts.shape[0], np.nan)
    if ok.any():
        sel = pts[ok]
        mins = np.full(sel.shape[0], np.inf)
        bx, by, br, bh = b.packed()
        for dev in p.served:
            devs = np.broadcast_to(dev, sel.shape)
            blocked = segments_blocked(np.ascontiguousarray(devs),
                                       np.ascontiguousarray(sel),
                                       bx, by, br, bh, index=b.index)
            dist = np.linalg.norm(sel - devs, axis=1)
            snr = mean_power_for_states(dist, blocked, p.channel) \
                - p.channel.sigma2_dbm
            mins = np.minimum(mins, snr)
        values[ok] = mins
    return HeatMap(plane=plane, a_axis=a_axis, b_axis=b_axis,
                   values=values.reshape(bb.shape))


# --- exhaustive baseline ----------------------------------------------------

def _axis_grid(lo: float, hi: float, step: float) -> np.ndarray:
    return lo + step * np.arange(int((hi - lo) / step + _EPS) + 1)


def exhaustive_search(p: SearchProblem, b: BuildingSet, grid_step: float,
                      node_cap: int = 20_000_000):
    """Objective argmax over an anchored 3D grid of the allowed space.

    The grid is anchored at the (x_min, y_min, z_min) corner, so halving
    ``grid_step`` yields a superset of nodes and the optimum can only rise.
    Returns (position, objective dB).
    """
    if grid_step <= 0:
        raise ValueError("grid_step must be > 0")
    r = p.space.region
    xs = _axis_grid(r.x_min, r.x_max, grid_step)
    ys = _axis_grid(r.y_min, r.y_max, grid_step)
    zs = _axis_grid(p.space.z_min, p.space.z_max, grid_step)
    n_nodes = xs.size * ys.size * zs.size
    if n_nodes > node_cap:
        raise ResourceLimitError(
            f"exhaustive grid needs {n_nodes} nodes, cap {node_cap}")
    best_val, best_pos = -np.inf, None
    bx, by, br, bh = b.packed()
    xx, yy = np.meshgrid(xs, ys, indexing="ij")
    layer_xy = np.column_stack([xx.ravel(), yy.ravel()])
    for z in zs:
        nodes = np.column_stack([layer_xy, np.full(len(layer_xy), z)])
        mins = np.full(len(nodes), np.inf)
        for dev in p.served:
            devs = np.broadcast_to(dev, nodes.shape)
            blocked = segments_blocked(np.ascontiguousarray(devs),
                                       np.ascontiguousarray(nodes),
                                       bx, by, br, bh, index=b.index)
            dist = np.linalg.norm(nodes - devs, axis=1)
            snr = mean_power_for_states(dist, blocked, p.channel) \
                - p.channel.sigma2_dbm
            mins = np.minimum(mins, snr)
        k = int(np.argmax(mins))
        if mins[k] > best_val:
            best_val = float(mins[k])
            best_pos = nodes[k].copy()
    return best_pos, best_val


# --- budget sweep -----------------------------------------------------------

def snr_coverage(snr_db: np.ndarray, blocked: np.ndarray, cp: ChannelParams,
                 threshold_db: float) -> np.ndarray:
    """P(instantaneous SNR > threshold) under unit-mean Nakagami fading."""
    ratio = dbm_to_mw(threshold_db) / dbm_to_mw(snr_db)
    m = np.where(blocked, cp.m_nlos, cp.m_los)
    return special.gammaincc(m, m * ratio)


def _group_coverage(uav_pos, users: np.ndarray, b: BuildingSet,
                    cp: ChannelParams, threshold_db: float) -> float:
    snr, blocked = link_snrs(uav_pos, users, b, cp)
    return float(snr_coverage(snr, blocked, cp, threshold_db).sum())


@dataclass(frozen=True)
class SearchSweepResult:
    """Mean user coverage against search budget plus the two reference
    levels: the model-picked fixed-altitude deployment and the grid bound."""

    budgets: np.ndarray
    mean_coverage: np.ndarray
    sg_level: float
    sg_altitude: float
    exhaustive_bound: float
    n_users: int
    n_uavs: int


def _model_altitude(users: np.ndarray, uav_xy: np.ndarray,
                    assign: np.ndarray, curve, cp: ChannelParams,
                    threshold_db: float, altitudes: np.ndarray) -> float:
    """Altitude maximizing curve-predicted mean coverage (terrain unseen)."""
    best_alt, best_val = float(altitudes[0]), -np.inf
    horiz = np.linalg.norm(users[:, :2] - uav_xy[assign], axis=1)
    for h in altitudes:
        dist = np.hypot(horiz, h)
        theta = np.degrees(np.arctan2(h, np.maximum(horiz, 1e-9)))
        p_los = np.clip(np.asarray(curve(theta), dtype=float), 0.0, 1.0)
        snr_los = mean_power_for_states(dist, np.zeros(len(dist), bool), cp) \
            - cp.sigma2_dbm
        snr_nlos = mean_power_for_states(dist, np.ones(len(dist), bool), cp) \
            - cp.sigma2_dbm
        cov = (p_los * snr_coverage(snr_los, np.zeros(len(dist), bool), cp,
                                    threshold_db)
               + (1 - p_los) * snr_coverage(snr_nlos,
                                            np.ones(len(dist), bool), cp,
                                            threshold_db))
        val = float(cov.mean())
        if val > best_val:
            best_val, best_alt = val, float(h)
    return best_alt


def _refined_group_bound(users: np.ndarray, b: BuildingSet, space: AllowedSpace,
                         cp: ChannelParams, threshold_db: float,
                         coarse_step: float, fine_step: float) -> float:
    """Two-stage grid argmax of summed group coverage."""
    r = space.region
    best_val, best_pos = -np.inf, None
    for step, bounds in ((coarse_step, None), (fine_step, "refine")):
        if bounds is None:
            xs = _axis_grid(r.x_min, r.x_max, step)
            ys = _axis_grid(r.y_min, r.y_max, step)
            zs = _axis_grid(space.z_min, space.z_max, step)
        else:
            cx, cy, cz = best_pos
            xs = _axis_grid(max(r.x_min, cx - coarse_step),
                            min(r.x_max, cx + coarse_step), step)
            ys = _axis_grid(max(r.y_min, cy - coarse_step),
                            min(r.y_max, cy + coarse_step), step)
            zs = _axis_grid(max(space.z_min, cz - coarse_step),
                            min(space.z_max, cz + coarse_step), step)
        xx, yy = np.meshgrid(xs, ys, indexing="ij")
        layer_xy = np.column_stack([xx.ravel(), yy.ravel()])
        bx, by, br, bh = b.packed()
        for z in zs:
            nodes = np.column_stack([layer_xy, np.full(len(layer_xy), z)])
            total = np.zeros(len(nodes))
            for u in users:
                devs = np.broadcast_to(u, nodes.shape)
                blocked = segments_blocked(np.ascontiguousarray(devs),
                                           np.ascontiguousarray(nodes),
                                           bx, by, br, bh, index=b.index)
                dist = np.linalg.norm(nodes - devs, axis=1)
                snr = mean_power_for_states(dist, blocked, cp) \
                    - cp.sigma2_dbm
                total += snr_coverage(snr, blocked, cp, threshold_db)
            k = int(np.argmax(total))
            if total[k] > best_val:
                best_val = float(total[k])
                best_pos = nodes[k]
    return best_val


def search_length_sweep(budgets: Sequence[float], b: BuildingSet,
                        space: AllowedSpace, curve, seed: int,
                        user_density_per_km2: float = 200.0,
                        uav_density_per_km2: float = 12.0,
                        granularity: float = GRANULARITY_DEFAULT,
                        threshold_db: float = 4.0,
                        cp: Optional[ChannelParams] = None,
                        altitudes: Optional[np.ndarray] = None,
                        bound_coarse_step: float = 10.0,
                        bound_fine_step: float = 1.0) -> SearchSweepResult:
    """Mean user coverage as a function of search trajectory budget.

    One deployment of UAVs (Poisson, conditioned non-empty) starts at the
    top of the allowed space; users group to their nearest UAV.  Each UAV
    runs one search at the largest budget; smaller budgets park it at the
    best-coverage probe reachable within that budget, so the curve is
    non-decreasing by construction.  The fixed-altitude reference deploys
    the same UAV positions at the altitude the LoS curve predicts best;
    the bound places each UAV at its group's grid-optimal position.
    """
    budgets = np.asarray(budgets, dtype=float)
    if budgets.size == 0 or np.any(np.diff(budgets) < 0) or budgets[0] < 0:
        raise ValueError("budgets must be sorted ascending and non-negative")
    cp = cp or ChannelParams()
    if altitudes is None:
        altitudes = _axis_grid(max(space.z_min, 40.0), space.z_max, 10.0)

    rng_users = seeding.stream(seed, seeding.SWEEP, 0)
    rng_uavs = seeding.stream(seed, seeding.SWEEP, 1)
    region = space.region
    n_users = rng_users.poisson(user_density_per_km2 * region.area_km2)
    n_users = max(int(n_users), 1)
    users = np.column_stack([region.sample_xy(rng_users, n_users),
                             np.zeros(n_users)])
    n_uavs = 0
    while n_uavs == 0:
        n_uavs = int(rng_uavs.poisson(uav_density_per_km2 * region.area_km2))
    uav_xy = region.sample_xy(rng_uavs, n_uavs)

    assign = np.argmin(np.linalg.norm(users[:, None, :2]
                                      - uav_xy[None, :, :], axis=2), axis=1)
    groups = [np.flatnonzero(assign == j) for j in range(n_uavs)]

    # Real-time curve: one max-budget search per UAV, then prefix parking.
    max_budget = float(budgets[-1])
    coverage_sum = np.zeros(budgets.size)
    bound_sum = 0.0
    for j, idx in enumerate(groups):
        start = np.array([uav_xy[j, 0], uav_xy[j, 1], space.z_max])
        if idx.size == 0:
            continue
        group_users = users[idx]
        prob = SearchProblem(served=group_users, space=space,
                             budget=max_budget, granularity=granularity,
                             channel=cp)
        if idx.size == 1:
            trace = _run_search(prob, b, start, dynamic_focus=False)
        else:
            trace = _run_search(prob, b, start, dynamic_focus=True)
        cum = trace.cumulative_path()
        per_probe = np.array([
            _group_coverage(pr.position, group_users, b, cp, threshold_db)
            for pr in trace.probes])
        for bi, budget in enumerate(budgets):
            reachable = cum <= budget + _EPS
            coverage_sum[bi] += float(per_probe[reachable].max())
        bound_sum += _refined_group_bound(group_users, b, space, cp,
                                          threshold_db, bound_coarse_step,
                                          bound_fine_step)

    # Fixed-altitude reference: same xy, curve-picked common altitude.
    h_star = _model_altitude(users, uav_xy, assign, curve, cp, threshold_db,
                             np.asarray(altitudes, dtype=float))
    sg_sum = 0.0
    for j, idx in enumerate(groups):
        if idx.size == 0:
            continue
        pos = np.array([uav_xy[j, 0], uav_xy[j, 1], h_star])
        sg_sum += _group_coverage(pos, users[idx], b, cp, threshold_db)

    return SearchSweepResult(budgets=budgets,
                             mean_coverage=coverage_sum / n_users,
                             sg_level=sg_sum / n_users,
                             sg_altitude=h_star,
                             exhaustive_bound=bound_sum / n_users,
                             n_users=n_users, n_uavs=n_uavs)


# --- CSV --------------------------------------------------------------------

def write_trace_csv(trace: SearchTrace, path) -> None:
    cum = trace.cumulative_path()
    with open(path, "w") as fh:
        fh.write("step,x,y,z,min_snr_db,blocked_mask,path_length_m\n")
        for i, pr in enumerate(trace.probes):
            mask = "".join("1" if f else "0" for f in pr.blocked)
            fh.write(f"{i},{pr.position[0]:.3f},{pr.position[1]:.3f},"
                     f"{pr.position[2]:.3f},{pr.min_snr_db:.6f},{mask},"
                     f"{cum[i]:.3f}\n")


def write_heatmap_csv(hm: HeatMap, path) -> None:
    with open(path, "w") as fh:
        fh.write("a_m,b_m,min_snr_db\n")
        for i, bb in enumerate(hm.b_axis):
            for j, a in enumerate(hm.a_axis):
                v = hm.values[i, j]
                text = "nan" if np.isnan(v) else f"{v:.6f}"
                fh.write(f"{a:.3f},{bb:.3f},{text}\n")


def write_search_sweep_csv(result: SearchSweepResult, path) -> None:
    with open(path, "w") as fh:
        fh.write("budget_m,mean_coverage,sg_level,exhaustive_bound\n")
        for bud, cov in zip(result.budgets, result.mean_coverage):
            fh.write(f"{bud:g},{cov:.6f},{result.sg_level:.6f},"
                     f"{result.exhaustive_bound:.6f}\n")

"""Tracking moving crowds with UAVs steered by a carved height map.

Two crowds walk fixed routes at a constant pace.  One UAV follows each
crowd, re-planning every slot from a HeightField: it scores candidate
positions by the fraction of users it estimates to be in line of sight
(unknown cells are treated as blocking at a pessimistic height) and
breaks ties by mean distance to the crowd.  Metrics are then evaluated
against the true building set.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from uavterra.channel import ChannelParams, mean_power_for_states
from uavterra.geometry import Polyline
from uavterra.reconstruct import HeightField
from uavterra.terrain import BuildingSet, LogNormalHeights, segments_blocked

PACE_DEFAULT = 50.0
SLOTS_DEFAULT = 6
CROWD_SIZE_DEFAULT = 25.0
CROWD_SPREAD_DEFAULT = 20.0
JITTER_DEFAULT = 2.0
USER_Z_DEFAULT = 1.5
ALTITUDE_BOUNDS_DEFAULT = (20.0, 60.0)
START_ALTITUDE_DEFAULT = 30.0
STEP_BUDGET_DEFAULT = 60.0
N_DIRECTIONS_DEFAULT = 24
N_RADII_DEFAULT = 3
ALT_STEP_DEFAULT = 10.0
SAMPLE_STEP_DEFAULT = 2.0
# safety buffer for planning: a sampled ray only counts as clear when it
# passes this far above the mapped height, so the planner does not bet
# on grazing sightlines the sampling could have missed
CLEARANCE_DEFAULT = 2.0
# a scanned ceiling below this is treated as open ground: real buildings
# are rarely this short (about the 1st percentile of the default height
# draw), while street cells keep residual ceilings of several metres
# because the lowest sightline over them still crosses a few metres up
MIN_OBSTACLE_DEFAULT = 8.0
# default pessimistic height for unscanned cells: 95th percentile of the
# default building-height draw
PESSIMISTIC_HEIGHT_DEFAULT = LogNormalHeights().percentile(0.95)
_EPS = 1e-9


@dataclass(frozen=True)
class ParadeScenario:
    """Two crowds walking fixed polyline routes, one UAV per crowd."""

    route_a: Polyline
    route_b: Polyline
    pace: float = PACE_DEFAULT
    slots: int = SLOTS_DEFAULT
    crowd_size_mean: float = CROWD_SIZE_DEFAULT
    crowd_spread: float = CROWD_SPREAD_DEFAULT
    jitter: float = JITTER_DEFAULT
    user_z: float = USER_Z_DEFAULT
    uav_altitude_bounds: tuple = ALTITUDE_BOUNDS_DEFAULT

    def __post_init__(self):
        if self.pace <= 0:
            raise ValueError("pace must be > 0")
        if self.slots < 1:
            raise ValueError("slots must be >= 1")
        if self.crowd_size_mean <= 0:
            raise ValueError("crowd_size_mean must be > 0")
        if self.crowd_spread < 0 or self.jitter < 0:
            raise ValueError("crowd_spread and jitter must be >= 0")
        lo, hi = self.uav_altitude_bounds
        if not 0 < lo <= hi:
            raise ValueError("uav_altitude_bounds must satisfy 0 < lo <= hi")


@dataclass(frozen=True)
class SlotState:
    """User and UAV positions for one time slot (slot index is 1-based)."""

    slot: int
    users_a: np.ndarray
    users_b: np.ndarray
    uav_a: Optional[np.ndarray] = None
    uav_b: Optional[np.ndarray] = None

    def __post_init__(self):
        for name in ("users_a", "users_b"):
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            if arr.ndim != 2 or arr.shape[1] != 3 or len(arr) == 0:
                raise ValueError(f"{name} must be a non-empty (n, 3) array")
            object.__setattr__(self, name, arr)
        for name in ("uav_a", "uav_b"):
            val = getattr(self, name)
            if val is not None:
                object.__setattr__(
                    self, name,
                    np.asarray(val, dtype=np.float64).reshape(3))


def _disc_offsets(rng: np.random.Generator, n: int,
                  radius: float) -> np.ndarray:
    """Uniform points in a disc of the given radius, as (n, 2) offsets."""
    r = radius * np.sqrt(rng.random(n))
    phi = rng.uniform(0.0, 2.0 * np.pi, n)
    return np.column_stack([r * np.cos(phi), r * np.sin(phi)])


def gen_crowd_track(s: ParadeScenario, rng: np.random.Generator) -> list:
    """Draw both crowds and march them along their routes.

    Crowd membership is drawn once at slot 1 (Poisson count, at least
    one user, uniform offsets in a disc of radius crowd_spread).  Each
    later slot advances the crowd center by ``pace`` of arc length,
    clamped at the route end, and adds fresh per-user jitter.  Returns
    one SlotState per slot with the UAV fields unset.
    """
    counts = [max(int(rng.poisson(s.crowd_size_mean)), 1) for _ in range(2)]
    offsets = [_disc_offsets(rng, n, s.crowd_spread) for n in counts]
    routes = (s.route_a, s.route_b)
    states = []
    for k in range(1, s.slots + 1):
        arc = (k - 1) * s.pace
        crowds = []
        for route, off, n in zip(routes, offsets, counts):
            center = route.point_at(arc)
            jit = rng.normal(0.0, s.jitter, (n, 2)) if s.jitter > 0 else 0.0
            xy = center[None, :] + off + jit
            crowds.append(np.column_stack([xy, np.full(n, s.user_z)]))
        states.append(SlotState(k, crowds[0], crowds[1]))
    return states


def _effective_heights(hf: HeightField, pessimistic_height: float,
                       min_obstacle: float = MIN_OBSTACLE_DEFAULT):
    """Planning heights: scanned ceilings, with sub-building ceilings
    flattened to open ground and unscanned cells held pessimistic."""
    known = np.isfinite(hf.upper)
    heights = np.where(known, hf.upper, pessimistic_height)
    heights[known & (hf.upper < min_obstacle)] = 0.0
    return heights


def _los_fractions(cands, users, heights, hf, sample_step, clearance=0.0):
    """Estimated-LoS fraction of ``users`` for each candidate position.

    A segment counts as blocked when any sample point lies below the
    effective cell height at its ground cell, plus ``clearance`` for
    interior samples; the two endpoints are tested exactly so a user
    never blocks themselves.  All candidate-user pairs are evaluated in
    one flattened pass.
    """
    n_c, n_u = len(cands), len(users)
    a = np.repeat(cands, n_u, axis=0)
    b = np.tile(users, (n_c, 1))
    len2d = np.hypot(b[:, 0] - a[:, 0], b[:, 1] - a[:, 1])
    n_samp = np.maximum(
        np.ceil(np.maximum(len2d, _EPS) / sample_step).astype(np.int64) + 1,
        2)
    total = int(n_samp.sum())
    pair = np.repeat(np.arange(n_c * n_u), n_samp)
    starts = np.concatenate([[0], np.cumsum(n_samp)[:-1]])
    t = (np.arange(total) - starts[pair]) / (n_samp[pair] - 1)
    pts = a[pair] + t[:, None] * (b[pair] - a[pair])
    ii, jj = hf.cell_of(pts[:, 0], pts[:, 1])
    interior = (t > 0.0) & (t < 1.0)
    margin = np.where(interior, clearance, 0.0)
    hit = pts[:, 2] < heights[ii, jj] + margin - _EPS
    blocked = np.bincount(pair[hit], minlength=n_c * n_u) > 0
    return 1.0 - blocked.reshape(n_c, n_u).mean(axis=1)


def estimated_los_fraction(position, crowd, hf: HeightField, *,
                           pessimistic_height=PESSIMISTIC_HEIGHT_DEFAULT,
                           sample_step=SAMPLE_STEP_DEFAULT,
                           clearance=CLEARANCE_DEFAULT,
                           min_obstacle=MIN_OBSTACLE_DEFAULT) -> float:
    """Fraction of the crowd the map predicts to be in LoS from here."""
    pos = np.asarray(position, dtype=np.float64).reshape(1, 3)
    users = np.asarray(crowd, dtype=np.float64).reshape(-1, 3)
    heights = _effective_heights(hf, pessimistic_height, min_obstacle)
    return float(_los_fractions(pos, users, heights, hf, sample_step,
                                clearance)[0])


def _candidates(cur, bounds, step_budget, region, n_directions, n_radii,
                alt_step):
    """Candidate next positions: stay, vertical moves, and a fan of
    horizontal offsets at each reachable altitude level, all within the
    3d step budget and clipped to the region."""
    lo, hi = bounds
    dz_raw = np.array([-alt_step, 0.0, alt_step])
    z_levels = np.unique(np.clip(
        cur[2] + np.clip(dz_raw, -step_budget, step_budget), lo, hi))
    phis = 2.0 * np.pi * np.arange(n_directions) / n_directions
    dirs = np.column_stack([np.cos(phis), np.sin(phis)])
    fracs = np.arange(1, n_radii + 1) / n_radii
    cands = []
    for z in z_levels:
        dz = z - cur[2]
        cands.append([cur[0], cur[1], z])
        h_max = np.sqrt(max(step_budget**2 - dz**2, 0.0))
        if h_max <= 0.0:
            continue
        radii = fracs * h_max
        xy = cur[None, :2] + (radii[:, None, None] * dirs[None, :, :]
                              ).reshape(-1, 2)
        cands.extend(np.column_stack([xy, np.full(len(xy), z)]))
    out = np.array(cands, dtype=np.float64)
    out[:, 0] = np.clip(out[:, 0], region.x_min, region.x_max)
    out[:, 1] = np.clip(out[:, 1], region.y_min, region.y_max)
    return out


def track_step(current, crowd, hf: HeightField,
               bounds=ALTITUDE_BOUNDS_DEFAULT,
               step_budget=STEP_BUDGET_DEFAULT, *,
               pessimistic_height=PESSIMISTIC_HEIGHT_DEFAULT,
               n_directions=N_DIRECTIONS_DEFAULT,
               n_radii=N_RADII_DEFAULT,
               alt_step=ALT_STEP_DEFAULT,
               sample_step=SAMPLE_STEP_DEFAULT,
               clearance=CLEARANCE_DEFAULT,
               min_obstacle=MIN_OBSTACLE_DEFAULT) -> np.ndarray:
    """Pick the next UAV position for one crowd.

    Scores a disc of candidate positions within ``step_budget`` of the
    current one (altitude kept inside ``bounds``) lexicographically:
    highest estimated-LoS fraction first, then smallest mean 3d distance
    to the crowd.  If no candidate sees any user, climbs: returns the
    highest reachable candidate closest to the crowd.  A zero budget
    returns the current position.
    """
    cur = np.asarray(current, dtype=np.float64).reshape(3)
    users = np.asarray(crowd, dtype=np.float64).reshape(-1, 3)
    if len(users) == 0:
        raise ValueError("crowd must not be empty")
    lo, hi = bounds
    if not 0 < lo <= hi:
        raise ValueError("bounds must satisfy 0 < lo <= hi")
    if not lo - 1e-6 <= cur[2] <= hi + 1e-6:
        raise ValueError("current altitude outside bounds")
    if not hf.region.contains(cur[0], cur[1]):
        raise ValueError("current position outside the mapped region")
    if step_budget < 0:
        raise ValueError("step_budget must be >= 0")
    if (n_directions < 1 or n_radii < 1 or alt_step < 0 or sample_step <= 0
            or clearance < 0):
        raise ValueError("bad candidate-grid parameter")
    if step_budget == 0:
        return cur.copy()
    cands = _candidates(cur, bounds, step_budget, hf.region, n_directions,
                        n_radii, alt_step)
    heights = _effective_heights(hf, pessimistic_height, min_obstacle)
    frac = _los_fractions(cands, users, heights, hf, sample_step, clearance)
    mean_dist = np.linalg.norm(cands[:, None, :] - users[None, :, :],
                               axis=2).mean(axis=1)
    if frac.max() <= 0.0:
        keep = cands[:, 2] >= cands[:, 2].max() - _EPS
    else:
        keep = frac == frac.max()
    idx = np.flatnonzero(keep)
    return cands[idx[np.argmin(mean_dist[idx])]].copy()


def true_crowd_metrics(uav, users, b: BuildingSet, cp: ChannelParams):
    """(LoS fraction, mean SNR dB, min SNR dB) against the true scene."""
    uav = np.asarray(uav, dtype=np.float64).reshape(3)
    users = np.asarray(users, dtype=np.float64).reshape(-1, 3)
    p = np.repeat(uav[None, :], len(users), axis=0)
    blocked = segments_blocked(p, users, b)
    d = np.linalg.norm(users - uav[None, :], axis=1)
    snr = mean_power_for_states(d, blocked, cp) - cp.sigma2_dbm
    return float((~blocked).mean()), float(snr.mean()), float(snr.min())


@dataclass(frozen=True)
class CrowdMetrics:
    """Truth-scored metrics for one crowd in one slot."""

    slot: int
    crowd: str
    los_fraction: float
    mean_snr_db: float
    min_snr_db: float
    uav: np.ndarray


@dataclass(frozen=True)
class ParadeResult:
    """Slot states with UAV positions filled, plus per-crowd metrics."""

    states: list
    metrics: list

    def los_matrix(self) -> np.ndarray:
        """True-LoS fractions as a (slots, 2) array, crowds a then b."""
        out = np.full((len(self.states), 2), np.nan)
        for m in self.metrics:
            out[m.slot - 1, 0 if m.crowd == "a" else 1] = m.los_fraction
        return out


def run_parade(s: ParadeScenario, hf: HeightField, b: BuildingSet,
               cp: ChannelParams, rng: np.random.Generator, *,
               step_budget=STEP_BUDGET_DEFAULT,
               start_altitude=START_ALTITUDE_DEFAULT,
               starts=None, **track_kwargs) -> ParadeResult:
    """March the crowds and steer one UAV per crowd off the height map.

    UAVs start above their crowd's slot-1 center at ``start_altitude``
    unless explicit ``starts`` (two points) are given; each slot they
    take one track_step and are then scored against the true buildings.
    Randomness is consumed only by crowd generation.
    """
    states = gen_crowd_track(s, rng)
    if starts is None:
        uavs = [np.append(st[:, :2].mean(axis=0), start_altitude)
                for st in (states[0].users_a, states[0].users_b)]
    else:
        uavs = [np.asarray(p, dtype=np.float64).reshape(3) for p in starts]
        if len(uavs) != 2:
            raise ValueError("starts must hold two positions")
    out_states, metrics = [], []
    for st in states:
        for i, (label, users) in enumerate((("a", st.users_a),
                                            ("b", st.users_b))):
            uavs[i] = track_step(uavs[i], users, hf, s.uav_altitude_bounds,
                                 step_budget, **track_kwargs)
            losf, mean_snr, min_snr = true_crowd_metrics(uavs[i], users, b,
                                                         cp)
            metrics.append(CrowdMetrics(st.slot, label, losf, mean_snr,
                                        min_snr, uavs[i].copy()))
        out_states.append(replace(st, uav_a=uavs[0].copy(),
                                  uav_b=uavs[1].copy()))
    return ParadeResult(out_states, metrics)


def write_parade_csv(result: ParadeResult, path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["slot", "crowd", "los_fraction", "mean_snr_db",
                    "min_snr_db", "uav_x", "uav_y", "uav_z"])
        for m in result.metrics:
            w.writerow([m.slot, m.crowd, f"{m.los_fraction:.6f}",
                        f"{m.mean_snr_db:.3f}", f"{m.min_snr_db:.3f}",
                        f"{m.uav[0]:.3f}", f"{m.uav[1]:.3f}",
                        f"{m.uav[2]:.3f}"])

"""Downlink coverage probability under exact or model-thinned blockage.

A deployment is a Poisson set of UAVs at a common altitude.  Each Monte
Carlo trial redraws the deployment (annealed), places a few users in the
evaluation region, resolves every user-UAV link to LoS or NLoS, associates
each user to the UAV with the highest mean received power, applies fading,
and checks SINR against one or more thresholds.

The two operating modes differ only in the injected link resolver:

* ``terrain``: exact segment-vs-cylinder geometry against a BuildingSet.
* ``model``: each link is independently LoS with probability given by an
  elevation-angle curve (Bernoulli thinning).

Everything else (geometry streams, association, fading, SINR) is shared,
so mode comparisons are paired: both modes see identical user and UAV
draws for a given seed.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np

from uavterra import seeding
from uavterra.channel import (ChannelParams, dbm_to_mw, fading_for_states,
                              mean_power_for_states)
from uavterra.geometry import Region
from uavterra.los_model import elevation_angles
from uavterra.terrain import BuildingSet
from uavterra.kernels import segments_blocked

TRIAL_CHUNK = 512
MODES = ("terrain", "model")


@dataclass(frozen=True)
class Deployment:
    """UAV positions at a common altitude plus the law they were drawn from."""

    positions: np.ndarray
    density_per_km2: float
    altitude: float
    region: Region
    seed: Optional[int] = None

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=float).reshape(-1, 3)
        object.__setattr__(self, "positions", pos)
        if self.altitude <= 0:
            raise ValueError("altitude must be > 0")
        if pos.size and not np.allclose(pos[:, 2], self.altitude):
            raise ValueError("all UAVs must sit at the common altitude")
        if self.density_per_km2 < 0:
            raise ValueError("density must be >= 0")

    def __len__(self) -> int:
        return self.positions.shape[0]


def _draw_uav_xy(rng: np.random.Generator, density_per_km2: float,
                 region: Region) -> np.ndarray:
    count = rng.poisson(density_per_km2 * region.area_km2)
    return region.sample_xy(rng, count)


def deploy_ppp(density_per_km2: float, altitude: float, region: Region,
               seed: int) -> Deployment:
    """Draw one Poisson deployment, deterministic per seed."""
    if density_per_km2 < 0:
        raise ValueError("density must be >= 0")
    rng = seeding.stream(seed, seeding.COVERAGE_GEOM)
    xy = _draw_uav_xy(rng, density_per_km2, region)
    pos = np.column_stack([xy, np.full(len(xy), float(altitude))])
    return Deployment(positions=pos, density_per_km2=density_per_km2,
                      altitude=altitude, region=region, seed=seed)


# --- link resolvers ---------------------------------------------------------

class TerrainResolver:
    """Exact geometric blockage against a building set."""

    mode = "terrain"

    def __init__(self, buildings: BuildingSet):
        self.buildings = buildings

    def __call__(self, users: np.ndarray, uavs: np.ndarray,
                 rng: np.random.Generator) -> np.ndarray:
        bx, by, br, bh = self.buildings.packed()
        return segments_blocked(users, uavs, bx, by, br, bh,
                                index=self.buildings.index)


class CurveResolver:
    """Independent Bernoulli thinning by an elevation-angle LoS curve."""

    mode = "model"

    def __init__(self, curve: Callable[[np.ndarray], np.ndarray]):
        self.curve = curve

    def __call__(self, users: np.ndarray, uavs: np.ndarray,
                 rng: np.random.Generator) -> np.ndarray:
        p_los = np.asarray(self.curve(elevation_angles(users, uavs)), dtype=float)
        return rng.uniform(size=len(users)) >= p_los


def resolver_for(mode: str, buildings: Optional[BuildingSet] = None,
                 curve=None):
    if mode == "terrain":
        if buildings is None:
            raise ValueError("terrain mode needs a BuildingSet")
        return TerrainResolver(buildings)
    if mode == "model":
        if curve is None:
            raise ValueError("model mode needs a LoS curve")
        return CurveResolver(curve)
    raise ValueError(f"unknown mode {mode!r}; expected one of {MODES}")


# --- association ------------------------------------------------------------

def associate(user, d: Deployment, resolver, rng: np.random.Generator,
              cp: Optional[ChannelParams] = None):
    """Pick the serving UAV by maximum mean received power.

    Returns (serving index or None, blocked bool array).  An empty
    deployment yields (None, empty array): a no-coverage outcome.
    """
    cp = cp or ChannelParams()
    if len(d) == 0:
        return None, np.zeros(0, dtype=bool)
    user = np.asarray(user, dtype=float).reshape(3)
    users = np.broadcast_to(user, (len(d), 3))
    blocked = resolver(np.ascontiguousarray(users), d.positions, rng)
    dist = np.linalg.norm(d.positions - user, axis=1)
    mean_dbm = mean_power_for_states(dist, blocked, cp)
    return int(np.argmax(mean_dbm)), blocked


# --- Monte Carlo ------------------------------------------------------------

@dataclass(frozen=True)
class CoverageResult:
    threshold_db: float
    mean_coverage: float
    trials: int
    ci95: float

    def __post_init__(self):
        if not 0.0 <= self.mean_coverage <= 1.0:
            raise ValueError("mean_coverage must be in [0, 1]")
        if self.ci95 < 0:
            raise ValueError("ci95 must be >= 0")


def _group_first_argmax(values: np.ndarray, starts: np.ndarray,
                        maxima: np.ndarray, sizes: np.ndarray) -> np.ndarray:
    """Index of the first maximum inside each contiguous group."""
    hit = values == np.repeat(maxima, sizes)
    idx = np.arange(values.size)
    idx_masked = np.where(hit, idx, values.size)
    return np.minimum.reduceat(idx_masked, starts)


def _coverage_chunk(chunk_id: int, n_trials: int, seed: int, d: Deployment,
                    user_region: Region, users_per_trial: int, resolver,
                    thresholds: np.ndarray, cp: ChannelParams,
                    redraw: bool) -> np.ndarray:
    """Per-trial coverage fractions, shape (n_trials, n_thresholds)."""
    rng_geom = seeding.stream(seed, seeding.COVERAGE_GEOM, chunk_id)
    rng_fade = seeding.stream(seed, seeding.COVERAGE_FADE, chunk_id)
    rng_thin = seeding.stream(seed, seeding.COVERAGE_THIN, chunk_id)

    if redraw:
        uav_xy = [_draw_uav_xy(rng_geom, d.density_per_km2, d.region)
                  for _ in range(n_trials)]
    else:
        uav_xy = [d.positions[:, :2]] * n_trials
    counts = np.array([len(xy) for xy in uav_xy])
    user_xy = user_region.sample_xy(rng_geom, n_trials * users_per_trial)
    out = np.zeros((n_trials, thresholds.size))
    live = counts > 0
    if not live.any():
        return out

    # Flatten every (user, uav) pair of every live trial into one batch.
    sizes = np.repeat(counts[live], users_per_trial)           # per user group
    starts = np.concatenate([[0], np.cumsum(sizes)[:-1]])
    users3 = np.column_stack([user_xy, np.zeros(len(user_xy))])
    users3 = users3.reshape(n_trials, users_per_trial, 3)[live].reshape(-1, 3)
    p_user = np.repeat(users3, sizes, axis=0)
    uavs_per_trial = [np.column_stack([xy, np.full(len(xy), d.altitude)])
                      for xy, c in zip(uav_xy, counts) if c > 0]
    p_uav = np.concatenate([np.tile(u, (users_per_trial, 1))
                            for u in uavs_per_trial], axis=0)

    blocked = resolver(np.ascontiguousarray(p_user),
                       np.ascontiguousarray(p_uav), rng_thin)
    dist = np.linalg.norm(p_uav - p_user, axis=1)
    mean_mw = dbm_to_mw(mean_power_for_states(dist, blocked, cp))

    group_max = np.maximum.reduceat(mean_mw, starts)
    serving = _group_first_argmax(mean_mw, starts, group_max, sizes)

    rx_mw = mean_mw * fading_for_states(blocked, cp, rng_fade)
    total_mw = np.add.reduceat(rx_mw, starts)
    signal = rx_mw[serving]
    interference = total_mw - signal
    sinr = signal / (interference + cp.sigma2_mw)
    sinr_db = 10.0 * np.log10(sinr)

    covered = sinr_db[:, None] > thresholds[None, :]
    # Average users within each live trial.
    n_live = int(live.sum())
    per_user = covered.reshape(n_live, users_per_trial, thresholds.size)
    out[live] = per_user.mean(axis=1)
    return out


def coverage_probability(d: Deployment, thresholds, trials: int, seed: int,
                         resolver, user_region: Optional[Region] = None,
                         users_per_trial: int = 4,
                         cp: Optional[ChannelParams] = None,
                         redraw: bool = True, workers: int = 1):
    """Monte Carlo coverage estimate.

    ``thresholds`` may be a scalar or a sequence; all thresholds are
    evaluated on the same per-trial samples, so coverage is exactly
    non-increasing in threshold.  ``redraw=False`` keeps the given
    positions fixed across trials.  The CI is computed over per-trial
    means, which are independent across trials.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    cp = cp or ChannelParams()
    user_region = user_region or d.region
    scalar = np.isscalar(thresholds)
    thr = np.atleast_1d(np.asarray(thresholds, dtype=float))

    bounds = list(range(0, trials, TRIAL_CHUNK)) + [trials]
    tasks = [(k, bounds[k + 1] - bounds[k]) for k in range(len(bounds) - 1)]

    def run(task):
        chunk_id, n = task
        return _coverage_chunk(chunk_id, n, seed, d, user_region,
                               users_per_trial, resolver, thr, cp, redraw)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run, tasks))
    else:
        parts = [run(t) for t in tasks]
    per_trial = np.concatenate(parts, axis=0)

    mean = per_trial.mean(axis=0)
    ci = 1.96 * per_trial.std(axis=0, ddof=1) / np.sqrt(trials) if trials > 1 \
        else np.zeros_like(mean)
    results = [CoverageResult(threshold_db=float(t), mean_coverage=float(mu),
                              trials=trials, ci95=float(c))
               for t, mu, c in zip(thr, mean, ci)]
    return results[0] if scalar else results


# --- density sweep ----------------------------------------------------------

@dataclass(frozen=True)
class SweepRow:
    mode: str
    density_per_km2: float
    threshold_db: float
    coverage: float
    ci95: float
    trials: int


@dataclass(frozen=True)
class SweepTable:
    rows: list
    argmax: dict = field(default_factory=dict)
    """argmax maps (mode, threshold_db) to the best density."""

    def get(self, mode: str, density: float, threshold: float) -> SweepRow:
        for r in self.rows:
            if (r.mode == mode and r.density_per_km2 == density
                    and r.threshold_db == threshold):
                return r
        raise KeyError((mode, density, threshold))


def density_sweep(densities: Sequence[float], altitude: float,
                  thresholds: Sequence[float], modes: Sequence[str],
                  buildings: BuildingSet, curve, user_region: Region,
                  trials: int, seed: int, users_per_trial: int = 4,
                  cp: Optional[ChannelParams] = None,
                  workers: int = 1) -> SweepTable:
    """Coverage over a density grid for each mode and threshold.

    Modes are paired: for a given density they share the same seed, hence
    identical user and UAV geometry draws.
    """
    if not densities:
        raise ValueError("need at least one density")
    rows = []
    for mode in modes:
        resolver = resolver_for(mode, buildings=buildings, curve=curve)
        for di, dens in enumerate(densities):
            d = Deployment(positions=np.zeros((0, 3)), density_per_km2=dens,
                           altitude=altitude, region=buildings.region)
            res = coverage_probability(d, list(thresholds), trials,
                                       seeding.derive(seed, seeding.SWEEP, di),
                                       resolver, user_region=user_region,
                                       users_per_trial=users_per_trial, cp=cp,
                                       workers=workers)
            for r in res:
                rows.append(SweepRow(mode=mode, density_per_km2=float(dens),
                                     threshold_db=r.threshold_db,
                                     coverage=r.mean_coverage, ci95=r.ci95,
                                     trials=r.trials))
    argmax = {}
    for mode in modes:
        for t in thresholds:
            cand = [r for r in rows if r.mode == mode and r.threshold_db == t]
            best = max(cand, key=lambda r: r.coverage)
            argmax[(mode, float(t))] = best.density_per_km2
    return SweepTable(rows=rows, argmax=argmax)


def write_sweep_csv(table: SweepTable, path) -> None:
    with open(path, "w") as fh:
        fh.write("mode,density_per_km2,threshold_db,coverage,ci95,trials\n")
        for r in table.rows:
            fh.write(f"{r.mode},{r.density_per_km2:g},{r.threshold_db:g},"
                     f"{r.coverage:.6f},{r.ci95:.6f},{r.trials}\n")

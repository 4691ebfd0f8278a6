"""Elevation-angle LoS probability: sampling, curve families, fitting.

The probability that a ground-to-UAV link is unobstructed is modelled as a
function of the elevation angle theta in degrees (90 means the UAV is
straight overhead).  The canonical family is the modified sigmoid

    P(theta) = 1 / (1 + a * exp(-b * (theta - a)))

whose (a, b) may either be supplied directly, fitted to sampled data, or
derived from terrain features via a cubic polynomial with externally
supplied coefficient tables.  Modified tanh and clamped linear ("relu")
families are fitted alongside for comparison.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy import optimize

from uavterra import seeding
from uavterra.errors import ConfigError, FitError
from uavterra.geometry import Region
from uavterra.terrain import BuildingSet, segments_blocked


def elevation_angle(user, uav) -> float:
    """Elevation of ``uav`` seen from ``user`` in degrees, 90 = overhead."""
    user = np.asarray(user, dtype=float).reshape(-1)
    uav = np.asarray(uav, dtype=float).reshape(-1)
    dz = uav[2] - user[2]
    if dz <= 0:
        raise ValueError("UAV must be strictly above the user")
    horiz = math.hypot(uav[0] - user[0], uav[1] - user[1])
    return math.degrees(math.atan2(dz, horiz))


def elevation_angles(users: np.ndarray, uavs: np.ndarray) -> np.ndarray:
    """Vectorised elevation in degrees for (n, 3) endpoint arrays."""
    dz = uavs[:, 2] - users[:, 2]
    horiz = np.hypot(uavs[:, 0] - users[:, 0], uavs[:, 1] - users[:, 1])
    return np.degrees(np.arctan2(dz, horiz))


def a2glpm_probability(theta_deg, a: float, b: float):
    """Modified sigmoid LoS probability; ``theta_deg`` in [0, 90]."""
    if a <= 0:
        raise ValueError("sigmoid parameter a must be > 0")
    theta = np.asarray(theta_deg, dtype=float)
    if np.any(theta < 0) or np.any(theta > 90):
        raise ValueError("elevation angle must be within [0, 90] degrees")
    out = 1.0 / (1.0 + a * np.exp(-b * (theta - a)))
    return float(out) if out.ndim == 0 else out


class CurveFamily(Enum):
    SIGMOID = "sigmoid"
    TANH = "tanh"
    RELU = "relu"

    def evaluate(self, theta_deg, a: float, b: float):
        theta = np.asarray(theta_deg, dtype=float)
        if self is CurveFamily.SIGMOID:
            out = 1.0 / (1.0 + a * np.exp(-b * (theta - a)))
        elif self is CurveFamily.TANH:
            out = a * np.tanh(b * theta)
        else:
            out = np.clip(a * theta + b, 0.0, 1.0)
        return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class LosCurveModel:
    """One fitted (or directly parameterised) curve; mse is 0 when the
    parameters were supplied rather than fitted."""

    family: CurveFamily
    a: float
    b: float
    mse: float = 0.0

    def __post_init__(self):
        if self.mse < 0:
            raise ValueError("mse must be >= 0")
        if self.family is CurveFamily.SIGMOID and self.a <= 0:
            raise ValueError("sigmoid parameter a must be > 0")

    def __call__(self, theta_deg):
        return self.family.evaluate(theta_deg, self.a, self.b)


@dataclass(frozen=True)
class ElevationSample:
    """One elevation bin: center angle, Bernoulli trials, LoS successes."""

    theta_deg: float
    trials: int
    los_count: int

    @property
    def p_hat(self) -> float:
        return self.los_count / self.trials if self.trials else float("nan")


# --- polynomial coefficient tables -----------------------------------------

_COEFF_TERMS = [(i, j) for j in range(4) for i in range(4 - j)]  # i + j <= 3


@dataclass(frozen=True)
class A2glpmCoeffs:
    """Cubic-surface coefficients mapping terrain features to (a, b).

    ``tables`` maps target ("a" or "b") to a dict {(i, j): C_ij} with
    exactly the 10 terms i + j <= 3.
    """

    tables: dict

    def __post_init__(self):
        for target in ("a", "b"):
            table = self.tables.get(target)
            if table is None or set(table) != set(_COEFF_TERMS):
                raise ConfigError(
                    f"coefficient table for target {target!r} must have exactly "
                    f"the 10 terms with i + j <= 3", key=f"a2glpm.{target}")

    @classmethod
    def from_file(cls, path, preset: str) -> "A2glpmCoeffs":
        """Parse ``preset target i j coeff`` rows from a text file."""
        tables: dict = {"a": {}, "b": {}}
        found = False
        for ln, raw in enumerate(Path(path).read_text().splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 5:
                raise ConfigError(f"line {ln}: expected 5 fields, got {len(parts)}",
                                  key="a2glpm")
            name, target, i, j, c = parts
            if name != preset:
                continue
            found = True
            if target not in ("a", "b"):
                raise ConfigError(f"line {ln}: target must be 'a' or 'b'",
                                  key="a2glpm")
            tables[target][(int(i), int(j))] = float(c)
        if not found:
            raise ConfigError(f"preset {preset!r} not found in {path}", key="a2glpm")
        return cls(tables=tables)


def default_coeffs_path() -> Path:
    from importlib import resources
    return Path(str(resources.files("uavterra.data") / "a2glpm_coeffs.txt"))


def coeffs_to_ab(kappa: float, iota: float, omega: float,
                 coeffs: A2glpmCoeffs) -> tuple[float, float]:
    """Evaluate both cubic surfaces at (kappa * iota, omega)."""
    x = kappa * iota
    out = []
    for target in ("a", "b"):
        table = coeffs.tables[target]
        out.append(sum(c * x**i * omega**j for (i, j), c in table.items()))
    return out[0], out[1]


# --- empirical sampling -----------------------------------------------------

_SAMPLE_CHUNK = 65_536


def sample_los_curve(b: BuildingSet, uav_height: float, n_pairs: int,
                     bin_width_deg: float, rng_seed: int,
                     region: Optional[Region] = None) -> list[ElevationSample]:
    """Estimate P(LoS | elevation bin) from uniform user/UAV pairs.

    Users sit on the ground and UAVs at ``uav_height``, both uniform over
    ``region`` (default: the scene's generation region).  Every bin over
    [0, 90] is emitted, empty ones with trials=0.  Chunked per-substream
    sampling keeps results independent of worker count.
    """
    if uav_height <= 0:
        raise ValueError("uav_height must be > 0")
    if bin_width_deg <= 0:
        raise ValueError("bin_width_deg must be > 0")
    region = region or b.region
    n_bins = int(np.ceil(90.0 / bin_width_deg))
    trials = np.zeros(n_bins, dtype=np.int64)
    los = np.zeros(n_bins, dtype=np.int64)

    done = 0
    chunk_id = 0
    while done < n_pairs:
        n = min(_SAMPLE_CHUNK, n_pairs - done)
        rng = seeding.stream(rng_seed, seeding.LOS_SAMPLE, chunk_id)
        users = np.column_stack([region.sample_xy(rng, n), np.zeros(n)])
        uavs = np.column_stack([region.sample_xy(rng, n), np.full(n, uav_height)])
        theta = elevation_angles(users, uavs)
        blocked = segments_blocked(users, uavs, b)
        idx = np.minimum((theta / bin_width_deg).astype(np.int64), n_bins - 1)
        np.add.at(trials, idx, 1)
        np.add.at(los, idx, (~blocked).astype(np.int64))
        done += n
        chunk_id += 1

    centers = (np.arange(n_bins) + 0.5) * bin_width_deg
    return [ElevationSample(float(centers[k]), int(trials[k]), int(los[k]))
            for k in range(n_bins)]


# --- fitting ----------------------------------------------------------------

def _start_grid(family: CurveFamily, n_starts: int) -> np.ndarray:
    side = max(2, int(round(math.sqrt(n_starts))))
    if family is CurveFamily.SIGMOID:
        a = np.geomspace(0.3, 30.0, side)
        bb = np.linspace(0.005, 0.25, side)
    elif family is CurveFamily.TANH:
        a = np.linspace(0.2, 0.999, side)
        bb = np.geomspace(0.003, 0.5, side)
    else:
        a = np.linspace(0.0, 0.03, side)
        bb = np.linspace(-0.3, 0.9, side)
    grid = np.array([(ai, bi) for ai in a for bi in bb])
    return grid[:n_starts] if n_starts < len(grid) else grid


def _pack(family: CurveFamily, a: float, b: float) -> np.ndarray:
    if family is CurveFamily.SIGMOID:
        return np.array([math.log(a), b])
    if family is CurveFamily.TANH:
        a = min(max(a, 1e-6), 1 - 1e-9)
        return np.array([math.log(a / (1.0 - a)), math.log(max(b, 1e-9))])
    return np.array([a, b])


def _unpack(family: CurveFamily, x: np.ndarray) -> tuple[float, float]:
    if family is CurveFamily.SIGMOID:
        return math.exp(x[0]), x[1]
    if family is CurveFamily.TANH:
        return 1.0 / (1.0 + math.exp(-x[0])), math.exp(x[1])
    return float(x[0]), float(x[1])


def fit_curve(samples: Sequence[ElevationSample], family: CurveFamily,
              n_starts: int = 100, rel_tol: float = 1e-10,
              min_trials: int = 1, weighting: str = "equal",
              max_iter: int = 500) -> LosCurveModel:
    """Least-squares fit of one family to binned LoS probabilities.

    Bins with fewer than ``min_trials`` trials are excluded (an almost
    empty bin is sampling noise, not signal).  ``weighting`` is "equal"
    (each kept bin counts the same) or "trials" (bins weighted by trial
    count, equivalent to a raw per-sample fit up to a constant).  Raises
    FitError carrying the best model seen if no start converges.
    """
    kept = [s for s in samples if s.trials >= max(min_trials, 1)]
    if len(kept) < 2:
        raise ValueError("need at least two non-empty bins to fit")
    theta = np.array([s.theta_deg for s in kept])
    p = np.array([s.p_hat for s in kept])
    if weighting == "equal":
        w = np.ones_like(p)
    elif weighting == "trials":
        w = np.array([s.trials for s in kept], dtype=float)
    else:
        raise ValueError(f"unknown weighting {weighting!r}")
    w = w / w.sum()

    def loss(x: np.ndarray) -> float:
        a, b = _unpack(family, x)
        resid = family.evaluate(theta, a, b) - p
        return float(np.sum(w * resid * resid))

    starts = [_pack(family, a0, b0) for a0, b0 in _start_grid(family, n_starts)]
    if family is CurveFamily.RELU:
        # Plain linear least squares is the natural extra start.
        coef = np.polyfit(theta, p, 1)
        starts.append(np.array([coef[0], coef[1]]))

    best_x = None
    best_f = np.inf
    converged = False
    for x0 in starts:
        res = optimize.minimize(loss, x0, method="Nelder-Mead",
                                options={"xatol": 1e-9, "fatol": rel_tol,
                                         "maxiter": max_iter})
        if res.fun < best_f:
            best_f = res.fun
            best_x = res.x
            converged = converged or bool(res.success)
        elif res.success:
            converged = True
    a, b = _unpack(family, best_x)
    # Report the unweighted equal-bin MSE regardless of fit weighting so the
    # number is comparable across configurations.
    resid = family.evaluate(theta, a, b) - p
    mse = float(np.mean(resid * resid))
    model = LosCurveModel(family=family, a=a, b=b, mse=mse)
    if not converged:
        raise FitError(f"{family.value} fit did not converge in {max_iter} "
                       f"iterations from {len(starts)} starts", best=model)
    return model


def fit_all_families(samples: Sequence[ElevationSample], **kwargs) -> dict:
    return {fam: fit_curve(samples, fam, **kwargs) for fam in CurveFamily}


# --- azimuth correlation ----------------------------------------------------

@dataclass(frozen=True)
class AzimuthSample:
    """Conditional LoS estimate at one azimuth separation."""

    azimuth_deg: float
    p_cond: float
    n_cond: int
    low_confidence: bool


@dataclass(frozen=True)
class AzimuthCorrelation:
    theta0_deg: float
    p_uncond: float
    n_pairs: int
    samples: list[AzimuthSample] = field(default_factory=list)


def azimuth_correlation(b: BuildingSet, theta0_deg: float,
                        az_bins_deg: Sequence[float], n_pairs: int,
                        rng_seed: int, uav_height: float = 80.0,
                        region: Optional[Region] = None,
                        min_conditioning: int = 100) -> AzimuthCorrelation:
    """P(second user LoS | first user LoS) vs. azimuth separation.

    Both users sit on the circle of ground distance h / tan(theta0) around
    a uniformly placed UAV foot, separated by the given azimuth.  The
    unconditional estimate comes from the first-user links.  Bins whose
    conditioning count falls below ``min_conditioning`` are flagged.
    """
    if not 0 < theta0_deg < 90:
        raise ValueError("theta0 must be in (0, 90) degrees")
    region = region or b.region
    rho = uav_height / math.tan(math.radians(theta0_deg))

    p_uncond_num = 0
    p_uncond_den = 0
    rows = []
    for k, az in enumerate(az_bins_deg):
        rng = seeding.stream(rng_seed, seeding.LOS_AZIMUTH, k)
        foot = region.sample_xy(rng, n_pairs)
        phi = rng.uniform(0.0, 2.0 * np.pi, n_pairs)
        ua = foot + rho * np.column_stack([np.cos(phi), np.sin(phi)])
        phi2 = phi + math.radians(az)
        ub = foot + rho * np.column_stack([np.cos(phi2), np.sin(phi2)])
        uav = np.column_stack([foot, np.full(n_pairs, uav_height)])
        users_a = np.column_stack([ua, np.zeros(n_pairs)])
        users_b = np.column_stack([ub, np.zeros(n_pairs)])
        los_a = ~segments_blocked(users_a, uav, b)
        los_b = ~segments_blocked(users_b, uav, b)
        n_cond = int(los_a.sum())
        p_cond = float(los_b[los_a].mean()) if n_cond else float("nan")
        rows.append(AzimuthSample(azimuth_deg=float(az), p_cond=p_cond,
                                  n_cond=n_cond,
                                  low_confidence=n_cond < min_conditioning))
        p_uncond_num += n_cond
        p_uncond_den += n_pairs

    return AzimuthCorrelation(theta0_deg=float(theta0_deg),
                              p_uncond=p_uncond_num / p_uncond_den,
                              n_pairs=n_pairs, samples=rows)


# --- CSV io -----------------------------------------------------------------

def write_curve_csv(samples: Sequence[ElevationSample], path) -> None:
    with open(path, "w") as fh:
        fh.write("theta_deg,p_hat,trials\n")
        for s in samples:
            p = f"{s.p_hat:.6f}" if s.trials else "nan"
            fh.write(f"{s.theta_deg:.3f},{p},{s.trials}\n")


def read_curve_csv(path) -> list[ElevationSample]:
    out = []
    with open(path) as fh:
        next(fh)
        for line in fh:
            theta, p, trials = line.strip().split(",")
            trials = int(trials)
            los = int(round(float(p) * trials)) if trials else 0
            out.append(ElevationSample(float(theta), trials, los))
    return out


def write_fits_csv(models: Sequence[LosCurveModel], path) -> None:
    with open(path, "w") as fh:
        fh.write("family,a,b,mse\n")
        for m in models:
            fh.write(f"{m.family.value},{m.a:.6g},{m.b:.6g},{m.mse:.6g}\n")

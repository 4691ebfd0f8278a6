"""Random urban terrain: cylindrical buildings from a planar Poisson process.

Buildings are vertical cylinders (center, radius, height) dropped by a
homogeneous PPP; heights come from a configurable distribution.  The module
owns exact line-of-sight queries against a scene (delegated to the kernel
backends), ground shadow rasterisation, and the scalar terrain features
used by the LoS-probability polynomial: built-up ratio kappa, building
density iota, and the Rayleigh-fitted height scale omega.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Iterator, Optional, Union

import numpy as np

from uavterra import kernels, seeding
from uavterra.errors import ResourceLimitError
from uavterra.geometry import Region


@dataclass(frozen=True)
class LogNormalHeights:
    """Log-normal heights; parameters are mean/sd of log-height."""

    mu_log: float = 3.0
    sigma_log: float = 0.4

    def __post_init__(self):
        if self.sigma_log <= 0:
            raise ValueError("sigma_log must be > 0")

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return rng.lognormal(self.mu_log, self.sigma_log, n)

    def mean(self) -> float:
        return float(np.exp(self.mu_log + 0.5 * self.sigma_log**2))

    def percentile(self, q: float) -> float:
        from scipy import stats
        return float(stats.lognorm.ppf(q, s=self.sigma_log, scale=np.exp(self.mu_log)))

    def to_dict(self) -> dict:
        return {"kind": "lognormal", "mu_log": self.mu_log, "sigma_log": self.sigma_log}


@dataclass(frozen=True)
class RayleighHeights:
    """Rayleigh heights with scale ``omega``."""

    omega: float

    def __post_init__(self):
        if self.omega <= 0:
            raise ValueError("omega must be > 0")

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return rng.rayleigh(self.omega, n)

    def mean(self) -> float:
        return float(self.omega * np.sqrt(np.pi / 2))

    def percentile(self, q: float) -> float:
        return float(self.omega * np.sqrt(-2.0 * np.log1p(-q)))

    def to_dict(self) -> dict:
        return {"kind": "rayleigh", "omega": self.omega}


HeightDistribution = Union[LogNormalHeights, RayleighHeights]


def height_distribution_from_dict(d: dict) -> HeightDistribution:
    kind = d.get("kind")
    if kind == "lognormal":
        return LogNormalHeights(float(d["mu_log"]), float(d["sigma_log"]))
    if kind == "rayleigh":
        return RayleighHeights(float(d["omega"]))
    raise ValueError(f"unknown height distribution kind {kind!r}")


@dataclass(frozen=True)
class Building:
    """One cylinder: 2D center, radius and height in metres."""

    center: tuple[float, float]
    radius: float
    height: float


@dataclass(frozen=True)
class TerrainFeatures:
    """kappa: built-up area ratio, iota: buildings per km^2,
    omega: Rayleigh ML height scale (None for an empty scene)."""

    kappa: float
    iota: float
    omega: Optional[float]


class BuildingSet:
    """Immutable building collection over its generation region."""

    def __init__(self, region: Region, xs, ys, radii, heights,
                 seed: Optional[int] = None,
                 height_dist: Optional[HeightDistribution] = None):
        self.region = region
        self.seed = seed
        self.height_dist = height_dist
        self.xs = np.array(xs, dtype=np.float64)
        self.ys = np.array(ys, dtype=np.float64)
        self.radii = np.array(radii, dtype=np.float64)
        self.heights = np.array(heights, dtype=np.float64)
        n = self.xs.size
        if not (self.ys.size == self.radii.size == self.heights.size == n):
            raise ValueError("building arrays must have equal length")
        if np.any(self.radii <= 0) or np.any(self.heights < 0):
            raise ValueError("radii must be > 0 and heights >= 0")
        inside = region.contains(self.xs, self.ys)
        if n and not np.all(inside):
            raise ValueError("building centers must lie inside the region")
        for a in (self.xs, self.ys, self.radii, self.heights):
            a.flags.writeable = False

    def __len__(self) -> int:
        return self.xs.size

    def __iter__(self) -> Iterator[Building]:
        for i in range(len(self)):
            yield Building((float(self.xs[i]), float(self.ys[i])),
                           float(self.radii[i]), float(self.heights[i]))

    @property
    def is_empty(self) -> bool:
        return len(self) == 0

    def packed(self):
        return self.xs, self.ys, self.radii, self.heights

    @cached_property
    def index(self):
        return kernels.build_grid_index(self.xs, self.ys, self.radii)

    # --- serialisation ------------------------------------------------

    def to_csv(self, path) -> None:
        """Write ``x,y,radius,height`` rows plus a JSON metadata sidecar."""
        path = Path(path)
        with path.open("w") as fh:
            fh.write("x,y,radius,height\n")
            for i in range(len(self)):
                fh.write(f"{self.xs[i]:.6f},{self.ys[i]:.6f},"
                         f"{self.radii[i]:.6f},{self.heights[i]:.6f}\n")
        meta = {
            "region": self.region.to_dict(),
            "seed": self.seed,
            "count": len(self),
            "height_dist": self.height_dist.to_dict() if self.height_dist else None,
        }
        path.with_suffix(path.suffix + ".meta.json").write_text(
            json.dumps(meta, indent=2, sort_keys=True) + "\n")

    @classmethod
    def from_csv(cls, path) -> "BuildingSet":
        path = Path(path)
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        if data.size == 0:
            data = data.reshape(0, 4)
        meta_path = path.with_suffix(path.suffix + ".meta.json")
        meta = json.loads(meta_path.read_text())
        hd = meta.get("height_dist")
        return cls(
            region=Region.from_dict(meta["region"]),
            xs=data[:, 0], ys=data[:, 1], radii=data[:, 2], heights=data[:, 3],
            seed=meta.get("seed"),
            height_dist=height_distribution_from_dict(hd) if hd else None,
        )


def generate_buildings(region: Region, density_per_km2: float, radius: float,
                       height_dist: HeightDistribution, seed: int) -> BuildingSet:
    """Drop a homogeneous PPP of cylinders on ``region``.

    ``density_per_km2`` is the expected count per square kilometre; centers
    are uniform, footprints may overlap, and the count is Poisson.
    """
    if density_per_km2 < 0:
        raise ValueError("density must be >= 0")
    if radius <= 0:
        raise ValueError("radius must be > 0")
    rng = seeding.stream(seed, seeding.TERRAIN)
    n = int(rng.poisson(density_per_km2 * region.area_km2))
    xy = region.sample_xy(rng, n)
    heights = height_dist.sample(rng, n)
    return BuildingSet(region, xy[:, 0], xy[:, 1],
                       np.full(n, float(radius)), heights,
                       seed=seed, height_dist=height_dist)


def _as_point(p) -> np.ndarray:
    a = np.asarray(p, dtype=np.float64).reshape(-1)
    if a.size != 3:
        raise ValueError("points must have 3 coordinates")
    return a


def segment_blocked(p, q, b: BuildingSet) -> bool:
    """True iff the open segment p-q passes through a building interior.

    Grazing contact (touching a wall or roof exactly) does not block.
    """
    p = _as_point(p)
    q = _as_point(q)
    if np.array_equal(p, q):
        raise ValueError("segment endpoints must differ")
    return bool(segments_blocked(p[None, :], q[None, :], b)[0])


def segments_blocked(p, q, b: BuildingSet) -> np.ndarray:
    """Vectorised ``segment_blocked`` over (n, 3) endpoint arrays."""
    bx, by, br, bh = b.packed()
    return kernels.segments_blocked(p, q, bx, by, br, bh, index=b.index)


@dataclass(frozen=True)
class ShadowMask:
    """Boolean grid of blocked ground cells plus cell-center coordinates."""

    mask: np.ndarray       # (nx, ny) True where blocked
    x_centers: np.ndarray
    y_centers: np.ndarray


def shadow_mask(uav, plane_z: float, grid_step: float, b: BuildingSet,
                region: Optional[Region] = None,
                cell_cap: int = 4_000_000) -> ShadowMask:
    """Rasterise which cells at height ``plane_z`` are shadowed from ``uav``."""
    if grid_step <= 0:
        raise ValueError("grid_step must be > 0")
    region = region or b.region
    uav = _as_point(uav)
    nx = int(np.ceil(region.width / grid_step))
    ny = int(np.ceil(region.height / grid_step))
    if nx * ny > cell_cap:
        raise ResourceLimitError(
            f"shadow grid {nx}x{ny} exceeds cell cap {cell_cap}")
    xc = region.x_min + (np.arange(nx) + 0.5) * grid_step
    yc = region.y_min + (np.arange(ny) + 0.5) * grid_step
    gx, gy = np.meshgrid(xc, yc, indexing="ij")
    targets = np.column_stack([gx.ravel(), gy.ravel(),
                               np.full(gx.size, float(plane_z))])
    origins = np.broadcast_to(uav, targets.shape)
    blocked = segments_blocked(origins, targets, b)
    return ShadowMask(mask=blocked.reshape(nx, ny), x_centers=xc, y_centers=yc)


def terrain_features(b: BuildingSet, grid_step: float = 1.0) -> TerrainFeatures:
    """Estimate (kappa, iota, omega) for a scene.

    kappa is the union footprint area ratio on an occupancy grid of
    ``grid_step`` cells, so overlapping footprints are not double counted.
    omega is the maximum-likelihood Rayleigh scale sqrt(mean(h^2) / 2),
    absent for an empty scene.
    """
    region = b.region
    iota = len(b) / region.area_km2
    if b.is_empty:
        return TerrainFeatures(kappa=0.0, iota=iota, omega=None)

    nx = int(np.ceil(region.width / grid_step))
    ny = int(np.ceil(region.height / grid_step))
    occupied = np.zeros((nx, ny), dtype=bool)
    xc = region.x_min + (np.arange(nx) + 0.5) * grid_step
    yc = region.y_min + (np.arange(ny) + 0.5) * grid_step
    for i in range(len(b)):
        cx, cy, r = b.xs[i], b.ys[i], b.radii[i]
        i0 = max(0, int((cx - r - region.x_min) / grid_step) - 1)
        i1 = min(nx, int((cx + r - region.x_min) / grid_step) + 2)
        j0 = max(0, int((cy - r - region.y_min) / grid_step) - 1)
        j1 = min(ny, int((cy + r - region.y_min) / grid_step) + 2)
        if i0 >= i1 or j0 >= j1:
            continue
        dx = xc[i0:i1, None] - cx
        dy = yc[None, j0:j1] - cy
        occupied[i0:i1, j0:j1] |= dx * dx + dy * dy <= r * r
    kappa = float(occupied.mean())
    omega = float(np.sqrt(np.mean(b.heights**2) / 2.0))
    return TerrainFeatures(kappa=kappa, iota=iota, omega=omega)

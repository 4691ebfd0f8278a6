"""Shared planar geometry: axis-aligned regions, polylines, corridors."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class Region:
    """Axis-aligned rectangle in metres."""

    x_min: float
    x_max: float
    y_min: float
    y_max: float

    def __post_init__(self):
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise ValueError(f"degenerate region {self}")

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min

    @property
    def area_m2(self) -> float:
        return self.width * self.height

    @property
    def area_km2(self) -> float:
        return self.area_m2 / 1e6

    @property
    def center(self) -> tuple[float, float]:
        return (0.5 * (self.x_min + self.x_max), 0.5 * (self.y_min + self.y_max))

    def expand(self, margin: float) -> "Region":
        """Grow every side by ``margin`` metres (guard region)."""
        if margin < 0:
            raise ValueError("margin must be >= 0")
        return Region(self.x_min - margin, self.x_max + margin,
                      self.y_min - margin, self.y_max + margin)

    def contains(self, x, y) -> np.ndarray | bool:
        return ((x >= self.x_min) & (x <= self.x_max)
                & (y >= self.y_min) & (y <= self.y_max))

    def sample_xy(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """n uniform points as an (n, 2) array."""
        out = np.empty((n, 2))
        out[:, 0] = rng.uniform(self.x_min, self.x_max, n)
        out[:, 1] = rng.uniform(self.y_min, self.y_max, n)
        return out

    def to_dict(self) -> dict:
        return {"x_min": self.x_min, "x_max": self.x_max,
                "y_min": self.y_min, "y_max": self.y_max}

    @classmethod
    def from_dict(cls, d: dict) -> "Region":
        return cls(float(d["x_min"]), float(d["x_max"]),
                   float(d["y_min"]), float(d["y_max"]))


class Polyline:
    """Piecewise-linear 2D path supporting arc-length queries."""

    def __init__(self, points):
        pts = np.asarray(points, dtype=float)
        if pts.ndim != 2 or pts.shape[0] < 2 or pts.shape[1] != 2:
            raise ValueError("polyline needs at least two 2D points")
        self.points = pts
        seg = np.diff(pts, axis=0)
        self._seg_len = np.hypot(seg[:, 0], seg[:, 1])
        if np.any(self._seg_len == 0):
            raise ValueError("polyline has a zero-length segment")
        self._cum = np.concatenate([[0.0], np.cumsum(self._seg_len)])

    @property
    def length(self) -> float:
        return float(self._cum[-1])

    def point_at(self, s: float) -> np.ndarray:
        """Point at arc length ``s``, clamped to the path ends."""
        s = float(np.clip(s, 0.0, self.length))
        i = int(np.searchsorted(self._cum, s, side="right") - 1)
        i = min(i, len(self._seg_len) - 1)
        t = (s - self._cum[i]) / self._seg_len[i]
        return self.points[i] + t * (self.points[i + 1] - self.points[i])

    def distance_to(self, xy: np.ndarray) -> np.ndarray:
        """Distance from each (n, 2) query point to the path."""
        q = np.atleast_2d(np.asarray(xy, dtype=float))
        best = np.full(q.shape[0], np.inf)
        for i in range(len(self._seg_len)):
            a = self.points[i]
            d = self.points[i + 1] - a
            t = np.clip(((q - a) @ d) / (d @ d), 0.0, 1.0)
            proj = a + t[:, None] * d
            best = np.minimum(best, np.hypot(q[:, 0] - proj[:, 0], q[:, 1] - proj[:, 1]))
        return best


@dataclass
class Corridor:
    """One or more polylines with a common width (a scan/route band)."""

    lines: list[Polyline]
    width: float

    def __post_init__(self):
        if self.width < 0:
            raise ValueError("corridor width must be >= 0")
        if not self.lines:
            raise ValueError("corridor needs at least one polyline")

    def distance_to(self, xy: np.ndarray) -> np.ndarray:
        d = self.lines[0].distance_to(xy)
        for line in self.lines[1:]:
            d = np.minimum(d, line.distance_to(xy))
        return d

    def contains(self, xy: np.ndarray) -> np.ndarray:
        return self.distance_to(xy) <= 0.5 * self.width

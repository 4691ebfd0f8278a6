"""Terrain generation, LoS queries, shadows, features and serialisation."""

import numpy as np
import pytest

from conftest import CORE, GUARD, SCENE_SEED

from uavterra.errors import ResourceLimitError
from uavterra.geometry import Region
from uavterra.terrain import (BuildingSet, LogNormalHeights, RayleighHeights,
                              generate_buildings, segment_blocked,
                              segments_blocked, shadow_mask, terrain_features)


class TestGeneration:
    def test_reproducible(self):
        a = generate_buildings(CORE, 500, 8.0, LogNormalHeights(), seed=42)
        b = generate_buildings(CORE, 500, 8.0, LogNormalHeights(), seed=42)
        assert np.array_equal(a.xs, b.xs)
        assert np.array_equal(a.heights, b.heights)

    def test_count_in_poisson_range(self):
        # Fixed-seed count within 3 sigma of 500 over 1 km^2.
        b = generate_buildings(CORE, 500, 8.0, LogNormalHeights(), seed=SCENE_SEED)
        assert 433 <= len(b) <= 567

    def test_count_statistics_over_seeds(self):
        counts = [len(generate_buildings(CORE, 500, 8.0, LogNormalHeights(), seed=s))
                  for s in range(100)]
        mean = np.mean(counts)
        # Mean of 100 Poisson(500) draws: 3 sigma band is 500 +- 6.7.
        assert abs(mean - 500.0) < 6.8
        outside = sum(1 for c in counts if not 433 <= c <= 567)
        assert outside <= 3

    def test_centers_inside_region(self):
        b = generate_buildings(CORE.expand(GUARD), 500, 8.0, LogNormalHeights(), seed=3)
        assert np.all(b.region.contains(b.xs, b.ys))

    def test_height_mean_lognormal(self):
        # E[h] = exp(mu + sigma^2/2) ~ 21.76 m for (3, 0.4).
        hs = np.concatenate([
            generate_buildings(CORE, 500, 8.0, LogNormalHeights(3.0, 0.4), seed=s).heights
            for s in range(40)])
        assert abs(hs.mean() - 21.758) < 0.5

    def test_zero_density(self):
        b = generate_buildings(CORE, 0.0, 8.0, LogNormalHeights(), seed=1)
        assert b.is_empty

    def test_negative_density_rejected(self):
        with pytest.raises(ValueError):
            generate_buildings(CORE, -1.0, 8.0, LogNormalHeights(), seed=1)

    def test_rayleigh_heights(self):
        b = generate_buildings(CORE, 500, 8.0, RayleighHeights(15.0), seed=2)
        assert abs(b.heights.mean() - 15.0 * np.sqrt(np.pi / 2)) < 2.0


class TestSegmentBlocked:
    def test_identical_endpoints_rejected(self, scene):
        with pytest.raises(ValueError):
            segment_blocked((10, 10, 5), (10, 10, 5), scene)

    def test_empty_scene_never_blocks(self):
        b = BuildingSet(CORE, [], [], [], [])
        assert not segment_blocked((0, 0, 0), (1000, 1000, 0), b)

    def test_altitude_monotonicity(self, scene):
        # For a fixed ground user and UAV ground position, blocking as a
        # function of UAV altitude is an interval starting at 0.
        rng = np.random.default_rng(11)
        zs = np.linspace(1.0, 400.0, 120)
        for _ in range(40):
            u = np.array([rng.uniform(0, 1000), rng.uniform(0, 1000), 0.0])
            g = np.array([rng.uniform(0, 1000), rng.uniform(0, 1000)])
            if np.allclose(u[:2], g):
                continue
            p = np.broadcast_to(u, (zs.size, 3))
            q = np.column_stack([np.full(zs.size, g[0]), np.full(zs.size, g[1]), zs])
            flags = segments_blocked(p, q, scene).astype(int)
            # No 0 -> 1 transition as altitude grows.
            assert np.all(np.diff(flags) <= 0)

    def test_height_monotonicity(self, scene):
        # Raising any building height can only keep or add blockage.
        rng = np.random.default_rng(12)
        n = 500
        p = np.column_stack([rng.uniform(0, 1000, n), rng.uniform(0, 1000, n),
                             np.zeros(n)])
        q = np.column_stack([rng.uniform(0, 1000, n), rng.uniform(0, 1000, n),
                             np.full(n, 60.0)])
        before = segments_blocked(p, q, scene)
        taller = BuildingSet(scene.region, scene.xs, scene.ys, scene.radii,
                             scene.heights + 15.0)
        after = segments_blocked(p, q, taller)
        assert np.all(after >= before)


class TestShadowMask:
    def test_single_building_shadow(self):
        b = BuildingSet(Region(0, 200, 0, 200), [100.0], [100.0], [8.0], [30.0])
        sm = shadow_mask((50.0, 100.0, 60.0), 0.0, 2.0, b)
        gx, gy = np.meshgrid(sm.x_centers, sm.y_centers, indexing="ij")
        # Cells behind the cylinder (beyond it, roughly along +x) are dark;
        # cells between UAV and building are lit.
        behind = (gx > 115) & (abs(gy - 100) < 4) & (gx < 160)
        front = gx < 85
        assert sm.mask[behind].mean() > 0.9
        assert sm.mask[front & (abs(gy - 100) < 4)].mean() < 0.05

    def test_inside_footprint_is_shadowed(self):
        b = BuildingSet(Region(0, 200, 0, 200), [100.0], [100.0], [8.0], [30.0])
        sm = shadow_mask((50.0, 100.0, 60.0), 0.0, 2.0, b)
        gx, gy = np.meshgrid(sm.x_centers, sm.y_centers, indexing="ij")
        inside = (gx - 100) ** 2 + (gy - 100) ** 2 < 36
        assert sm.mask[inside].all()

    def test_cell_cap(self, scene):
        with pytest.raises(ResourceLimitError):
            shadow_mask((500, 500, 80), 0.0, 0.05, scene)


class TestFeatures:
    def test_kappa_non_overlapping_analytic(self):
        # 25 well-separated radius-8 cylinders on 1 km^2:
        # kappa = 25 * pi * 64 / 1e6.  A 1 m occupancy grid carries a few
        # percent discretisation error at radius 8.
        xs, ys = np.meshgrid(np.arange(100, 1000, 180), np.arange(100, 1000, 180))
        xs, ys = xs.ravel(), ys.ravel()
        b = BuildingSet(CORE, xs, ys, np.full(xs.size, 8.0), np.full(xs.size, 20.0))
        f = terrain_features(b, grid_step=1.0)
        want = xs.size * np.pi * 64 / 1e6
        assert abs(f.kappa - want) / want < 0.05
        assert f.iota == pytest.approx(float(xs.size))  # buildings per km^2

    def test_kappa_overlap_not_double_counted(self):
        # Two coincident cylinders cover the same area as one.
        b1 = BuildingSet(CORE, [500.0], [500.0], [8.0], [20.0])
        b2 = BuildingSet(CORE, [500.0, 500.0], [500.0, 500.0], [8.0, 8.0], [20.0, 10.0])
        k1 = terrain_features(b1).kappa
        k2 = terrain_features(b2).kappa
        assert k1 == k2

    def test_omega_constant_heights(self):
        b = BuildingSet(CORE, [100.0, 200.0], [100.0, 200.0], [8.0, 8.0], [10.0, 10.0])
        f = terrain_features(b)
        assert f.omega == pytest.approx(10.0 / np.sqrt(2))

    def test_empty_scene_features(self):
        f = terrain_features(BuildingSet(CORE, [], [], [], []))
        assert f.kappa == 0.0
        assert f.iota == 0.0
        assert f.omega is None


class TestSerialisation:
    def test_csv_round_trip(self, tmp_path, scene):
        path = tmp_path / "scene.csv"
        scene.to_csv(path)
        back = BuildingSet.from_csv(path)
        assert len(back) == len(scene)
        assert np.allclose(back.xs, scene.xs, atol=1e-6)
        assert np.allclose(back.heights, scene.heights, atol=1e-6)
        assert back.region == scene.region
        assert back.seed == scene.seed

    def test_header_format(self, tmp_path, scene):
        path = tmp_path / "scene.csv"
        scene.to_csv(path)
        assert path.read_text().splitlines()[0] == "x,y,radius,height"

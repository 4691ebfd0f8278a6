"""Kernel-level blockage tests: hand-built cases, sampling oracle, and
compiled-vs-numpy agreement."""

import numpy as np
import pytest

from conftest import random_scene
from oracles import grazing_band, sampled_blocked

from uavterra import kernels


def one(bx, by, br, bh):
    return (np.array([bx]), np.array([by]), np.array([br]), np.array([bh]))


def blocked(p, q, scene, backend, use_index=False):
    bx, by, br, bh = scene
    index = kernels.build_grid_index(bx, by, br) if use_index else None
    return bool(kernels.segments_blocked(
        np.asarray(p, float)[None, :], np.asarray(q, float)[None, :],
        bx, by, br, bh, index=index, backend=backend)[0])


class TestHandCases:
    def test_through_wall(self, backend):
        scene = one(50.0, 0.0, 8.0, 30.0)
        assert blocked(np.array([0, 0, 10.0]), np.array([100, 0, 10.0]), scene, backend)

    def test_over_roof(self, backend):
        scene = one(50.0, 0.0, 8.0, 30.0)
        assert not blocked(np.array([0, 0, 35.0]), np.array([100, 0, 35.0]), scene, backend)

    def test_grazing_tangent_is_clear(self, backend):
        # Segment along y = 8 exactly tangent to a radius-8 cylinder at origin.
        scene = one(0.0, 0.0, 8.0, 30.0)
        assert not blocked(np.array([-50, 8.0, 5.0]), np.array([50, 8.0, 5.0]), scene, backend)

    def test_grazing_roof_touch_is_clear(self, backend):
        # Horizontal segment at exactly roof height.
        scene = one(0.0, 0.0, 8.0, 30.0)
        assert not blocked(np.array([-50, 0.0, 30.0]), np.array([50, 0.0, 30.0]), scene, backend)

    def test_endpoint_on_wall_open_segment(self, backend):
        # Endpoint exactly on the wall, segment leaving outward: open
        # segment excludes the contact point.
        scene = one(0.0, 0.0, 8.0, 30.0)
        assert not blocked(np.array([8.0, 0.0, 5.0]), np.array([100.0, 0.0, 5.0]), scene, backend)

    def test_vertical_segment_inside(self, backend):
        scene = one(0.0, 0.0, 8.0, 30.0)
        assert blocked(np.array([1.0, 0.0, 0.0]), np.array([1.0, 0.0, 80.0]), scene, backend)

    def test_vertical_segment_outside(self, backend):
        scene = one(0.0, 0.0, 8.0, 30.0)
        assert not blocked(np.array([9.0, 0.0, 0.0]), np.array([9.0, 0.0, 80.0]), scene, backend)

    def test_climb_out_of_cylinder(self, backend):
        # Ascending segment leaves through the roof; below-roof part blocks.
        scene = one(0.0, 0.0, 8.0, 30.0)
        assert blocked(np.array([-50, 0.0, 0.0]), np.array([50, 0.0, 60.0]), scene, backend)

    def test_empty_scene(self, backend):
        scene = (np.array([]), np.array([]), np.array([]), np.array([]))
        assert not blocked(np.array([0, 0, 0.0]), np.array([10, 10, 10.0]), scene, backend)


class TestOracleAgreement:
    @pytest.mark.parametrize("use_index", [False, True])
    def test_sampling_oracle(self, backend, use_index):
        rng = np.random.default_rng(99)
        n_cases = 800
        disagreements = 0
        for _ in range(n_cases):
            scene = random_scene(rng, rng.integers(1, 8))
            p = np.array([rng.uniform(-20, 220), rng.uniform(-20, 220), rng.uniform(0, 5)])
            q = np.array([rng.uniform(-20, 220), rng.uniform(-20, 220), rng.uniform(5, 60)])
            got = blocked(p, q, scene, backend, use_index)
            want = sampled_blocked(p, q, *scene)
            if got != want and not grazing_band(p, q, *scene):
                disagreements += 1
        assert disagreements == 0

    def test_backends_agree_exactly(self, scene):
        if not kernels.have_compiled():
            pytest.skip("compiled kernel unavailable")
        rng = np.random.default_rng(5)
        n = 20_000
        p = np.column_stack([rng.uniform(-100, 1100, n), rng.uniform(-100, 1100, n),
                             rng.uniform(0, 5, n)])
        q = np.column_stack([rng.uniform(-100, 1100, n), rng.uniform(-100, 1100, n),
                             rng.uniform(5, 150, n)])
        bx, by, br, bh = scene.packed()
        a = kernels.segments_blocked(p, q, bx, by, br, bh, index=scene.index,
                                     backend="compiled")
        b = kernels.segments_blocked(p, q, bx, by, br, bh, backend="numpy")
        c = kernels.segments_blocked(p, q, bx, by, br, bh, index=None,
                                     backend="compiled")
        assert np.array_equal(a, b)
        assert np.array_equal(a, c)


class TestGridIndex:
    def test_index_covers_all_buildings(self):
        rng = np.random.default_rng(3)
        bx, by, br, bh = random_scene(rng, 50, extent=500.0)
        idx = kernels.build_grid_index(bx, by, br)
        assert set(idx.items.tolist()) == set(range(50))

    def test_empty_index(self):
        assert kernels.build_grid_index(np.array([]), np.array([]), np.array([])) is None

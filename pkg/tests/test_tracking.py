"""Tests for crowd generation and map-guided UAV tracking."""

import numpy as np
import pytest

from uavterra import seeding
from uavterra.channel import ChannelParams
from uavterra.geometry import Polyline, Region
from uavterra.reconstruct import HeightField
from uavterra.terrain import BuildingSet
from uavterra.tracking import (ParadeScenario, SlotState,
                               estimated_los_fraction, gen_crowd_track,
                               run_parade, track_step, true_crowd_metrics,
                               write_parade_csv)

CP = ChannelParams()
REGION = Region(0.0, 400.0, 0.0, 400.0)
EMPTY = BuildingSet(REGION, [], [], [], [])
FLAT = HeightField.from_buildings(REGION, EMPTY, 4.0)


def scenario(**kw):
    base = dict(route_a=Polyline([[50.0, 100.0], [350.0, 100.0]]),
                route_b=Polyline([[50.0, 300.0], [350.0, 300.0]]),
                pace=50.0, slots=5, crowd_size_mean=12.0,
                crowd_spread=8.0, jitter=2.0)
    base.update(kw)
    return ParadeScenario(**base)


def rng_for(seed):
    return seeding.stream(seed, seeding.TRACKING, 0)


class TestScenarioValidation:

    def test_defaults_ok(self):
        s = scenario()
        assert s.slots == 5
        assert s.uav_altitude_bounds == (20.0, 60.0)

    @pytest.mark.parametrize("kw", [dict(pace=0.0), dict(slots=0),
                                    dict(crowd_size_mean=0.0),
                                    dict(crowd_spread=-1.0),
                                    dict(jitter=-0.1),
                                    dict(uav_altitude_bounds=(0.0, 60.0)),
                                    dict(uav_altitude_bounds=(60.0, 20.0))])
    def test_bad_parameters(self, kw):
        with pytest.raises(ValueError):
            scenario(**kw)

    def test_slot_state_shape_checked(self):
        with pytest.raises(ValueError):
            SlotState(1, np.zeros((0, 3)), np.zeros((2, 3)))
        with pytest.raises(ValueError):
            SlotState(1, np.zeros((2, 2)), np.zeros((2, 3)))


class TestGenCrowdTrack:

    def test_slot_count_and_membership(self):
        s = scenario()
        states = gen_crowd_track(s, rng_for(1))
        assert [st.slot for st in states] == [1, 2, 3, 4, 5]
        n_a = len(states[0].users_a)
        n_b = len(states[0].users_b)
        for st in states:
            assert len(st.users_a) == n_a
            assert len(st.users_b) == n_b
            assert np.all(st.users_a[:, 2] == s.user_z)
            assert st.uav_a is None and st.uav_b is None

    def test_deterministic(self):
        s = scenario()
        a = gen_crowd_track(s, rng_for(2))
        b = gen_crowd_track(s, rng_for(2))
        for sa, sb in zip(a, b):
            assert np.array_equal(sa.users_a, sb.users_a)
            assert np.array_equal(sa.users_b, sb.users_b)

    def test_zero_jitter_rigid_advance(self):
        s = scenario(jitter=0.0)
        states = gen_crowd_track(s, rng_for(3))
        for prev, cur in zip(states, states[1:]):
            step = cur.users_a - prev.users_a
            assert np.allclose(step, step[0], atol=1e-9)

    def test_centroid_follows_route_at_pace(self):
        s = scenario(crowd_spread=0.0, jitter=0.0, crowd_size_mean=5.0)
        states = gen_crowd_track(s, rng_for(4))
        for st in states:
            want = s.route_a.point_at((st.slot - 1) * s.pace)
            assert np.allclose(st.users_a[:, :2], want, atol=1e-9)
        d = np.linalg.norm(states[1].users_a[0] - states[0].users_a[0])
        assert d == pytest.approx(50.0, abs=1e-9)

    def test_jittered_centroid_near_pace(self):
        s = scenario(crowd_size_mean=40.0)
        states = gen_crowd_track(s, rng_for(5))
        c0 = states[0].users_a[:, :2].mean(axis=0)
        c1 = states[1].users_a[:, :2].mean(axis=0)
        assert abs(np.linalg.norm(c1 - c0) - 50.0) < 5.0

    def test_clamps_at_route_end(self):
        s = scenario(route_a=Polyline([[0.0, 50.0], [120.0, 50.0]]),
                     route_b=Polyline([[0.0, 60.0], [120.0, 60.0]]),
                     slots=6, crowd_spread=0.0, jitter=0.0)
        states = gen_crowd_track(s, rng_for(6))
        for st in states[3:]:
            assert np.allclose(st.users_a[:, :2], [120.0, 50.0])

    def test_at_least_one_user(self):
        s = scenario(crowd_size_mean=1e-6)
        states = gen_crowd_track(s, rng_for(7))
        assert len(states[0].users_a) == 1
        assert len(states[0].users_b) == 1


class TestTrackStep:

    def test_zero_budget_stays(self):
        cur = np.array([100.0, 200.0, 30.0])
        out = track_step(cur, [[150.0, 200.0, 1.5]], FLAT, step_budget=0.0)
        assert np.array_equal(out, cur)

    @pytest.mark.parametrize("budget", [15.0, 60.0])
    def test_displacement_within_budget(self, budget):
        rng = np.random.default_rng(0)
        for _ in range(20):
            cur = np.array([rng.uniform(20, 380), rng.uniform(20, 380),
                            rng.uniform(20, 60)])
            crowd = np.column_stack([rng.uniform(0, 400, (6, 2)),
                                     np.full((6, 1), 1.5)])
            out = track_step(cur, crowd, FLAT, step_budget=budget)
            assert np.linalg.norm(out - cur) <= budget + 1e-9

    def test_altitude_stays_in_bounds(self):
        cur = np.array([200.0, 200.0, 58.0])
        out = track_step(cur, [[200.0, 260.0, 1.5]], FLAT, alt_step=50.0)
        assert 20.0 - 1e-9 <= out[2] <= 60.0 + 1e-9

    def test_candidates_clipped_to_region(self):
        cur = np.array([395.0, 200.0, 30.0])
        out = track_step(cur, [[398.0, 210.0, 1.5]], FLAT)
        assert 0.0 <= out[0] <= 400.0
        assert np.linalg.norm(out - cur) <= 60.0 + 1e-9

    def test_flat_map_approaches_overhead(self):
        crowd = np.array([[300.0, 200.0, 1.5], [305.0, 195.0, 1.5],
                          [295.0, 205.0, 1.5]])
        target = np.array([300.0, 200.0, 20.0])
        cur = np.array([50.0, 200.0, 30.0])
        dists = [np.linalg.norm(cur - target)]
        for _ in range(14):
            cur = track_step(cur, crowd, FLAT, step_budget=25.0)
            dists.append(np.linalg.norm(cur - target))
        for prev, nxt in zip(dists, dists[1:]):
            if prev > 30.0:
                assert nxt < prev - 20.0
        assert dists[-1] <= 25.0

    def test_blocked_crowd_step_does_not_lose_los(self):
        b = BuildingSet(REGION, [200.0], [150.0], [15.0], [40.0])
        hf = HeightField.from_buildings(REGION, b, 4.0)
        crowd = np.array([[250.0, 150.0, 1.5], [255.0, 145.0, 1.5],
                          [245.0, 155.0, 1.5], [250.0, 160.0, 1.5],
                          [260.0, 150.0, 1.5]])
        cur = np.array([140.0, 150.0, 25.0])
        before = estimated_los_fraction(cur, crowd, hf)
        out = track_step(cur, crowd, hf)
        after = estimated_los_fraction(out, crowd, hf)
        assert after >= before
        assert after >= 0.8

    def test_unknown_map_climbs(self):
        blank = HeightField(REGION, 4.0)
        cur = np.array([100.0, 200.0, 30.0])
        out = track_step(cur, [[180.0, 200.0, 1.5]], blank)
        assert out[2] == pytest.approx(40.0)
        assert out[0] > cur[0]

    def test_validation(self):
        cur = np.array([100.0, 200.0, 30.0])
        crowd = [[150.0, 200.0, 1.5]]
        with pytest.raises(ValueError):
            track_step(cur, np.zeros((0, 3)), FLAT)
        with pytest.raises(ValueError):
            track_step(cur, crowd, FLAT, step_budget=-1.0)
        with pytest.raises(ValueError):
            track_step([100.0, 200.0, 5.0], crowd, FLAT)
        with pytest.raises(ValueError):
            track_step([-50.0, 200.0, 30.0], crowd, FLAT)
        with pytest.raises(ValueError):
            track_step(cur, crowd, FLAT, n_directions=0)
        with pytest.raises(ValueError):
            track_step(cur, crowd, FLAT, sample_step=0.0)


class TestEstimatedLosFraction:

    def test_flat_map_sees_everyone(self):
        crowd = [[150.0, 200.0, 1.5], [250.0, 220.0, 1.5]]
        assert estimated_los_fraction([200.0, 200.0, 30.0], crowd,
                                      FLAT) == 1.0

    def test_unknown_cells_block(self):
        blank = HeightField(REGION, 4.0)
        frac = estimated_los_fraction([100.0, 200.0, 30.0],
                                      [[180.0, 200.0, 1.5]], blank)
        assert frac == 0.0

    def test_known_building_blocks(self):
        b = BuildingSet(REGION, [200.0], [200.0], [15.0], [40.0])
        hf = HeightField.from_buildings(REGION, b, 4.0)
        frac = estimated_los_fraction([150.0, 200.0, 20.0],
                                      [[260.0, 200.0, 1.5]], hf)
        assert frac == 0.0


class TestTrueCrowdMetrics:

    def test_empty_scene_values(self):
        uav = [100.0, 100.0, 101.5]
        losf, mean_snr, min_snr = true_crowd_metrics(
            uav, [[100.0, 100.0, 1.5]], EMPTY, CP)
        assert losf == 1.0
        assert mean_snr == pytest.approx(45.0)
        assert min_snr == pytest.approx(45.0)

    def test_blocked_user_counts(self):
        b = BuildingSet(REGION, [200.0], [200.0], [15.0], [40.0])
        uav = [150.0, 200.0, 20.0]
        users = [[260.0, 200.0, 1.5], [150.0, 210.0, 1.5]]
        losf, _, min_snr = true_crowd_metrics(uav, users, b, CP)
        assert losf == 0.5
        assert min_snr < 40.0


class TestRunParade:

    def test_empty_scene_full_los(self):
        s = scenario()
        res = run_parade(s, FLAT, EMPTY, CP, rng_for(10))
        assert np.all(res.los_matrix() == 1.0)
        assert len(res.metrics) == 2 * s.slots
        for st in res.states:
            assert st.uav_a is not None and st.uav_b is not None

    def test_displacement_per_slot_within_budget(self):
        s = scenario()
        starts = ([60.0, 100.0, 30.0], [60.0, 300.0, 30.0])
        res = run_parade(s, FLAT, EMPTY, CP, rng_for(11), starts=starts,
                         step_budget=60.0)
        prev_a, prev_b = (np.asarray(p) for p in starts)
        for st in res.states:
            assert np.linalg.norm(st.uav_a - prev_a) <= 60.0 + 1e-9
            assert np.linalg.norm(st.uav_b - prev_b) <= 60.0 + 1e-9
            prev_a, prev_b = st.uav_a, st.uav_b

    def test_deterministic(self):
        s = scenario()
        r1 = run_parade(s, FLAT, EMPTY, CP, rng_for(12))
        r2 = run_parade(s, FLAT, EMPTY, CP, rng_for(12))
        for a, b in zip(r1.metrics, r2.metrics):
            assert (a.slot, a.crowd, a.los_fraction, a.mean_snr_db,
                    a.min_snr_db) == (b.slot, b.crowd, b.los_fraction,
                                      b.mean_snr_db, b.min_snr_db)

    def test_labels_persist_with_shared_route_segment(self):
        shared = scenario(
            route_a=Polyline([[50.0, 100.0], [150.0, 200.0],
                              [250.0, 200.0], [350.0, 300.0]]),
            route_b=Polyline([[50.0, 300.0], [150.0, 200.0],
                              [250.0, 200.0], [350.0, 100.0]]),
            slots=6)
        res = run_parade(shared, FLAT, EMPTY, CP, rng_for(13))
        labels = [(m.slot, m.crowd) for m in res.metrics]
        assert labels == [(k, c) for k in range(1, 7) for c in ("a", "b")]
        n_a = len(res.states[0].users_a)
        assert all(len(st.users_a) == n_a for st in res.states)

    def test_truth_map_not_worse_than_blank_map(self):
        b = BuildingSet(REGION, [200.0, 140.0], [112.0, 290.0],
                        [12.0, 12.0], [35.0, 45.0])
        truth_hf = HeightField.from_buildings(REGION, b, 4.0)
        blank_hf = HeightField(REGION, 4.0)
        s = scenario(jitter=1.0)
        diffs = []
        for seed in range(5):
            with_map = run_parade(s, truth_hf, b, CP, rng_for(20 + seed))
            without = run_parade(s, blank_hf, b, CP, rng_for(20 + seed))
            diffs.append(with_map.los_matrix().mean()
                         - without.los_matrix().mean())
        assert np.mean(diffs) >= -0.05

    def test_bad_starts(self):
        with pytest.raises(ValueError):
            run_parade(scenario(), FLAT, EMPTY, CP, rng_for(14),
                       starts=([1.0, 2.0, 30.0],))


class TestCsv:

    def test_schema_and_rows(self, tmp_path):
        s = scenario(slots=3)
        res = run_parade(s, FLAT, EMPTY, CP, rng_for(15))
        path = tmp_path / "parade.csv"
        write_parade_csv(res, path)
        lines = path.read_text().strip().split("\n")
        assert lines[0] == ("slot,crowd,los_fraction,mean_snr_db,"
                            "min_snr_db,uav_x,uav_y,uav_z")
        assert len(lines) == 1 + 2 * s.slots
        first = lines[1].split(",")
        assert first[0] == "1" and first[1] == "a"

"""Channel arithmetic and fading statistics."""

import numpy as np
import pytest

from uavterra.channel import (ChannelParams, LinkState, dbm_to_mw,
                              fading_for_states, mean_power_for_states,
                              mean_received_power, sample_fading, sinr_db)

CP = ChannelParams()


class TestMeanPower:
    def test_los_100m_exact(self):
        assert mean_received_power(100.0, LinkState.LOS, CP) == -45.0

    def test_nlos_100m_exact(self):
        assert mean_received_power(100.0, LinkState.NLOS, CP) == -64.0

    def test_unit_distance(self):
        assert mean_received_power(1.0, LinkState.LOS, CP) == pytest.approx(-5.0)

    def test_monotone_decreasing(self):
        d = np.linspace(1.0, 500.0, 200)
        p = mean_received_power(d, LinkState.LOS, CP)
        assert np.all(np.diff(p) < 0)

    def test_nonpositive_distance_rejected(self):
        with pytest.raises(ValueError):
            mean_received_power(0.0, LinkState.LOS, CP)
        with pytest.raises(ValueError):
            mean_received_power(-3.0, LinkState.NLOS, CP)

    def test_batch_matches_scalar(self):
        d = np.array([10.0, 100.0, 250.0])
        blocked = np.array([False, True, False])
        got = mean_power_for_states(d, blocked, CP)
        want = [mean_received_power(10.0, LinkState.LOS, CP),
                mean_received_power(100.0, LinkState.NLOS, CP),
                mean_received_power(250.0, LinkState.LOS, CP)]
        assert np.allclose(got, want)


class TestFading:
    def test_unit_mean_both_states(self):
        rng = np.random.default_rng(7)
        for q in (LinkState.LOS, LinkState.NLOS):
            g = sample_fading(q, CP, rng, size=1_000_000)
            assert abs(g.mean() - 1.0) < 0.01

    def test_nakagami_variance(self):
        # Var of the Gamma(m, 1/m) power gain is 1/m.
        rng = np.random.default_rng(8)
        g1 = sample_fading(LinkState.LOS, CP, rng, size=500_000)
        g2 = sample_fading(LinkState.NLOS, CP, rng, size=500_000)
        assert abs(g1.var() - 1.0) < 0.02
        assert abs(g2.var() - 0.5) < 0.02

    def test_los_is_exponential(self):
        # m=1: P(G > 1) = 1/e.
        rng = np.random.default_rng(9)
        g = sample_fading(LinkState.LOS, CP, rng, size=400_000)
        assert abs((g > 1.0).mean() - np.exp(-1.0)) < 0.005

    def test_batch_states(self):
        rng = np.random.default_rng(10)
        blocked = np.zeros(200_000, dtype=bool)
        blocked[100_000:] = True
        g = fading_for_states(blocked, CP, rng)
        assert abs(g[:100_000].var() - 1.0) < 0.05
        assert abs(g[100_000:].var() - 0.5) < 0.05


class TestSinr:
    def test_snr_100m_nlos(self):
        # -64 dBm over -90 dBm noise: 26 dB.
        s = dbm_to_mw(mean_received_power(100.0, LinkState.NLOS, CP))
        assert sinr_db(s, [], CP) == pytest.approx(26.0)

    def test_equal_interferer_near_zero_db(self):
        s = dbm_to_mw(-60.0)
        # One equal interferer dominates the -90 dBm noise floor.
        assert abs(sinr_db(s, [s], CP)) < 0.01

    def test_interference_sums_linear(self):
        s = dbm_to_mw(-50.0)
        i1 = dbm_to_mw(-70.0)
        lone = sinr_db(s, [i1], CP)
        double = sinr_db(s, [i1, i1], CP)
        assert double < lone

    def test_zero_signal_rejected(self):
        with pytest.raises(ValueError):
            sinr_db(0.0, [], CP)

    def test_zero_noise_zero_interference_rejected(self):
        cp = ChannelParams(sigma2_dbm=-np.inf)
        with pytest.raises(ValueError):
            sinr_db(1.0, [], cp)


class TestParams:
    def test_validation(self):
        with pytest.raises(ValueError):
            ChannelParams(alpha_los=0.5)
        with pytest.raises(ValueError):
            ChannelParams(m_nlos=0.1)

    def test_round_trip(self):
        cp = ChannelParams(zeta_dbm=20.0)
        assert ChannelParams.from_dict(cp.to_dict()) == cp

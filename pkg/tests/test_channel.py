"""Tests for the radio channel and the wired hop."""

import math

import numpy as np
import pytest

from skyfog.channel import (
    ChannelModel,
    LinkState,
    allocate_rbs,
    capacity,
    dbm_to_watts,
    evaluate_links,
    path_loss_db,
    sample_fast_fading,
    sinr,
    update_shadowing,
    wired_delay,
)
from skyfog.exceptions import UnstableQueueError
from skyfog.models import ChannelConfig, LinkMode

B1 = {"A": 22.7, "B": 41.0, "C": 20.0, "D": 5.0, "fc": 2.0}


class TestPathLoss:
    """Test the WINNER+ B1 path loss."""

    def test_reference_value(self):
        """Test path loss at 100 m and 2 GHz."""
        assert path_loss_db(100.0, **B1) == pytest.approx(78.441, abs=1e-3)

    def test_distance_is_clamped(self):
        """Test that distances below d_min use d_min."""
        assert path_loss_db(0.2, **B1, d_min=1.0) == path_loss_db(1.0, **B1, d_min=1.0)

    def test_vectorised(self):
        """Test that arrays are handled elementwise."""
        values = path_loss_db(np.array([10.0, 100.0]), **B1)
        assert values[1] - values[0] == pytest.approx(22.7)


class TestShadowing:
    """Test distance-correlated shadowing."""

    def test_no_movement_no_change(self):
        """Test that zero displacement keeps the shadowing value."""
        rng = np.random.default_rng(0)
        assert update_shadowing(4.2, 0.0, 10.0, 3.0, rng) == pytest.approx(4.2)

    def test_long_run_spread_matches_sigma(self):
        """Test that the long-run standard deviation is close to sigma."""
        rng = np.random.default_rng(1)
        sigma, d_corr = 3.0, 10.0
        value = 0.0
        samples = np.empty(100_000)
        for i in range(samples.size):
            value = update_shadowing(value, 5.0 * d_corr, d_corr, sigma, rng)
            samples[i] = value
        assert abs(samples.std() - sigma) / sigma < 0.05


class TestFastFading:
    """Test Rayleigh fading."""

    def test_unit_mean(self):
        """Test that the power gain has mean one."""
        draws = sample_fast_fading(np.random.default_rng(2), 1_000_000)
        assert abs(draws.mean() - 1.0) < 0.01
        assert np.all(draws >= 0)

    def test_unit_variance(self):
        """Test that the power gain spreads like a unit-mean exponential."""
        draws = sample_fast_fading(np.random.default_rng(3), 1_000_000)
        assert abs(draws.var() - 1.0) < 0.02


class TestResourceBlocks:
    """Test bandwidth-share to RB conversion."""

    def test_equal_halves(self):
        """Test that two half shares get ten contiguous RBs each."""
        plan = allocate_rbs({"a": 0.5, "b": 0.5}, 20e6, 20)
        sets = plan.rb_sets()
        assert sets["a"] == list(range(10))
        assert sets["b"] == list(range(10, 20))
        assert plan.rb_bandwidth == pytest.approx(1e6)

    def test_tiny_shares_still_get_one_rb(self):
        """Test that every positive share holds at least one RB."""
        sets = allocate_rbs({"a": 0.01, "b": 0.01, "c": 0.0}, 20e6, 20).rb_sets()
        assert sets == {"a": [0], "b": [1]}

    def test_never_more_than_the_band(self):
        """Test that the RB count is never exceeded."""
        shares = {f"link-{i}": 1.0 / 30 for i in range(30)}
        plan = allocate_rbs(shares, 20e6, 20)
        assert plan.used == 20
        assert all(len(holders) == 1 for holders in plan.occupancy.values())

    def test_largest_remainder(self):
        """Test that leftover RBs go to the largest fractional parts."""
        sets = allocate_rbs({"a": 0.47, "b": 0.33, "c": 0.2}, 20e6, 20).rb_sets()
        assert [len(sets[key]) for key in "abc"] == [9, 7, 4]


class TestSinrAndCapacity:
    """Test SINR and Shannon capacity."""

    def _link(self, tx, rx, rbs, pl=80.0):
        return LinkState(tx=tx, rx=rx, mode=LinkMode.V2V, path_loss_db=pl, tx_power_dbm=23.0, rb_set=rbs)

    def test_lone_link_is_snr(self):
        """Test that a link alone on its RBs sees noise only."""
        link = self._link(0, 1, [0])
        expected = float(dbm_to_watts(23.0)) * 10 ** (-8.0) / float(dbm_to_watts(-104.0))
        assert sinr(link, [link], -104.0) == pytest.approx([expected])

    def test_shared_rb_interferes(self):
        """Test that a second link on the same RB lowers capacity."""
        alone = evaluate_links([self._link(0, 1, [0])], -104.0, 1e6)[0].capacity
        first, second = evaluate_links([self._link(0, 1, [0]), self._link(2, 3, [0])], -104.0, 1e6)
        assert first.capacity < alone
        assert second.capacity < alone

    def test_disjoint_rbs_do_not_interfere(self):
        """Test that links on different RBs keep their SNR."""
        alone = evaluate_links([self._link(0, 1, [0])], -104.0, 1e6)[0].capacity
        first, _ = evaluate_links([self._link(0, 1, [0]), self._link(2, 3, [1])], -104.0, 1e6)
        assert first.capacity == pytest.approx(alone)

    def test_no_rbs_no_rate(self):
        """Test that a link without RBs has zero capacity."""
        assert capacity([], 1e6) == 0.0

    def test_capacity_sums_over_rbs(self):
        """Test Shannon rate per RB."""
        assert capacity([1.0, 3.0], 1e6) == pytest.approx(1e6 * (1.0 + 2.0))


class TestWiredDelay:
    """Test the M/M/1 wired hop."""

    def test_expected_sojourn_plus_serialization(self):
        """Test the mean delay for 50 of 100 messages per second."""
        assert wired_delay(50.0, 100.0, 1e6, 1e9) == pytest.approx(0.021)

    def test_unstable_queue(self):
        """Test that arrivals at the service rate raise."""
        with pytest.raises(UnstableQueueError):
            wired_delay(100.0, 100.0)

    def test_sampled_delay_has_the_right_mean(self):
        """Test that sampled sojourn times average to 1 / (mu - lambda)."""
        rng = np.random.default_rng(0)
        samples = [wired_delay(50.0, 100.0, rng=rng) for _ in range(20_000)]
        assert np.mean(samples) == pytest.approx(0.02, rel=0.05)


class TestChannelModel:
    """Test the task-vehicle by fog-radio channel matrices."""

    def test_full_band_capacity_falls_with_distance(self):
        """Test that a farther column gets a lower full-band rate."""
        config = ChannelConfig()
        for mode in config.modes.values():
            mode.sigma_db = 0.0
        model = ChannelModel(config, [LinkMode.V2V, LinkMode.V2V], 1, np.random.default_rng(0))
        model.update_geometry(np.array([[0.0, 0.0, 0.0]]), np.array([[10.0, 0.0, 0.0], [200.0, 0.0, 0.0]]), np.random.default_rng(1))
        rates = model.full_band_capacity()
        assert rates.shape == (1, 2)
        assert rates[0, 0] > rates[0, 1] > 0
        noise = float(dbm_to_watts(config.noise_dbm)) * config.rb_count
        snr = float(dbm_to_watts(23.0)) * 10 ** (-path_loss_db(10.0, **B1) / 10.0) / noise
        assert rates[0, 0] == pytest.approx(20e6 * math.log2(1.0 + snr))

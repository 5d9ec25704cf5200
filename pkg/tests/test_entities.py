"""Tests for the clock, RNG streams, and nodes."""

import numpy as np
import pytest

from skyfog.entities import Node, RngStreams, SimClock, distance_3d, rng_stream
from skyfog.exceptions import InvalidTimescaleError
from skyfog.models import NodeKind


class TestSimClock:
    """Test the two-timescale clock."""

    def test_mobility_steps_fall_every_tenth_tti(self):
        """Test that a 0.5 s step over 0.05 s TTIs marks every tenth TTI."""
        clock = SimClock()
        flags = []
        for _ in range(21):
            flags.append(clock.is_mobility_tti)
            clock.advance()
        assert [i for i, flag in enumerate(flags) if flag] == [0, 10, 20]
        assert clock.mobility_index == 2

    def test_non_integer_ratio_is_rejected(self):
        """Test that a step that is not a whole number of TTIs fails."""
        with pytest.raises(InvalidTimescaleError) as excinfo:
            SimClock(tti_duration=0.05, mobility_step=0.12)
        assert excinfo.value.mobility_step == 0.12

    def test_total_ttis_and_finish(self):
        """Test that the horizon maps to a TTI count."""
        clock = SimClock(horizon=1.0)
        assert clock.total_ttis == 20
        clock.tti_index = 20
        assert clock.finished

    def test_partial_last_tti_is_dropped(self):
        """Test that a horizon between TTI boundaries never runs past itself."""
        assert SimClock(horizon=0.12, tti_duration=0.05, mobility_step=0.5).total_ttis == 2
        assert SimClock(horizon=0.3, tti_duration=0.1, mobility_step=0.5).total_ttis == 3

    def test_time_is_tti_start(self):
        """Test that time is the start of the current TTI."""
        clock = SimClock(tti_index=3)
        assert clock.time == pytest.approx(0.15)
        assert clock.ttis_for(1.0) == 20


class TestRngStreams:
    """Test seeded RNG substreams."""

    def test_same_seed_same_draws(self):
        """Test that a stream is reproducible from seed and label."""
        a = rng_stream(7, "channel").random(5)
        b = rng_stream(7, "channel").random(5)
        np.testing.assert_array_equal(a, b)

    def test_labels_are_independent(self):
        """Test that different labels give different sequences."""
        a = rng_stream(7, "channel").random(5)
        b = rng_stream(7, "tasks").random(5)
        assert not np.array_equal(a, b)

    def test_draws_in_one_stream_leave_others_alone(self):
        """Test that consuming one stream does not shift another."""
        streams = RngStreams(11)
        streams["mobility"].random(100)
        np.testing.assert_array_equal(streams["ledger"].random(3), rng_stream(11, "ledger").random(3))

    def test_state_restores_position(self):
        """Test that a saved state continues the same sequence."""
        streams = RngStreams(5)
        streams["tasks"].random(4)
        saved = streams.state()
        expected = streams["tasks"].random(3)

        restored = RngStreams(5)
        restored.set_state(saved)
        np.testing.assert_array_equal(restored["tasks"].random(3), expected)


class TestNode:
    """Test node helpers."""

    def test_distance_3d(self):
        """Test Euclidean distance including altitude."""
        assert distance_3d((0, 0, 0), (3, 4, 12)) == pytest.approx(13.0)

    def test_task_vehicles_do_not_accept_tasks(self):
        """Test which kinds can be offloaded to."""
        tv = Node(id=0, name="tv-0", kind=NodeKind.TASK_VEHICLE, cpu_freq=2.5e9)
        uav = Node(id=1, name="uav-0", kind=NodeKind.UAV, cpu_freq=5e9)
        assert not tv.accepts_tasks
        assert uav.accepts_tasks
        assert uav.is_zone_manager
        assert tv.is_vehicle

"""Tests for the world loop."""

import pytest

from skyfog.core import World, fill_leftover, load_snapshot, relay_slots, restore, save_snapshot, snapshot
from skyfog.exceptions import InvalidConfigurationError, UnknownNodeError
from skyfog.ledger import Chain, verify_block
from skyfog.models import AttackerProfile, AttackKind
from tests.conftest import small_scenario


def event_dump(events):
    return [event.model_dump() for event in events]


class TestHelpers:
    """Test the share and relay helpers."""

    def test_relay_slots(self):
        """Test that a wired delay rounds up to whole slots."""
        assert relay_slots(0.0, 0.05) == 0
        assert relay_slots(0.021, 0.05) == 1
        assert relay_slots(0.1, 0.05) == 2

    def test_fill_leftover_splits_unused_share(self):
        """Test that tasks the plan left out share what is free."""
        assert fill_leftover({"a": 0.6, "b": 0.0, "c": 0.0}) == pytest.approx({"a": 0.6, "b": 0.2, "c": 0.2})

    def test_fill_leftover_scales_oversubscription(self):
        """Test that shares above one are scaled back."""
        assert fill_leftover({"a": 0.8, "b": 0.6}) == pytest.approx({"a": 0.8 / 1.4, "b": 0.6 / 1.4})

    def test_fill_leftover_with_no_plan(self):
        """Test that an empty plan splits the whole resource."""
        assert fill_leftover({"a": 0.0, "b": 0.0}) == pytest.approx({"a": 0.5, "b": 0.5})


class TestWorldSetup:
    """Test fleet construction and offloading candidates."""

    def test_node_order(self, small_config):
        """Test that ids run over TVs, SVs, UAVs, RSUs, then the cloud."""
        world = World(small_config)
        names = [node.name for node in world.nodes]
        assert names == ["tv-0", "tv-1", "tv-2", "sv-0", "sv-1", "sv-2", "uav-0", "rsu-0", "cloud"]
        assert world.nodes[world.rsu_ids[0]].stake == 100.0

    def test_unknown_attacker(self, tmp_path):
        """Test that an attack on a node that does not exist raises."""
        config = small_scenario(tmp_path, attacks=[{"node": "sv-9", "kind": "always_on"}])
        with pytest.raises(UnknownNodeError):
            World(config)

    def test_rsu_zone_includes_cloud(self, small_config):
        """Test the candidates of a task vehicle next to an RSU."""
        world = World(small_config)
        tv, sv, rsu = world.tv_ids[0], world.sv_ids[0], world.rsu_ids[0]
        world.nodes[tv].position = (300.0, 300.0, 0.0)
        world.zones = {tv: rsu, sv: rsu}
        assert world._candidates(tv) == [sv, rsu, world.cloud_id]

    def test_uav_zone_has_no_cloud(self, small_config):
        """Test that a UAV zone offers the UAV but not the cloud."""
        world = World(small_config)
        tv, uav = world.tv_ids[0], world.uav_ids[0]
        world.nodes[tv].position = (300.0, 300.0, 0.0)
        world.zones = {tv: uav}
        assert world._candidates(tv) == [uav]

    def test_blacklisted_nodes_are_not_candidates(self, small_config):
        """Test that a node below the reputation threshold gets no new tasks."""
        world = World(small_config)
        tv, sv, rsu = world.tv_ids[0], world.sv_ids[0], world.rsu_ids[0]
        world.nodes[tv].position = (300.0, 300.0, 0.0)
        world.zones = {tv: rsu, sv: rsu}
        world.reputation.beta[sv] = 5
        assert world._candidates(tv) == [rsu, world.cloud_id]


class TestWorldRun:
    """Test whole runs of the small scenario."""

    def test_task_conservation(self, small_config):
        """Test that every generated task is completed, failed, or still live."""
        world = World(small_config)
        world.run()
        assert len(world.series) == 40
        for row in world.series:
            assert row.generated == row.completed + row.failed + row.active
        summary = world.summary()
        assert summary.generated == summary.completed + summary.failed + summary.in_flight
        assert sum(summary.failures_by_reason.values()) == summary.failed

    def test_same_seed_same_events(self, small_config):
        """Test that two runs with one seed produce identical events and summaries."""
        first, second = World(small_config), World(small_config)
        assert event_dump(first.run()) == event_dump(second.run())
        assert first.summary() == second.summary()

    def test_different_seed_differs(self, tmp_path):
        """Test that the seed changes the run."""
        first = World(small_scenario(tmp_path, simulation={"seed": 1}))
        second = World(small_scenario(tmp_path, simulation={"seed": 2}))
        assert event_dump(first.run()) != event_dump(second.run())

    def test_no_task_vehicles(self, tmp_path):
        """Test that a run without task vehicles reports a full success ratio."""
        world = World(small_scenario(tmp_path, fleet={"task_vehicles": 0}))
        world.run()
        summary = world.summary()
        assert summary.no_tasks
        assert summary.success_ratio == 1.0
        assert summary.mean_latency is None

    def test_success_ratio_leaves_out_live_tasks(self, small_config):
        """Test that tasks still in flight count neither for nor against the ratio."""
        world = World(small_config)
        world.counters.generated = 10
        world.counters.completed = 3
        world.counters.failed = 1
        assert world.success_ratio() == 0.75
        world.counters.completed = world.counters.failed = 0
        assert world.success_ratio() == 1.0

    def test_chain_and_balances(self, tmp_path):
        """Test that the chain re-verifies and tokens are conserved up to block rewards."""
        config = small_scenario(tmp_path, compute={"lambda_override": 10.0}, ledger={"p_audit": 0.0})
        world = World(config)
        world.run()
        replay = Chain()
        for block in world.chain.blocks:
            assert verify_block(replay, block.model_copy(deep=True))[0]
        vehicles = len(world.vehicle_ids)
        expected = vehicles * config.ledger.initial_balance + len(world.chain.blocks) * config.ledger.block_reward
        assert sum(world.balances.values()) == pytest.approx(expected)
        assert world.summary().tx_certified == sum(len(block.transactions) for block in world.chain.blocks)

    def test_spoofer_is_detected(self, tmp_path):
        """Test that forged payments are rejected and never reach the chain."""
        config = small_scenario(
            tmp_path,
            attacks=[AttackerProfile(node="sv-0", kind=AttackKind.IDENTITY_SPOOF).model_dump()],
            ledger={"spoof_attempt_rate": 100.0},
        )
        world = World(config)
        events = world.run()
        assert world.counters.attacks_detected > 0
        detected = [event for event in events if event.kind == "attack_detected"]
        assert detected
        assert all(event.data["attack"] == "identity_spoof" for event in detected)
        assert all(event.data["attacker"] == "sv-0" for event in detected)
        on_chain = [tx.tx_id for block in world.chain.blocks for tx in block.transactions]
        assert not any(tx_id.startswith("spoof-") for tx_id in on_chain)

    def test_ledger_stall_is_reported_once(self, tmp_path):
        """Test that without stake the pool grows and one ledger error is emitted."""
        config = small_scenario(
            tmp_path,
            compute={"lambda_override": 10.0},
            ledger={"rsu_stakes": [0.0], "p_audit": 0.0},
        )
        world = World(config)
        events = world.run()
        assert world.chain.blocks == []
        assert len(world.pool) > 0
        assert [event.kind for event in events].count("ledger_error") == 1


class TestSnapshots:
    """Test saving and restoring a world mid-run."""

    def test_restore_continues_identically(self, small_config, tmp_path):
        """Test that a restored world produces the same remaining events."""
        original = World(small_config)
        for _ in range(15):
            original.advance_tti()
        path = tmp_path / "snapshot.yaml"
        save_snapshot(original, path)
        restored = load_snapshot(path)

        tail = [event_dump(original.advance_tti()) for _ in range(25)]
        replayed = [event_dump(restored.advance_tti()) for _ in range(25)]
        assert tail == replayed
        assert original.summary() == restored.summary()

    def test_snapshot_round_trips_through_text(self, small_config):
        """Test that snapshot text restores the clock and counters."""
        world = World(small_config)
        for _ in range(5):
            world.advance_tti()
        restored = restore(snapshot(world))
        assert restored.clock.tti_index == 5
        assert restored.counters == world.counters

    def test_malformed_snapshot(self):
        """Test that a document without the two sections raises."""
        with pytest.raises(InvalidConfigurationError):
            restore("config: {}\n")

"""Tests for the offloading solvers."""

import itertools

import numpy as np
import pytest

from skyfog.exceptions import (
    InfeasibleSubproblemError,
    InstanceTooLargeError,
    InvalidConfigurationError,
    InvalidYAMLError,
    ScheduleValidationError,
    UnsupportedSolverError,
)
from skyfog.models import OffloadConfig, SolverKind
from skyfog.solvers import (
    GreedySolver,
    InstanceNode,
    InstanceTask,
    OffloadInstance,
    OracleSolver,
    Schedule,
    SlotSubproblem,
    WhoSolver,
    ao_refine,
    build_cost_matrix,
    create_solver,
    dump_instance,
    exact_oracle,
    hungarian_solve,
    load_instance,
    objective,
    plan_assignment,
    random_instance,
    solve_slot_lp,
    swap_search,
    validate_schedule,
    window_offload,
)
from skyfog.solvers.instance import sequential_fill


def single_task_instance(deadline: int = 3, **task_fields) -> OffloadInstance:
    """One task whose upload and computation each fit in one slot."""
    fields = {"task_id": "a", "up": 1e6, "req": 1e8, "deadline": deadline}
    fields.update(task_fields)
    return OffloadInstance(
        n_slots=4,
        dt=0.05,
        punish=100.0,
        tasks=[InstanceTask(**fields)],
        nodes=[InstanceNode(node_id="n0", cpu_freq=2e9)],
        capacity=[[[2e7] * 4]],
    )


def contended_instance() -> OffloadInstance:
    """Two tasks that both prefer node 0 but only one of them fits there."""
    return OffloadInstance(
        n_slots=4,
        dt=0.05,
        punish=100.0,
        tasks=[
            InstanceTask(task_id="a", up=1e6, req=2e8, deadline=1, band="a"),
            InstanceTask(task_id="b", up=1e6, req=2e8, deadline=1, band="b"),
        ],
        nodes=[InstanceNode(node_id="n0", cpu_freq=5e9), InstanceNode(node_id="n1", cpu_freq=5e9)],
        capacity=[[[2e7] * 4, [2e7] * 4], [[2e7] * 4, [2e7] * 4]],
    )


def schedule_of(mu, bw, cpu) -> Schedule:
    return Schedule(mu=np.array(mu), bw=np.array(bw, dtype=float), cpu=np.array(cpu, dtype=float))


def brute_force_total(matrix: np.ndarray) -> float:
    n, m = matrix.shape
    if n <= m:
        return min(sum(matrix[r, c] for r, c in enumerate(cols)) for cols in itertools.permutations(range(m), n))
    return min(sum(matrix[r, c] for c, r in enumerate(rows)) for rows in itertools.permutations(range(n), m))


class TestHungarian:
    """Test the Kuhn-Munkres assignment."""

    def test_small_example(self):
        """Test a 3 x 3 matrix with a known optimum of 5."""
        matching = hungarian_solve([[4, 1, 3], [2, 0, 5], [3, 2, 2]])
        assert matching.total == 5
        assert matching.assignment == [1, 0, 2]

    def test_matches_brute_force(self):
        """Test optimality against enumeration on random integer matrices."""
        rng = np.random.default_rng(0)
        for _ in range(1000):
            n, m = rng.integers(1, 7, size=2)
            matrix = rng.integers(0, 50, size=(n, m)).astype(float)
            matching = hungarian_solve(matrix)
            assert matching.total == brute_force_total(matrix)
            assert len(matching.pairs) == min(n, m)

    def test_infeasible_row_is_unassigned(self):
        """Test that a row of infinite costs stays unmatched."""
        matching = hungarian_solve([[np.inf, np.inf], [1.0, 2.0]])
        assert matching.assignment == [None, 0]
        assert matching.unassigned == [0]
        assert matching.total == 1.0

    def test_ties_pick_lowest_column(self):
        """Test that equal costs resolve to the first column."""
        assert hungarian_solve([[1.0, 1.0]]).assignment == [0]

    def test_negative_costs_rejected(self):
        """Test that negative entries are refused."""
        with pytest.raises(ValueError):
            hungarian_solve([[-1.0]])

    def test_empty(self):
        """Test that no rows gives an empty matching."""
        assert hungarian_solve(np.zeros((0, 3))).pairs == []


class TestValidateSchedule:
    """Test the constraint checker."""

    def test_valid_schedule(self):
        """Test upload in slot 0 and compute in slot 1."""
        instance = single_task_instance()
        schedule = schedule_of([0], [[1, 0, 0, 0]], [[0, 1, 0, 0]])
        assert validate_schedule(schedule, instance) == []
        assert objective(schedule, instance) == 1.0

    def test_objective_uses_absolute_slots(self):
        """Test that the window start offsets completion slots."""
        instance = single_task_instance()
        instance.start_slot = 40
        schedule = schedule_of([0], [[1, 0, 0, 0]], [[0, 1, 0, 0]])
        assert objective(schedule, instance) == 41.0

    def test_transmit_and_compute_in_one_slot(self):
        """Test that overlapping transmit and compute is flagged."""
        schedule = schedule_of([0], [[1, 0, 0, 0]], [[1, 0, 0, 0]])
        assert "transmit_compute_overlap" in validate_schedule(schedule, single_task_instance())

    def test_short_upload(self):
        """Test that too few bits delivered is flagged."""
        schedule = schedule_of([0], [[0.5, 0, 0, 0]], [[0, 1, 0, 0]])
        assert validate_schedule(schedule, single_task_instance()) == ["upload_short"]

    def test_compute_after_deadline(self):
        """Test that computing past the last usable slot is flagged."""
        schedule = schedule_of([0], [[1, 0, 0, 0]], [[0, 0, 0, 1]])
        assert validate_schedule(schedule, single_task_instance(deadline=2)) == ["compute_after_deadline"]

    def test_unassigned_task_with_shares(self):
        """Test that an unassigned task may not hold resources."""
        schedule = schedule_of([-1], [[1, 0, 0, 0]], [[0, 0, 0, 0]])
        assert validate_schedule(schedule, single_task_instance()) == ["unassigned_holds_resources"]

    def test_pool_limits(self):
        """Test bandwidth and CPU shares above one in a slot."""
        instance = OffloadInstance(
            n_slots=2,
            dt=0.05,
            tasks=[InstanceTask(task_id=t, up=1e6, req=1e8, deadline=1) for t in "ab"],
            nodes=[InstanceNode(node_id="n0", cpu_freq=2e9)],
            capacity=[[[2e7, 2e7]], [[2e7, 2e7]]],
        )
        schedule = schedule_of([0, 0], [[1, 0], [1, 0]], [[0, 1], [0, 1]])
        assert validate_schedule(schedule, instance) == ["bandwidth_over_capacity", "cpu_over_capacity"]

    def test_objective_refuses_invalid_schedules(self):
        """Test that scoring an invalid schedule raises with its labels."""
        schedule = schedule_of([0], [[0.5, 0, 0, 0]], [[0, 1, 0, 0]])
        with pytest.raises(ScheduleValidationError) as excinfo:
            objective(schedule, single_task_instance())
        assert excinfo.value.violations == ["upload_short"]

    def test_unassigned_costs_punish(self):
        """Test that an unassigned task adds the penalty."""
        instance = single_task_instance()
        assert objective(Schedule.empty(1, 4), instance) == 100.0


class TestSlotLp:
    """Test the slot LP relaxation."""

    def test_shared_pool(self):
        """Test that two tasks split one unit per slot and finish early."""
        subproblem = SlotSubproblem(
            demand=np.array([1.0, 1.0]),
            rate=np.ones((2, 3)),
            allowed=np.ones((2, 3), dtype=bool),
            pools=[[0, 1]],
        )
        shares = solve_slot_lp(subproblem)
        assert np.all(shares.sum(axis=0) <= 1.0 + 1e-9)
        np.testing.assert_allclose(shares.sum(axis=1), [1.0, 1.0], atol=1e-6)
        assert shares[:, 2].sum() == pytest.approx(0.0, abs=1e-9)

    def test_no_usable_slot(self):
        """Test that a task with work and no slot is infeasible."""
        subproblem = SlotSubproblem(
            demand=np.array([1.0]),
            rate=np.ones((1, 2)),
            allowed=np.zeros((1, 2), dtype=bool),
            pools=[[0]],
        )
        with pytest.raises(InfeasibleSubproblemError):
            solve_slot_lp(subproblem)


class TestSolvers:
    """Test greedy, WHO, and the oracle on hand-built windows."""

    def test_greedy_commits_to_its_estimate(self):
        """Test that greedy sends both tasks to the first fast node."""
        instance = contended_instance()
        schedule = GreedySolver(OffloadConfig()).plan(instance)
        assert schedule.committed.tolist() == [0, 0]
        assert schedule.mu.tolist() == [0, -1]
        assert objective(schedule, instance) == 1.0 + 100.0

    def test_who_spreads_the_load(self):
        """Test that WHO places the second task on the other node."""
        instance = contended_instance()
        solver = WhoSolver(OffloadConfig())
        schedule = solver.plan(instance)
        assert sorted(schedule.mu.tolist()) == [0, 1]
        assert objective(schedule, instance) == 2.0
        assert solver.act_offloading() == {"a": 0, "b": 1}
        assert set(solver.act_cpu_allocation(1)) == {"a", "b"}

    def test_oracle_optimum(self):
        """Test the exact optimum of the contended window."""
        value, schedule = exact_oracle(contended_instance())
        assert value == 2.0
        assert validate_schedule(schedule, contended_instance()) == []

    def test_oracle_guard(self):
        """Test that more than three tasks is too large for the oracle."""
        instance = OffloadInstance(
            n_slots=4,
            dt=0.05,
            tasks=[InstanceTask(task_id=f"t{k}", up=1e5, req=1e7, deadline=3) for k in range(4)],
            nodes=[InstanceNode(node_id="n0", cpu_freq=5e9)],
            capacity=[[[2e7] * 4] for _ in range(4)],
        )
        with pytest.raises(InstanceTooLargeError) as excinfo:
            exact_oracle(instance)
        assert excinfo.value.tasks == 4

        solver = OracleSolver(OffloadConfig())
        schedule = solver.plan(instance)
        assert solver.fell_back
        assert solver.fallbacks == 1
        assert validate_schedule(schedule, instance) == []

    def test_cost_matrix_skips_committed_and_forbidden(self):
        """Test that committed tasks get no row and disallowed nodes cost infinity."""
        instance = contended_instance()
        instance.tasks[0].fixed_node = 1
        instance.tasks[1].candidates = [0]
        cost, rows, columns = build_cost_matrix(instance, seats_per_node=2)
        assert rows == [1]
        assert columns == [(0, 0), (0, 1), (1, 0), (1, 1)]
        assert np.isfinite(cost[0, 0])
        assert np.all(np.isinf(cost[0, 2:]))

    def test_fixed_tasks_keep_their_node(self):
        """Test that an earlier commitment survives replanning."""
        instance = contended_instance()
        instance.tasks[0].fixed_node = 1
        schedule = window_offload(instance)
        assert schedule.mu[0] == 1

    def test_swap_search_recovers_a_dropped_task(self):
        """Test that moving the dropped task to the idle node serves both."""
        instance = contended_instance()
        crowded = sequential_fill(instance, [(0, 0), (1, 0)])
        assert crowded.mu.tolist() == [0, -1]
        searched = swap_search(crowded, instance)
        assert searched.mu.tolist() == [0, 1]
        assert objective(searched, instance) == 2.0

    def test_swap_search_keeps_an_optimal_plan(self):
        """Test that a plan nothing beats comes back as it was."""
        instance = contended_instance()
        _, planned = plan_assignment(instance, np.array([0, 1]))
        assert swap_search(planned, instance) is planned

    def test_plan_assignment_tries_fill_orders(self):
        """Test that the better of the two fill orders is returned."""
        instance = contended_instance()
        value, planned = plan_assignment(instance, np.array([0, 0]))
        assert value == 1.0 + 100.0
        assert validate_schedule(planned, instance) == []

    def test_ao_refine_searches_assignments(self):
        """Test that refinement keeps going after the slot LPs converge on a poor assignment."""
        instance = contended_instance()
        refined = ao_refine(sequential_fill(instance, [(0, 0), (1, 0)]), instance)
        assert refined.mu.tolist() == [0, 1]
        assert refined.objective_trace[0] == 101.0
        assert refined.objective_trace[-1] == 2.0
        trace = refined.objective_trace
        assert all(b <= a + 1e-9 for a, b in zip(trace, trace[1:]))

    def test_factory(self):
        """Test solver lookup by name."""
        assert isinstance(create_solver("who", OffloadConfig()), WhoSolver)
        assert isinstance(create_solver(SolverKind.GREEDY, OffloadConfig()), GreedySolver)
        with pytest.raises(UnsupportedSolverError) as excinfo:
            create_solver("simplex", OffloadConfig())
        assert excinfo.value.solver == "simplex"


class TestInstanceFiles:
    """Test instance YAML files."""

    def test_dump_and_load(self, tmp_path):
        """Test that a dumped instance loads back equal."""
        instance = contended_instance()
        path = tmp_path / "instance.yaml"
        dump_instance(instance, path)
        assert load_instance(path) == instance

    def test_invalid_yaml(self, tmp_path):
        """Test that unparsable YAML raises."""
        path = tmp_path / "instance.yaml"
        path.write_text("tasks: [unclosed", encoding="utf-8")
        with pytest.raises(InvalidYAMLError):
            load_instance(path)

    def test_wrong_shape(self, tmp_path):
        """Test that mismatched capacity shapes raise."""
        path = tmp_path / "instance.yaml"
        path.write_text(
            "n_slots: 2\ndt: 0.05\ntasks:\n  - {task_id: a, up: 1.0, req: 1.0, deadline: 1}\n"
            "nodes:\n  - {node_id: n0, cpu_freq: 1.0}\ncapacity: [[[1.0]]]\n",
            encoding="utf-8",
        )
        with pytest.raises(InvalidConfigurationError):
            load_instance(path)


@pytest.mark.slow
class TestRandomInstances:
    """Test solver soundness and ordering on random small windows."""

    def test_ao_is_sound_and_monotone(self):
        """Test that refined plans validate and never score worse than the provisional plan."""
        rng = np.random.default_rng(42)
        for _ in range(200):
            instance = random_instance(rng)
            provisional = window_offload(instance)
            refined = ao_refine(provisional, instance)
            assert validate_schedule(refined, instance) == []
            trace = refined.objective_trace
            assert all(b <= a + 1e-9 for a, b in zip(trace, trace[1:]))
            assert objective(refined, instance) <= objective(provisional, instance) + 1e-9

    def test_who_is_close_to_the_optimum(self):
        """Test that WHO lands within 5% of the exact optimum on every window."""
        rng = np.random.default_rng(42)
        solver = WhoSolver(OffloadConfig())
        for _ in range(200):
            instance = random_instance(rng)
            best, _ = exact_oracle(instance)
            schedule = solver.plan(instance)
            assert validate_schedule(schedule, instance) == []
            assert objective(schedule, instance) <= 1.05 * best + 1e-6

    def test_solver_ordering(self):
        """Test oracle <= WHO always and WHO <= greedy on almost every window."""
        rng = np.random.default_rng(7)
        config = OffloadConfig()
        who, greedy = WhoSolver(config), GreedySolver(config)
        who_wins = 0
        for _ in range(200):
            instance = random_instance(rng)
            best, _ = exact_oracle(instance)
            who_value = objective(who.plan(instance), instance)
            greedy_value = objective(greedy.plan(instance), instance)
            assert best <= who_value + 1e-6
            who_wins += who_value <= greedy_value + 1e-6
        assert who_wins >= 180

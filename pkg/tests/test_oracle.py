import numpy as np
import pytest

from plantroute.errors import InfeasibleInputError
from plantroute.oracle import (
    ConstraintKind,
    EulerianState,
    InputVector,
    JobTracker,
    check_constraints,
    euler_step,
    update_job_tracker,
)
from plantroute.topology import build_example_plant


@pytest.fixture(scope="module")
def plant():
    return build_example_plant()


def u_of(plant, *active):
    return InputVector.from_active(plant, list(active))


def test_zero_input_is_identity(plant):
    state = EulerianState.empty(plant)
    after = euler_step(state, InputVector(plant), plant)
    assert np.array_equal(after.z, state.z)
    assert after.n_finished == 0


def test_single_move_shifts_occupancy(plant):
    state = EulerianState.from_occupied(plant, [10])
    after = euler_step(state, u_of(plant, (10, 1)), plant)
    assert after.occupied_nodes() == {1}
    assert after.n_finished == 0


def test_unload_increments_finished_count(plant):
    state = EulerianState.from_occupied(plant, [10])
    after = euler_step(state, u_of(plant, (10, 0)), plant)
    assert after.occupied_nodes() == set()
    assert after.n_finished == 1


def test_move_from_empty_node_raises(plant):
    state = EulerianState.empty(plant)
    with pytest.raises(InfeasibleInputError):
        euler_step(state, u_of(plant, (3, 4)), plant)


def test_double_arrival_raises(plant):
    state = EulerianState.from_occupied(plant, [2, 4])
    with pytest.raises(InfeasibleInputError):
        euler_step(state, u_of(plant, (2, 5), (4, 5)), plant)


def test_zero_input_violates_nothing(plant):
    state = EulerianState.from_occupied(plant, [1, 2, 12])
    assert check_constraints(state, InputVector(plant), JobTracker(), 0, plant) == []


def test_outgoing_from_empty_node_flagged(plant):
    state = EulerianState.empty(plant)
    violations = check_constraints(state, u_of(plant, (3, 4)), JobTracker(), 0, plant)
    assert [(v.kind, v.node) for v in violations] == [(ConstraintKind.EMPTY_SOURCE, 3)]


def test_arrival_at_holding_occupied_node_flagged(plant):
    state = EulerianState.from_occupied(plant, [4, 5])
    violations = check_constraints(state, u_of(plant, (4, 5)), JobTracker(), 0, plant)
    assert (ConstraintKind.OCCUPIED_DESTINATION, 5) in [(v.kind, v.node) for v in violations]


def test_follow_on_arrival_is_legal(plant):
    # the occupant of 5 leaves while a new part arrives: no violation
    state = EulerianState.from_occupied(plant, [4, 5])
    violations = check_constraints(state, u_of(plant, (4, 5), (5, 2)), JobTracker(), 0, plant)
    assert violations == []


def test_multiple_outgoing_flagged(plant):
    state = EulerianState.from_occupied(plant, [2])
    violations = check_constraints(state, u_of(plant, (2, 3), (2, 5)), JobTracker(), 0, plant)
    assert (ConstraintKind.MULTIPLE_OUTGOING, 2) in [(v.kind, v.node) for v in violations]


def test_multiple_incoming_flagged(plant):
    state = EulerianState.from_occupied(plant, [4, 2])
    violations = check_constraints(state, u_of(plant, (4, 5), (2, 5)), JobTracker(), 0, plant)
    assert (ConstraintKind.MULTIPLE_INCOMING, 5) in [(v.kind, v.node) for v in violations]


def test_departure_before_job_completion_flagged(plant):
    # job started at step 5 on machine 12 (duration 3): departures are
    # illegal through step 8 and legal from step 9
    state = EulerianState.from_occupied(plant, [12])
    jobs = JobTracker(starts={12: 5})
    depart = u_of(plant, (12, 6))
    for k in (5, 6, 7, 8):
        violations = check_constraints(state, depart, jobs, k, plant)
        assert (ConstraintKind.JOB_IN_PROGRESS, 12) in [(v.kind, v.node) for v in violations], k
    assert check_constraints(state, depart, jobs, 9, plant) == []


def test_job_tracker_unchanged_without_machine_traffic(plant):
    jobs = JobTracker()
    state = EulerianState.from_occupied(plant, [2])
    after = update_job_tracker(jobs, state, u_of(plant, (2, 3)), 4, plant)
    assert after.starts == {}


def test_job_tracker_records_arrival_step(plant):
    jobs = JobTracker()
    state = EulerianState.from_occupied(plant, [6])
    after = update_job_tracker(jobs, state, u_of(plant, (6, 12)), 4, plant)
    assert after.starts == {12: 5}


def test_job_tracker_clears_on_departure(plant):
    jobs = JobTracker(starts={12: 5})
    state = EulerianState.from_occupied(plant, [12])
    after = update_job_tracker(jobs, state, u_of(plant, (12, 6)), 9, plant)
    assert after.starts == {}


def test_job_tracker_follow_on_replaces_entry(plant):
    # old part leaves 12 while a new one arrives from 6 in the same step
    jobs = JobTracker(starts={12: 5})
    state = EulerianState.from_occupied(plant, [6, 12])
    after = update_job_tracker(jobs, state, u_of(plant, (12, 7), (6, 12)), 9, plant)
    assert after.starts == {12: 10}


def test_input_vector_requires_known_transition(plant):
    u = InputVector(plant)
    with pytest.raises(KeyError):
        u[(3, 9)]


def test_input_vector_counts_active(plant):
    u = u_of(plant, (10, 1), (0, 10))
    assert u.count() == 2
    assert set(u.active()) == {(10, 1), (0, 10)}


def test_conservation_under_feasible_inputs(plant):
    # mass balance: total occupancy changes by load minus unload
    state = EulerianState.from_occupied(plant, [10, 1])
    u = u_of(plant, (10, 0), (1, 2), (0, 10))
    after = euler_step(state, u, plant)
    assert after.z.sum() - state.z.sum() == 1 - 1
    assert after.n_finished == 1

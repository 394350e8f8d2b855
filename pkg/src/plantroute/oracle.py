"""Occupancy model of the plant and the ground-truth feasibility checker.

The plant state here is the boolean occupancy of every node plus a finished
part counter. Stepping the state under an input vector is a plain balance
update; :func:`check_constraints` independently verifies every operational
rule an input vector must satisfy. The simulation harness runs this model in
parallel with the part-tracking controller state and reconciles the two at
every step, so any controller bug surfaces immediately.

Job timing convention (applied consistently across the whole package):
a part arriving at machine ``m`` at step ``k`` has its job start recorded as
``k``; while the machine is occupied, departure commands are rejected at all
steps ``<= k + L_m``, so the earliest legal departure command is issued at
``k + L_m + 1`` and a part occupies a machine for ``L_m + 2`` steps when it
moves on as early as possible. Path validation enforces the matching hold
length (see ``sequences.validate_sequence``).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Iterator, Mapping

import numpy as np

from .errors import InfeasibleInputError
from .topology import OUTSIDE, PlantTopology, Transition


@dataclass(frozen=True)
class EulerianState:
    """Occupancy vector (index h-1 holds node h) and finished-part count."""

    z: np.ndarray
    n_finished: int = 0

    @staticmethod
    def empty(topology: PlantTopology) -> "EulerianState":
        return EulerianState(z=np.zeros(topology.n_nodes, dtype=np.int64), n_finished=0)

    @staticmethod
    def from_occupied(topology: PlantTopology, occupied: Iterable[int]) -> "EulerianState":
        z = np.zeros(topology.n_nodes, dtype=np.int64)
        for h in occupied:
            z[h - 1] = 1
        return EulerianState(z=z, n_finished=0)

    def occupied(self, h: int) -> bool:
        return bool(self.z[h - 1])

    def occupied_nodes(self) -> set[int]:
        return {h + 1 for h in np.flatnonzero(self.z)}


class InputVector(Mapping[Transition, bool]):
    """Boolean command per transition, keyed exactly by the topology's set.

    Backed by a vector in the topology's canonical transition order.
    """

    __slots__ = ("topology", "values")

    def __init__(self, topology: PlantTopology, values: np.ndarray | None = None):
        self.topology = topology
        if values is None:
            values = np.zeros(topology.n_inputs, dtype=np.int64)
        if len(values) != topology.n_inputs:
            raise ValueError(f"expected {topology.n_inputs} command entries, got {len(values)}")
        self.values = np.asarray(values, dtype=np.int64)

    @staticmethod
    def from_active(topology: PlantTopology, active: Iterable[Transition]) -> "InputVector":
        u = InputVector(topology)
        for t in active:
            u.values[topology.transition_index[t]] = 1
        return u

    def __getitem__(self, transition: Transition) -> bool:
        return bool(self.values[self.topology.transition_index[transition]])

    def __iter__(self) -> Iterator[Transition]:
        return iter(self.topology.transitions)

    def __len__(self) -> int:
        return self.topology.n_inputs

    def active(self) -> list[Transition]:
        return [self.topology.transitions[i] for i in np.flatnonzero(self.values)]

    def count(self) -> int:
        return int(self.values.sum())

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, InputVector)
            and self.topology.transitions == other.topology.transitions
            and bool(np.array_equal(self.values, other.values))
        )

    def __repr__(self) -> str:
        return f"InputVector({self.active()})"


@dataclass(frozen=True)
class JobTracker:
    """Job start step per occupied machine; an entry exists only while the
    machine holds a part."""

    starts: dict[int, int] = field(default_factory=dict)

    def start_step(self, machine: int) -> int | None:
        return self.starts.get(machine)


class ConstraintKind(Enum):
    MULTIPLE_OUTGOING = "more than one outgoing command"
    MULTIPLE_INCOMING = "more than one incoming command"
    EMPTY_SOURCE = "outgoing command from an empty node"
    OCCUPIED_DESTINATION = "incoming command to an occupied node that keeps its part"
    JOB_IN_PROGRESS = "outgoing command from a machine before its job is complete"


@dataclass(frozen=True)
class ConstraintViolation:
    kind: ConstraintKind
    node: int

    def __str__(self) -> str:
        return f"node {self.node}: {self.kind.value}"


def euler_step(state: EulerianState, u: InputVector, topology: PlantTopology) -> EulerianState:
    """Advance occupancy one step under ``u``.

    Raises :class:`InfeasibleInputError` if any node count would leave {0, 1};
    that never happens for inputs accepted by :func:`check_constraints`.
    """
    z = state.z.copy()
    finished = state.n_finished
    for (h, j), v in zip(topology.transitions, u.values):
        if not v:
            continue
        if h != OUTSIDE:
            z[h - 1] -= 1
        if j != OUTSIDE:
            z[j - 1] += 1
        else:
            finished += 1
    bad = np.flatnonzero((z < 0) | (z > 1))
    if bad.size:
        raise InfeasibleInputError(
            f"input vector is infeasible: node(s) {[int(b) + 1 for b in bad]} "
            f"would hold {[int(z[b]) for b in bad]} parts"
        )
    return EulerianState(z=z, n_finished=finished)


def check_constraints(
    state: EulerianState,
    u: InputVector,
    jobs: JobTracker,
    k: int,
    topology: PlantTopology,
) -> list[ConstraintViolation]:
    """Return every operational rule ``u`` violates in ``state`` at step ``k``.

    Checked per node h:
      * at most one outgoing command;
      * at most one incoming command;
      * no outgoing command while h is empty;
      * no incoming command while h is occupied and keeps its part this step
        (i.e. h has no outgoing command in ``u`` itself);
      * for a machine with an unfinished job (k <= job start + duration),
        no outgoing command.

    An empty list means ``u`` is feasible.
    """
    n = topology.n_nodes
    out_count = np.zeros(n + 1, dtype=np.int64)
    in_count = np.zeros(n + 1, dtype=np.int64)
    for (h, j), v in zip(topology.transitions, u.values):
        if not v:
            continue
        if h != OUTSIDE:
            out_count[h] += 1
        if j != OUTSIDE:
            in_count[j] += 1

    violations: list[ConstraintViolation] = []
    for h in range(1, n + 1):
        if out_count[h] > 1:
            violations.append(ConstraintViolation(ConstraintKind.MULTIPLE_OUTGOING, h))
        if in_count[h] > 1:
            violations.append(ConstraintViolation(ConstraintKind.MULTIPLE_INCOMING, h))
        if out_count[h] > 0 and not state.occupied(h):
            violations.append(ConstraintViolation(ConstraintKind.EMPTY_SOURCE, h))
        if in_count[h] > 0 and state.occupied(h) and out_count[h] == 0:
            violations.append(ConstraintViolation(ConstraintKind.OCCUPIED_DESTINATION, h))

    for m, duration in sorted(topology.machines.items()):
        if out_count[m] > 0 and state.occupied(m):
            start = jobs.start_step(m)
            if start is not None and k <= start + duration:
                violations.append(ConstraintViolation(ConstraintKind.JOB_IN_PROGRESS, m))
    return violations


def update_job_tracker(
    jobs: JobTracker,
    state: EulerianState,
    u: InputVector,
    k: int,
    topology: PlantTopology,
) -> JobTracker:
    """Roll the job starts forward across one applied (feasible) step.

    A part arriving at machine m this step starts its job at k+1; a departing
    part clears the machine's entry. A simultaneous depart+arrive (follow-on
    move) replaces the entry.
    """
    starts = dict(jobs.starts)
    departed: set[int] = set()
    arrived: set[int] = set()
    for (h, j), v in zip(topology.transitions, u.values):
        if not v:
            continue
        if h in topology.machines:
            departed.add(h)
        if j != OUTSIDE and j in topology.machines:
            arrived.add(j)
    for m in departed:
        starts.pop(m, None)
    for m in arrived:
        starts[m] = k + 1
    return JobTracker(starts=starts)

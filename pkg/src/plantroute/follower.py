"""Greedy path following: advance every part along its sequence, resolve
conflicts by priority, and emit the matching plant commands.

The closed loop built on top of the policy is the plant model the allocator
uses for predictions: parts that walk off the end of their sequence leave the
plant, and a loaded part enters with a configured (sequence, position) and an
elapsed time of zero.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .oracle import InputVector
from .sequences import SequenceSet
from .topology import PlantTopology


@dataclass(frozen=True)
class PartState:
    """Where one part is: sequence index, 1-based position, steps since it
    entered the plant, and a stable id used for logging and tie-breaks."""

    seq: int
    pos: int
    elapsed: int
    part_id: int


@dataclass(frozen=True)
class LagrangianState:
    """All parts currently in the plant, in loading order."""

    parts: tuple[PartState, ...] = ()

    @property
    def n_parts(self) -> int:
        return len(self.parts)

    def nodes(self, seqs: SequenceSet) -> list[int]:
        return [part_node(seqs, x) for x in self.parts]


def part_node(seqs: SequenceSet, part: PartState) -> int:
    return seqs.sequence(part.seq).node(part.pos)


def part_goal(seqs: SequenceSet, part: PartState) -> int:
    return seqs.sequence(part.seq).goal(part.pos)


def check_injective(state: LagrangianState, seqs: SequenceSet) -> None:
    nodes = state.nodes(seqs)
    if len(set(nodes)) != len(nodes):
        raise ValueError(f"two parts occupy the same node: {sorted(nodes)}")


def _to_arrays(parts, capacity):
    s = np.zeros(capacity, dtype=np.int64)
    p = np.zeros(capacity, dtype=np.int64)
    t = np.zeros(capacity, dtype=np.int64)
    ids = np.zeros(capacity, dtype=np.int64)
    for i, x in enumerate(parts):
        s[i], p[i], t[i], ids[i] = x.seq, x.pos, x.elapsed, x.part_id
    return s, p, t, ids


def forward_propagate(state: LagrangianState) -> list[PartState]:
    """One-step-ahead prediction: every part advances one position (possibly
    past the end of its sequence, meaning it exits) and ages one step."""
    return [
        PartState(seq=x.seq, pos=x.pos + 1, elapsed=x.elapsed + 1, part_id=x.part_id)
        for x in state.parts
    ]


def resolve_conflicts(
    predicted: list[PartState],
    state: LagrangianState,
    seqs: SequenceSet,
) -> list[PartState]:
    """Correct the predictions until every node is targeted by at most one
    part. Held parts win, then fewest remaining steps, then longest time in
    the plant, then smallest part id; losers keep their current position."""
    n = state.n_parts
    if len(predicted) != n:
        raise ValueError("predicted list does not match the state")
    if n == 0:
        return []
    s, p, t, ids = _to_arrays(state.parts, n)
    pred_p = np.array([x.pos for x in predicted], dtype=np.int64)
    n_nodes = int(seqs.nodes_flat.max())
    node_buf = np.zeros(n, dtype=np.int64)
    count_buf = np.zeros(n_nodes + 1, dtype=np.int64)
    kernels.resolve_predictions(
        s, p, t, ids, n, pred_p, seqs.nodes_flat, seqs.offsets, n_nodes, node_buf, count_buf
    )
    return [
        PartState(seq=x.seq, pos=int(pred_p[i]), elapsed=x.elapsed, part_id=x.part_id)
        for i, x in enumerate(predicted)
    ]


def emit_inputs(
    corrected: list[PartState],
    state: LagrangianState,
    a: bool,
    topology: PlantTopology,
    seqs: SequenceSet,
) -> InputVector:
    """Translate conflict-free predictions into the plant command vector."""
    n = state.n_parts
    s, p, _, _ = _to_arrays(state.parts, n)
    pred_p = np.array([x.pos for x in corrected], dtype=np.int64)
    u = np.zeros(topology.n_inputs, dtype=np.int64)
    kernels.fill_inputs(
        s, p, n, pred_p, np.int64(1 if a else 0),
        seqs.nodes_flat, seqs.offsets, topology.transition_matrix,
        np.int64(topology.loading_node), np.int64(topology.unloading_node), u,
    )
    return InputVector(topology, u)


def greedy_policy(
    state: LagrangianState,
    a: bool,
    topology: PlantTopology,
    seqs: SequenceSet,
) -> InputVector:
    """The full rule-based policy: propagate, resolve, emit."""
    predicted = forward_propagate(state)
    corrected = resolve_conflicts(predicted, state, seqs)
    return emit_inputs(corrected, state, a, topology, seqs)


def closed_loop_step(
    state: LagrangianState,
    a: bool,
    topology: PlantTopology,
    seqs: SequenceSet,
    new_part: tuple[int, int] = (1, 1),
    next_part_id: int = 0,
) -> tuple[LagrangianState, InputVector]:
    """Advance the closed loop one step under the greedy policy.

    Exited parts disappear; if the loading command fires, a new part with
    ``new_part = (sequence, position)`` and elapsed time 0 is appended.
    Returns the next state and the inputs that were applied.
    """
    n = state.n_parts
    capacity = n + 1
    s, p, t, ids = _to_arrays(state.parts, capacity)
    pred_p = np.zeros(capacity, dtype=np.int64)
    for i in range(n):
        pred_p[i] = p[i] + 1
    u = np.zeros(topology.n_inputs, dtype=np.int64)
    n_nodes = np.int64(topology.n_nodes)
    h_l = np.int64(topology.loading_node)
    h_u = np.int64(topology.unloading_node)

    if n:
        node_buf = np.zeros(capacity, dtype=np.int64)
        count_buf = np.zeros(topology.n_nodes + 1, dtype=np.int64)
        kernels.resolve_predictions(
            s, p, t, ids, n, pred_p, seqs.nodes_flat, seqs.offsets, n_nodes, node_buf, count_buf
        )
    kernels.fill_inputs(
        s, p, n, pred_p, np.int64(1 if a else 0),
        seqs.nodes_flat, seqs.offsets, topology.transition_matrix, h_l, h_u, u,
    )
    loaded = int(u[topology.transition_matrix[0, topology.loading_node]])
    n_new = kernels.apply_predictions(
        s, p, t, ids, n, pred_p, np.int64(loaded),
        np.int64(new_part[0]), np.int64(new_part[1]), np.int64(next_part_id),
        seqs.offsets,
    )
    parts = tuple(
        PartState(seq=int(s[i]), pos=int(p[i]), elapsed=int(t[i]), part_id=int(ids[i]))
        for i in range(n_new)
    )
    return LagrangianState(parts=parts), InputVector(topology, u)

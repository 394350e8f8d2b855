"""Receding-horizon path allocation.

Each step the allocator may rewrite every part's (sequence, position) pair to
any candidate that is compatible with the part's physical node and current
goal, scores each joint assignment by rolling the greedy closed loop forward
over the horizon, and applies the cheapest one. Decisions pertain only to the
current step; positions are not re-decided inside the prediction (the greedy
follower handles the whole rollout), which keeps the search space finite.

Compatibility at a machine additionally requires the candidate position to
keep at least as many machine entries ahead as the running job still needs,
so a reassignment can never cut a job short (it may hold the part longer,
which is legal and simply costs more).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from . import kernels
from .follower import LagrangianState, PartState, greedy_policy, part_goal, part_node
from .oracle import InputVector, JobTracker
from .sequences import SequenceSet, remaining_steps
from .topology import PlantTopology


@dataclass(frozen=True)
class CompatibilityRecord:
    """All (sequence, position) pairs a part may be reassigned to."""

    part_id: int
    candidates: tuple[tuple[int, int], ...]
    incumbent: int  # index into candidates of the part's current pair

    def __post_init__(self):
        if not 0 <= self.incumbent < len(self.candidates):
            raise ValueError("incumbent index out of range")


@dataclass(frozen=True)
class FhocpConfig:
    """Search settings: horizon length, command weight, optional arrival
    predictions (default: none expected), optional evaluation budget."""

    horizon: int = 50
    beta: float = 0.0
    arrival_prediction: tuple[int, ...] | None = None
    search_budget: int | None = None
    prune_duplicates: bool = False

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if self.beta < 0:
            raise ValueError("beta must be >= 0")
        if self.arrival_prediction is not None and len(self.arrival_prediction) != self.horizon:
            raise ValueError("arrival_prediction must have one entry per horizon step")

    def arrivals_array(self) -> np.ndarray:
        if self.arrival_prediction is None:
            return np.zeros(self.horizon, dtype=np.int64)
        return np.array(self.arrival_prediction, dtype=np.int64)


@dataclass(frozen=True)
class FhocpSolution:
    assignment: tuple[tuple[int, int], ...]
    predicted_cost: float
    incumbent_cost: float
    evaluations: int
    budget_exhausted: bool = False


def compatibility_set(
    part: PartState,
    seqs: SequenceSet,
    jobs: JobTracker,
    k: int,
    topology: PlantTopology,
) -> CompatibilityRecord:
    """Candidates sharing the part's current node and goal.

    For a part sitting at a machine, a candidate must replicate the part's
    job progress: if the job started at step ``start``, departure commands
    stay illegal through ``start + L``, so the candidate must have exactly
    ``start + L + 1 - k`` machine entries still ahead of it (never fewer,
    which would cut the job short, and never more, which would claim the job
    just began).
    """
    node = part_node(seqs, part)
    goal = part_goal(seqs, part)
    pairs = seqs.position_index.get((node, goal), ())
    if topology.is_machine(node):
        start = jobs.start_step(node)
        if start is None:
            raise RuntimeError(
                f"part {part.part_id} occupies machine {node} but no job start is recorded"
            )
        needed = max(0, start + topology.job_duration(node) + 1 - k)
        pairs = tuple(sp for sp in pairs if seqs.run_ahead(*sp) == needed)
    if (part.seq, part.pos) not in pairs:
        raise RuntimeError(
            f"part {part.part_id} at {(part.seq, part.pos)} is missing from its own "
            "compatibility set; sequence data is inconsistent"
        )
    return CompatibilityRecord(
        part_id=part.part_id,
        candidates=pairs,
        incumbent=pairs.index((part.seq, part.pos)),
    )


def stage_cost(
    state: LagrangianState,
    u: InputVector,
    beta: float,
    seqs: SequenceSet,
) -> float:
    """Remaining steps summed over all parts, plus beta per active command."""
    total = sum(remaining_steps(seqs, x) for x in state.parts)
    return float(total) + beta * float(u.count())


def _static_args(topology: PlantTopology, seqs: SequenceSet):
    return (
        seqs.nodes_flat,
        seqs.offsets,
        topology.transition_matrix,
        np.int64(topology.n_nodes),
        np.int64(topology.loading_node),
        np.int64(topology.unloading_node),
    )


def simulate_horizon(
    state: LagrangianState,
    cfg: FhocpConfig,
    topology: PlantTopology,
    seqs: SequenceSet,
    new_part: tuple[int, int] = (1, 1),
    next_part_id: int = 0,
) -> float:
    """Predicted cost of leaving the state as it is: stage costs at every
    horizon stage under the greedy closed loop, with arrivals per the config."""
    capacity = topology.n_nodes + 1
    s = np.zeros(capacity, dtype=np.int64)
    p = np.zeros(capacity, dtype=np.int64)
    t = np.zeros(capacity, dtype=np.int64)
    ids = np.zeros(capacity, dtype=np.int64)
    for i, x in enumerate(state.parts):
        s[i], p[i], t[i], ids[i] = x.seq, x.pos, x.elapsed, x.part_id
    pred_buf = np.zeros(capacity, dtype=np.int64)
    u_buf = np.zeros(topology.n_inputs, dtype=np.int64)
    node_buf = np.zeros(capacity, dtype=np.int64)
    count_buf = np.zeros(topology.n_nodes + 1, dtype=np.int64)
    return float(
        kernels.rollout_cost(
            s, p, t, ids, state.n_parts,
            np.int64(cfg.horizon), cfg.arrivals_array(), np.float64(cfg.beta),
            *_static_args(topology, seqs),
            np.int64(new_part[0]), np.int64(new_part[1]), np.int64(next_part_id),
            pred_buf, u_buf, node_buf, count_buf,
        )
    )


def _window_key(seqs: SequenceSet, s: int, p: int, horizon: int):
    seq = seqs.sequence(s)
    out = []
    for q in range(p, p + horizon + 1):
        if q <= len(seq):
            e = seq.entry(q)
            out.append((e.node, e.goal))
        else:
            out.append(None)
            break
    return tuple(out)


def prune_candidates(
    record: CompatibilityRecord,
    seqs: SequenceSet,
    horizon: int,
) -> CompatibilityRecord:
    """Drop candidates that cannot beat another candidate: identical forward
    windows mean identical rollouts, and among those the one with the fewest
    remaining steps is never costlier. The incumbent is always kept."""
    best: dict[tuple, tuple[int, tuple[int, int]]] = {}
    for sp in record.candidates:
        key = _window_key(seqs, sp[0], sp[1], horizon)
        r = seqs.length(sp[0]) - sp[1]
        cur = best.get(key)
        if cur is None or r < cur[0] or (r == cur[0] and sp > cur[1]):
            best[key] = (r, sp)
    keep = {sp for _, sp in best.values()}
    keep.add(record.candidates[record.incumbent])
    kept = tuple(sp for sp in record.candidates if sp in keep)
    return CompatibilityRecord(
        part_id=record.part_id,
        candidates=kept,
        incumbent=kept.index(record.candidates[record.incumbent]),
    )


def count_assignments(records: list[CompatibilityRecord]) -> int:
    total = 1
    for rec in records:
        total *= len(rec.candidates)
    return total


def solve_fhocp(
    state: LagrangianState,
    cfg: FhocpConfig,
    records: list[CompatibilityRecord],
    topology: PlantTopology,
    seqs: SequenceSet,
    new_part: tuple[int, int] = (1, 1),
    next_part_id: int = 0,
) -> FhocpSolution:
    """Extensive search over all joint candidate assignments.

    Every candidate shares its part's physical node, so all assignments are
    automatically consistent with the plant; the incumbent is always among
    them, making the problem feasible by construction.
    """
    n = state.n_parts
    if len(records) != n:
        raise ValueError("need one compatibility record per part")
    if n == 0:
        cost = simulate_horizon(state, cfg, topology, seqs, new_part, next_part_id)
        return FhocpSolution(
            assignment=(), predicted_cost=cost, incumbent_cost=cost, evaluations=1
        )

    if cfg.prune_duplicates:
        records = [prune_candidates(rec, seqs, cfg.horizon) for rec in records]

    cand_s = np.array([sp[0] for rec in records for sp in rec.candidates], dtype=np.int64)
    cand_p = np.array([sp[1] for rec in records for sp in rec.candidates], dtype=np.int64)
    cand_off = np.concatenate(([0], np.cumsum([len(r.candidates) for r in records]))).astype(np.int64)
    inc_combo = np.array([rec.incumbent for rec in records], dtype=np.int64)

    capacity = topology.n_nodes + 1
    s0 = np.zeros(n, dtype=np.int64)
    p0 = np.zeros(n, dtype=np.int64)
    t0 = np.zeros(n, dtype=np.int64)
    ids0 = np.zeros(n, dtype=np.int64)
    for i, x in enumerate(state.parts):
        s0[i], p0[i], t0[i], ids0[i] = x.seq, x.pos, x.elapsed, x.part_id
    s_buf = np.zeros(capacity, dtype=np.int64)
    p_buf = np.zeros(capacity, dtype=np.int64)
    t_buf = np.zeros(capacity, dtype=np.int64)
    id_buf = np.zeros(capacity, dtype=np.int64)
    pred_buf = np.zeros(capacity, dtype=np.int64)
    u_buf = np.zeros(topology.n_inputs, dtype=np.int64)
    node_buf = np.zeros(capacity, dtype=np.int64)
    count_buf = np.zeros(topology.n_nodes + 1, dtype=np.int64)
    best_combo = np.zeros(n, dtype=np.int64)

    budget = np.int64(cfg.search_budget) if cfg.search_budget else np.int64(0)
    best_cost, inc_cost, n_evals, budget_hit = kernels.solve_assignments(
        cand_s, cand_p, cand_off, inc_combo,
        s0, p0, t0, ids0, n,
        np.int64(cfg.horizon), cfg.arrivals_array(), np.float64(cfg.beta), budget,
        *_static_args(topology, seqs),
        np.int64(new_part[0]), np.int64(new_part[1]), np.int64(next_part_id),
        s_buf, p_buf, t_buf, id_buf, pred_buf, u_buf, node_buf, count_buf,
        best_combo,
    )
    assignment = tuple(
        records[i].candidates[int(best_combo[i])] for i in range(n)
    )
    return FhocpSolution(
        assignment=assignment,
        predicted_cost=float(best_cost),
        incumbent_cost=float(inc_cost),
        evaluations=int(n_evals),
        budget_exhausted=bool(budget_hit),
    )


def brute_force_reference(
    state: LagrangianState,
    cfg: FhocpConfig,
    records: list[CompatibilityRecord],
    topology: PlantTopology,
    seqs: SequenceSet,
    new_part: tuple[int, int] = (1, 1),
    next_part_id: int = 0,
) -> tuple[tuple[tuple[int, int], ...], float]:
    """Plain re-enumeration of the full product, for cross-checks: returns
    the (incumbent-preferring, then lexicographically first) minimizer."""
    inc = tuple(rec.candidates[rec.incumbent] for rec in records)
    best_assignment = inc
    best_cost = _assigned_cost(state, inc, cfg, topology, seqs, new_part, next_part_id)
    for assignment in itertools.product(*(rec.candidates for rec in records)):
        if assignment == inc:
            continue
        cost = _assigned_cost(state, assignment, cfg, topology, seqs, new_part, next_part_id)
        if cost < best_cost:
            best_cost = cost
            best_assignment = assignment
    return best_assignment, best_cost


def _assigned_cost(state, assignment, cfg, topology, seqs, new_part, next_part_id):
    rewritten = apply_assignment(state, assignment)
    return simulate_horizon(rewritten, cfg, topology, seqs, new_part, next_part_id)


def apply_assignment(
    state: LagrangianState,
    assignment: tuple[tuple[int, int], ...],
) -> LagrangianState:
    """Rewrite each part's (sequence, position); elapsed times and ids stay."""
    parts = tuple(
        PartState(seq=sp[0], pos=sp[1], elapsed=x.elapsed, part_id=x.part_id)
        for x, sp in zip(state.parts, assignment)
    )
    return LagrangianState(parts=parts)


def mpc_step(
    state: LagrangianState,
    a: bool,
    cfg: FhocpConfig,
    jobs: JobTracker,
    k: int,
    topology: PlantTopology,
    seqs: SequenceSet,
    new_part: tuple[int, int] = (1, 1),
    next_part_id: int = 0,
) -> tuple[InputVector, LagrangianState, FhocpSolution]:
    """One allocation step: build compatibility sets, solve, rewrite the
    state to the minimizer, and get the applied commands from the greedy
    policy with the real arrival flag."""
    records = [compatibility_set(x, seqs, jobs, k, topology) for x in state.parts]
    solution = solve_fhocp(state, cfg, records, topology, seqs, new_part, next_part_id)
    rewritten = apply_assignment(state, solution.assignment)
    for before, after in zip(state.parts, rewritten.parts):
        if part_node(seqs, before) != part_node(seqs, after) or part_goal(seqs, before) != part_goal(seqs, after):
            raise RuntimeError(
                f"reassignment moved part {before.part_id} off its physical node or goal"
            )
    u = greedy_policy(rewritten, a, topology, seqs)
    return u, rewritten, solution

"""Hierarchical routing control for discrete manufacturing plants.

Two layers drive parts through a plant of single-occupancy nodes: a greedy
path follower advances every part along its precomputed route and resolves
conflicts by priority, and a receding-horizon allocator reassigns each part's
(sequence, position) pair every step to minimize a predicted cost. An
independent occupancy model cross-checks every applied command vector.
"""

from .allocator import (
    CompatibilityRecord,
    FhocpConfig,
    FhocpSolution,
    compatibility_set,
    mpc_step,
    simulate_horizon,
    solve_fhocp,
    stage_cost,
)
from .errors import ConfigError, InfeasibleInputError, OracleViolationError, ValidationError
from .follower import (
    LagrangianState,
    PartState,
    closed_loop_step,
    emit_inputs,
    forward_propagate,
    greedy_policy,
    part_goal,
    part_node,
    resolve_conflicts,
)
from .harness import (
    RunLog,
    RunMetrics,
    ScenarioConfig,
    beta_sweep,
    compute_metrics,
    load_scenario,
    run_simulation,
)
from .oracle import (
    ConstraintKind,
    ConstraintViolation,
    EulerianState,
    InputVector,
    JobTracker,
    check_constraints,
    euler_step,
    update_job_tracker,
)
from .sequences import (
    Sequence,
    SequenceEntry,
    SequenceSet,
    build_example_sequences,
    entry,
    load_sequences,
    remaining_steps,
    validate_sequence,
)
from .topology import (
    PlantTopology,
    build_example_plant,
    incoming_set,
    load_topology,
    outgoing_set,
    validate_topology,
)

__version__ = "0.1.0"

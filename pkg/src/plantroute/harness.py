"""Scenario configuration, the closed-loop simulation driver, metrics, and
the command-weight sweep.

Every simulated step is double-checked: the applied command vector goes
through the occupancy model's constraint checker, the occupancy state is
stepped in parallel, and the resulting occupancy must equal the node set
induced by the part states. Any mismatch aborts the run with a diagnostic
pointing at the step and node, so an accepted run is feasible by
construction.

CSV layout (one row per step, header included): ``k, n_parts, n_finished,
n_commands, solver_evals, solver_ms``. Row k reports the state after k steps
and the commands applied during step k. ``solver_ms`` is wall-clock and is
written as 0.000 unless the scenario enables timing, which keeps default
logs byte-for-byte reproducible.
"""

from __future__ import annotations

import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

from .allocator import FhocpConfig, mpc_step
from .errors import ConfigError, OracleViolationError, ValidationError
from .follower import LagrangianState, PartState, check_injective, closed_loop_step
from .oracle import EulerianState, JobTracker, check_constraints, euler_step, update_job_tracker
from .sequences import SequenceSet, load_sequences
from .topology import PlantTopology, load_topology, validate_topology

WORKERS_ENV = "PLANTROUTE_WORKERS"


@dataclass(frozen=True)
class ScenarioConfig:
    topology_path: str
    sequences_path: str
    controller: str = "greedy"  # "greedy" | "mpc"
    fhocp: FhocpConfig = field(default_factory=FhocpConfig)
    steps: int = 300
    warmup: int = 50
    arrivals: str = "always"  # "always" | "never" | comma pattern, 0-padded
    initial_parts: tuple[tuple[int, int, int], ...] = ()  # (node, seq, pos)
    new_part: tuple[int, int] = (1, 1)
    seed: int = 0  # reserved; the controllers are deterministic
    record_timing: bool = False
    output_path: str | None = None

    def arrival_flag(self, k: int) -> bool:
        if self.arrivals == "always":
            return True
        if self.arrivals == "never":
            return False
        pattern = [int(tok) for tok in self.arrivals.split(",") if tok.strip() != ""]
        return bool(pattern[k]) if k < len(pattern) else False


@dataclass(frozen=True)
class StepRecord:
    k: int
    n_parts: int
    n_finished: int
    n_commands: int
    solver_evals: int
    solver_ms: float


@dataclass
class RunLog:
    records: list[StepRecord]
    record_timing: bool = False

    @property
    def steps(self) -> int:
        return len(self.records)

    def to_csv_text(self) -> str:
        lines = ["k,n_parts,n_finished,n_commands,solver_evals,solver_ms"]
        for r in self.records:
            ms = r.solver_ms if self.record_timing else 0.0
            lines.append(
                f"{r.k},{r.n_parts},{r.n_finished},{r.n_commands},{r.solver_evals},{ms:.3f}"
            )
        return "\n".join(lines) + "\n"

    def write_csv(self, path) -> None:
        Path(path).write_text(self.to_csv_text(), encoding="utf-8")

    def throughput_series(self) -> list[float]:
        """Finished parts per step, cumulative: N_f(k) / k."""
        return [r.n_finished / r.k for r in self.records]

    def rolling_commands(self, window: int = 25) -> list[float]:
        """Average commands per step over a trailing window."""
        out = []
        for i in range(len(self.records)):
            lo = max(0, i + 1 - window)
            chunk = self.records[lo : i + 1]
            out.append(sum(r.n_commands for r in chunk) / len(chunk))
        return out


@dataclass(frozen=True)
class RunMetrics:
    steps: int
    warmup: int
    throughput: float
    mean_commands: float
    mean_parts: float
    max_parts: int
    mean_solver_ms: float
    max_solver_ms: float
    mean_evaluations: float
    finished_total: int

    def summary(self) -> str:
        return (
            f"steps={self.steps} warmup={self.warmup} "
            f"throughput={self.throughput:.4f}/step "
            f"commands={self.mean_commands:.2f}/step "
            f"parts(mean/max)={self.mean_parts:.1f}/{self.max_parts} "
            f"solver(mean/max)={self.mean_solver_ms:.1f}/{self.max_solver_ms:.1f} ms "
            f"evals={self.mean_evaluations:.0f}/step finished={self.finished_total}"
        )


def _resolve_path(base: Path, value: str) -> str:
    p = Path(value)
    return str(p if p.is_absolute() else base / p)


def loads_scenario(text: str, path: str = "<string>", base_dir: Path | None = None) -> ScenarioConfig:
    """Parse a scenario config. Sections: [files] with topology= and
    sequences=; [controller] with type/horizon/beta/search_budget/prune;
    [run] with steps/warmup/arrivals/initial/new_part/seed/timing/output.
    Relative file paths resolve against the scenario file's directory."""
    base = base_dir or Path(".")
    section = None
    values: dict[tuple[str, str], str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip().lower()
            if section not in ("files", "controller", "run"):
                raise ConfigError(f"unknown section [{section}]", path, lineno)
            continue
        if section is None:
            raise ConfigError("content before any section header", path, lineno)
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError("expected 'key = value'", path, lineno)
        values[(section, key.strip().lower())] = value.strip()

    def get(section: str, key: str, default: str | None = None) -> str | None:
        return values.get((section, key), default)

    topology = get("files", "topology")
    sequences = get("files", "sequences")
    if not topology or not sequences:
        raise ConfigError("[files] must set topology= and sequences=", path)

    controller = (get("controller", "type", "greedy") or "greedy").lower()
    if controller not in ("greedy", "mpc"):
        raise ConfigError(f"controller type must be greedy or mpc, got {controller!r}", path)

    def parse_int(section, key, default):
        token = get(section, key)
        if token is None:
            return default
        try:
            return int(token)
        except ValueError:
            raise ConfigError(f"{key} must be an integer, got {token!r}", path) from None

    budget = parse_int("controller", "search_budget", 0)
    fhocp = FhocpConfig(
        horizon=parse_int("controller", "horizon", 50),
        beta=float(get("controller", "beta", "0") or 0),
        search_budget=budget if budget > 0 else None,
        prune_duplicates=(get("controller", "prune", "off") or "off").lower() in ("on", "true", "1"),
    )

    initial: list[tuple[int, int, int]] = []
    token = get("run", "initial", "")
    if token:
        for item in token.split(","):
            fields = item.strip().split(":")
            if len(fields) != 3:
                raise ConfigError(f"initial entries must be node:seq:pos, got {item!r}", path)
            initial.append(tuple(int(f) for f in fields))

    new_part_token = get("run", "new_part", "1:1") or "1:1"
    fields = new_part_token.split(":")
    if len(fields) != 2:
        raise ConfigError(f"new_part must be seq:pos, got {new_part_token!r}", path)
    new_part = (int(fields[0]), int(fields[1]))

    output = get("run", "output")
    return ScenarioConfig(
        topology_path=_resolve_path(base, topology),
        sequences_path=_resolve_path(base, sequences),
        controller=controller,
        fhocp=fhocp,
        steps=parse_int("run", "steps", 300),
        warmup=parse_int("run", "warmup", 50),
        arrivals=(get("run", "arrivals", "always") or "always").lower(),
        initial_parts=tuple(initial),
        new_part=new_part,
        seed=parse_int("run", "seed", 0),
        record_timing=(get("run", "timing", "off") or "off").lower() in ("on", "true", "1"),
        output_path=_resolve_path(base, output) if output else None,
    )


def load_scenario(path) -> ScenarioConfig:
    p = Path(path)
    with open(p, "r", encoding="utf-8") as fh:
        return loads_scenario(fh.read(), str(p), p.parent)


def _build_initial_state(
    cfg: ScenarioConfig, topology: PlantTopology, seqs: SequenceSet
) -> tuple[LagrangianState, EulerianState, JobTracker, int]:
    parts = []
    starts: dict[int, int] = {}
    for next_id, (node, s, p) in enumerate(cfg.initial_parts):
        seq = seqs.sequence(s)
        if seq.node(p) != node:
            raise ValidationError(
                f"initial part at node {node} mapped to sequence {s} position {p}, "
                f"which is node {seq.node(p)}"
            )
        if topology.is_machine(node):
            # A part starting on a machine starts its job at step 0; it must
            # sit at a position with the full job hold still ahead.
            need = topology.job_duration(node) + 1
            if seqs.run_ahead(s, p) < need:
                raise ValidationError(
                    f"initial part on machine {node} needs {need} hold entries ahead, "
                    f"position {p} has {seqs.run_ahead(s, p)}"
                )
            starts[node] = 0
        parts.append(PartState(seq=s, pos=p, elapsed=0, part_id=next_id))
    state = LagrangianState(parts=tuple(parts))
    check_injective(state, seqs)

    new_node = seqs.sequence(cfg.new_part[0]).node(cfg.new_part[1])
    if new_node != topology.loading_node:
        raise ValidationError(
            f"new_part {cfg.new_part} maps to node {new_node}, "
            f"must map to the loading node {topology.loading_node}"
        )
    euler = EulerianState.from_occupied(topology, state.nodes(seqs))
    return state, euler, JobTracker(starts=starts), len(parts)


def run_simulation(
    cfg: ScenarioConfig,
    topology: PlantTopology | None = None,
    sequences: SequenceSet | None = None,
) -> RunLog:
    """Drive the closed loop for cfg.steps steps under the selected
    controller, cross-checking every applied input against the occupancy
    model. Raises :class:`OracleViolationError` on any constraint violation
    or state mismatch."""
    topo = topology if topology is not None else load_topology(cfg.topology_path)
    report = validate_topology(topo)
    if report:
        raise ValidationError(f"topology failed validation: {report}", report=report)
    seqs = sequences if sequences is not None else load_sequences(cfg.sequences_path, topo)

    state, euler, jobs, next_id = _build_initial_state(cfg, topo, seqs)
    load_slot = topo.transition_matrix[0, topo.loading_node]

    records: list[StepRecord] = []
    for k in range(cfg.steps):
        a = cfg.arrival_flag(k)
        evals = 0
        solver_ms = 0.0
        if cfg.controller == "mpc":
            t0 = time.perf_counter()
            u, rewritten, solution = mpc_step(
                state, a, cfg.fhocp, jobs, k, topo, seqs, cfg.new_part, next_id
            )
            solver_ms = (time.perf_counter() - t0) * 1e3
            evals = solution.evaluations
            if solution.predicted_cost > solution.incumbent_cost:
                raise OracleViolationError(
                    f"step {k}: solver returned a worse cost than the incumbent "
                    f"({solution.predicted_cost} > {solution.incumbent_cost})"
                )
            state = rewritten
        next_state, u = closed_loop_step(state, a, topo, seqs, cfg.new_part, next_id)

        violations = check_constraints(euler, u, jobs, k, topo)
        if violations:
            raise OracleViolationError(
                f"step {k}: applied inputs violate plant constraints: "
                + "; ".join(str(v) for v in violations)
            )
        next_euler = euler_step(euler, u, topo)
        jobs = update_job_tracker(jobs, euler, u, k, topo)
        if next_euler.occupied_nodes() != set(next_state.nodes(seqs)):
            raise OracleViolationError(
                f"step {k}: occupancy mismatch: model says {sorted(next_euler.occupied_nodes())}, "
                f"parts say {sorted(set(next_state.nodes(seqs)))}"
            )
        if u.values[load_slot]:
            next_id += 1

        records.append(
            StepRecord(
                k=k + 1,
                n_parts=next_state.n_parts,
                n_finished=next_euler.n_finished,
                n_commands=u.count(),
                solver_evals=evals,
                solver_ms=solver_ms,
            )
        )
        state, euler = next_state, next_euler

    log = RunLog(records=records, record_timing=cfg.record_timing)
    if cfg.output_path:
        log.write_csv(cfg.output_path)
    return log


def compute_metrics(log: RunLog, warmup: int) -> RunMetrics:
    """Steady-state summary over the post-warmup window."""
    if warmup >= log.steps:
        raise ValueError(f"warmup {warmup} must be smaller than the run length {log.steps}")
    tail = log.records[warmup:]
    base_finished = log.records[warmup - 1].n_finished if warmup > 0 else 0
    window = len(tail)
    finished = tail[-1].n_finished - base_finished if tail else 0
    return RunMetrics(
        steps=log.steps,
        warmup=warmup,
        throughput=finished / window if window else 0.0,
        mean_commands=sum(r.n_commands for r in tail) / window if window else 0.0,
        mean_parts=sum(r.n_parts for r in tail) / window if window else 0.0,
        max_parts=max((r.n_parts for r in tail), default=0),
        mean_solver_ms=sum(r.solver_ms for r in tail) / window if window else 0.0,
        max_solver_ms=max((r.solver_ms for r in tail), default=0.0),
        mean_evaluations=sum(r.solver_evals for r in tail) / window if window else 0.0,
        finished_total=log.records[-1].n_finished if log.records else 0,
    )


def _sweep_one(args) -> tuple[float, RunMetrics]:
    cfg, beta = args
    run_cfg = replace(cfg, controller="mpc", fhocp=replace(cfg.fhocp, beta=beta), output_path=None)
    log = run_simulation(run_cfg)
    return beta, compute_metrics(log, cfg.warmup)


def beta_sweep(cfg: ScenarioConfig, betas: list[float]) -> list[tuple[float, RunMetrics]]:
    """One MPC run per command weight, common warmup. Honors the
    PLANTROUTE_WORKERS environment variable for parallel runs."""
    jobs = [(cfg, beta) for beta in betas]
    workers = int(os.environ.get(WORKERS_ENV, "1") or "1")
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_sweep_one, jobs))
    else:
        results = [_sweep_one(job) for job in jobs]
    return results


def sweep_csv_text(results: list[tuple[float, RunMetrics]]) -> str:
    lines = ["beta,throughput,mean_commands,mean_parts,max_parts,mean_solver_ms,finished_total"]
    for beta, m in results:
        lines.append(
            f"{beta},{m.throughput:.6f},{m.mean_commands:.3f},{m.mean_parts:.2f},"
            f"{m.max_parts},{m.mean_solver_ms:.3f},{m.finished_total}"
        )
    return "\n".join(lines) + "\n"

"""Command line entry point.

Verbs:
  validate  check topology / sequence / scenario config files
  run       run one scenario, write its CSV log, print a summary
  sweep     run the scenario once per command weight and tabulate
  example   write the bundled example configs into a directory
  bench     compare the compiled and plain kernel backends
"""

from __future__ import annotations

import argparse
import sys
import time
from dataclasses import replace
from importlib import resources
from pathlib import Path

from . import kernels
from .errors import ConfigError, OracleViolationError, ValidationError
from .harness import beta_sweep, compute_metrics, load_scenario, run_simulation, sweep_csv_text
from .sequences import load_sequences, validate_sequence_set
from .topology import load_topology, validate_topology


def _cmd_validate(args) -> int:
    problems = 0
    topology = None
    if args.topology:
        topology = load_topology(args.topology)
        report = validate_topology(topology)
        for msg in report:
            print(f"topology: {msg}")
        problems += len(report)
        if not report:
            print(f"topology: ok ({topology.n_nodes} nodes, {topology.n_inputs} inputs)")
    if args.sequences:
        if topology is None:
            print("sequences: need --topology to validate against", file=sys.stderr)
            return 2
        seqs = load_sequences(args.sequences, topology, allow_invalid=True)
        report = validate_sequence_set(seqs, topology)
        for msg in report:
            print(f"sequences: {msg}")
        problems += len(report)
        if not report:
            lengths = [seqs.length(s) for s in range(1, len(seqs) + 1)]
            print(f"sequences: ok ({len(seqs)} sequence(s), lengths {lengths})")
    if args.scenario:
        cfg = load_scenario(args.scenario)
        print(
            f"scenario: ok (controller={cfg.controller}, steps={cfg.steps}, "
            f"beta={cfg.fhocp.beta}, horizon={cfg.fhocp.horizon})"
        )
    return 1 if problems else 0


def _apply_overrides(cfg, args):
    if args.controller:
        cfg = replace(cfg, controller=args.controller)
    if args.beta is not None:
        cfg = replace(cfg, fhocp=replace(cfg.fhocp, beta=args.beta))
    if args.horizon is not None:
        cfg = replace(cfg, fhocp=replace(cfg.fhocp, horizon=args.horizon))
    if args.steps is not None:
        cfg = replace(cfg, steps=args.steps)
    if args.warmup is not None:
        cfg = replace(cfg, warmup=args.warmup)
    if args.timing:
        cfg = replace(cfg, record_timing=args.timing == "on")
    if args.out:
        cfg = replace(cfg, output_path=args.out)
    return cfg


def _cmd_run(args) -> int:
    cfg = _apply_overrides(load_scenario(args.scenario), args)
    log = run_simulation(cfg)
    metrics = compute_metrics(log, cfg.warmup)
    print(metrics.summary())
    if cfg.output_path:
        print(f"log written to {cfg.output_path}")
    return 0


def _cmd_sweep(args) -> int:
    cfg = load_scenario(args.scenario)
    if args.steps is not None:
        cfg = replace(cfg, steps=args.steps)
    if args.horizon is not None:
        cfg = replace(cfg, fhocp=replace(cfg.fhocp, horizon=args.horizon))
    betas = [float(tok) for tok in args.betas.split(",") if tok.strip()]
    results = beta_sweep(cfg, betas)
    text = sweep_csv_text(results)
    print(text, end="")
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
        print(f"sweep written to {args.out}")
    return 0


def _cmd_example(args) -> int:
    dest = Path(args.dest)
    dest.mkdir(parents=True, exist_ok=True)
    for name in ("example_plant.txt", "example_sequences.txt", "example_scenario.txt"):
        text = resources.files("plantroute.data").joinpath(name).read_text("utf-8")
        (dest / name).write_text(text, encoding="utf-8")
        print(f"wrote {dest / name}")
    print(f"run it with: plantroute run --scenario {dest / 'example_scenario.txt'}")
    return 0


def _time_rollouts(module, repeat: int, horizon: int, setup) -> float:
    import numpy as np

    (s, p, t, ids, n, a_pred, static, new_part, bufs) = setup
    best = float("inf")
    for _ in range(repeat):
        start = time.perf_counter()
        for _ in range(200):
            s2, p2, t2, ids2 = s.copy(), p.copy(), t.copy(), ids.copy()
            module.rollout_cost(
                s2, p2, t2, ids2, n,
                np.int64(horizon), a_pred, np.float64(5.0),
                *static,
                np.int64(new_part[0]), np.int64(new_part[1]), np.int64(1000),
                *bufs,
            )
        best = min(best, time.perf_counter() - start)
    return best / 200


def _cmd_bench(args) -> int:
    import numpy as np

    from .allocator import _static_args
    from .sequences import build_example_sequences
    from .topology import build_example_plant

    topology = build_example_plant()
    seqs = build_example_sequences(topology)
    capacity = topology.n_nodes + 1
    # a mid-run snapshot: parts spread along the master route
    positions = [1, 3, 7, 10, 16, 18, 23, 29]
    s = np.zeros(capacity, dtype=np.int64)
    p = np.zeros(capacity, dtype=np.int64)
    t = np.zeros(capacity, dtype=np.int64)
    ids = np.zeros(capacity, dtype=np.int64)
    for i, pos in enumerate(positions):
        s[i], p[i], t[i], ids[i] = 1, pos, 40 - pos, i
    a_pred = np.zeros(args.horizon, dtype=np.int64)
    static = _static_args(topology, seqs)
    bufs = (np.zeros(capacity, dtype=np.int64), np.zeros(topology.n_inputs, dtype=np.int64))
    setup = (s, p, t, ids, len(positions), a_pred, static, (1, 1), bufs)

    print(f"active backend: {kernels.backend()}  (PLANTROUTE_NUMBA=0 forces python)")
    print(f"rollout horizon: {args.horizon} steps, {len(positions)} parts, best of {args.repeat}")
    if kernels.backend() == "numba":
        _time_rollouts(kernels.active, 1, args.horizon, setup)  # compile before timing
    active_s = _time_rollouts(kernels.active, args.repeat, args.horizon, setup)
    print(f"  {kernels.backend():>7}: {active_s * 1e6:9.1f} us per rollout")
    if kernels.backend() == "numba":
        plain_s = _time_rollouts(kernels.plain, args.repeat, args.horizon, setup)
        print(f"  {'python':>7}: {plain_s * 1e6:9.1f} us per rollout")
        print(f"  speedup: {plain_s / active_s:.1f}x")
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="plantroute", description=__doc__)
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("validate", help="validate config files")
    p.add_argument("--topology")
    p.add_argument("--sequences")
    p.add_argument("--scenario")
    p.set_defaults(func=_cmd_validate)

    p = sub.add_parser("run", help="run one scenario")
    p.add_argument("--scenario", required=True)
    p.add_argument("--controller", choices=["greedy", "mpc"])
    p.add_argument("--beta", type=float)
    p.add_argument("--horizon", type=int)
    p.add_argument("--steps", type=int)
    p.add_argument("--warmup", type=int)
    p.add_argument("--timing", choices=["on", "off"])
    p.add_argument("--out")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("sweep", help="run once per command weight")
    p.add_argument("--scenario", required=True)
    p.add_argument("--betas", required=True, help="comma separated, e.g. 0,4,6,10")
    p.add_argument("--steps", type=int)
    p.add_argument("--horizon", type=int)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("example", help="write the bundled example configs")
    p.add_argument("--dest", default="example")
    p.set_defaults(func=_cmd_example)

    p = sub.add_parser("bench", help="compare kernel backends")
    p.add_argument("--horizon", type=int, default=50)
    p.add_argument("--repeat", type=int, default=5)
    p.set_defaults(func=_cmd_bench)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ValidationError, OracleViolationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        if isinstance(exc, ValidationError):
            for msg in exc.report:
                print(f"  {msg}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

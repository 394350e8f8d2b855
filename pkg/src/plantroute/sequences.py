"""Precomputed node paths, their validation, and indexed lookups.

A sequence is an ordered list of (node, goal) entries. Consecutive nodes are
either equal (the part holds in place for that step) or directly connected in
the plant graph (the part moves). Goals are opaque labels, usually the next
machine to visit or 0 for "leave the plant"; they only matter for equality
matching when the allocator reassigns positions.

Machine hold rule: a part reaching a machine must be able to sit there long
enough for the job timing convention in :mod:`plantroute.oracle`, so every
maximal run of a machine node m inside a sequence must be at least
``L_m + 2`` entries long (arrival entry, L_m job entries, departure entry).
The validator enforces this; shorter holds would make the follower emit a
departure command while the job is still running.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from importlib import resources

import numpy as np

from .errors import ConfigError, ValidationError
from .topology import OUTSIDE, PlantTopology


@dataclass(frozen=True)
class SequenceEntry:
    node: int
    goal: int


@dataclass(frozen=True)
class Sequence:
    entries: tuple[SequenceEntry, ...]

    def __len__(self) -> int:
        return len(self.entries)

    def entry(self, p: int) -> SequenceEntry:
        if not 1 <= p <= len(self.entries):
            raise ValueError(f"position {p} out of range 1..{len(self.entries)}")
        return self.entries[p - 1]

    def node(self, p: int) -> int:
        return self.entry(p).node

    def goal(self, p: int) -> int:
        return self.entry(p).goal


@dataclass(frozen=True)
class SequenceSet:
    """Sequences indexed 1..len; index 0 is never used."""

    sequences: tuple[Sequence, ...]

    def __len__(self) -> int:
        return len(self.sequences)

    def sequence(self, s: int) -> Sequence:
        if not 1 <= s <= len(self.sequences):
            raise ValueError(f"sequence index {s} out of range 1..{len(self.sequences)}")
        return self.sequences[s - 1]

    def length(self, s: int) -> int:
        return len(self.sequence(s))

    # Flattened views used by the hot kernels and the allocator. offsets has
    # one extra entry so that sequence s spans flat indexes
    # offsets[s-1]..offsets[s]-1 and position p maps to offsets[s-1]+p-1.

    @cached_property
    def nodes_flat(self) -> np.ndarray:
        return np.array(
            [e.node for seq in self.sequences for e in seq.entries], dtype=np.int64
        )

    @cached_property
    def goals_flat(self) -> np.ndarray:
        return np.array(
            [e.goal for seq in self.sequences for e in seq.entries], dtype=np.int64
        )

    @cached_property
    def offsets(self) -> np.ndarray:
        lengths = [len(seq) for seq in self.sequences]
        return np.concatenate(([0], np.cumsum(lengths))).astype(np.int64)

    @cached_property
    def run_ahead_flat(self) -> np.ndarray:
        """Per entry: how many immediately following entries repeat its node."""
        ahead = np.zeros(len(self.nodes_flat), dtype=np.int64)
        for s, seq in enumerate(self.sequences):
            base = int(self.offsets[s])
            for p in range(len(seq) - 2, -1, -1):
                if seq.entries[p].node == seq.entries[p + 1].node:
                    ahead[base + p] = ahead[base + p + 1] + 1
        return ahead

    @cached_property
    def position_index(self) -> dict[tuple[int, int], tuple[tuple[int, int], ...]]:
        """(node, goal) -> all (sequence, position) pairs carrying it, ordered."""
        index: dict[tuple[int, int], list[tuple[int, int]]] = {}
        for s, seq in enumerate(self.sequences, start=1):
            for p, e in enumerate(seq.entries, start=1):
                index.setdefault((e.node, e.goal), []).append((s, p))
        return {key: tuple(v) for key, v in index.items()}

    def run_ahead(self, s: int, p: int) -> int:
        self.sequence(s).entry(p)  # bounds check
        return int(self.run_ahead_flat[int(self.offsets[s - 1]) + p - 1])


def entry(seqs: SequenceSet, s: int, p: int) -> SequenceEntry:
    """The (node, goal) entry at position p of sequence s; 1-based on both."""
    return seqs.sequence(s).entry(p)


def remaining_steps(seqs: SequenceSet, part) -> int:
    """Entries left between a part's position and the end of its sequence."""
    seq = seqs.sequence(part.seq)
    if not 1 <= part.pos <= len(seq):
        raise ValueError(f"position {part.pos} out of range 1..{len(seq)}")
    return len(seq) - part.pos


def validate_sequence(seq: Sequence, topology: PlantTopology) -> list[str]:
    """Check one sequence against the plant; returns one message per defect."""
    report: list[str] = []
    n = topology.n_nodes
    if len(seq.entries) == 0:
        return ["sequence is empty"]

    for p, e in enumerate(seq.entries, start=1):
        if not 1 <= e.node <= n:
            report.append(f"position {p}: node {e.node} outside 1..{n}")
        if e.goal != OUTSIDE and not 1 <= e.goal <= n:
            report.append(f"position {p}: goal {e.goal} outside {{0}} or 1..{n}")

    transitions = set(topology.transitions)
    for p in range(1, len(seq.entries)):
        a, b = seq.entries[p - 1].node, seq.entries[p].node
        if a != b and (a, b) not in transitions:
            report.append(f"positions {p}-{p + 1}: nodes {a} -> {b} are not directly connected")

    # Machine holds: every maximal run of machine node m must be long enough
    # to cover arrival, the L_m job steps, and the departure step.
    p = 0
    entries = seq.entries
    while p < len(entries):
        node = entries[p].node
        q = p
        while q + 1 < len(entries) and entries[q + 1].node == node:
            q += 1
        if node in topology.machines:
            need = topology.machines[node] + 2
            run = q - p + 1
            if run < need:
                report.append(
                    f"positions {p + 1}-{q + 1}: machine {node} held for {run} "
                    f"entries, needs at least {need} (job takes {topology.machines[node]} steps)"
                )
        p = q + 1

    last = seq.entries[-1].node
    if last != topology.unloading_node:
        report.append(
            f"position {len(seq.entries)}: sequence ends at node {last}, "
            f"must end at the unloading node {topology.unloading_node}"
        )
    return report


def validate_sequence_set(seqs: SequenceSet, topology: PlantTopology) -> list[str]:
    report: list[str] = []
    for s, seq in enumerate(seqs.sequences, start=1):
        report.extend(f"sequence {s}: {msg}" for msg in validate_sequence(seq, topology))
    return report


# ---------------------------------------------------------------------------
# Config file format: one block per sequence, headers [sequence 1],
# [sequence 2], ... (contiguous from 1), one "node : goal" entry per line.
# ---------------------------------------------------------------------------


def loads_sequences(
    text: str,
    topology: PlantTopology,
    path: str = "<string>",
    allow_invalid: bool = False,
) -> SequenceSet:
    blocks: list[list[SequenceEntry]] = []
    current: list[SequenceEntry] | None = None

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            header = line[1:-1].split()
            if len(header) != 2 or header[0].lower() != "sequence":
                raise ConfigError(f"expected [sequence N], got {line!r}", path, lineno)
            try:
                index = int(header[1])
            except ValueError:
                raise ConfigError(f"bad sequence index {header[1]!r}", path, lineno) from None
            if index != len(blocks) + 1:
                raise ConfigError(
                    f"sequence blocks must be numbered contiguously from 1, got {index}",
                    path,
                    lineno,
                )
            current = []
            blocks.append(current)
            continue
        if current is None:
            raise ConfigError("entry before any [sequence N] header", path, lineno)
        if ":" not in line:
            raise ConfigError("entries must look like 'node : goal'", path, lineno)
        left, _, right = line.partition(":")
        try:
            current.append(SequenceEntry(node=int(left.strip()), goal=int(right.strip())))
        except ValueError:
            raise ConfigError(f"bad entry {line!r}", path, lineno) from None

    if not blocks:
        raise ConfigError("no sequences defined", path)
    seqs = SequenceSet(sequences=tuple(Sequence(entries=tuple(b)) for b in blocks))
    report = validate_sequence_set(seqs, topology)
    if report and not allow_invalid:
        raise ValidationError(
            f"sequence set in {path} failed validation ({len(report)} problem(s)); "
            "pass allow_invalid=True to load anyway",
            report=report,
        )
    return seqs


def load_sequences(path, topology: PlantTopology, allow_invalid: bool = False) -> SequenceSet:
    with open(path, "r", encoding="utf-8") as fh:
        return loads_sequences(fh.read(), topology, str(path), allow_invalid)


def build_example_sequences(topology: PlantTopology) -> SequenceSet:
    """The bundled master path for the 12-node example plant.

    A single long route: load at 10, queue through the 2-3-4-5 loop twice,
    job at machine 12, circulate the 5-6-7 loop, job at machine 11, then out
    through 9 and 1 back to gate 10. Hold runs (repeated nodes) and the loop
    passes give the allocator room to park or circulate waiting parts.
    """
    text = resources.files("plantroute.data").joinpath("example_sequences.txt").read_text("utf-8")
    return loads_sequences(text, topology, "plantroute/data/example_sequences.txt")

"""Plant graph: nodes, direct transitions, machines, and the load/unload gates.

Node ids are 1..n_nodes. The reserved id 0 is "outside the plant" and may only
appear as the source of the loading transition ``(0, loading_node)`` or the
destination of the unloading transition ``(unloading_node, 0)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from importlib import resources

from .errors import ConfigError

OUTSIDE = 0

Transition = tuple[int, int]


@dataclass(frozen=True)
class PlantTopology:
    """Immutable plant graph.

    ``transitions`` is stored in sorted order and defines the canonical input
    vector layout used everywhere else (one boolean command per transition).
    Construction is permissive: structural problems are reported by
    :func:`validate_topology`, not raised here, so that defective topologies
    can still be inspected.
    """

    n_nodes: int
    transitions: tuple[Transition, ...]
    machines: dict[int, int] = field(default_factory=dict)
    loading_node: int = 1
    unloading_node: int = 1

    def __post_init__(self):
        object.__setattr__(self, "transitions", tuple(sorted(set(self.transitions))))

    @property
    def n_inputs(self) -> int:
        return len(self.transitions)

    @cached_property
    def transition_index(self) -> dict[Transition, int]:
        """Position of each transition in the canonical input vector layout."""
        return {t: i for i, t in enumerate(self.transitions)}

    @cached_property
    def transition_matrix(self):
        """(n+1) x (n+1) lookup: slot of transition (h, j), or -1. Row/column
        0 stand for the outside."""
        import numpy as np

        matrix = np.full((self.n_nodes + 1, self.n_nodes + 1), -1, dtype=np.int64)
        for i, (h, j) in enumerate(self.transitions):
            if 0 <= h <= self.n_nodes and 0 <= j <= self.n_nodes:
                matrix[h, j] = i
        return matrix

    @cached_property
    def _outgoing(self) -> dict[int, frozenset[int]]:
        out: dict[int, set[int]] = {h: set() for h in range(self.n_nodes + 1)}
        for h, j in self.transitions:
            out.setdefault(h, set()).add(j)
        return {h: frozenset(js) for h, js in out.items()}

    @cached_property
    def _incoming(self) -> dict[int, frozenset[int]]:
        inc: dict[int, set[int]] = {h: set() for h in range(self.n_nodes + 1)}
        for h, j in self.transitions:
            inc.setdefault(j, set()).add(h)
        return {h: frozenset(js) for h, js in inc.items()}

    def is_machine(self, h: int) -> bool:
        return h in self.machines

    def job_duration(self, m: int) -> int:
        return self.machines[m]


def _require_node(topology: PlantTopology, h: int) -> None:
    if not 1 <= h <= topology.n_nodes:
        raise ValueError(f"unknown node id {h} (plant has nodes 1..{topology.n_nodes})")


def outgoing_set(topology: PlantTopology, h: int) -> set[int]:
    """Nodes directly reachable from ``h``, possibly including 0 (outside)."""
    _require_node(topology, h)
    return set(topology._outgoing.get(h, frozenset()))


def incoming_set(topology: PlantTopology, h: int) -> set[int]:
    """Nodes for which ``h`` is a direct destination, possibly including 0."""
    _require_node(topology, h)
    return set(topology._incoming.get(h, frozenset()))


def validate_topology(topology: PlantTopology) -> list[str]:
    """Check the structural invariants; returns one message per violation.

    An empty list means the topology is well formed and the unloading node is
    reachable from the loading node.
    """
    report: list[str] = []
    n = topology.n_nodes
    h_l, h_u = topology.loading_node, topology.unloading_node

    if n < 1:
        report.append(f"node count must be positive, got {n}")
        return report

    for node, label in ((h_l, "loading node"), (h_u, "unloading node")):
        if not 1 <= node <= n:
            report.append(f"{label} {node} is outside 1..{n}")

    for h, j in topology.transitions:
        if h == j:
            report.append(f"self-transition ({h}, {j}) is not allowed")
        for end in (h, j):
            if end != OUTSIDE and not 1 <= end <= n:
                report.append(f"transition ({h}, {j}) references unknown node {end}")
        if h == OUTSIDE and j != h_l:
            report.append(f"transition from outside may only enter the loading node, got ({h}, {j})")
        if j == OUTSIDE and h != h_u:
            report.append(f"transition to outside may only leave the unloading node, got ({h}, {j})")

    if (OUTSIDE, h_l) not in topology.transitions:
        report.append(f"loading transition (0, {h_l}) is missing")
    if (h_u, OUTSIDE) not in topology.transitions:
        report.append(f"unloading transition ({h_u}, 0) is missing")

    for m, dur in sorted(topology.machines.items()):
        if not 1 <= m <= n:
            report.append(f"machine id {m} is outside 1..{n}")
        if dur < 1:
            report.append(f"machine {m} has job duration {dur}, must be >= 1")

    # Reachability: the unloading node must be reachable from the loading node
    # walking internal transitions only.
    if 1 <= h_l <= n and 1 <= h_u <= n:
        seen = {h_l}
        frontier = [h_l]
        while frontier:
            h = frontier.pop()
            for j in topology._outgoing.get(h, frozenset()):
                if j != OUTSIDE and j not in seen:
                    seen.add(j)
                    frontier.append(j)
        if h_u not in seen:
            report.append(f"unloading node {h_u} is unreachable from loading node {h_l}")

    return report


# ---------------------------------------------------------------------------
# Config file format
#
# Line-oriented text with sections [nodes], [edges], [machines], [io].
#   [nodes]:    either "count = N" or explicit ids (whitespace separated),
#               which must form 1..N.
#   [edges]:    one internal transition per line, "h -> j".
#   [machines]: one machine per line, "m : L" with integer job duration L.
#   [io]:       "load=h_l unload=h_u" (the two outside transitions are added
#               automatically).
# '#' starts a comment; blank lines are ignored.
# ---------------------------------------------------------------------------


def _int(token: str, what: str, path: str, lineno: int) -> int:
    try:
        return int(token)
    except ValueError:
        raise ConfigError(f"expected an integer {what}, got {token!r}", path, lineno) from None


def loads_topology(text: str, path: str = "<string>") -> PlantTopology:
    """Parse a plant config from a string. See the module format notes."""
    section = None
    node_ids: list[int] = []
    node_count: int | None = None
    edges: list[Transition] = []
    machines: dict[int, int] = {}
    io: dict[str, int] = {}

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip().lower()
            if section not in ("nodes", "edges", "machines", "io"):
                raise ConfigError(f"unknown section [{section}]", path, lineno)
            continue
        if section is None:
            raise ConfigError("content before any section header", path, lineno)

        if section == "nodes":
            if "=" in line:
                key, _, value = line.partition("=")
                if key.strip().lower() != "count":
                    raise ConfigError(f"unknown key {key.strip()!r} in [nodes]", path, lineno)
                node_count = _int(value.strip(), "node count", path, lineno)
            else:
                node_ids.extend(_int(tok, "node id", path, lineno) for tok in line.replace(",", " ").split())
        elif section == "edges":
            if "->" not in line:
                raise ConfigError("edge lines must look like 'h -> j'", path, lineno)
            left, _, right = line.partition("->")
            edges.append((_int(left.strip(), "edge source", path, lineno),
                          _int(right.strip(), "edge destination", path, lineno)))
        elif section == "machines":
            if ":" not in line:
                raise ConfigError("machine lines must look like 'm : L'", path, lineno)
            left, _, right = line.partition(":")
            m = _int(left.strip(), "machine id", path, lineno)
            dur = _int(right.strip(), "job duration", path, lineno)
            if m in machines:
                raise ConfigError(f"machine {m} listed twice", path, lineno)
            machines[m] = dur
        elif section == "io":
            for token in line.split():
                key, sep, value = token.partition("=")
                if not sep or key.lower() not in ("load", "unload"):
                    raise ConfigError(f"expected 'load=h' or 'unload=h', got {token!r}", path, lineno)
                io[key.lower()] = _int(value, f"{key} node", path, lineno)

    if node_count is None and not node_ids:
        raise ConfigError("missing [nodes] section", path)
    if node_ids:
        expected = list(range(1, len(node_ids) + 1))
        if sorted(node_ids) != expected:
            raise ConfigError(f"node ids must form 1..{len(node_ids)}, got {sorted(node_ids)}", path)
        if node_count is not None and node_count != len(node_ids):
            raise ConfigError("count = does not match the listed node ids", path)
        node_count = len(node_ids)
    if "load" not in io or "unload" not in io:
        raise ConfigError("missing [io] section with load= and unload=", path)

    h_l, h_u = io["load"], io["unload"]
    transitions = list(edges) + [(OUTSIDE, h_l), (h_u, OUTSIDE)]
    return PlantTopology(
        n_nodes=node_count,
        transitions=tuple(transitions),
        machines=machines,
        loading_node=h_l,
        unloading_node=h_u,
    )


def load_topology(path) -> PlantTopology:
    """Load a plant config file from disk."""
    with open(path, "r", encoding="utf-8") as fh:
        return loads_topology(fh.read(), str(path))


def build_example_plant() -> PlantTopology:
    """The bundled 12-node example plant (machines 11 and 12, gates at node 10).

    Loaded from the packaged ``data/example_plant.txt`` config; see that file
    for the layout notes.
    """
    text = resources.files("plantroute.data").joinpath("example_plant.txt").read_text("utf-8")
    return loads_topology(text, "plantroute/data/example_plant.txt")

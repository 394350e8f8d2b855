import pytest

from plantroute.errors import ConfigError, ValidationError
from plantroute.follower import PartState
from plantroute.sequences import (
    Sequence,
    SequenceEntry,
    SequenceSet,
    build_example_sequences,
    entry,
    loads_sequences,
    remaining_steps,
    validate_sequence,
    validate_sequence_set,
)
from plantroute.topology import build_example_plant


@pytest.fixture(scope="module")
def plant():
    return build_example_plant()


@pytest.fixture(scope="module")
def example(plant):
    return build_example_sequences(plant)


def seq_of(pairs):
    return Sequence(tuple(SequenceEntry(n, g) for n, g in pairs))


# A route sketched in the style of the original small-plant tour: gate,
# one lap to machine 12, then straight home. Machine 12 is held for only
# two entries, which is too short for a 3-step job.
SHORT_HOLD_TOUR = seq_of(
    [(10, 12), (1, 12), (2, 12), (3, 12), (4, 12), (6, 12),
     (12, 12), (12, 0), (6, 0), (7, 0), (8, 0), (9, 0), (1, 0), (10, 0)]
)


def test_entry_lookup(example):
    assert entry(example, 1, 1) == SequenceEntry(10, 12)
    assert entry(example, 1, 3) == SequenceEntry(2, 12)


def test_entry_bounds(example):
    with pytest.raises(ValueError):
        entry(example, 1, example.length(1) + 1)
    with pytest.raises(ValueError):
        entry(example, 3, 1)
    with pytest.raises(ValueError):
        entry(example, 1, 0)


def test_remaining_steps_on_short_hold_tour():
    seqs = SequenceSet((SHORT_HOLD_TOUR,))
    assert len(SHORT_HOLD_TOUR) == 14
    assert remaining_steps(seqs, PartState(1, 3, 0, 0)) == 11
    assert remaining_steps(seqs, PartState(1, 14, 0, 0)) == 0
    assert remaining_steps(seqs, PartState(1, 1, 0, 0)) == 13


def test_remaining_steps_invalid_position():
    seqs = SequenceSet((SHORT_HOLD_TOUR,))
    with pytest.raises(ValueError):
        remaining_steps(seqs, PartState(1, 15, 0, 0))


def test_short_machine_hold_is_flagged(plant):
    report = validate_sequence(SHORT_HOLD_TOUR, plant)
    assert any("machine 12 held for 2" in msg for msg in report)
    # adjacency of the tour itself is fine: every step is a real link
    assert not any("not directly connected" in msg for msg in report)


def test_disconnected_jump_is_flagged(plant):
    report = validate_sequence(seq_of([(3, 0), (5, 0), (10, 0)]), plant)
    assert any("3 -> 5" in msg for msg in report)


def test_single_entry_sequence_at_gate_is_clean(plant):
    assert validate_sequence(seq_of([(10, 0)]), plant) == []


def test_sequence_must_end_at_unloading_node(plant):
    report = validate_sequence(seq_of([(10, 0), (1, 0)]), plant)
    assert any("must end at the unloading node" in msg for msg in report)


def test_out_of_range_nodes_flagged(plant):
    report = validate_sequence(seq_of([(13, 0)]), plant)
    assert any("node 13" in msg for msg in report)
    report = validate_sequence(seq_of([(10, 13)]), plant)
    assert any("goal 13" in msg for msg in report)


def test_example_sequences_validate_clean(plant, example):
    assert validate_sequence_set(example, plant) == []


def test_example_route_starts_and_ends_at_gate(example):
    for s in range(1, len(example) + 1):
        assert example.sequence(s).node(len(example.sequence(s))) == 10
    assert example.sequence(1).node(1) == 10


def test_example_goals_progress_in_order(example):
    # goals along route 1 switch 12 -> 11 -> 0 and never go back
    order = {12: 0, 11: 1, 0: 2}
    goals = [e.goal for e in example.sequence(1).entries]
    ranks = [order[g] for g in goals]
    assert ranks == sorted(ranks)
    assert set(goals) == {12, 11, 0}


def test_example_machine_holds_cover_job_plus_transfer(plant, example):
    for s in range(1, len(example) + 1):
        seq = example.sequence(s)
        run = 0
        for p in range(1, len(seq) + 1):
            if seq.node(p) in plant.machines:
                run += 1
            else:
                if run:
                    assert run >= plant.machines[seq.node(p - 1)] + 2
                run = 0


def test_run_ahead(example):
    # first entry of the machine-12 run on route 1 has four hold entries left
    nodes = [e.node for e in example.sequence(1).entries]
    first_12 = nodes.index(12) + 1
    assert example.run_ahead(1, first_12) == 4
    assert example.run_ahead(1, first_12 + 4) == 0


def test_position_index_covers_all_entries(example):
    total = sum(len(v) for v in example.position_index.values())
    assert total == sum(example.length(s) for s in range(1, len(example) + 1))
    for (node, goal), pairs in example.position_index.items():
        for s, p in pairs:
            e = example.sequence(s).entry(p)
            assert (e.node, e.goal) == (node, goal)


def test_loader_rejects_invalid_set(plant):
    text = "[sequence 1]\n10 : 12\n12 : 12\n12 : 0\n10 : 0\n"
    with pytest.raises(ValidationError) as err:
        loads_sequences(text, plant)
    assert err.value.report
    # but the override flag loads it anyway
    seqs = loads_sequences(text, plant, allow_invalid=True)
    assert seqs.length(1) == 4


def test_loader_reports_line_numbers(plant):
    with pytest.raises(ConfigError) as err:
        loads_sequences("[sequence 1]\n10 : 12\nnot an entry\n", plant, path="seqs.txt")
    assert "seqs.txt:3" in str(err.value)


def test_loader_requires_contiguous_blocks(plant):
    with pytest.raises(ConfigError):
        loads_sequences("[sequence 2]\n10 : 0\n", plant)

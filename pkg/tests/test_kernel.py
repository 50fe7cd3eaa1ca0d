import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from infodyn import kernel as K
from infodyn.kernel import Block, CausalDecomposition, Event
from infodyn.kernelspec import SpecFileError, check_system, load_system_spec, parse_system_spec

from .kernel_gen import MUTATIONS, lawful, mutate, shift_forward
from .oracles import binomial_halfwidth


# -- time base ---------------------------------------------------------------------

def test_single_instant_allowed():
    assert K.make_timebase([0.0]).F == 0


def test_integer_ticks():
    tb = K.make_timebase([0, 1, 2, 3])
    assert tb.F == 3 and len(tb) == 4


@pytest.mark.parametrize("bad", [[0, 1, 1], [2, 1], [0.0, -0.5, 3.0]])
def test_non_strict_order(bad):
    with pytest.raises(K.NonStrictOrder):
        K.make_timebase(bad)


def test_empty_timebase():
    with pytest.raises(K.EmptyTimeBase):
        K.make_timebase([])


@given(st.lists(st.integers(-1000, 1000), min_size=1, max_size=30, unique=True), st.randoms())
def test_timebase_accepts_exactly_sorted_lists(values, rnd):
    rnd.shuffle(values)
    if values == sorted(values):
        assert K.make_timebase(values).instants == tuple(values)
    else:
        with pytest.raises(K.NonStrictOrder):
            K.make_timebase(values)


# -- attributes, trajectories, events -------------------------------------------------

def test_domains():
    assert 3 in K.IntRange(0, 5) and 6 not in K.IntRange(0, 5) and 2.5 not in K.IntRange(0, 5)
    assert "b" in K.Enumeration(("a", "b"))
    assert 0.5 in K.Interval(0.0, 1.0) and 1.5 not in K.Interval(0.0, 1.0)
    with pytest.raises(K.DomainError):
        K.IntRange(3, 2)
    with pytest.raises(K.DomainError):
        K.Enumeration(())
    with pytest.raises(K.KernelError):
        K.AttributeSet(())


def system(n_instants=4):
    tb = K.make_timebase(range(n_instants))
    attrs = K.AttributeSet((K.Attribute("a1", K.IntRange(0, 9)), K.Attribute("a2", K.IntRange(0, 9))))
    return tb, attrs


def test_trajectory_finalize():
    tb, attrs = system(3)
    partial = K.Trajectory(tb, attrs, {(0, 0): 1, (0, 1): 2})
    assert len(partial.missing()) == 4
    with pytest.raises(K.IncompleteTrajectory):
        partial.finalize()
    with pytest.raises(K.DomainError):
        K.Trajectory.from_array(tb, attrs, [[1, 2], [3, 40], [5, 6]])
    z = K.Trajectory.from_array(tb, attrs, [[1, 2], [3, 4], [5, 6]])
    assert z.finalized and z(1, 1) == 4


def test_event_examples():
    tb, attrs = system()
    z = K.Trajectory.from_array(tb, attrs, [[0, 0], [0, 0], [0, 5], [0, 0]])
    ev = Event.point(2, 1, 5)
    assert K.event_occurred(ev, z)
    z4 = K.Trajectory.from_array(tb, attrs, [[0, 0], [0, 0], [0, 4], [0, 0]])
    assert not K.event_occurred(ev, z4)
    assert K.event_occurred(Event(), z) and K.event_occurred(Event(), z4)


def test_event_needs_finalized_trajectory():
    tb, attrs = system(1)
    with pytest.raises(K.IncompleteTrajectory):
        K.event_occurred(Event(), K.Trajectory(tb, attrs, {(0, 0): 1, (0, 1): 1}))


def test_event_validate():
    tb, attrs = system()
    Event.point(3, 1, 2, 3).validate(tb, attrs)
    with pytest.raises(K.KernelError):
        Event.point(4, 0, 1).validate(tb, attrs)
    with pytest.raises(K.KernelError):
        Event.point(0, 2, 1).validate(tb, attrs)
    with pytest.raises(K.DomainError):
        Event.point(0, 0, 10).validate(tb, attrs)


@given(st.lists(st.lists(st.integers(0, 9), min_size=2, max_size=2), min_size=4, max_size=4),
       st.lists(st.tuples(st.integers(0, 3), st.integers(0, 1), st.sets(st.integers(0, 9), max_size=6)),
                max_size=6), st.data())
def test_event_conjunction_monotone(table, constraints, data):
    tb, attrs = system()
    z = K.Trajectory.from_array(tb, attrs, table)
    big = Event(tuple(K.Constraint(k, i, s) for k, i, s in constraints))
    keep = data.draw(st.lists(st.booleans(), min_size=len(constraints), max_size=len(constraints)))
    small = Event(tuple(c for c, f in zip(big.constraints, keep) if f))
    if K.event_occurred(big, z):
        assert K.event_occurred(small, z)


# -- probabilities ---------------------------------------------------------------

def coin(rng):
    tb = K.make_timebase([0])
    attrs = K.AttributeSet((K.Attribute("coin", K.Enumeration(("heads", "tails"))),))
    return K.Trajectory.from_array(tb, attrs, [["heads" if rng.random() < 0.5 else "tails"]])


def walk(rng):
    tb, attrs = system()
    steps = rng.integers(0, 3, size=(4, 2))
    return K.Trajectory.from_array(tb, attrs, np.cumsum(steps, axis=0).clip(0, 9).tolist())


def test_probability_of_sure_event():
    assert K.estimate_event_probability(walk, Event(), 200, seed=1) == 1.0


def test_probability_of_unreachable_value():
    # a walk never goes down, so z(0,0) is at most 2
    assert K.estimate_event_probability(walk, Event.point(0, 0, 7, 8, 9), 500, seed=1) == 0.0


def test_fair_coin():
    n = 100_000
    p = K.estimate_event_probability(coin, Event.point(0, 0, "heads"), n, seed=2024)
    # the stated tolerance is wider than a 4-sigma binomial bound
    assert binomial_halfwidth(0.5, n, z=4) < 0.01
    assert abs(p - 0.5) <= 0.01


def test_probability_deterministic_and_complement():
    n = 2000
    heads, tails = K.estimate_event_probabilities(
        coin, [Event.point(0, 0, "heads"), Event.point(0, 0, "tails")], n, seed=5)
    assert abs(heads + tails - 1) <= 2 / np.sqrt(n)
    assert heads == K.estimate_event_probability(coin, Event.point(0, 0, "heads"), n, seed=5)
    with pytest.raises(ValueError):
        K.estimate_event_probability(coin, Event(), 0, seed=0)


@given(st.integers(0, 2**31), st.integers(1, 60))
def test_probability_in_unit_interval(seed, n):
    p = K.estimate_event_probability(walk, Event.point(3, 1, 3, 4, 5), n, seed)
    assert 0.0 <= p <= 1.0


# -- causal decomposition -----------------------------------------------------------

def markov_chain(n_instants=5):
    causes = {(0, 0): frozenset()}
    causes.update({(k, 0): frozenset({(k - 1, 0)}) for k in range(1, n_instants)})
    return CausalDecomposition(2, n_instants, (Block({0, 1}, True),), causes)


def test_markov_chain_is_ok_and_flagged_trivial():
    rep = K.validate_causality(markov_chain())
    assert rep.ok and rep.first is None
    assert any("structural terms undefined" in n for n in rep.notes)


def test_non_inertial_self_cause_rejected():
    blocks = (Block({0}, True), Block({1}, False))
    causes = {(k, 0): frozenset({(k - 1, 0)}) if k else frozenset() for k in range(3)}
    causes.update({(k, 1): frozenset({(k, 0)}) for k in range(3)})
    d = CausalDecomposition(2, 3, blocks, causes)
    assert K.validate_causality(d).ok
    causes[(1, 1)] = frozenset({(1, 0), (1, 1)})
    rep = K.validate_causality(CausalDecomposition(2, 3, blocks, causes))
    assert rep.first.clause == "non_inertial" and rep.first.cell == (1, 1)


def test_future_cause_rejected():
    causes = dict(markov_chain().causes)
    causes[(2, 0)] = frozenset({(3, 0)})
    rep = K.validate_causality(CausalDecomposition(2, 5, (Block({0, 1}, True),), causes))
    assert not rep.ok and rep.first.clause == "inertial" and rep.first.cell == (2, 0)


def test_partition_and_cause_map_errors():
    base = markov_chain(2)
    d = CausalDecomposition(3, 2, base.blocks, base.causes)
    assert K.validate_causality(d).first.clause == "partition"
    missing = {c: v for c, v in base.causes.items() if c != (1, 0)}
    rep = K.validate_causality(CausalDecomposition(2, 2, base.blocks, missing))
    assert rep.first.clause == "cause_map" and rep.first.cell == (1, 0)
    extra = dict(base.causes)
    extra[(1, 0)] = frozenset({(0, 7)})
    assert K.validate_causality(CausalDecomposition(2, 2, base.blocks, extra)).first.clause == "cause_map"


def test_initial_condition_must_be_empty():
    causes = dict(markov_chain().causes)
    causes[(0, 0)] = frozenset({(1, 0)})
    rep = K.validate_causality(CausalDecomposition(2, 5, (Block({0, 1}, True),), causes))
    assert rep.first.clause == "initial_condition" and rep.first.cell == (0, 0)
    assert json.loads(json.dumps(rep.to_dict()))["first"]["cell"] == [0, 0]


@pytest.mark.parametrize("seed", range(30))
def test_generated_lawful_accepted(seed):
    assert K.validate_causality(lawful(seed)).ok


@pytest.mark.parametrize("kind", MUTATIONS)
@pytest.mark.parametrize("seed", range(8))
def test_single_mutation_rejected(kind, seed):
    rep = K.validate_causality(mutate(lawful(seed), kind, seed))
    assert not rep.ok


@given(st.integers(0, 10**6))
def test_metamorphic_shift_forward_rejected(seed):
    d = lawful(seed)
    assert K.validate_causality(d).ok
    moved = shift_forward(d, seed)
    if moved is not None:
        assert not K.validate_causality(moved).ok


# -- bonds ------------------------------------------------------------------------

def components(subs):
    return [sorted(s.attributes) for s in subs]


def test_chain_cut():
    g = K.SystemGraph.from_edges("abc", {"ab": ("a", "b"), "bc": ("b", "c")})
    a, bc = K.cut_bonds(g, ["ab"])
    assert a.attributes == {0} and a.outputs == {0} and not a.inputs and not a.internal
    assert bc.attributes == {1, 2} and bc.inputs == {1} and bc.internal == {2} and not bc.outputs
    assert bc.bonds == ("bc",)


def test_cut_nothing():
    g = K.SystemGraph.from_edges("abc", {"ab": ("a", "b"), "bc": ("b", "c")})
    (only,) = K.cut_bonds(g)
    assert only.internal == {0, 1, 2} and not only.inputs and not only.outputs


def test_star_cut_all():
    g = K.SystemGraph.from_edges(["hub", "x", "y"], {"hx": ("hub", "x"), "hy": ("hub", "y")})
    subs = K.cut_bonds(g, ["hx", "hy"])
    assert components(subs) == [[0], [1], [2]]
    assert subs[0].outputs == {0} and subs[1].inputs == {1} and subs[2].inputs == {2}


def test_middle_attribute_both_input_and_output():
    g = K.SystemGraph.from_edges("abc", {"ab": ("a", "b"), "bc": ("b", "c")})
    subs = K.cut_bonds(g, ["ab", "bc"])
    assert subs[1].inputs == {1} and subs[1].outputs == {1}


def test_unknown_bond():
    g = K.SystemGraph.from_edges("ab", {"ab": ("a", "b")})
    with pytest.raises(K.UnknownBond):
        K.cut_bonds(g, ["zz"])


def test_graph_rules():
    with pytest.raises(K.KernelError):
        K.SystemGraph.from_edges("abc", {"1": ("a", "c"), "2": ("b", "c")})
    with pytest.raises(K.KernelError):
        K.SystemGraph.from_edges("ab", {"1": ("a", "a")})
    with pytest.raises(K.KernelError):
        K.SystemGraph.from_edges("ab", {"1": ("a", "q")})
    # one output may feed several inputs
    K.SystemGraph.from_edges("abc", {"1": ("a", "b"), "2": ("a", "c")})


@st.composite
def graphs(draw):
    n = draw(st.integers(1, 9))
    targets = draw(st.lists(st.integers(0, n - 1), unique=True, max_size=n))
    edges = {}
    for t in targets:
        s = draw(st.integers(0, n - 1).filter(lambda v: v != t)) if n > 1 else None
        if s is not None:
            edges[f"e{t}"] = (str(s), str(t))
    g = K.SystemGraph.from_edges([str(i) for i in range(n)], edges)
    cut = draw(st.sets(st.sampled_from(sorted(edges)))) if edges else set()
    return g, cut


@given(graphs())
def test_cut_partitions_and_reconnects(gc):
    g, cut = gc
    subs = K.cut_bonds(g, cut)
    seen = [i for s in subs for i in s.attributes]
    assert sorted(seen) == list(range(len(g.attributes)))
    for s in subs:
        assert s.inputs | s.outputs | s.internal == s.attributes
        assert not (s.internal & (s.inputs | s.outputs))
    # re-adding the cut bonds merges components back into the uncut structure
    whole = K.cut_bonds(g)
    assert len(whole) <= len(subs)
    owner = {i: j for j, s in enumerate(whole) for i in s.attributes}
    for s in subs:
        assert len({owner[i] for i in s.attributes}) == 1


# -- spec file ----------------------------------------------------------------------

SPEC = """
[time]
instants = 0, 1, 2

[attributes]
x = int 0..9
y = enum on,off
z = real 0..1

[blocks]
motion = x ; inertial
switch = y, z ; static

[causes]
motion@0 =
switch@0 = motion@0
motion@k = motion@k-1
switch@k = motion@k

[bonds]
c1 = x -> y
c2 = y -> z

[cut]
bonds = c1
"""


def test_spec_file_roundtrip(tmp_path):
    p = tmp_path / "sys.ini"
    p.write_text(SPEC)
    spec = load_system_spec(p)
    assert spec.timebase.F == 2
    d = spec.decomposition
    assert d.causes[(2, 0)] == {(1, 0)} and d.causes[(1, 1)] == {(1, 0)} and d.causes[(0, 0)] == set()
    assert spec.attributes[0].inertial and not spec.attributes[2].inertial
    rep = check_system(spec)
    assert rep["ok"] and rep["causality"]["ok"]
    assert [s["attributes"] for s in rep["subsystems"]] == [["x"], ["y", "z"]]
    assert rep["subsystems"][1]["inputs"] == ["y"]
    json.dumps(rep)


def test_spec_file_reports_violation():
    bad = SPEC.replace("switch@k = motion@k", "switch@k = switch@k")
    rep = check_system(parse_system_spec(bad))
    assert not rep["ok"] and rep["causality"]["first"]["clause"] == "non_inertial"


@pytest.mark.parametrize("text", [
    "[attributes]\nx = int 0..1\n",
    "[time]\ninstants = 0, 0\n[attributes]\nx = int 0..1\n",
    SPEC.replace("enum on,off", "complex 1..2"),
    SPEC.replace("motion = x", "motion = w"),
    SPEC.replace("c1 = x -> y", "c1 = x y"),
    SPEC + "\n[extra]\na = 1\n",
])
def test_spec_file_errors(text):
    with pytest.raises(K.KernelError):
        parse_system_spec(text)
    assert issubclass(SpecFileError, K.KernelError)

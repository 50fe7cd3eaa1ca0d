"""Executable abstract and causal systems.

A system is a finite, strictly ordered time base, a set of attributes with
value domains, and trajectories assigning one value to every (instant,
attribute) cell.  Events are finite conjunctions of point constraints.  A
causal decomposition orders the attributes into inertial / non-inertial
blocks and names, for every block cell ``(k, l)``, the set of cells that
completely determine it.  Information bonds link one output attribute to one
input attribute; cutting bonds splits a system into sub-systems.

Indices are 0-based throughout: instants ``0..F``, attributes ``0..n-1``,
blocks ``0..m-1``.  The initial condition is cell ``(0, 0)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable, Hashable, Iterable, Mapping, Sequence

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

__all__ = [
    "KernelError",
    "EmptyTimeBase",
    "NonStrictOrder",
    "IncompleteTrajectory",
    "DomainError",
    "UnknownBond",
    "IntRange",
    "Enumeration",
    "Interval",
    "Attribute",
    "AttributeSet",
    "TimeBase",
    "make_timebase",
    "Trajectory",
    "Constraint",
    "Event",
    "event_occurred",
    "estimate_event_probability",
    "estimate_event_probabilities",
    "Block",
    "CausalDecomposition",
    "Violation",
    "CausalityReport",
    "validate_causality",
    "Bond",
    "SystemGraph",
    "SubSystem",
    "cut_bonds",
]


class KernelError(ValueError):
    pass


class EmptyTimeBase(KernelError):
    pass


class NonStrictOrder(KernelError):
    pass


class IncompleteTrajectory(KernelError):
    pass


class DomainError(KernelError):
    pass


class UnknownBond(KernelError):
    pass


# -- value domains ---------------------------------------------------------

@dataclass(frozen=True)
class IntRange:
    lo: int
    hi: int

    def __post_init__(self):
        if self.hi < self.lo:
            raise DomainError(f"empty integer range {self.lo}..{self.hi}")

    def __contains__(self, v):
        return isinstance(v, (int, np.integer)) and not isinstance(v, bool) and self.lo <= v <= self.hi

    def __str__(self):
        return f"int {self.lo}..{self.hi}"


@dataclass(frozen=True)
class Enumeration:
    labels: tuple

    def __post_init__(self):
        object.__setattr__(self, "labels", tuple(self.labels))
        if not self.labels:
            raise DomainError("empty enumeration")

    def __contains__(self, v):
        return v in self.labels

    def __str__(self):
        return "enum " + ",".join(map(str, self.labels))


@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float

    def __post_init__(self):
        if not self.lo <= self.hi:
            raise DomainError(f"empty interval [{self.lo}, {self.hi}]")

    def __contains__(self, v):
        try:
            return self.lo <= float(v) <= self.hi
        except (TypeError, ValueError):
            return False

    def __str__(self):
        return f"real {self.lo}..{self.hi}"


@dataclass(frozen=True)
class Attribute:
    name: str
    domain: Any
    inertial: bool | None = None


@dataclass(frozen=True)
class AttributeSet:
    attributes: tuple[Attribute, ...]

    def __post_init__(self):
        object.__setattr__(self, "attributes", tuple(self.attributes))
        if not self.attributes:
            raise KernelError("a system needs at least one attribute")
        names = [a.name for a in self.attributes]
        if len(set(names)) != len(names):
            raise KernelError("attribute names must be unique")

    def __len__(self):
        return len(self.attributes)

    def __getitem__(self, i):
        return self.attributes[i]

    def index(self, name: str) -> int:
        for i, a in enumerate(self.attributes):
            if a.name == name:
                return i
        raise KeyError(name)


# -- time, trajectories, events ---------------------------------------------

@dataclass(frozen=True)
class TimeBase:
    instants: tuple

    @property
    def F(self) -> int:
        return len(self.instants) - 1

    def __len__(self):
        return len(self.instants)


def make_timebase(instants: Iterable) -> TimeBase:
    """Time base over `instants`, which must be strictly increasing."""
    instants = tuple(instants)
    if not instants:
        raise EmptyTimeBase("system time needs at least one instant")
    for k in range(len(instants) - 1):
        if not instants[k] < instants[k + 1]:
            raise NonStrictOrder(f"t[{k + 1}] = {instants[k + 1]!r} does not follow t[{k}] = {instants[k]!r}")
    return TimeBase(instants)


@dataclass(frozen=True)
class Trajectory:
    """Values ``z[(k, i)]`` over instants k and attributes i.

    Build with a (partial) mapping, then :meth:`finalize` checks totality
    and domains and returns the finalized trajectory.
    """

    timebase: TimeBase
    attributes: AttributeSet
    values: Mapping[tuple[int, int], Any]
    finalized: bool = False

    @classmethod
    def from_array(cls, timebase, attributes, table) -> "Trajectory":
        """Finalized trajectory from a ``(F+1) x n`` table."""
        values = {(k, i): table[k][i] for k in range(len(timebase)) for i in range(len(attributes))}
        return cls(timebase, attributes, values).finalize()

    def missing(self) -> list[tuple[int, int]]:
        return [(k, i) for k in range(len(self.timebase)) for i in range(len(self.attributes))
                if (k, i) not in self.values]

    def finalize(self) -> "Trajectory":
        gaps = self.missing()
        if gaps:
            raise IncompleteTrajectory(f"{len(gaps)} cells undefined, first {gaps[0]}")
        for (k, i), v in self.values.items():
            if not (0 <= k < len(self.timebase) and 0 <= i < len(self.attributes)):
                raise KernelError(f"cell {(k, i)} outside the system")
            if v not in self.attributes[i].domain:
                raise DomainError(f"z({k}, {i}) = {v!r} not in {self.attributes[i].domain}")
        return Trajectory(self.timebase, self.attributes, dict(self.values), True)

    def __call__(self, k: int, i: int):
        return self.values[(k, i)]


@dataclass(frozen=True)
class Constraint:
    k: int
    i: int
    allowed: frozenset

    def __post_init__(self):
        object.__setattr__(self, "allowed", frozenset(self.allowed))


@dataclass(frozen=True)
class Event:
    """Conjunction of point constraints; the empty conjunction is the sure event."""

    constraints: tuple[Constraint, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "constraints", tuple(self.constraints))

    @classmethod
    def point(cls, k, i, *allowed):
        return cls((Constraint(k, i, frozenset(allowed)),))

    def __and__(self, other: "Event") -> "Event":
        return Event(self.constraints + other.constraints)

    def validate(self, timebase: TimeBase, attributes: AttributeSet):
        for c in self.constraints:
            if not 0 <= c.k < len(timebase):
                raise KernelError(f"constraint instant {c.k} outside 0..{timebase.F}")
            if not 0 <= c.i < len(attributes):
                raise KernelError(f"constraint attribute {c.i} outside 0..{len(attributes) - 1}")
            dom = attributes[c.i].domain
            bad = [v for v in c.allowed if v not in dom]
            if bad:
                raise DomainError(f"values {bad!r} not in the domain of attribute {c.i}")


def event_occurred(event: Event, traj: Trajectory) -> bool:
    if not traj.finalized:
        raise IncompleteTrajectory("trajectory is not finalized")
    return all(traj.values[(c.k, c.i)] in c.allowed for c in event.constraints)


def estimate_event_probabilities(generator: Callable[[np.random.Generator], Trajectory],
                                 events: Sequence[Event], n_samples: int, seed: int) -> list[float]:
    """Monte Carlo probabilities of several events evaluated on the same samples.

    Sample ``j`` is drawn with ``np.random.default_rng([seed, j])``, so the
    estimate depends only on (generator, seed, n_samples).
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    hits = np.zeros(len(events), dtype=np.int64)
    for j in range(n_samples):
        traj = generator(np.random.default_rng([seed, j]))
        for e, ev in enumerate(events):
            hits[e] += event_occurred(ev, traj)
    return [float(h) / n_samples for h in hits]


def estimate_event_probability(generator, event: Event, n_samples: int, seed: int) -> float:
    return estimate_event_probabilities(generator, [event], n_samples, seed)[0]


# -- causal decomposition -----------------------------------------------------

@dataclass(frozen=True)
class Block:
    attributes: frozenset
    inertial: bool
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "attributes", frozenset(self.attributes))


Cell = tuple[int, int]


@dataclass(frozen=True)
class CausalDecomposition:
    """Blocks over the attribute indices ``0..n_attributes-1`` and causes per cell.

    ``causes[(k, l)]`` is the set of cells ``(k', l')`` forming the complete
    immediate cause of block `l` at instant `k`.
    """

    n_attributes: int
    n_instants: int
    blocks: tuple[Block, ...]
    causes: Mapping[Cell, frozenset]

    def __post_init__(self):
        object.__setattr__(self, "blocks", tuple(self.blocks))
        object.__setattr__(self, "causes", {tuple(c): frozenset(tuple(x) for x in v)
                                            for c, v in self.causes.items()})

    @property
    def cells(self) -> list[Cell]:
        return [(k, l) for k in range(self.n_instants) for l in range(len(self.blocks))]

    @property
    def trivial(self) -> bool:
        return len(self.blocks) == 1


@dataclass(frozen=True)
class Violation:
    clause: str
    cell: Cell | None
    message: str

    def to_dict(self):
        return {"clause": self.clause, "cell": list(self.cell) if self.cell else None,
                "message": self.message}


@dataclass(frozen=True)
class CausalityReport:
    violations: tuple[Violation, ...]
    notes: tuple[str, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.violations

    @property
    def first(self) -> Violation | None:
        return self.violations[0] if self.violations else None

    def to_dict(self):
        return {"ok": self.ok, "first": self.first.to_dict() if self.first else None,
                "violations": [v.to_dict() for v in self.violations], "notes": list(self.notes)}


def validate_causality(decomp: CausalDecomposition) -> CausalityReport:
    """Check a decomposition against the causality rules.

    Clauses, checked in this order:

    ``partition``
        blocks are non-empty, pairwise disjoint and cover every attribute.
    ``cause_map``
        every cell has exactly one cause set, and causes cite existing cells.
    ``initial_condition``
        cell (0, 0) has the empty cause.
    ``inertial``
        causes of an inertial block at instant k lie at instant k-1.
    ``non_inertial``
        causes of a non-inertial block l at instant k lie at instant k in
        blocks j < l.
    """
    out: list[Violation] = []
    notes = []
    m, K = len(decomp.blocks), decomp.n_instants
    seen: dict[int, int] = {}
    for l, b in enumerate(decomp.blocks):
        if not b.attributes:
            out.append(Violation("partition", None, f"block {l} is empty"))
        for i in sorted(b.attributes):
            if not 0 <= i < decomp.n_attributes:
                out.append(Violation("partition", None, f"block {l} cites unknown attribute {i}"))
            elif i in seen:
                out.append(Violation("partition", None, f"attribute {i} in blocks {seen[i]} and {l}"))
            else:
                seen[i] = l
    uncovered = sorted(set(range(decomp.n_attributes)) - set(seen))
    if uncovered:
        out.append(Violation("partition", None, f"attributes {uncovered} belong to no block"))
    if m == 0 or K == 0:
        out.append(Violation("partition", None, "no blocks or no instants"))
        return CausalityReport(tuple(out))

    valid_cells = set(decomp.cells)
    for cell in decomp.causes:
        if cell not in valid_cells:
            out.append(Violation("cause_map", cell, f"cause given for nonexistent cell {cell}"))
    for k, l in decomp.cells:
        cell = (k, l)
        if cell not in decomp.causes:
            out.append(Violation("cause_map", cell, f"no cause set for cell {cell}"))
            continue
        cause = decomp.causes[cell]
        bad = sorted(c for c in cause if c not in valid_cells)
        if bad:
            out.append(Violation("cause_map", cell, f"cause cites nonexistent cells {bad}"))
            continue
        if cell == (0, 0):
            if cause:
                out.append(Violation("initial_condition", cell,
                                     "the initial condition must have the empty cause"))
            continue
        if decomp.blocks[l].inertial:
            wrong = sorted(c for c in cause if c[0] != k - 1)
            if wrong:
                out.append(Violation("inertial", cell,
                                     f"inertial block {l} at instant {k} caused by {wrong}, "
                                     f"not only by instant {k - 1}"))
        else:
            wrong = sorted(c for c in cause if not (c[0] == k and c[1] < l))
            if wrong:
                out.append(Violation("non_inertial", cell,
                                     f"non-inertial block {l} at instant {k} caused by {wrong}, "
                                     f"not only by blocks < {l} at instant {k}"))
    if decomp.trivial:
        notes.append("trivial decomposition: input, output and bond are undefined (structural terms undefined)")
    return CausalityReport(tuple(out), tuple(notes))


# -- bonds and sub-systems ----------------------------------------------------

@dataclass(frozen=True)
class Bond:
    name: Hashable
    source: int
    target: int


@dataclass(frozen=True)
class SystemGraph:
    """Attributes linked by information bonds ``source -> target``.

    Every bond joins exactly one attribute to exactly one other.  An
    attribute is the target of at most one bond (an input is fed by one
    output); an output may feed any number of inputs.
    """

    attributes: tuple[str, ...]
    bonds: tuple[Bond, ...]

    def __post_init__(self):
        object.__setattr__(self, "attributes", tuple(self.attributes))
        object.__setattr__(self, "bonds", tuple(self.bonds))
        n = len(self.attributes)
        if len(set(self.attributes)) != n:
            raise KernelError("attribute names must be unique")
        names = [b.name for b in self.bonds]
        if len(set(names)) != len(names):
            raise KernelError("bond names must be unique")
        fed = {}
        for b in self.bonds:
            for end in (b.source, b.target):
                if not 0 <= end < n:
                    raise KernelError(f"bond {b.name!r} cites unknown attribute {end}")
            if b.source == b.target:
                raise KernelError(f"bond {b.name!r} joins attribute {b.source} to itself")
            if b.target in fed:
                raise KernelError(f"attribute {self.attributes[b.target]!r} is the target of bonds "
                                  f"{fed[b.target]!r} and {b.name!r}")
            fed[b.target] = b.name

    @classmethod
    def from_edges(cls, attributes: Sequence[str], edges: Mapping[Hashable, tuple[str, str]]):
        idx = {a: i for i, a in enumerate(attributes)}
        try:
            bonds = [Bond(name, idx[s], idx[t]) for name, (s, t) in edges.items()]
        except KeyError as exc:
            raise KernelError(f"bond cites unknown attribute {exc.args[0]!r}") from None
        return cls(tuple(attributes), tuple(bonds))


@dataclass(frozen=True)
class SubSystem:
    attributes: frozenset
    inputs: frozenset
    outputs: frozenset
    internal: frozenset
    bonds: tuple = field(default=())

    def to_dict(self, names=None):
        def fmt(s):
            return sorted(names[i] for i in s) if names else sorted(s)
        return {"attributes": fmt(self.attributes), "inputs": fmt(self.inputs),
                "outputs": fmt(self.outputs), "internal": fmt(self.internal),
                "bonds": [str(b) for b in self.bonds]}


def cut_bonds(graph: SystemGraph, bonds_to_cut: Iterable[Hashable] = ()) -> list[SubSystem]:
    """Disconnect the named bonds and return the resulting sub-systems.

    Sub-systems are the connected components of the attribute graph over the
    remaining bonds, ordered by their smallest attribute index.  Per
    sub-system, targets of cut bonds are inputs, sources of cut bonds are
    outputs, and attributes that are neither are internal.  An attribute can
    be both an input and an output when it sits between two cut bonds.
    """
    cut = set(bonds_to_cut)
    known = {b.name for b in graph.bonds}
    unknown = cut - known
    if unknown:
        raise UnknownBond(f"bonds not in the system: {sorted(map(str, unknown))}")
    n = len(graph.attributes)
    kept = [b for b in graph.bonds if b.name not in cut]
    rows = [b.source for b in kept]
    cols = [b.target for b in kept]
    adj = coo_matrix((np.ones(len(kept)), (rows, cols)), shape=(n, n))
    _, comp = connected_components(adj, directed=True, connection="weak")

    inputs = {b.target for b in graph.bonds if b.name in cut}
    outputs = {b.source for b in graph.bonds if b.name in cut}
    groups: dict[int, list[int]] = {}
    for i in range(n):
        groups.setdefault(int(comp[i]), []).append(i)
    out = []
    for members in sorted(groups.values(), key=min):
        mem = frozenset(members)
        ins = frozenset(mem & inputs)
        outs = frozenset(mem & outputs)
        out.append(SubSystem(mem, ins, outs, mem - ins - outs,
                             tuple(b.name for b in kept if b.source in mem)))
    return out

"""Reading causal systems from a sectioned key-value text file.

Example::

    [time]
    instants = 0, 1, 2

    [attributes]
    # name = int LO..HI | enum A,B,... | real LO..HI
    x = int 0..9
    y = enum on,off

    [blocks]
    # order is significant; value: attributes ; inertial|static
    motion = x ; inertial
    switch = y ; static

    [causes]
    # cell = BLOCK@K; a K of "k" is a template applied to every instant not
    # listed explicitly, with references "k" or "k-N"
    motion@0 =
    switch@0 = motion@0
    motion@k = motion@k-1
    switch@k = motion@k

    [bonds]
    c1 = x -> y

    [cut]
    bonds = c1
"""
from __future__ import annotations

import configparser
import re
from dataclasses import dataclass
from pathlib import Path

from .kernel import (
    Attribute,
    AttributeSet,
    Block,
    CausalDecomposition,
    Enumeration,
    IntRange,
    Interval,
    KernelError,
    SystemGraph,
    TimeBase,
    cut_bonds,
    make_timebase,
    validate_causality,
)

__all__ = ["SpecFileError", "SystemSpec", "parse_system_spec", "load_system_spec", "check_system"]


class SpecFileError(KernelError):
    pass


@dataclass
class SystemSpec:
    timebase: TimeBase
    attributes: AttributeSet
    decomposition: CausalDecomposition | None
    graph: SystemGraph | None
    cut: tuple[str, ...] = ()


def _number(tok):
    try:
        return int(tok)
    except ValueError:
        return float(tok)


def _domain(text, name):
    kind, _, rest = text.strip().partition(" ")
    rest = rest.strip()
    try:
        if kind == "int":
            lo, hi = rest.split("..")
            return IntRange(int(lo), int(hi))
        if kind == "real":
            lo, hi = rest.split("..")
            return Interval(float(lo), float(hi))
        if kind == "enum":
            return Enumeration(tuple(v.strip() for v in rest.split(",") if v.strip()))
    except ValueError as exc:
        raise SpecFileError(f"attributes.{name}: {exc}") from None
    raise SpecFileError(f"attributes.{name}: unknown domain kind {kind!r}")


_CELL = re.compile(r"^\s*([^@\s]+)\s*@\s*(k(?:\s*-\s*\d+)?|\d+)\s*$")


def _cell(text, blocks, where):
    m = _CELL.match(text)
    if not m:
        raise SpecFileError(f"{where}: malformed cell {text!r}")
    name, when = m.groups()
    if name not in blocks:
        raise SpecFileError(f"{where}: unknown block {name!r}")
    when = when.replace(" ", "")
    if when.startswith("k"):
        offset = -int(when[2:]) if len(when) > 1 else 0
        return blocks[name], ("k", offset)
    return blocks[name], int(when)


def parse_system_spec(text: str) -> SystemSpec:
    cp = configparser.ConfigParser(delimiters=("=",), comment_prefixes=("#",),
                                   inline_comment_prefixes=("#",), empty_lines_in_values=False)
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise SpecFileError(str(exc)) from None
    unknown = set(cp.sections()) - {"time", "attributes", "blocks", "causes", "bonds", "cut"}
    if unknown:
        raise SpecFileError(f"unknown sections: {sorted(unknown)}")
    for sec in ("time", "attributes"):
        if not cp.has_section(sec):
            raise SpecFileError(f"missing section [{sec}]")
    try:
        raw = cp["time"]["instants"]
    except KeyError:
        raise SpecFileError("time.instants is required") from None
    tb = make_timebase(_number(t.strip()) for t in raw.split(",") if t.strip())

    names = list(cp["attributes"])
    inertial_of = {}
    attrs = []
    for name in names:
        attrs.append(Attribute(name, _domain(cp["attributes"][name], name)))
    aset = AttributeSet(tuple(attrs))
    index = {a.name: i for i, a in enumerate(attrs)}

    decomp = None
    if cp.has_section("blocks"):
        blocks, bindex = [], {}
        for bname, val in cp["blocks"].items():
            members, _, kind = val.partition(";")
            kind = kind.strip() or "inertial"
            if kind not in ("inertial", "static"):
                raise SpecFileError(f"blocks.{bname}: kind must be 'inertial' or 'static'")
            ids = []
            for a in (s.strip() for s in members.split(",")):
                if a:
                    if a not in index:
                        raise SpecFileError(f"blocks.{bname}: unknown attribute {a!r}")
                    ids.append(index[a])
                    inertial_of[a] = kind == "inertial"
            bindex[bname] = len(blocks)
            blocks.append(Block(frozenset(ids), kind == "inertial", bname))
        causes = {}
        templates = {}
        if cp.has_section("causes"):
            for key, val in cp["causes"].items():
                l, when = _cell(key, bindex, f"causes.{key}")
                refs = [_cell(r, bindex, f"causes.{key}") for r in val.split(",") if r.strip()]
                if isinstance(when, tuple):
                    if when[1] != 0:
                        raise SpecFileError(f"causes.{key}: template cells are written BLOCK@k")
                    templates[l] = refs
                else:
                    if any(isinstance(w, tuple) for _, w in refs):
                        raise SpecFileError(f"causes.{key}: explicit cells need explicit causes")
                    causes[(when, l)] = frozenset((w, b) for b, w in refs)
        for l, refs in templates.items():
            shift = max((-w[1] for _, w in refs if isinstance(w, tuple)), default=0)
            for k in range(shift, len(tb)):
                if (k, l) not in causes:
                    causes[(k, l)] = frozenset(
                        (k + w[1] if isinstance(w, tuple) else w, b) for b, w in refs)
        decomp = CausalDecomposition(len(aset), len(tb), tuple(blocks), causes)
        aset = AttributeSet(tuple(Attribute(a.name, a.domain, inertial_of.get(a.name)) for a in attrs))

    graph = None
    if cp.has_section("bonds"):
        edges = {}
        for bname, val in cp["bonds"].items():
            src, arrow, dst = val.partition("->")
            if not arrow:
                raise SpecFileError(f"bonds.{bname}: expected 'source -> target'")
            edges[bname] = (src.strip(), dst.strip())
        try:
            graph = SystemGraph.from_edges(names, edges)
        except KernelError as exc:
            raise SpecFileError(f"bonds: {exc}") from None

    cut = ()
    if cp.has_section("cut"):
        cut = tuple(s.strip() for s in cp["cut"].get("bonds", "").split(",") if s.strip())
        if cut and graph is None:
            raise SpecFileError("cut: no [bonds] section")
    return SystemSpec(tb, aset, decomp, graph, cut)


def load_system_spec(path) -> SystemSpec:
    return parse_system_spec(Path(path).read_text())


def check_system(spec: SystemSpec) -> dict:
    """Validation report as a JSON-ready dict."""
    report = {
        "instants": len(spec.timebase),
        "attributes": [{"name": a.name, "domain": str(a.domain), "inertial": a.inertial}
                       for a in spec.attributes],
    }
    ok = True
    if spec.decomposition is not None:
        causal = validate_causality(spec.decomposition).to_dict()
        report["causality"] = causal
        ok = ok and causal["ok"]
    if spec.graph is not None:
        subs = cut_bonds(spec.graph, spec.cut)
        report["cut"] = list(spec.cut)
        report["subsystems"] = [s.to_dict(spec.graph.attributes) for s in subs]
    report["ok"] = ok
    return report

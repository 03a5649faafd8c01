import random

import pytest

from hierobf.netlist import (
    CombinationalCycleError, Instance, ModuleDef, Netlist, NetlistError, PortDecl, flatten, netlist_hash,
    structural_hash, topo_order, validate,
)
from hierobf.verilog import parse

from conftest import gv

TWO_GATE = """
module t(a, b, c, y);
  input a, b, c;
  output y;
  wire n;
  AND2_X1 g0(.A(a), .B(b), .Y(n));
  OR2_X1 g1(.A(n), .B(c), .Y(y));
endmodule
"""


def _mod(instances, ins=("a", "b"), outs=("y",), nets=()):
    ports = tuple(PortDecl(p, "input") for p in ins) + tuple(PortDecl(p, "output") for p in outs)
    return ModuleDef("m", ports, frozenset(nets), tuple(instances))


def _errors(nl, lib):
    return [d for d in validate(nl, lib) if d.severity == "error"]


def test_well_formed_netlist_validates(lib):
    assert validate(gv(TWO_GATE, lib), lib) == []


def test_multiple_drivers(lib):
    m = _mod([Instance("u1", "INV_X1", {"A": "a", "Y": "y"}), Instance("u2", "INV_X1", {"A": "b", "Y": "y"})])
    errs = _errors(Netlist.single(m), lib)
    assert len(errs) == 1
    assert "multiple drivers on net y" in errs[0].message


def test_unknown_pin(lib):
    m = _mod([Instance("u1", "INV_X1", {"A": "a", "Y": "y", "Z": "b"})])
    errs = _errors(Netlist.single(m), lib)
    assert len(errs) == 1 and "unknown pin" in errs[0].message


def test_undriven_output(lib):
    m = _mod([], outs=("y",))
    assert any("no driver" in d.message for d in _errors(Netlist.single(m), lib))


def test_recursive_hierarchy_rejected(lib):
    a = ModuleDef("A", (PortDecl("x", "input"),), frozenset(), (Instance("ub", "B", {"x": "x"}, hier=True),))
    b = ModuleDef("B", (PortDecl("x", "input"),), frozenset(), (Instance("ua", "A", {"x": "x"}, hier=True),))
    nl = Netlist("A", {"A": a, "B": b}, "A")
    assert _errors(nl, lib)
    with pytest.raises(NetlistError):
        flatten(nl)


def test_combinational_cycle_detected(lib):
    m = _mod(
        [Instance("u1", "AND2_X1", {"A": "a", "B": "n2", "Y": "n1"}), Instance("u2", "INV_X1", {"A": "n1", "Y": "n2"}),
         Instance("u3", "BUF_X1", {"A": "n2", "Y": "y"})],
        nets=("n1", "n2"),
    )
    with pytest.raises(CombinationalCycleError):
        topo_order(m, lib)
    assert any("cycle" in d.message.lower() for d in _errors(Netlist.single(m), lib))


def test_flatten_two_children(lib):
    text = open("tests/corpus/hier2.gv").read()
    flat = flatten(parse(text, lib))
    mod = flat.top_module
    assert len(flat.modules) == 1 and mod.is_flat
    names = sorted(i.name for i in mod.instances)
    assert names == ["u0/g", "u1/g"]
    assert all(i.ref == "AND2_X1" for i in mod.instances)


def test_flatten_renames_internal_nets(lib):
    text = """
    module leaf(a, y); input a; output y; wire m;
      INV_X1 i0(.A(a), .Y(m)); INV_X1 i1(.A(m), .Y(y));
    endmodule
    module top(a, y); input a; output y; leaf u(.a(a), .y(y)); endmodule
    """
    mod = flatten(parse(text, lib)).top_module
    assert "u/m" in mod.nets


def test_flatten_of_flat_is_identity(lib):
    nl = gv(TWO_GATE, lib)
    assert netlist_hash(flatten(nl)) == structural_hash(nl.top_module)


def test_hash_rename_invariant(lib):
    nl = gv(TWO_GATE, lib)
    mod = nl.top_module
    ren = {n: n + "_x" for n in mod.nets}
    inst = tuple(
        i.with_(name=i.name + "_x", connections={p: ren.get(n, n) for p, n in i.connections.items()})
        for i in mod.instances
    )
    other = ModuleDef(mod.name + "_x", mod.ports, frozenset(ren.values()), inst)
    assert structural_hash(other) == structural_hash(mod)


def test_hash_and_vs_or_differs(lib):
    a = _mod([Instance("g", "AND2_X1", {"A": "a", "B": "b", "Y": "y"})])
    o = _mod([Instance("g", "OR2_X1", {"A": "a", "B": "b", "Y": "y"})])
    assert structural_hash(a) != structural_hash(o)


def test_hash_order_invariant(lib):
    mod = gv(TWO_GATE, lib).top_module
    rev = ModuleDef(mod.name, mod.ports, mod.nets, tuple(reversed(mod.instances)))
    assert structural_hash(rev) == structural_hash(mod)


def test_topo_order_valid_on_corpus(corpus, lib):
    for _, nl in corpus:
        mod = flatten(nl).top_module
        order = topo_order(mod, lib)
        pos = {n: k for k, n in enumerate(order)}
        drivers = {}
        for i in mod.instances:
            for p in lib[i.ref].outputs:
                if p in i.connections:
                    drivers[i.connections[p]] = i.name
        for i in mod.instances:
            if i.name not in pos:
                continue
            for p in lib[i.ref].inputs:
                d = drivers.get(i.connections.get(p))
                if d in pos:
                    assert pos[d] < pos[i.name]


def test_hash_detects_single_gate_mutations(corr, lib):
    """No single-gate mutation of a ~550-gate design collides with the original."""
    mod = flatten(corr).top_module
    base = structural_hash(mod)
    swaps = {"AND2_X1": "OR2_X1", "OR2_X1": "AND2_X1", "XOR2_X1": "XOR2_X2", "INV_X1": "INV_X2",
             "MUX2_X1": "MUX2_X2", "NAND2_X1": "NOR2_X1", "DFF_X1": "DFF_X2", "AND2_X2": "AND2_X1"}
    cands = [k for k, i in enumerate(mod.instances) if i.ref in swaps]
    rng = random.Random(0)
    picks = [rng.choice(cands) for _ in range(1000)]
    insts = list(mod.instances)
    seen = set()
    for k in picks:
        i = insts[k]
        mutated = insts[:k] + [i.with_(ref=swaps[i.ref])] + insts[k + 1:]
        h = structural_hash(ModuleDef(mod.name, mod.ports, mod.nets, tuple(mutated)))
        assert h != base
        seen.add(k)
    assert len(seen) > 300

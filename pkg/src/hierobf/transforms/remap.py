"""Replace every instance of banned cells by its cheapest functional substitute."""

from __future__ import annotations

from ..library import CellLibrary, Decomposition, SameFunction, functional_equivalents
from ..netlist import Instance, ModuleDef, Netlist
from . import PassError, PassResult


def _expand(inst: Instance, sub: Decomposition, lib: CellLibrary, taken: set[str], nets: set[str]) -> list[Instance]:
    def fresh(base: str) -> str:
        k = 0
        name = base
        while name in taken:
            k += 1
            name = f"{base}_{k}"
        taken.add(name)
        return name

    out_of_node = {}
    for orig_pin, (idx, node_pin) in sub.outputs:
        if orig_pin in inst.connections:
            out_of_node[(idx, node_pin)] = inst.connections[orig_pin]
    root = sub.outputs[0][1][0]
    names = []
    node_nets = []
    for idx, (cell, _conns) in enumerate(sub.nodes):
        names.append(inst.name if idx == root else fresh(f"{inst.name}_d{idx}"))
        pin = lib[cell].output
        net = out_of_node.get((idx, pin))
        if net is None:
            net = fresh(f"{inst.name}_dn{idx}")
            nets.add(net)
        node_nets.append(net)
    result = []
    for idx, (cell, conns) in enumerate(sub.nodes):
        spec = lib[cell]
        c = {}
        for pin, src in conns:
            c[pin] = inst.connections[src[1]] if src[0] == "pin" else node_nets[src[1]]
        c[spec.output] = node_nets[idx]
        for (n_idx, n_pin), net in out_of_node.items():
            if n_idx == idx:
                c[n_pin] = net
        init = inst.init if spec.kind == "ff" else 0
        result.append(Instance(names[idx], cell, c, init=init))
    return result


def apply_dont_use_remap(netlist: Netlist, lib: CellLibrary) -> PassResult:
    """Remap banned cells module by module; hierarchy is preserved."""
    chosen: dict[str, object] = {}
    log: list[str] = []
    modules = {}
    for mname, mod in netlist.modules.items():
        if not any(not i.hier and i.ref in lib.banned for i in mod.instances):
            modules[mname] = mod
            continue
        taken = {i.name for i in mod.instances} | set(mod.nets) | set(mod.port_bits())
        nets = set(mod.nets)
        insts: list[Instance] = []
        for inst in mod.instances:
            if inst.hier or inst.ref not in lib.banned:
                insts.append(inst)
                continue
            if inst.ref not in chosen:
                subs = functional_equivalents(lib, inst.ref)
                if not subs:
                    raise PassError(f"no available substitute for banned cell {inst.ref}")
                chosen[inst.ref] = subs[0]
            sub = chosen[inst.ref]
            if isinstance(sub, SameFunction):
                insts.append(inst.with_(ref=sub.cell))
            else:
                insts.extend(_expand(inst, sub, lib, taken, nets))
        modules[mname] = ModuleDef(mname, mod.ports, frozenset(nets), tuple(sorted(insts, key=lambda i: i.name)))
    for cell, sub in sorted(chosen.items()):
        what = sub.cell if isinstance(sub, SameFunction) else " + ".join(sub.cells())
        log.append(f"dont-use: {cell} -> {what}")
    return PassResult(netlist=Netlist(netlist.name, modules, netlist.top), latency=0, log=log)

"""Greedy move-based retiming.

A forward move replaces the flops on every input of a gate by one flop on its output
(initial value = gate(initial values)). A backward move, allowed only across
buffers and inverters, merges the flops fed by the gate into one flop on its input.
Both keep cycle-exact I/O behaviour, so the reported latency is always 0.
Flops are compatible when they share cell type and clock net; a shared clock net
implies shared gating, so moves stay legal behind a clock gate.
"""

from __future__ import annotations

from ..library import CellLibrary
from ..netlist import CONSTS, Connectivity, FlatEditor, ModuleDef, Netlist, flat_top
from ..ppa import analyze_timing
from . import PassResult

EPS = 1e-9


def _flop_driver(conn: Connectivity, net: str):
    """The flop whose Q drives ``net``, if any."""
    d = conn.driver.get(net)
    if d is None or d[1] != "Q" or conn.spec(d[0]).kind != "ff":
        return None
    return conn.insts[d[0]]


def forward_candidates(conn: Connectivity) -> list[str]:
    clock_nets = conn.clock_nets()
    out = []
    for name in sorted(conn.insts):
        spec = conn.spec(name)
        if spec.kind not in ("combinational", "buf", "inv"):
            continue
        inst = conn.insts[name]
        y = inst.connections.get(spec.output)
        if y is None or y in clock_nets:
            continue
        flops = []
        ok = True
        for pin in spec.inputs:
            net = inst.connections[pin]
            if net in CONSTS:
                continue
            f = _flop_driver(conn, net)
            if f is None:
                ok = False
                break
            flops.append(f)
        if not ok or not flops:
            continue
        if len({(f.ref, f.connections["CK"]) for f in flops}) != 1:
            continue
        out.append(name)
    return out


def backward_candidates(conn: Connectivity) -> list[str]:
    clock_nets = conn.clock_nets()
    out = []
    for name in sorted(conn.insts):
        spec = conn.spec(name)
        if spec.kind not in ("buf", "inv"):
            continue
        inst = conn.insts[name]
        y = inst.connections.get(spec.output)
        x = inst.connections[spec.inputs[0]]
        if y is None or y in conn.po or y in clock_nets or x in clock_nets:
            continue
        sinks = conn.fanout(y)
        if not sinks or any(p != "D" or conn.spec(i).kind != "ff" for i, p in sinks):
            continue
        flops = [conn.insts[i] for i, _ in sinks]
        if len({(f.ref, f.connections["CK"], f.init) for f in flops}) != 1:
            continue
        if any(f.connections.get("QN") for f in flops):
            continue
        qs = [f.connections.get("Q") for f in flops]
        if sum(1 for q in qs if q in conn.po) > 1:
            continue
        out.append(name)
    return out


def forward_move(mod: ModuleDef, lib: CellLibrary, conn: Connectivity, gate: str) -> ModuleDef:
    ed = FlatEditor(mod, lib)
    inst = conn.insts[gate]
    spec = lib[inst.ref]
    y = inst.connections[spec.output]
    flops = {}
    args = []
    for pin in spec.inputs:
        net = inst.connections[pin]
        if net in CONSTS:
            args.append(1 if net == "const1" else 0)
            continue
        f = conn.insts[conn.driver[net][0]]
        flops[f.name] = f
        args.append(f.init)
        ed.set_pin(gate, pin, f.connections["D"])
    init = spec.evaluator()(1, *args) & 1
    first = flops[min(flops)]
    ny = ed.new_net(f"{y}_rt")
    ed.set_pin(gate, spec.output, ny)
    ed.add(f"{gate}_rt_reg", first.ref, {"D": ny, "CK": first.connections["CK"], "Q": y}, init=init)
    after = ed.index()
    for name, f in sorted(flops.items()):
        q = f.connections.get("Q")
        if not after.fanout(q) and q not in after.po and not f.connections.get("QN"):
            ed.remove(name)
    return ed.build()


def backward_move(mod: ModuleDef, lib: CellLibrary, conn: Connectivity, gate: str) -> ModuleDef:
    ed = FlatEditor(mod, lib)
    inst = conn.insts[gate]
    spec = lib[inst.ref]
    x = inst.connections[spec.inputs[0]]
    y = inst.connections[spec.output]
    flops = sorted({i for i, _ in conn.fanout(y)})
    first = conn.insts[flops[0]]
    qs = [conn.insts[f].connections.get("Q") for f in flops]
    live = [q for q in qs if q is not None]
    pos = [q for q in live if q in conn.po]
    survivor = pos[0] if pos else (live[0] if live else ed.new_net(f"{gate}_rt_q"))
    for f, q in zip(flops, qs):
        ed.remove(f)
        if q is None or q == survivor:
            continue
        for i, p in conn.fanout(q):
            ed.set_pin(i, p, survivor)
    init = first.init if spec.kind == "buf" else 1 - first.init
    nx = ed.new_net(f"{x}_rt")
    ed.add(f"{gate}_rt_reg", first.ref, {"D": x, "CK": first.connections["CK"], "Q": nx}, init=init)
    ed.set_pin(gate, spec.inputs[0], nx)
    ed.set_pin(gate, spec.output, survivor)
    return ed.build()


def _ff_count(mod: ModuleDef, lib: CellLibrary) -> int:
    return sum(1 for i in mod.instances if lib[i.ref].kind == "ff")


def _retime(netlist: Netlist, lib: CellLibrary, max_iters: int, target: str) -> PassResult:
    mod = flat_top(netlist)
    log: list[str] = []
    timing = analyze_timing(mod, lib)
    cp = timing.critical_path
    start_cp, start_ffs = cp, _ff_count(mod, lib)
    for _ in range(max_iters):
        conn = Connectivity(mod, lib)
        fwd = forward_candidates(conn)
        bwd = backward_candidates(conn)
        moves = []
        if target == "delay":
            ends = timing.critical_endpoints()
            crit = {n for e in ends for n in timing.critical_nets(e)}
            for g in fwd:
                if conn.insts[g].connections[conn.spec(g).output] in crit:
                    moves.append(("forward", g))
            for g in bwd:
                if conn.insts[g].connections[conn.spec(g).output] in ends:
                    moves.append(("backward", g))
            score = (cp, len(ends))
        else:
            nffs = _ff_count(mod, lib)
            for g in fwd:
                spec = conn.spec(g)
                flops = {conn.driver[n][0] for p, n in conn.insts[g].connections.items() if p in spec.inputs and n not in CONSTS}
                only_here = {(g, p) for p in spec.inputs}
                if len(flops) >= 2 and all(
                    set(conn.fanout(conn.insts[f].connections["Q"])) <= only_here
                    and conn.insts[f].connections["Q"] not in conn.po
                    for f in flops
                ):
                    moves.append(("forward", g))
            for g in bwd:
                if len(conn.fanout(conn.insts[g].connections[conn.spec(g).output])) >= 2:
                    moves.append(("backward", g))
        accepted = None
        for kind, g in moves:
            cand = forward_move(mod, lib, conn, g) if kind == "forward" else backward_move(mod, lib, conn, g)
            t = analyze_timing(cand, lib)
            if target == "delay":
                # lexicographic: shorter critical path, else fewer endpoints tied at it
                new = (t.critical_path, len(t.critical_endpoints()))
                ok = new[0] < cp - EPS or (new[0] <= cp + EPS and new[1] < score[1])
            else:
                ok = _ff_count(cand, lib) < nffs and t.critical_path <= cp + EPS
            if ok:
                accepted = (kind, g, cand, t)
                break
        if accepted is None:
            break
        kind, g, mod, timing = accepted
        log.append(f"retime-{target}: {kind} across {g}, critical path {cp:.1f} -> {timing.critical_path:.1f} ps")
        cp = min(cp, timing.critical_path)
    log.append(
        f"retime-{target}: {len(log)} move(s), critical path {start_cp:.1f} -> {cp:.1f} ps, "
        f"flops {start_ffs} -> {_ff_count(mod, lib)}"
    )
    return PassResult(netlist=Netlist(netlist.name, {mod.name: mod}, mod.name), latency=0, log=log)


def retime_min_delay(netlist: Netlist, lib: CellLibrary, max_iters: int = 50) -> PassResult:
    return _retime(netlist, lib, max_iters, "delay")


def retime_min_area(netlist: Netlist, lib: CellLibrary, max_iters: int = 50) -> PassResult:
    return _retime(netlist, lib, max_iters, "area")

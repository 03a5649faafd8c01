"""Associative gate-tree rebalancing (the datapath optimisation stand-in)."""

from __future__ import annotations

import heapq

from ..library import CellLibrary, CellSpec
from ..netlist import Connectivity, FlatEditor, Netlist, flat_top
from ..ppa import analyze_timing
from . import PassResult

THRESHOLDS = {"basic": 4, "extreme": 2}


def gate_family(spec: CellSpec) -> str | None:
    """'and' / 'or' / 'xor' for n-input (n >= 2) AND, OR and parity cells."""
    if spec.kind != "combinational" or len(spec.inputs) < 2:
        return None
    n = len(spec.inputs)
    rows = 1 << n
    t = spec.table()
    if t == 1 << (rows - 1):
        return "and"
    if t == ((1 << rows) - 1) ^ 1:
        return "or"
    parity = 0
    for r in range(rows):
        if bin(r).count("1") % 2:
            parity |= 1 << r
    if t == parity:
        return "xor"
    return None


def _collect(conn: Connectivity, root: str, fam: str, families: dict) -> tuple[list[str], list[str]]:
    gates, operands = [], []

    def walk(g: str) -> None:
        gates.append(g)
        inst = conn.insts[g]
        for pin in conn.spec(g).inputs:
            net = inst.connections[pin]
            d = conn.driver.get(net)
            if (
                d is not None
                and families.get(d[0]) == fam
                and len(conn.fanout(net)) == 1
                and net not in conn.po
            ):
                walk(d[0])
            else:
                operands.append(net)

    walk(root)
    return gates, operands


def _tree_delay(conn: Connectivity, g: str, arrival: dict, est: dict) -> float:
    inst = conn.insts[g]
    best = 0.0
    for pin in conn.spec(g).inputs:
        net = inst.connections[pin]
        d = conn.driver.get(net)
        a = est[d[0]] if d and d[0] in est else arrival.get(net, 0.0)
        best = max(best, a)
    return best


def apply_rebalance(netlist: Netlist, lib: CellLibrary, level: str = "extreme") -> PassResult:
    mod = flat_top(netlist)
    conn = Connectivity(mod, lib)
    arrival = analyze_timing(mod, lib).arrival
    families = {}
    for inst in mod.instances:
        fam = gate_family(lib[inst.ref])
        if fam:
            families[inst.name] = fam
    roots = []
    for g, fam in sorted(families.items()):
        out = conn.insts[g].connections.get(conn.spec(g).output)
        sinks = conn.fanout(out) if out else []
        if len(sinks) == 1 and out not in conn.po and families.get(sinks[0][0]) == fam:
            continue
        roots.append(g)
    ed = FlatEditor(mod, lib)
    log: list[str] = []
    threshold = THRESHOLDS[level]
    for root in roots:
        fam = families[root]
        gates, operands = _collect(conn, root, fam, families)
        wide = [g for g in gates if len(conn.spec(g).inputs) > 2]
        if len(operands) < max(threshold, 3) and not (level == "extreme" and wide):
            continue
        if level == "basic" and wide:
            continue
        two = sorted(
            (conn.spec(g) for g in gates if len(conn.spec(g).inputs) == 2 and lib.is_available(conn.spec(g).name)),
            key=lambda c: (c.area, c.name),
        )
        if not two:
            two = [c for c in lib.available("combinational") if len(c.inputs) == 2 and gate_family(c) == fam]
        if not two:
            continue
        cell = two[0]
        step = cell.intrinsic_delay + cell.drive_res * cell.input_caps[cell.inputs[0]]
        # current depth estimate with the same per-gate cost
        old_est: dict[str, float] = {}
        for g in reversed(gates):
            old_est[g] = _tree_delay(conn, g, arrival, old_est) + step
        old = old_est[root]
        heap = [(arrival.get(net, 0.0), k, net) for k, net in enumerate(operands)]
        heapq.heapify(heap)
        plan = []
        seq = len(operands)
        while len(heap) > 1:
            a1, _, n1 = heapq.heappop(heap)
            a2, _, n2 = heapq.heappop(heap)
            plan.append((n1, n2))
            heapq.heappush(heap, (max(a1, a2) + step, seq, ("tmp", len(plan) - 1)))
            seq += 1
        new = heap[0][0]
        if not (new < old - 1e-9 or (level == "extreme" and wide)):
            continue
        root_inst = conn.insts[root]
        out_net = root_inst.connections[conn.spec(root).output]
        for g in gates:
            ed.remove(g)
        tmp_nets = []
        for k, (x, y) in enumerate(plan):
            last = k == len(plan) - 1
            net = out_net if last else ed.new_net(f"{root}_rb{k}_n")
            tmp_nets.append(net)
            src = [tmp_nets[s[1]] if isinstance(s, tuple) else s for s in (x, y)]
            name = root if last else f"{root}_rb{k}"
            ed.add(name, cell.name, {cell.inputs[0]: src[0], cell.inputs[1]: src[1], cell.output: net})
        log.append(f"rebalance: {root} {fam} tree of {len(operands)} operands, est {old:.1f} -> {new:.1f} ps")
    if not log:
        log.append("rebalance: no trees changed")
    return PassResult(netlist=ed.netlist(), latency=0, log=log)

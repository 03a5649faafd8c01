"""Replace enable-recirculation logic in front of flip-flops by clock gates."""

from __future__ import annotations

from ..library import CellLibrary
from ..netlist import Connectivity, FlatEditor, Netlist, flat_top
from . import PassError, PassResult

MAX_CONE_DEPTH = 4


def _cone(conn: Connectivity, root: str, depth: int, clock_nets: set[str]) -> tuple[list[str], list[str]] | None:
    """Gates within ``depth`` levels above ``root`` that feed nothing else, and the cut leaves."""
    gates: list[str] = []
    leaves: list[str] = []
    frontier = [(root, 1)]
    while frontier:
        g, lvl = frontier.pop(0)
        gates.append(g)
        inst = conn.insts[g]
        for pin in conn.spec(g).inputs:
            net = inst.connections[pin]
            d = conn.driver.get(net)
            expandable = (
                lvl < depth
                and d is not None
                and conn.spec(d[0]).kind in ("combinational", "buf", "inv")
                and len(conn.fanout(net)) == 1
                and net not in conn.po
                and net not in clock_nets
                and d[0] not in gates
            )
            if expandable:
                frontier.append((d[0], lvl + 1))
            elif net not in leaves:
                leaves.append(net)
    return gates, leaves


def _cone_table(conn: Connectivity, gates: list[str], leaves: list[str]) -> int:
    n = len(leaves)
    rows = 1 << n
    mask = (1 << rows) - 1
    vals = {}
    for k, leaf in enumerate(leaves):
        bits = 0
        for r in range(rows):
            if (r >> k) & 1:
                bits |= 1 << r
        vals[leaf] = bits
    # gates were collected breadth-first from the root; evaluate in reverse
    for g in reversed(gates):
        inst = conn.insts[g]
        spec = conn.spec(g)
        args = [vals[inst.connections[p]] for p in spec.inputs]
        vals[inst.connections[spec.output]] = spec.evaluator()(mask, *args) & mask
    root = gates[0]
    return vals[conn.insts[root].connections[conn.spec(root).output]]


def _match_enable(table: int, leaves: list[str], q: str) -> tuple[str, int, str] | None:
    """(enable net, polarity, data net) when the cone is ``en ? data : q``."""
    iq = leaves.index(q)
    others = [k for k in range(3) if k != iq]
    for ie, idata in (others, others[::-1]):
        for pol in (1, 0):
            ok = True
            for r in range(8):
                bits = [(r >> k) & 1 for k in range(3)]
                want = bits[idata] if bits[ie] == pol else bits[iq]
                if ((table >> r) & 1) != want:
                    ok = False
                    break
            if ok:
                return leaves[ie], pol, leaves[idata]
    return None


def find_candidates(conn: Connectivity) -> dict[tuple, list[tuple[str, list[str], str]]]:
    """Group gateable flops by (clock, enable, polarity)."""
    clock_nets = conn.clock_nets()
    groups: dict[tuple, list] = {}
    for ff in sorted(conn.flops(), key=lambda i: i.name):
        q = ff.connections.get("Q")
        d = ff.connections["D"]
        _root, enables = conn.clock_path(ff.connections["CK"])
        if q is None or enables or ff.connections.get("QN"):
            continue
        drv = conn.driver.get(d)
        if drv is None or conn.spec(drv[0]).kind not in ("combinational", "buf", "inv"):
            continue
        if len(conn.fanout(d)) != 1 or d in conn.po:
            continue
        for depth in range(1, MAX_CONE_DEPTH + 1):
            gates, leaves = _cone(conn, drv[0], depth, clock_nets)
            if len(leaves) != 3 or q not in leaves:
                continue
            m = _match_enable(_cone_table(conn, gates, leaves), leaves, q)
            if m:
                en, pol, data = m
                groups.setdefault((ff.connections["CK"], en, pol), []).append((ff.name, gates, data))
                break
    return groups


def apply_clock_gating(netlist: Netlist, lib: CellLibrary, min_group: int = 3) -> PassResult:
    icg = lib.smallest("icg")
    if icg is None:
        raise PassError("clock gating needs an available clock-gate (icg) cell")
    mod = flat_top(netlist)
    conn = Connectivity(mod, lib)
    groups = find_candidates(conn)
    ed = FlatEditor(mod, lib)
    log: list[str] = []
    inv = lib.smallest("inv")
    for k, key in enumerate(sorted(groups)):
        members = groups[key]
        clock, en, pol = key
        if len(members) < min_group:
            log.append(f"clock-gating: skip enable {en} ({len(members)} < {min_group} flops)")
            continue
        enable = en
        if pol == 0:
            enable = ed.new_net(f"cg{k}_en_n")
            ed.add(f"cg{k}_inv", inv.name, {inv.inputs[0]: en, inv.output: enable})
        gclk = ed.new_net(f"cg{k}_gclk")
        cg = ed.add(f"cg{k}", icg.name, {"CK": clock, "E": enable, icg.output: gclk})
        for ff, gates, data in members:
            for g in gates:
                ed.remove(g)
            ed.set_pin(ff, "D", data)
            ed.set_pin(ff, "CK", gclk)
        log.append(f"clock-gating: {cg} gates {len(members)} flops on enable {en}")
    if not groups:
        log.append("clock-gating: no candidates")
    return PassResult(netlist=ed.netlist(), latency=0, log=log)

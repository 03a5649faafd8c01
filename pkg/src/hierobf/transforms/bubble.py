"""Absorb inverters at flip-flop outputs and inputs into flop polarity."""

from __future__ import annotations

from ..library import CellLibrary
from ..netlist import Connectivity, FlatEditor, Netlist, flat_top
from . import PassError, PassResult


def _qn_cell(lib: CellLibrary, current: str) -> str | None:
    if lib[current].has_qn and lib.is_available(current):
        return current
    cands = [c for c in lib.available("ff") if c.has_qn]
    return cands[0].name if cands else None


def apply_bubble_push(netlist: Netlist, lib: CellLibrary) -> PassResult:
    inv = lib.smallest("inv")
    mod = flat_top(netlist)
    conn = Connectivity(mod, lib)
    if inv is None and not any(c.has_qn for c in lib.available("ff")):
        raise PassError("bubble pushing needs a QN flip-flop or an inverter")
    ed = FlatEditor(mod, lib)
    log: list[str] = []
    done: set[str] = set()
    removed: set[str] = set()

    def single_inv_driver(net: str) -> str | None:
        d = conn.driver.get(net)
        if d is None or d[0] in removed or conn.spec(d[0]).kind != "inv":
            return None
        if len(conn.fanout(net)) != 1 or net in conn.po:
            return None
        return d[0]

    # output side: Q feeds only inverters
    for ff in sorted(conn.flops(), key=lambda i: i.name):
        q = ff.connections.get("Q")
        if q is None or ff.connections.get("QN") or q in conn.po:
            continue
        sinks = conn.fanout(q)
        if not sinks or any(conn.spec(s).kind != "inv" or s in removed for s, _ in sinks):
            continue
        invs = sorted({s for s, _ in sinks})
        outs = [conn.insts[s].connections.get(conn.spec(s).output) for s in invs]
        outs = [o for o in outs if o is not None]
        if not outs:
            continue
        pos = [o for o in outs if o in conn.po]
        if len(pos) > 1:
            continue
        survivor = pos[0] if pos else outs[0]
        if any(o == q for o in outs):
            continue
        for s in invs:
            ed.remove(s)
            removed.add(s)
        for o in outs:
            if o == survivor:
                continue
            for inst, pin in conn.fanout(o):
                if inst == ff.name and pin == "D":
                    ed.set_pin(ff.name, "D", survivor)
                else:
                    ed.set_pin(inst, pin, survivor)
        qn_cell = _qn_cell(lib, ff.ref)
        if qn_cell is not None:
            ed.replace(ff.name, ref=qn_cell)
            ed.set_pin(ff.name, "Q", None)
            ed.set_pin(ff.name, "QN", survivor)
            log.append(f"bubble-push: {ff.name} drives {len(invs)} inverted load(s) from QN ({qn_cell})")
        else:
            d = ed.insts[ff.name].connections["D"]
            drv = single_inv_driver(d)
            if drv is not None and drv not in invs:
                ed.remove(drv)
                removed.add(drv)
                ed.set_pin(ff.name, "D", conn.insts[drv].connections[conn.spec(drv).inputs[0]])
            else:
                nd = ed.new_net(f"{ff.name}_bp_d")
                ed.add(f"{ff.name}_bp_inv", inv.name, {inv.inputs[0]: d, inv.output: nd})
                ed.set_pin(ff.name, "D", nd)
            ed.set_pin(ff.name, "Q", survivor)
            ed.replace(ff.name, init=1 - ff.init)
            log.append(f"bubble-push: {ff.name} polarity flipped, {len(invs)} output inverter(s) absorbed")
        done.add(ff.name)

    # input side: an inverter feeds only D
    for ff in sorted(conn.flops(), key=lambda i: i.name):
        if ff.name in done:
            continue
        drv = single_inv_driver(ff.connections["D"])
        if drv is None:
            continue
        cur = ed.insts[ff.name]
        q, qn = cur.connections.get("Q"), cur.connections.get("QN")
        x = conn.insts[drv].connections[conn.spec(drv).inputs[0]]
        qn_cell = _qn_cell(lib, cur.ref)
        if q is not None and qn_cell is None and inv is None:
            continue
        ed.remove(drv)
        removed.add(drv)
        ed.set_pin(ff.name, "D", x)
        ed.replace(ff.name, init=1 - cur.init)
        if qn_cell is not None:
            ed.replace(ff.name, ref=qn_cell)
            ed.set_pin(ff.name, "Q", qn)
            ed.set_pin(ff.name, "QN", q)
        elif q is not None:
            nq = ed.new_net(f"{ff.name}_bp_q")
            ed.set_pin(ff.name, "Q", nq)
            ed.add(f"{ff.name}_bp_qinv", inv.name, {inv.inputs[0]: nq, inv.output: q})
        log.append(f"bubble-push: {ff.name} absorbed input inverter {drv}")
    if not log:
        log.append("bubble-push: no candidates")
    return PassResult(netlist=ed.netlist(), latency=0, log=log)

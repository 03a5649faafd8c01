"""Max-transition fixing by buffer-tree insertion."""

from __future__ import annotations

from ..library import CellLibrary
from ..netlist import Connectivity, FlatEditor, Netlist, flat_top
from ..ppa import analyze_timing
from . import PassError, PassResult

EPS = 1e-9


def _pack(items: list, caps: list[float], budget: float) -> list[list[int]]:
    bins: list[list[int]] = []
    load = 0.0
    for k, c in enumerate(caps):
        if bins and load + c <= budget + EPS:
            bins[-1].append(k)
            load += c
        else:
            bins.append([k])
            load = c
    return bins


def apply_max_transition(netlist: Netlist, lib: CellLibrary, limit: float) -> PassResult:
    """Buffer every net whose slew exceeds ``limit`` (ps), strongest buffer first."""
    if not limit > 0:
        raise ValueError("limit must be > 0")
    buf = lib.strongest("buf")
    if buf is None:
        raise PassError("max-transition fixing needs a buffer cell")
    mod = flat_top(netlist)
    ed = FlatEditor(mod, lib)
    log: list[str] = []
    warnings: list[str] = []
    buf_cap = buf.input_caps[buf.inputs[0]]
    buf_budget = limit / (lib.slew_factor * buf.drive_res)
    inserted = 0
    hopeless: set[str] = set()
    for _round in range(4):
        cur = ed.build()
        timing = analyze_timing(cur, lib)
        viol = sorted(n for n, s in timing.slew.items() if s > limit + EPS and n not in hopeless)
        if not viol:
            break
        conn = Connectivity(cur, lib)
        for net in viol:
            drv_spec = conn.driver_spec(net)
            drv_budget = limit / (lib.slew_factor * drv_spec.drive_res)
            sinks = list(conn.fanout(net))
            caps = [conn.spec(i).input_caps[p] for i, p in sinks]
            # level 0 items are real sinks; later levels are buffers we create
            level = [("sink", s) for s in sinks]
            level_caps = caps
            made = 0
            while sum(level_caps) > drv_budget + EPS:
                bins = _pack(level, level_caps, buf_budget)
                if len(bins) >= len(level):
                    break
                nxt = []
                for b in bins:
                    if len(b) == 1:
                        nxt.append(level[b[0]])
                        continue
                    out = ed.new_net(f"{net}_mt")
                    name = ed.add(f"mt_buf_{net}", buf.name, {buf.inputs[0]: net, buf.output: out})
                    made += 1
                    for k in b:
                        kind, what = level[k]
                        if kind == "sink":
                            ed.set_pin(what[0], what[1], out)
                        else:
                            ed.set_pin(what, buf.inputs[0], out)
                    nxt.append(("buf", name))
                level = nxt
                level_caps = [buf_cap if k == "buf" else conn.spec(w[0]).input_caps[w[1]] for k, w in level]
            if made:
                inserted += made
                log.append(f"max-transition: {net} slew {timing.slew[net]:.1f} ps, {made} buffer(s)")
            else:
                hopeless.add(net)
    final = analyze_timing(ed.build(), lib)
    bad = sorted(n for n, s in final.slew.items() if s > limit + EPS)
    for n in bad:
        warnings.append(f"max-transition: {n} slew {final.slew[n]:.1f} ps exceeds limit {limit} ps")
    if not inserted:
        log.append("max-transition: no buffers inserted")
    return PassResult(netlist=ed.netlist(), latency=0, log=log, warnings=warnings)

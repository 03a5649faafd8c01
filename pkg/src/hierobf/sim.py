"""Cycle-accurate two-phase simulation and the random-simulation equivalence oracle.

Net values are Python ints used as bit vectors, so one run simulates many
independent stimulus sequences at once (one per bit lane).
"""

from __future__ import annotations

import csv
import io
import random
from dataclasses import dataclass
from typing import Union

from .library import CellLibrary
from .netlist import CONST0, CONST1, Connectivity, Netlist, NetlistError, flat_top, topo_order


@dataclass(frozen=True)
class Trace:
    ports: tuple
    rows: tuple  # one tuple of 0/1 per cycle

    def __post_init__(self):
        for r in self.rows:
            if len(r) != len(self.ports):
                raise ValueError("trace row width does not match port count")

    def column(self, port: str) -> list[int]:
        k = self.ports.index(port)
        return [r[k] for r in self.rows]


@dataclass(frozen=True)
class Equivalent:
    vectors: int
    cycles: int

    def __bool__(self) -> bool:
        return True

    def __str__(self) -> str:
        return "Equivalent"


@dataclass(frozen=True)
class Mismatch:
    cycle: int
    port: str
    vector: int
    expected: int
    got: int
    stimulus: Trace  # inputs of the failing vector, cycles 0..cycle+latency

    def __bool__(self) -> bool:
        return False

    def __str__(self) -> str:
        return f"Mismatch(cycle={self.cycle}, port={self.port}, vector={self.vector}, expected={self.expected}, got={self.got})"


Verdict = Union[Equivalent, Mismatch]


class Simulator:
    """Compiled simulator for one flat netlist."""

    def __init__(self, netlist: Netlist, lib: CellLibrary):
        mod = flat_top(netlist)
        conn = Connectivity(mod, lib)
        self.module = mod
        clock_nets = conn.clock_nets()
        self.clocks = conn.clock_roots()
        bad = [c for c in self.clocks if c not in conn.pi]
        if bad:
            raise NetlistError(f"clock root {bad[0]} is not a primary input")
        self.inputs = [p for p in mod.inputs if p not in self.clocks]
        self.outputs = list(mod.outputs)
        ids: dict[str, int] = {CONST0: 0, CONST1: 1}

        def nid(net: str) -> int:
            if net not in ids:
                ids[net] = len(ids)
            return ids[net]

        for p in mod.port_bits():
            nid(p)
        self._in = [nid(p) for p in self.inputs]
        self._out = [nid(p) for p in self.outputs]
        self._steps = []
        for name in topo_order(mod, lib):
            inst = conn.insts[name]
            spec = lib[inst.ref]
            out = inst.connections.get(spec.output)
            if out is None or out in clock_nets:
                continue
            args = []
            for pin in spec.inputs:
                net = inst.connections[pin]
                if net in clock_nets:
                    raise NetlistError(f"clock net {net} used as data by {name}")
                args.append(nid(net))
            self._steps.append((spec.evaluator(), tuple(args), nid(out)))
        self._ffs = []
        for inst in conn.flops():
            spec = lib[inst.ref]
            _root, enables = conn.clock_path(inst.connections["CK"])
            q = inst.connections.get("Q")
            qn = inst.connections.get("QN")
            self._ffs.append(
                (
                    nid(inst.connections["D"]),
                    nid(q) if q else None,
                    nid(qn) if qn else None,
                    tuple(nid(e) for e in enables),
                    inst.init,
                )
            )
        self._nets = len(ids)

    def run(self, stimulus: list[list[int]], width: int = 1) -> list[list[int]]:
        """Simulate ``len(stimulus)`` cycles; each stimulus row holds one int per input.

        Returns one row of output ints per cycle.
        """
        mask = (1 << width) - 1
        vals = [0] * self._nets
        vals[1] = mask
        state = [mask if ff[4] else 0 for ff in self._ffs]
        steps = self._steps
        ffs = self._ffs
        out_rows = []
        for row in stimulus:
            for k, idx in enumerate(self._in):
                vals[idx] = row[k] & mask
            for s, (_d, q, qn, _e, _i) in zip(state, ffs):
                if q is not None:
                    vals[q] = s
                if qn is not None:
                    vals[qn] = mask ^ s
            for fn, args, out in steps:
                vals[out] = fn(mask, *[vals[a] for a in args])
            out_rows.append([vals[i] for i in self._out])
            nxt = []
            for s, (d, _q, _qn, ens, _i) in zip(state, ffs):
                if ens:
                    en = mask
                    for e in ens:
                        en &= vals[e]
                    nxt.append((vals[d] & en) | (s & (mask ^ en)))
                else:
                    nxt.append(vals[d])
            state = nxt
        return out_rows


def simulate(netlist: Netlist, lib: CellLibrary, stimulus: Trace, cycles: int | None = None) -> Trace:
    """Single-lane simulation; ``stimulus`` must cover every non-clock input."""
    sim = Simulator(netlist, lib)
    missing = [p for p in sim.inputs if p not in stimulus.ports]
    if missing:
        raise ValueError(f"stimulus does not drive inputs {missing}")
    cycles = len(stimulus.rows) if cycles is None else cycles
    if cycles > len(stimulus.rows):
        raise ValueError(f"stimulus has {len(stimulus.rows)} rows, {cycles} cycles requested")
    cols = [stimulus.ports.index(p) for p in sim.inputs]
    rows = [[r[c] for c in cols] for r in stimulus.rows[:cycles]]
    out = sim.run(rows, width=1)
    return Trace(ports=tuple(sim.outputs), rows=tuple(tuple(r) for r in out))


def check_equivalence(
    a: Netlist,
    b: Netlist,
    lib: CellLibrary,
    vectors: int = 500,
    cycles: int = 64,
    latency_b: int = 0,
    seed: int = 0,
    lib_b: CellLibrary | None = None,
) -> Verdict:
    """Compare ``a`` and ``b`` on ``vectors`` random input sequences of ``cycles`` cycles.

    Output of ``a`` at cycle t is compared with ``b`` at t + latency_b.
    """
    sa, sb = Simulator(a, lib), Simulator(b, lib_b or lib)
    if sa.inputs != sb.inputs or sa.outputs != sb.outputs or sa.clocks != sb.clocks:
        raise ValueError("netlists do not share the same port interface")
    if latency_b < 0:
        raise ValueError("latency_b must be >= 0")
    rng = random.Random(seed)
    total = cycles + latency_b
    stim = [[rng.getrandbits(vectors) for _ in sa.inputs] for _ in range(total)]
    out_a = sa.run(stim[:cycles], width=vectors)
    out_b = sb.run(stim, width=vectors)
    for t in range(cycles):
        for k, port in enumerate(sa.outputs):
            diff = out_a[t][k] ^ out_b[t + latency_b][k]
            if diff:
                lane = (diff & -diff).bit_length() - 1
                rows = tuple(tuple((v >> lane) & 1 for v in stim[c]) for c in range(t + latency_b + 1))
                return Mismatch(
                    cycle=t,
                    port=port,
                    vector=lane,
                    expected=(out_a[t][k] >> lane) & 1,
                    got=(out_b[t + latency_b][k] >> lane) & 1,
                    stimulus=Trace(ports=tuple(sa.inputs), rows=rows),
                )
    return Equivalent(vectors=vectors, cycles=cycles)


def read_trace_csv(text: str) -> Trace:
    reader = csv.reader(io.StringIO(text))
    rows = [r for r in reader if r]
    if not rows:
        raise ValueError("empty trace file")
    header = tuple(h.strip() for h in rows[0])
    data = []
    for r in rows[1:]:
        vals = tuple(int(v) for v in r)
        if any(v not in (0, 1) for v in vals):
            raise ValueError("trace values must be 0 or 1")
        data.append(vals)
    return Trace(ports=header, rows=tuple(data))


def write_trace_csv(trace: Trace) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(trace.ports)
    w.writerows(trace.rows)
    return buf.getvalue()

"""Bit-level hierarchical netlist IR.

Netlists are immutable values. Passes edit a :class:`FlatEditor` and build a new
:class:`ModuleDef` from it.
"""

from __future__ import annotations

import hashlib
import heapq
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Optional

import numpy as np

from .library import CellLibrary, CellSpec

CONST0 = "const0"
CONST1 = "const1"
CONSTS = (CONST0, CONST1)


class NetlistError(ValueError):
    """Structural problem that prevents an operation (recursion, cycles, ...)."""


class CombinationalCycleError(NetlistError):
    def __init__(self, nets: list[str]):
        self.nets = nets
        super().__init__("combinational cycle through nets: " + " -> ".join(nets))


@dataclass(frozen=True)
class SourceSpan:
    file: str
    line: int
    column: int

    def __post_init__(self):
        if self.line < 1 or self.column < 1:
            raise ValueError("line and column are 1-based")

    def __str__(self) -> str:
        return f"{self.file}:{self.line}:{self.column}"


@dataclass(frozen=True)
class Diagnostic:
    severity: str  # "error" | "warning"
    location: str
    message: str
    span: Optional[SourceSpan] = None

    def __str__(self) -> str:
        where = f"{self.span}: " if self.span else ""
        return f"{where}{self.severity}: {self.location}: {self.message}"


@dataclass(frozen=True)
class PortDecl:
    name: str
    direction: str  # "input" | "output"
    msb: Optional[int] = None
    lsb: Optional[int] = None

    @property
    def width(self) -> int:
        return 1 if self.msb is None else abs(self.msb - self.lsb) + 1

    def bits(self) -> list[str]:
        if self.msb is None:
            return [self.name]
        step = -1 if self.msb >= self.lsb else 1
        return [f"{self.name}[{i}]" for i in range(self.msb, self.lsb + step, step)]


@dataclass(frozen=True)
class Instance:
    name: str
    ref: str
    connections: dict = field(default_factory=dict)  # pin -> net
    hier: bool = False
    init: int = 0
    span: Optional[SourceSpan] = field(default=None, compare=False, repr=False)

    def with_(self, **kw) -> "Instance":
        d = dict(name=self.name, ref=self.ref, connections=dict(self.connections), hier=self.hier, init=self.init, span=self.span)
        d.update(kw)
        return Instance(**d)


@dataclass(frozen=True)
class ModuleDef:
    name: str
    ports: tuple = ()
    nets: frozenset = frozenset()
    instances: tuple = ()

    def port_bits(self, direction: str | None = None) -> list[str]:
        out = []
        for p in self.ports:
            if direction is None or p.direction == direction:
                out.extend(p.bits())
        return out

    @property
    def inputs(self) -> list[str]:
        return self.port_bits("input")

    @property
    def outputs(self) -> list[str]:
        return self.port_bits("output")

    def instance(self, name: str) -> Instance:
        for inst in self.instances:
            if inst.name == name:
                return inst
        raise KeyError(name)

    @property
    def is_flat(self) -> bool:
        return not any(i.hier for i in self.instances)

    def all_nets(self) -> set[str]:
        return set(self.nets) | set(self.port_bits())


@dataclass(frozen=True)
class Netlist:
    name: str
    modules: dict
    top: str

    @property
    def top_module(self) -> ModuleDef:
        return self.modules[self.top]

    @property
    def is_flat(self) -> bool:
        return self.top_module.is_flat

    @classmethod
    def single(cls, module: ModuleDef) -> "Netlist":
        return cls(name=module.name, modules={module.name: module}, top=module.name)


@dataclass(frozen=True)
class FlipFlopInfo:
    instance: str
    clock_net: str
    data_net: str
    q_net: Optional[str]
    qn_net: Optional[str]
    enable_net: Optional[str]
    init_value: int


# ---------------------------------------------------------------------------
# validation


def _hier_order(netlist: Netlist) -> list[str]:
    """Modules reachable from top in post-order; raises on recursion."""
    order: list[str] = []
    state: dict[str, int] = {}

    def visit(name: str, stack: list[str]) -> None:
        if state.get(name) == 2:
            return
        if state.get(name) == 1:
            raise NetlistError("recursive hierarchy: " + " -> ".join(stack + [name]))
        state[name] = 1
        mod = netlist.modules[name]
        for inst in mod.instances:
            if inst.hier and inst.ref in netlist.modules:
                visit(inst.ref, stack + [name])
        state[name] = 2
        order.append(name)

    visit(netlist.top, [])
    return order


def validate(netlist: Netlist, lib: CellLibrary) -> list[Diagnostic]:
    diags: list[Diagnostic] = []

    def err(loc: str, msg: str, span=None) -> None:
        diags.append(Diagnostic("error", loc, msg, span))

    if netlist.top not in netlist.modules:
        err(netlist.name, f"top module {netlist.top} not defined")
        return diags
    try:
        _hier_order(netlist)
    except NetlistError as exc:
        err(netlist.top, str(exc))
        return diags
    for mod in netlist.modules.values():
        diags.extend(_validate_module(mod, netlist, lib))
    if not diags:
        try:
            flat = flatten(netlist).top_module
            topo_order(flat, lib)
        except CombinationalCycleError as exc:
            err(netlist.top, str(exc))
    return diags


def _validate_module(mod: ModuleDef, netlist: Netlist, lib: CellLibrary) -> list[Diagnostic]:
    diags: list[Diagnostic] = []
    known = mod.all_nets() | set(CONSTS)
    drivers: dict[str, list[str]] = {b: ["input port"] for b in mod.inputs}
    for c in CONSTS:
        drivers[c] = ["constant"]
    used: set[str] = set()
    seen_names: set[str] = set()
    for inst in mod.instances:
        loc = f"{mod.name}/{inst.name}"
        if inst.name in seen_names:
            diags.append(Diagnostic("error", loc, f"duplicate instance name {inst.name}", inst.span))
        seen_names.add(inst.name)
        if inst.hier:
            child = netlist.modules.get(inst.ref)
            if child is None:
                diags.append(Diagnostic("error", loc, f"unknown module {inst.ref}", inst.span))
                continue
            ins, outs = set(child.inputs), set(child.outputs)
        else:
            if inst.ref not in lib:
                diags.append(Diagnostic("error", loc, f"unknown cell {inst.ref}", inst.span))
                continue
            spec = lib[inst.ref]
            ins, outs = set(spec.inputs), set(spec.outputs)
            if inst.init not in (0, 1):
                diags.append(Diagnostic("error", loc, f"init value must be 0 or 1, got {inst.init}", inst.span))
        for pin, net in inst.connections.items():
            if pin not in ins and pin not in outs:
                diags.append(Diagnostic("error", loc, f"unknown pin {pin} on {inst.ref}", inst.span))
                continue
            if net not in known:
                diags.append(Diagnostic("error", loc, f"pin {pin} connects to undeclared net {net}", inst.span))
                continue
            if pin in outs:
                drivers.setdefault(net, []).append(f"{inst.name}.{pin}")
            else:
                used.add(net)
        for pin in sorted(ins - set(inst.connections)):
            diags.append(Diagnostic("error", loc, f"input pin {pin} is unconnected", inst.span))
    for net, drv in sorted(drivers.items()):
        if len(drv) > 1:
            diags.append(Diagnostic("error", f"{mod.name}", f"multiple drivers on net {net}: {', '.join(drv)}"))
    for net in sorted((used | set(mod.outputs)) - set(drivers)):
        diags.append(Diagnostic("error", f"{mod.name}", f"net {net} has no driver"))
    return diags


def check(netlist: Netlist, lib: CellLibrary) -> None:
    diags = [d for d in validate(netlist, lib) if d.severity == "error"]
    if diags:
        raise ValidationError(diags)


class ValidationError(NetlistError):
    def __init__(self, diagnostics: list[Diagnostic]):
        self.diagnostics = diagnostics
        super().__init__("; ".join(str(d) for d in diagnostics[:5]) + (" ..." if len(diagnostics) > 5 else ""))


# ---------------------------------------------------------------------------
# flattening


def flatten(netlist: Netlist) -> Netlist:
    """Inline every hierarchical instance into the top module."""
    _hier_order(netlist)
    top = netlist.top_module
    if top.is_flat:
        return Netlist(name=netlist.name, modules={top.name: top}, top=top.name)
    nets: set[str] = set(top.nets)
    insts: list[Instance] = []

    def inline(mod: ModuleDef, prefix: str, portmap: dict[str, str]) -> None:
        def rename(net: str) -> str:
            if net in CONSTS:
                return net
            if net in portmap:
                return portmap[net]
            new = f"{prefix}{net}"
            nets.add(new)
            return new

        for inst in mod.instances:
            conns = {pin: rename(net) for pin, net in inst.connections.items()}
            if inst.hier:
                child = netlist.modules[inst.ref]
                sub = f"{prefix}{inst.name}/"
                cmap = {}
                for bit in child.port_bits():
                    cmap[bit] = conns[bit] if bit in conns else rename(f"{inst.name}/{bit}")
                inline(child, sub, cmap)
            else:
                insts.append(inst.with_(name=prefix + inst.name, connections=conns))

    inline(top, "", {b: b for b in top.port_bits()})
    flat = ModuleDef(name=top.name, ports=top.ports, nets=frozenset(nets - set(top.port_bits())), instances=tuple(insts))
    return Netlist(name=netlist.name, modules={flat.name: flat}, top=flat.name)


def flat_top(netlist: Netlist) -> ModuleDef:
    return flatten(netlist).top_module if not netlist.is_flat else netlist.top_module


# ---------------------------------------------------------------------------
# connectivity


@dataclass
class Connectivity:
    """Driver/sink index of a flat module."""

    module: ModuleDef
    lib: CellLibrary
    insts: dict = field(default_factory=dict)
    driver: dict = field(default_factory=dict)  # net -> (inst, pin)
    sinks: dict = field(default_factory=dict)  # net -> [(inst, pin)]

    def __post_init__(self):
        for inst in self.module.instances:
            self.insts[inst.name] = inst
            spec = self.lib[inst.ref]
            outs = set(spec.outputs)
            for pin, net in inst.connections.items():
                if pin in outs:
                    self.driver[net] = (inst.name, pin)
                else:
                    self.sinks.setdefault(net, []).append((inst.name, pin))
        for lst in self.sinks.values():
            lst.sort()
        self.po = set(self.module.outputs)
        self.pi = set(self.module.inputs)

    def spec(self, inst: str) -> CellSpec:
        return self.lib[self.insts[inst].ref]

    def fanout(self, net: str) -> list[tuple[str, str]]:
        return self.sinks.get(net, [])

    def load_count(self, net: str) -> int:
        return len(self.fanout(net)) + (1 if net in self.po else 0)

    def driver_spec(self, net: str) -> CellSpec | None:
        d = self.driver.get(net)
        return self.spec(d[0]) if d else None

    def flops(self) -> list[Instance]:
        return [i for i in self.module.instances if self.lib[i.ref].kind == "ff"]

    def clock_nets(self) -> set[str]:
        """Nets carrying the clock: CK pins and everything upstream through BUF/ICG.CK."""
        out: set[str] = set()
        todo = [
            inst.connections["CK"]
            for inst in self.module.instances
            if self.lib[inst.ref].kind in ("ff", "icg") and "CK" in inst.connections
        ]
        while todo:
            net = todo.pop()
            if net in out:
                continue
            out.add(net)
            d = self.driver.get(net)
            if d is None:
                continue
            spec = self.spec(d[0])
            src = self.insts[d[0]].connections
            if spec.kind == "buf":
                todo.append(src["A"])
            elif spec.kind == "icg":
                todo.append(src["CK"])
        return out

    def clock_path(self, ck_net: str) -> tuple[str | None, list[str]]:
        """(root net, enable nets of ICGs) along the clock path feeding ``ck_net``."""
        enables: list[str] = []
        net = ck_net
        for _ in range(10_000):
            d = self.driver.get(net)
            if d is None:
                return net, enables
            spec = self.spec(d[0])
            conns = self.insts[d[0]].connections
            if spec.kind == "buf":
                net = conns["A"]
            elif spec.kind == "icg":
                enables.append(conns["E"])
                net = conns["CK"]
            else:
                raise NetlistError(f"clock net {ck_net} is driven through {spec.kind} cell {d[0]}")
        raise NetlistError("clock path too deep")

    def flop_info(self, name: str) -> FlipFlopInfo:
        inst = self.insts[name]
        ck = inst.connections["CK"]
        _root, enables = self.clock_path(ck)
        return FlipFlopInfo(
            instance=name,
            clock_net=ck,
            data_net=inst.connections["D"],
            q_net=inst.connections.get("Q"),
            qn_net=inst.connections.get("QN"),
            enable_net=enables[0] if enables else None,
            init_value=inst.init,
        )

    def clock_roots(self) -> list[str]:
        roots = set()
        for inst in self.module.instances:
            if self.lib[inst.ref].kind in ("ff", "icg") and "CK" in inst.connections:
                root, _ = self.clock_path(inst.connections["CK"])
                if root is not None:
                    roots.add(root)
        return sorted(roots)


def topo_order(module: ModuleDef, lib: CellLibrary) -> list[str]:
    """Combinational instances (incl. buffers/inverters) in dependency order.

    Flip-flops and clock gates are cut points and do not appear.
    """
    conn = Connectivity(module, lib)
    comb = {i.name for i in module.instances if lib[i.ref].kind in ("combinational", "buf", "inv")}
    indeg = {n: 0 for n in comb}
    succ: dict[str, list[str]] = {n: [] for n in comb}
    for n in comb:
        inst = conn.insts[n]
        spec = lib[inst.ref]
        for pin in spec.inputs:
            d = conn.driver.get(inst.connections.get(pin))
            if d and d[0] in comb:
                indeg[n] += 1
                succ[d[0]].append(n)
    heap = [n for n, d in indeg.items() if d == 0]
    heapq.heapify(heap)
    order: list[str] = []
    while heap:
        n = heapq.heappop(heap)
        order.append(n)
        for s in succ[n]:
            indeg[s] -= 1
            if indeg[s] == 0:
                heapq.heappush(heap, s)
    if len(order) != len(comb):
        raise CombinationalCycleError(_find_cycle(conn, {n for n, d in indeg.items() if d > 0}))
    return order


def _find_cycle(conn: Connectivity, stuck: set[str]) -> list[str]:
    # walk backwards through stuck instances until one repeats
    start = min(stuck)
    path: list[str] = []
    seen: dict[str, int] = {}
    cur = start
    while cur not in seen:
        seen[cur] = len(path)
        path.append(cur)
        inst = conn.insts[cur]
        nxt = None
        for pin in conn.spec(cur).inputs:
            d = conn.driver.get(inst.connections.get(pin))
            if d and d[0] in stuck:
                nxt = d[0]
                break
        cur = nxt
    cyc = path[seen[cur]:]
    nets = [conn.insts[n].connections[conn.spec(n).output] for n in reversed(cyc)]
    return nets + [nets[0]]


# ---------------------------------------------------------------------------
# structural hashing


def _h(*parts) -> int:
    return int.from_bytes(hashlib.blake2b(repr(parts).encode(), digest_size=8).digest(), "big")


_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_GOLD = np.uint64(0x9E3779B97F4A7C15)


def _mix(z: np.ndarray) -> np.ndarray:
    # splitmix64 finalizer, wrapping uint64 arithmetic
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def structural_hash(module: ModuleDef, iterations: int = 8) -> int:
    """Rename- and order-invariant 64-bit digest of a flat module.

    Weisfeiler-Leman refinement over the bipartite instance/net graph. Instances are
    seeded by (cell, init), nets by constant/port role, edges labelled by pin name.
    Neighbour labels are combined by a wrapping sum of mixed (pin, label) terms, so
    the update is independent of edge order and vectorises cleanly.
    """
    inputs, outputs = set(module.inputs), set(module.outputs)
    seeds: dict[tuple, int] = {}

    def seed(*key) -> int:
        if key not in seeds:
            seeds[key] = _h(*key)
        return seeds[key]

    net_idx: dict[str, int] = {}
    net_seed: list[int] = []

    def nid(net: str) -> int:
        k = net_idx.get(net)
        if k is None:
            k = net_idx[net] = len(net_seed)
            if net in CONSTS:
                net_seed.append(seed("net", net))
            else:
                net_seed.append(seed("net", "in" if net in inputs else "", "out" if net in outputs else ""))
        return k

    inst_seed, e_inst, e_net, e_pin = [], [], [], []
    for k, inst in enumerate(module.instances):
        inst_seed.append(seed("inst", inst.ref, inst.init, inst.hier))
        for pin, net in inst.connections.items():
            e_inst.append(k)
            e_net.append(nid(net))
            e_pin.append(seed("pin", pin))
    for net in module.port_bits():
        nid(net)

    inst_lab = np.array(inst_seed, dtype=np.uint64)
    net_lab = np.array(net_seed, dtype=np.uint64)
    ei = np.array(e_inst, dtype=np.intp)
    en = np.array(e_net, dtype=np.intp)
    ep = np.array(e_pin, dtype=np.uint64)
    with np.errstate(over="ignore"):
        for _ in range(iterations):
            acc_i = np.zeros_like(inst_lab)
            np.add.at(acc_i, ei, _mix(ep ^ net_lab[en]))
            acc_n = np.zeros_like(net_lab)
            np.add.at(acc_n, en, _mix((ep * _GOLD) ^ inst_lab[ei]))
            inst_lab = _mix(inst_lab * _GOLD + acc_i)
            net_lab = _mix(net_lab * _M1 + acc_n)
    h = hashlib.blake2b(digest_size=8)
    h.update(np.sort(inst_lab).astype(">u8").tobytes())
    h.update(b"|")
    h.update(np.sort(net_lab).astype(">u8").tobytes())
    return int.from_bytes(h.digest(), "big")


def netlist_hash(netlist: Netlist) -> int:
    return structural_hash(flat_top(netlist))


# ---------------------------------------------------------------------------
# editing


class FlatEditor:
    """Mutable working copy of a flat module used by transformation passes."""

    def __init__(self, module: ModuleDef, lib: CellLibrary):
        if not module.is_flat:
            raise NetlistError("passes operate on flat netlists")
        self.name = module.name
        self.ports = module.ports
        self.lib = lib
        self.insts: dict[str, Instance] = {i.name: i for i in module.instances}
        self.nets: set[str] = set(module.nets)
        self._ports = set(module.port_bits())
        self._counter = 0

    def fresh(self, hint: str) -> str:
        taken = lambda n: n in self.insts or n in self.nets or n in self._ports  # noqa: E731
        if not taken(hint):
            return hint
        while True:
            self._counter += 1
            cand = f"{hint}_{self._counter}"
            if not taken(cand):
                return cand

    def new_net(self, hint: str) -> str:
        n = self.fresh(hint)
        self.nets.add(n)
        return n

    def add(self, name: str, ref: str, connections: dict, init: int = 0) -> str:
        name = self.fresh(name)
        self.insts[name] = Instance(name=name, ref=ref, connections=dict(connections), init=init)
        return name

    def remove(self, name: str) -> Instance:
        return self.insts.pop(name)

    def set_pin(self, inst: str, pin: str, net: str | None) -> None:
        conns = dict(self.insts[inst].connections)
        if net is None:
            conns.pop(pin, None)
        else:
            conns[pin] = net
        self.insts[inst] = self.insts[inst].with_(connections=conns)

    def replace(self, inst: str, **kw) -> None:
        self.insts[inst] = self.insts[inst].with_(**kw)

    def index(self) -> Connectivity:
        return Connectivity(self.build(prune=False), self.lib)

    def build(self, prune: bool = True) -> ModuleDef:
        insts = tuple(self.insts[n] for n in sorted(self.insts))
        nets = set(self.nets)
        if prune:
            used = {net for i in insts for net in i.connections.values()}
            nets &= used
        nets -= self._ports
        nets -= set(CONSTS)
        return ModuleDef(name=self.name, ports=self.ports, nets=frozenset(nets), instances=insts)

    def netlist(self, name: str | None = None) -> Netlist:
        return Netlist.single(self.build()) if name is None else Netlist(name, {self.name: self.build()}, self.name)


def iter_instances(module: ModuleDef, lib: CellLibrary, kinds: Iterable[str]) -> Iterator[Instance]:
    kinds = set(kinds)
    for inst in module.instances:
        if not inst.hier and lib[inst.ref].kind in kinds:
            yield inst

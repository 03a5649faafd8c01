"""Static PPA analysis: area, leakage, dynamic power, critical path and slew."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

from .library import CellLibrary
from .netlist import CONSTS, Connectivity, ModuleDef, Netlist, flat_top, topo_order


@dataclass(frozen=True)
class PowerConfig:
    vdd: float = 0.8  # V
    freq: float = 500e6  # Hz
    data_activity: float = 0.1
    clock_activity: float = 1.0
    output_load: float = 0.0  # fF per primary output


DEFAULT_POWER = PowerConfig()


@dataclass
class TimingReport:
    critical_path: float
    slew: dict  # net -> ps, for every cell-driven net
    arrival: dict = field(default_factory=dict)
    endpoint: str | None = None
    _pred: dict = field(default_factory=dict, repr=False)
    endpoints: tuple = ()

    def critical_endpoints(self, eps: float = 1e-9) -> list[str]:
        """All endpoints whose arrival ties the critical path."""
        return [e for e in self.endpoints if self.arrival.get(e, 0.0) >= self.critical_path - eps]

    def __iter__(self):
        return iter((self.critical_path, self.slew))

    @property
    def worst_slew(self) -> float:
        return max(self.slew.values(), default=0.0)

    def critical_nets(self, endpoint: str | None = None) -> list[str]:
        """Nets on the critical path from startpoint to ``endpoint`` (default: the worst one)."""
        path = []
        net = self.endpoint if endpoint is None else endpoint
        while net is not None:
            path.append(net)
            net = self._pred.get(net)
        return path[::-1]


def net_loads(conn: Connectivity, output_load: float = 0.0) -> dict[str, float]:
    loads: dict[str, float] = {}
    for net, sinks in conn.sinks.items():
        loads[net] = sum(conn.spec(i).input_caps[p] for i, p in sinks)
    for po in conn.po:
        loads[po] = loads.get(po, 0.0) + output_load
    return loads


def _module(netlist) -> ModuleDef:
    return netlist if isinstance(netlist, ModuleDef) else flat_top(netlist)


def analyze_timing(netlist, lib: CellLibrary, output_load: float = 0.0) -> TimingReport:
    """Longest path under the linear delay model; slews per cell-driven net."""
    mod = _module(netlist)
    conn = Connectivity(mod, lib)
    loads = net_loads(conn, output_load)
    clock_nets = conn.clock_nets()
    slew: dict[str, float] = {}
    for net, (inst, _pin) in conn.driver.items():
        slew[net] = lib.slew_factor * conn.spec(inst).drive_res * loads.get(net, 0.0)
    arrival: dict[str, float] = {c: 0.0 for c in CONSTS}
    pred: dict[str, str | None] = {}
    for p in conn.pi:
        if p not in clock_nets:
            arrival[p] = 0.0
    for ff in conn.flops():
        spec = lib[ff.ref]
        for pin in spec.outputs:
            net = ff.connections.get(pin)
            if net is not None:
                arrival[net] = spec.delay(loads.get(net, 0.0))
    for name in topo_order(mod, lib):
        inst = conn.insts[name]
        spec = lib[inst.ref]
        out = inst.connections.get(spec.output)
        if out is None or out in clock_nets:
            continue
        best, src = 0.0, None
        for pin in spec.inputs:
            net = inst.connections[pin]
            a = arrival.get(net, 0.0)
            if src is None or a > best:
                best, src = a, net
        arrival[out] = best + spec.delay(loads.get(out, 0.0))
        pred[out] = src
    cp, endpoint = 0.0, None
    ends: list[str] = []
    for inst in mod.instances:
        kind = lib[inst.ref].kind
        if kind == "ff":
            ends.append(inst.connections["D"])
        elif kind == "icg":
            ends.append(inst.connections["E"])
    ends.extend(p for p in mod.outputs if p not in clock_nets)
    ends = sorted(set(ends))
    for net in ends:
        a = arrival.get(net, 0.0)
        if endpoint is None or a > cp:
            cp, endpoint = a, net
    return TimingReport(critical_path=cp, slew=slew, arrival=arrival, endpoint=endpoint, _pred=pred,
                        endpoints=tuple(ends))


@dataclass(frozen=True)
class PowerReport:
    leakage: float  # mW
    dynamic: float  # mW

    def __iter__(self):
        return iter((self.leakage, self.dynamic))


def analyze_power(netlist, lib: CellLibrary, activity: dict | None = None, config: PowerConfig = DEFAULT_POWER) -> PowerReport:
    """Leakage sum and switched-capacitance dynamic power.

    ``activity`` overrides the toggle rate of individual nets. Clock nets downstream
    of a clock gate toggle at the activity of the gate's enable net.
    """
    mod = _module(netlist)
    conn = Connectivity(mod, lib)
    activity = activity or {}
    leakage = sum(lib[i.ref].leakage for i in mod.instances)
    loads = net_loads(conn, config.output_load)
    clock_nets = conn.clock_nets()
    scale = 0.5 * config.vdd**2 * config.freq * 1e-15 * 1e3  # fF -> mW

    def rate(net: str) -> float:
        if net in activity:
            return activity[net]
        if net in clock_nets:
            _root, enables = conn.clock_path(net)
            a = config.clock_activity
            for e in enables:
                a *= rate(e)
            return a
        return config.data_activity

    dynamic = 0.0
    for net in sorted(loads):
        if net in CONSTS:
            continue
        dynamic += rate(net) * loads[net] * scale
    return PowerReport(leakage=leakage, dynamic=dynamic)


@dataclass(frozen=True)
class PpaReport:
    area: float
    cell_count: int
    cell_histogram: dict
    leakage: float
    dynamic: float
    critical_path: float
    worst_slew: float

    def as_dict(self) -> dict:
        return {
            "area": self.area,
            "cell_count": self.cell_count,
            "cell_histogram": dict(sorted(self.cell_histogram.items())),
            "leakage": self.leakage,
            "dynamic": self.dynamic,
            "critical_path": self.critical_path,
            "worst_slew": self.worst_slew,
        }


@dataclass(frozen=True)
class PpaFingerprint:
    area_r: float
    cells: int
    leak_r: float
    dyn_r: float
    cp_r: float

    def key(self) -> tuple:
        return (self.area_r, self.cells, self.leak_r, self.dyn_r, self.cp_r)


def ppa_report(netlist, lib: CellLibrary, activity: dict | None = None, config: PowerConfig = DEFAULT_POWER) -> PpaReport:
    mod = _module(netlist)
    hist = Counter(i.ref for i in mod.instances)
    timing = analyze_timing(mod, lib, config.output_load)
    power = analyze_power(mod, lib, activity, config)
    return PpaReport(
        area=sum(lib[i.ref].area for i in mod.instances),
        cell_count=sum(hist.values()),
        cell_histogram=dict(sorted(hist.items())),
        leakage=power.leakage,
        dynamic=power.dynamic,
        critical_path=timing.critical_path,
        worst_slew=timing.worst_slew,
    )


def fingerprint(report: PpaReport) -> PpaFingerprint:
    return PpaFingerprint(
        area_r=round(report.area, 1),
        cells=report.cell_count,
        leak_r=round(report.leakage, 3),
        dyn_r=round(report.dynamic, 3),
        cp_r=float(round(report.critical_path)),
    )

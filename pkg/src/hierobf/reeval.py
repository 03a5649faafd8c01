"""Register-grouping analysis of flat netlists and diversity scores between groupings.

The analyzer mimics what a netlist reverse-engineering tool does first: derive the
flop-to-flop dataflow graph and cluster flops into candidate multi-bit registers by the
similarity of their predecessor and successor neighbourhoods.
"""

from __future__ import annotations

import heapq
import math
from collections import Counter, defaultdict, deque
from dataclasses import dataclass, field

from .library import CellLibrary
from .netlist import Connectivity, ModuleDef, Netlist, flat_top, topo_order

SELF = "\0self"


@dataclass(frozen=True)
class FfGraph:
    nodes: tuple  # sorted flop names
    edges: tuple  # sorted (a, b): combinational path a.Q/QN -> b.D
    signature: dict = field(default_factory=dict, compare=False)  # flop -> ((po, seq distance), ...)

    def preds(self) -> dict[str, list[str]]:
        p: dict[str, list[str]] = {n: [] for n in self.nodes}
        for a, b in self.edges:
            p[b].append(a)
        return p

    def succs(self) -> dict[str, list[str]]:
        s: dict[str, list[str]] = {n: [] for n in self.nodes}
        for a, b in self.edges:
            s[a].append(b)
        return s


@dataclass(frozen=True)
class RegisterGrouping:
    groups: tuple  # tuple of sorted member tuples, ordered by smallest member
    group_edges: dict = field(default_factory=dict, compare=False)  # (gi, gj) -> multiplicity

    def labels(self) -> dict[str, int]:
        return {ff: k for k, g in enumerate(self.groups) for ff in g}

    def sizes(self) -> list[int]:
        return [len(g) for g in self.groups]


@dataclass(frozen=True)
class DiversityScore:
    ari: float
    size_histogram_distance: float
    matched: int = 0
    incomparable: bool = False


# --- flop graph -----------------------------------------------------------------


def build_ff_graph(netlist: Netlist | ModuleDef, lib: CellLibrary) -> FfGraph:
    mod = netlist if isinstance(netlist, ModuleDef) else flat_top(netlist)
    conn = Connectivity(mod, lib)
    flops = sorted(f.name for f in conn.flops())
    # src[net]: flops reaching the net through combinational logic only
    src: dict[str, frozenset] = {}
    pos_of: dict[str, frozenset] = {}
    for f in flops:
        for pin in ("Q", "QN"):
            net = conn.insts[f].connections.get(pin)
            if net is not None:
                src[net] = frozenset((f,))
    order = topo_order(mod, lib)
    for name in order:
        spec = conn.spec(name)
        inst = conn.insts[name]
        out = inst.connections.get(spec.output)
        if out is None:
            continue
        acc: set = set()
        for pin in spec.inputs:
            acc |= src.get(inst.connections[pin], frozenset())
        src[out] = frozenset(acc)
    edges = set()
    for b in flops:
        for a in src.get(conn.insts[b].connections["D"], ()):
            edges.add((a, b))
    # primary outputs reached combinationally from each flop
    for po in mod.outputs:
        for f in src.get(po, ()):
            pos_of[f] = pos_of.get(f, frozenset()) | {po}
    graph = FfGraph(nodes=tuple(flops), edges=tuple(sorted(edges)))
    return FfGraph(graph.nodes, graph.edges, _signatures(graph, pos_of, mod.outputs))


def _signatures(graph: FfGraph, pos_of: dict, outputs: list[str]) -> dict:
    preds = graph.preds()
    dist: dict[str, dict[str, int]] = {f: {} for f in graph.nodes}
    for po in outputs:
        start = [f for f in graph.nodes if po in pos_of.get(f, ())]
        seen = {f: 0 for f in start}
        q = deque(start)
        while q:
            f = q.popleft()
            for p in preds[f]:
                if p not in seen:
                    seen[p] = seen[f] + 1
                    q.append(p)
        for f, d in seen.items():
            dist[f][po] = d
    return {f: tuple(sorted(d.items())) for f, d in dist.items()}


# --- grouping -------------------------------------------------------------------


def jaccard(a: set, b: set) -> float:
    """Jaccard index of two sets; two empty sets score 0 (no evidence of similarity)."""
    union = a | b
    return len(a & b) / len(union) if union else 0.0


def multiset_jaccard(a: Counter, b: Counter) -> float:
    keys = set(a) | set(b)
    hi = sum(max(a.get(k, 0), b.get(k, 0)) for k in keys)
    if hi == 0:
        return 0.0
    return sum(min(a.get(k, 0), b.get(k, 0)) for k in keys) / hi


class _Clusters:
    def __init__(self, graph: FfGraph):
        self.members: dict[int, list[str]] = {k: [n] for k, n in enumerate(graph.nodes)}
        self.of = {n: k for k, n in enumerate(graph.nodes)}
        self.pred: dict[int, Counter] = {k: Counter() for k in self.members}
        self.succ: dict[int, Counter] = {k: Counter() for k in self.members}
        for a, b in graph.edges:
            self.pred[self.of[b]][self.of[a]] += 1
            self.succ[self.of[a]][self.of[b]] += 1
        self.version = {k: 0 for k in self.members}

    def first(self, g: int) -> str:
        return self.members[g][0]

    def similarity(self, x: int, y: int) -> float:
        # neighbour groups compared as sets; a group's reference to itself becomes SELF
        def norm(c: Counter, own: int) -> set:
            return {SELF if k == own else k for k in c}

        jp = jaccard(norm(self.pred[x], x), norm(self.pred[y], y))
        js = jaccard(norm(self.succ[x], x), norm(self.succ[y], y))
        return 0.5 * (jp + js)

    def candidates(self, x: int) -> set[int]:
        """Groups that can have non-zero similarity with ``x``."""
        out: set[int] = set()
        for k in self.pred[x]:
            out.update(self.succ[k])
        for k in self.succ[x]:
            out.update(self.pred[k])
        if x in self.pred[x]:
            out.update(g for g in self.members if g in self.pred[g])
        out.discard(x)
        return out

    def merge(self, x: int, y: int) -> tuple[int, set[int]]:
        """Merge ``y`` into ``x``; return the survivor and the groups whose neighbourhoods changed."""
        touched = set(self.pred[y]) | set(self.succ[y]) | set(self.pred[x]) | set(self.succ[x])
        self.members[x] = sorted(self.members[x] + self.members.pop(y))
        for n in self.members[x]:
            self.of[n] = x
        for table in (self.pred, self.succ):
            table[x].update(table.pop(y))
            if y in table[x]:
                table[x][x] += table[x].pop(y)
        for g in touched - {x, y}:
            for table in (self.pred, self.succ):
                if y in table[g]:
                    table[g][x] += table[g].pop(y)
        del self.version[y]
        touched.discard(y)
        touched.add(x)
        for g in touched:
            self.version[g] += 1
        return x, touched


def group_registers(graph: FfGraph, mode: str | int = "normal", tau: float = 0.5) -> RegisterGrouping:
    """Agglomerative neighbourhood clustering.

    ``mode`` is ``"normal"`` or a positive int target size (steered mode). In steered mode a
    merge exceeding the target is never taken and merges landing exactly on it go first.
    """
    if not 0 < tau <= 1:
        raise ValueError("tau must be in (0, 1]")
    target = None
    if mode != "normal":
        target = int(mode)
        if target < 1:
            raise ValueError("steered target size must be >= 1")
    cl = _Clusters(graph)
    heap: list = []

    def push(x: int, y: int) -> None:
        if x == y:
            return
        size = len(cl.members[x]) + len(cl.members[y])
        if target is not None and size > target:
            return
        s = cl.similarity(x, y)
        if s < tau:
            return
        a, b = sorted((cl.first(x), cl.first(y)))
        exact = 0 if target is not None and size == target else 1
        heapq.heappush(heap, (exact, -s, a, b, x, y, cl.version[x], cl.version[y]))

    for x in sorted(cl.members):
        for y in sorted(cl.candidates(x)):
            if x < y:
                push(x, y)
    while heap:
        _e, _s, _a, _b, x, y, vx, vy = heapq.heappop(heap)
        if cl.version.get(x) != vx or cl.version.get(y) != vy:
            continue
        keep, drop = (x, y) if cl.first(x) < cl.first(y) else (y, x)
        _, touched = cl.merge(keep, drop)
        for t in sorted(touched):
            for c in sorted(cl.candidates(t)):
                push(t, c)
    return _finish(graph, cl)


def _finish(graph: FfGraph, cl: _Clusters) -> RegisterGrouping:
    groups = tuple(sorted(tuple(m) for m in cl.members.values()))
    labels = {ff: k for k, g in enumerate(groups) for ff in g}
    gedges: Counter = Counter()
    for a, b in graph.edges:
        gedges[(labels[a], labels[b])] += 1
    return RegisterGrouping(groups=groups, group_edges=dict(sorted(gedges.items())))


def quotient_edges(graph: FfGraph, grouping: RegisterGrouping) -> dict:
    labels = grouping.labels()
    out: Counter = Counter()
    for a, b in graph.edges:
        out[(labels[a], labels[b])] += 1
    return dict(sorted(out.items()))


# --- export ---------------------------------------------------------------------


def export_group_graph(grouping: RegisterGrouping, name: str = "registers") -> str:
    lines = [f"digraph {name} {{", "  node [shape=circle, fixedsize=true];"]
    for k, g in enumerate(grouping.groups):
        lines.append(f'  r{k} [label="r{k}[{len(g)}]", width={0.4 * math.sqrt(len(g)):.3f}];')
    for (a, b), m in sorted(grouping.group_edges.items()):
        lines.append(f'  r{a} -> r{b} [weight={m}, label="{m}"];')
    lines.append("}")
    return "\n".join(lines) + "\n"


# --- diversity ------------------------------------------------------------------


def _comb2(n: int) -> int:
    return n * (n - 1) // 2


def adjusted_rand_index(a: list, b: list) -> float:
    """ARI of two labelings of the same items (sequences aligned by position)."""
    if len(a) != len(b):
        raise ValueError("labelings must have equal length")
    n = len(a)
    if n < 2:
        return 1.0
    cont = Counter(zip(a, b))
    sum_ij = sum(_comb2(v) for v in cont.values())
    sum_a = sum(_comb2(v) for v in Counter(a).values())
    sum_b = sum(_comb2(v) for v in Counter(b).values())
    expected = sum_a * sum_b / _comb2(n)
    top = 0.5 * (sum_a + sum_b)
    if top == expected:
        return 1.0
    return (sum_ij - expected) / (top - expected)


def match_flops(sig_a: dict, sig_b: dict) -> list[tuple[str, str]]:
    """Pair flops with equal (reachable outputs, sequential distance) signatures.

    Inside a signature class same-named flops pair first, the rest pair in name order.
    """
    by_a: dict = defaultdict(list)
    by_b: dict = defaultdict(list)
    for f, s in sig_a.items():
        if s:
            by_a[s].append(f)
    for f, s in sig_b.items():
        if s:
            by_b[s].append(f)
    pairs = []
    for s in sorted(set(by_a) & set(by_b)):
        xa, xb = sorted(by_a[s]), sorted(by_b[s])
        common = sorted(set(xa) & set(xb))
        pairs += [(f, f) for f in common]
        ra = [f for f in xa if f not in common]
        rb = [f for f in xb if f not in common]
        pairs += list(zip(ra, rb))
    return sorted(pairs)


def size_histogram_distance(a: RegisterGrouping, b: RegisterGrouping) -> float:
    """Half the L1 distance between flop-mass-weighted group-size distributions."""

    def dist(g: RegisterGrouping) -> dict[int, float]:
        n = sum(g.sizes())
        c = Counter(g.sizes())
        return {s: s * k / n for s, k in c.items()} if n else {}

    da, db = dist(a), dist(b)
    if not da and not db:
        return 0.0
    if not da or not db:
        return 1.0
    return 0.5 * sum(abs(da.get(s, 0.0) - db.get(s, 0.0)) for s in set(da) | set(db))


def grouping_diversity(a: RegisterGrouping, b: RegisterGrouping, graph_a: FfGraph, graph_b: FfGraph) -> DiversityScore:
    pairs = match_flops(graph_a.signature, graph_b.signature)
    hist = size_histogram_distance(a, b)
    if not pairs:
        return DiversityScore(ari=0.0, size_histogram_distance=hist, matched=0, incomparable=True)
    la, lb = a.labels(), b.labels()
    ari = adjusted_rand_index([la[x] for x, _ in pairs], [lb[y] for _, y in pairs])
    return DiversityScore(ari=ari, size_histogram_distance=hist, matched=len(pairs))


def analyze(netlist: Netlist | ModuleDef, lib: CellLibrary, mode: str | int = "normal", tau: float = 0.5):
    graph = build_ff_graph(netlist, lib)
    return graph, group_registers(graph, mode, tau)

import itertools

import pytest

from hierobf.netlist import Connectivity, flatten
from hierobf.reeval import (
    FfGraph, RegisterGrouping, adjusted_rand_index, analyze, build_ff_graph, export_group_graph, group_registers,
    grouping_diversity, jaccard, match_flops, quotient_edges, size_histogram_distance,
)
from hierobf.transforms import apply_recipe, technique_recipe

from conftest import gv


def graph(nodes, edges):
    return FfGraph(nodes=tuple(sorted(nodes)), edges=tuple(sorted(set(edges))))


def oracle_edges(nl, lib):
    """Flop pairs joined by a purely combinational path, by DFS backwards from each D pin."""
    mod = flatten(nl).top_module
    conn = Connectivity(mod, lib)
    edges = set()
    for b in conn.flops():
        stack, seen = [b.connections["D"]], set()
        while stack:
            net = stack.pop()
            if net in seen:
                continue
            seen.add(net)
            d = conn.driver.get(net)
            if d is None:
                continue
            inst, pin = d
            kind = conn.spec(inst).kind
            if kind == "ff":
                edges.add((inst, b.name))
            elif kind != "icg":
                stack.extend(conn.insts[inst].connections[p] for p in conn.spec(inst).inputs)
    return edges


# --- flop graph -------------------------------------------------------------------


def test_shift_register_single_edge(lib):
    nl = gv("""module t(clk, d, q); input clk, d; output q; wire n;
      DFF_X1 f0(.D(d), .CK(clk), .Q(n)); DFF_X1 f1(.D(n), .CK(clk), .Q(q)); endmodule""", lib)
    g = build_ff_graph(nl, lib)
    assert g.nodes == ("f0", "f1") and g.edges == (("f0", "f1"),)


def test_recirculating_mux_self_loop(lib):
    nl = gv("""module t(clk, en, d, q); input clk, en, d; output q; wire n;
      MUX2_X1 m(.A(q), .B(d), .S(en), .Y(n)); DFF_X1 f(.D(n), .CK(clk), .Q(q)); endmodule""", lib)
    assert build_ff_graph(nl, lib).edges == (("f", "f"),)


def test_three_gate_path_one_edge(lib):
    nl = gv("""module t(clk, a, q); input clk, a; output q; wire n0, n1, n2, n3;
      DFF_X1 f0(.D(a), .CK(clk), .Q(n0));
      INV_X1 g1(.A(n0), .Y(n1)); AND2_X1 g2(.A(n1), .B(a), .Y(n2)); XOR2_X1 g3(.A(n2), .B(n0), .Y(n3));
      DFF_X1 f1(.D(n3), .CK(clk), .Q(q)); endmodule""", lib)
    g = build_ff_graph(nl, lib)
    assert g.edges == (("f0", "f1"),)
    assert set(g.edges) == oracle_edges(nl, lib)


def test_qn_edges_count(lib):
    nl = gv("""module t(clk, d, q); input clk, d; output q; wire n;
      DFFQN_X1 f0(.D(d), .CK(clk), .QN(n)); DFF_X1 f1(.D(n), .CK(clk), .Q(q)); endmodule""", lib)
    assert build_ff_graph(nl, lib).edges == (("f0", "f1"),)


def test_ff_graph_matches_oracle_on_corpus(corpus, lib):
    for name, nl in corpus:
        g = build_ff_graph(flatten(nl), lib)
        assert set(g.edges) == oracle_edges(nl, lib), name
        assert list(g.nodes) == sorted(i.name for i in Connectivity(flatten(nl).top_module, lib).flops())


# --- grouping ---------------------------------------------------------------------


def test_jaccard_empty_sets_score_zero():
    assert jaccard(set(), set()) == 0.0
    assert jaccard({1, 2}, {2, 3}) == pytest.approx(1 / 3)


def test_hold_register_feeding_second_register_two_groups():
    # A_i holds itself and feeds B_i stage to stage; B is reloaded every cycle
    a = [f"a{i}" for i in range(4)]
    b = [f"b{i}" for i in range(4)]
    edges = [(x, x) for x in a] + list(zip(a, b))
    g = group_registers(graph(a + b, edges))
    assert g.groups == (tuple(a), tuple(b))
    assert g.group_edges == {(0, 0): 4, (0, 1): 4}


def counter(n, prefix="c"):
    bits = [f"{prefix}{i}" for i in range(n)]
    # bit i toggles when all lower bits are set: depends on itself and every lower bit
    return bits, [(bits[j], bits[i]) for i in range(n) for j in range(i + 1)]


def test_steered_counter_is_one_group():
    bits, edges = counter(10)
    g = group_registers(graph(bits, edges), mode=10)
    assert g.sizes() == [10]


def test_steered_never_exceeds_target():
    bits, edges = counter(10)
    for t in (1, 3, 4, 7):
        g = group_registers(graph(bits, edges), mode=t)
        assert max(g.sizes()) <= t


def test_no_edges_all_singletons():
    g = group_registers(graph([f"f{i}" for i in range(6)], []))
    assert g.sizes() == [1] * 6


def test_empty_graph():
    g = group_registers(graph([], []))
    assert g.groups == () and g.group_edges == {}


def test_bad_arguments():
    g = graph(["a"], [])
    with pytest.raises(ValueError):
        group_registers(g, tau=0)
    with pytest.raises(ValueError):
        group_registers(g, mode=0)


@pytest.mark.parametrize("tau", [0.2, 0.35, 0.5, 0.65, 0.8, 1.0])
def test_tau_sweep_stays_valid(tau, corr, lib):
    ffg = build_ff_graph(flatten(corr), lib)
    g1 = group_registers(ffg, tau=tau)
    g2 = group_registers(ffg, tau=tau)
    assert g1 == g2
    assert sorted(x for grp in g1.groups for x in grp) == list(ffg.nodes)
    assert quotient_edges(ffg, g1) == g1.group_edges


def test_higher_tau_never_merges_more(corr, lib):
    ffg = build_ff_graph(flatten(corr), lib)
    counts = [len(group_registers(ffg, tau=t).groups) for t in (0.3, 0.5, 0.7, 0.9)]
    assert counts[0] <= counts[-1]


# --- DOT export ---------------------------------------------------------------------


def test_dot_two_groups_one_edge():
    g = RegisterGrouping(groups=(("a", "b"), ("c",)), group_edges={(0, 1): 1})
    dot = export_group_graph(g)
    assert dot.count("label=\"r") == 2
    assert dot.count("->") == 1 and "r0 -> r1" in dot
    assert 'label="r0[2]"' in dot and "width=0.566" in dot


def test_dot_self_loop():
    g = RegisterGrouping(groups=(("a",),), group_edges={(0, 0): 3})
    assert "r0 -> r0" in export_group_graph(g)


def test_dot_empty():
    dot = export_group_graph(RegisterGrouping(groups=()))
    assert dot.startswith("digraph") and dot.rstrip().endswith("}") and "->" not in dot


# --- diversity -----------------------------------------------------------------------


def brute_force_ari(a, b):
    """Pair-counting ARI straight from its definition over all item pairs."""
    n = len(a)
    pairs = list(itertools.combinations(range(n), 2))
    if not pairs:
        return 1.0
    same_a = [a[i] == a[j] for i, j in pairs]
    same_b = [b[i] == b[j] for i, j in pairs]
    both = sum(x and y for x, y in zip(same_a, same_b))
    sa, sb, m = sum(same_a), sum(same_b), len(pairs)
    expected = sa * sb / m
    mx = (sa + sb) / 2
    if mx == expected:
        return 1.0
    return (both - expected) / (mx - expected)


def test_ari_self_is_one():
    assert adjusted_rand_index([0, 0, 1, 1, 2], [5, 5, 7, 7, 9]) == 1.0


def test_ari_singletons_vs_one_group():
    ari = adjusted_rand_index(list(range(8)), [0] * 8)
    assert ari <= 0
    assert ari == pytest.approx(brute_force_ari(list(range(8)), [0] * 8))


def test_ari_known_value():
    a, b = [0, 0, 0, 1, 1, 1], [0, 0, 1, 1, 2, 2]
    assert adjusted_rand_index(a, b) == pytest.approx(brute_force_ari(a, b))
    assert adjusted_rand_index(a, b) == pytest.approx(0.24242424, abs=1e-6)


def test_histogram_distance():
    one = RegisterGrouping(groups=(("a", "b", "c", "d"),))
    singles = RegisterGrouping(groups=(("a",), ("b",), ("c",), ("d",)))
    assert size_histogram_distance(one, one) == 0.0
    assert size_histogram_distance(one, singles) == 1.0


def test_match_flops_by_signature():
    sa = {"x": (("y", 0),), "z": (("y", 1),), "w": ()}
    sb = {"x2": (("y", 0),), "z": (("y", 1),)}
    assert match_flops(sa, sb) == [("x", "x2"), ("z", "z")]


def test_no_overlap_is_incomparable():
    ga = FfGraph(("a",), (), {"a": (("o1", 0),)})
    gb = FfGraph(("b",), (), {"b": (("o2", 0),)})
    ra = RegisterGrouping(groups=(("a",),))
    rb = RegisterGrouping(groups=(("b",),))
    d = grouping_diversity(ra, rb, ga, gb)
    assert d.incomparable and d.matched == 0


def test_self_diversity_on_corpus(corpus, lib):
    for name, nl in corpus:
        g, gr = analyze(flatten(nl), lib)
        d = grouping_diversity(gr, gr, g, g)
        assert d.size_histogram_distance == 0.0, name
        if d.matched:
            assert d.ari == 1.0, name


def test_clock_gating_changes_corr_grouping(corr, lib):
    g0, r0 = analyze(flatten(corr), lib)
    var = apply_recipe(corr, lib, technique_recipe(["clock-gating"])).netlist
    g1, r1 = analyze(var, lib)
    d = grouping_diversity(r0, r1, g0, g1)
    assert d.matched > 0 and d.ari < 1.0

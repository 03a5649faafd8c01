import random
from dataclasses import replace

import pytest

from hierobf.netlist import flatten
from hierobf.ppa import PowerConfig, analyze_power, analyze_timing, fingerprint, ppa_report
from hierobf.sim import Mismatch, Simulator, Trace, check_equivalence, read_trace_csv, simulate, write_trace_csv

from conftest import gv


def _trace(ports, rows):
    return Trace(ports=tuple(ports), rows=tuple(tuple(r) for r in rows))


def test_dff_const1_trace(lib):
    nl = gv("module t(clk, q); input clk; output q; DFF_X1 r(.D(1'b1), .CK(clk), .Q(q)); endmodule", lib)
    out = simulate(nl, lib, _trace([], [(), (), ()]))
    assert out.column("q") == [0, 1, 1]


def test_inv_chain_same_cycle(lib):
    nl = gv("module t(a, y); input a; output y; wire n; INV_X1 i0(.A(a), .Y(n)); INV_X1 i1(.A(n), .Y(y)); endmodule", lib)
    assert simulate(nl, lib, _trace(["a"], [(1,)])).column("y") == [1]


def test_icg_disabled_holds_state(lib):
    nl = gv("""
    module t(clk, en, d, q); input clk, en, d; output q; wire gck;
      ICG_X1 g(.CK(clk), .E(en), .GCLK(gck));
      (* init = 1 *) DFF_X1 r(.D(d), .CK(gck), .Q(q));
    endmodule""", lib)
    rows = [(0, t % 2) for t in range(10)]
    assert simulate(nl, lib, _trace(["en", "d"], rows)).column("q") == [1] * 10


def test_simulation_deterministic(pipe, lib):
    sim = Simulator(pipe, lib)
    rng = random.Random(3)
    stim = [[rng.getrandbits(1) for _ in sim.inputs] for _ in range(20)]
    assert sim.run(stim) == Simulator(pipe, lib).run(stim)


def test_self_equivalence_on_corpus(corpus, lib):
    for name, nl in corpus:
        assert check_equivalence(nl, nl, lib, vectors=64, cycles=16), name


def test_and_equals_nand_inv(lib):
    a = gv("module t(a, b, y); input a, b; output y; AND2_X1 g(.A(a), .B(b), .Y(y)); endmodule", lib)
    b = gv("""module t(a, b, y); input a, b; output y; wire n;
      NAND2_X1 g(.A(a), .B(b), .Y(n)); INV_X1 i(.A(n), .Y(y)); endmodule""", lib)
    assert check_equivalence(a, b, lib)


def test_and_vs_or_mismatch_found(lib):
    a = gv("module t(a, b, y); input a, b; output y; AND2_X1 g(.A(a), .B(b), .Y(y)); endmodule", lib)
    o = gv("module t(a, b, y); input a, b; output y; OR2_X1 g(.A(a), .B(b), .Y(y)); endmodule", lib)
    v = check_equivalence(a, o, lib, vectors=16, cycles=1)
    assert isinstance(v, Mismatch)
    assert v.cycle == 0 and v.port == "y"
    stim = dict(zip(v.stimulus.ports, v.stimulus.rows[0]))
    assert stim["a"] != stim["b"]


def test_mismatch_replay_reproduces(lib):
    a = gv("""module t(clk, d, q); input clk, d; output q; wire n;
      DFF_X1 r0(.D(d), .CK(clk), .Q(n)); DFF_X1 r1(.D(n), .CK(clk), .Q(q)); endmodule""", lib)
    b = gv("""module t(clk, d, q); input clk, d; output q; wire n, m;
      DFF_X1 r0(.D(d), .CK(clk), .Q(n)); INV_X1 i(.A(n), .Y(m)); DFF_X1 r1(.D(m), .CK(clk), .Q(q)); endmodule""", lib)
    v = check_equivalence(a, b, lib, vectors=32, cycles=8, seed=5)
    assert isinstance(v, Mismatch)
    ta = simulate(a, lib, v.stimulus).column(v.port)
    tb = simulate(b, lib, v.stimulus).column(v.port)
    assert ta[v.cycle] == v.expected and tb[v.cycle] == v.got and v.expected != v.got


def test_latency_alignment(lib):
    a = gv("module t(clk, d, q); input clk, d; output q; DFF_X1 r(.D(d), .CK(clk), .Q(q)); endmodule", lib)
    b = gv("""module t(clk, d, q); input clk, d; output q; wire n;
      DFF_X1 r0(.D(d), .CK(clk), .Q(n)); DFF_X1 r1(.D(n), .CK(clk), .Q(q)); endmodule""", lib)
    assert not check_equivalence(a, b, lib, vectors=32, cycles=8)
    assert check_equivalence(a, b, lib, vectors=32, cycles=8, latency_b=1)


def test_trace_csv_round_trip():
    t = _trace(["a", "b"], [(0, 1), (1, 1)])
    text = write_trace_csv(t)
    assert text == "a,b\n0,1\n1,1\n"
    assert read_trace_csv(text) == t
    with pytest.raises(ValueError):
        read_trace_csv("a\n2\n")


# --- timing ---------------------------------------------------------------------

INV_TO_PO = "module t(a, y); input a; output y; INV_X1 i(.A(a), .Y(y)); endmodule"


def test_inv_stage_delay_and_slew(lib):
    # INV_X1: 4 ps intrinsic, 2 kOhm; a 3 fF load gives 4 + 2*3 and 1.5*2*3
    rep = analyze_timing(gv(INV_TO_PO, lib), lib, output_load=3.0)
    assert rep.critical_path == pytest.approx(10.0)
    assert rep.slew["y"] == pytest.approx(9.0)


def test_inv_stage_delay_with_cell_load(lib):
    # XOR2_X2 input pin is 3 fF
    nl = gv("""module t(a, b, y); input a, b; output y; wire n;
      INV_X1 i(.A(a), .Y(n)); XOR2_X2 x(.A(n), .B(b), .Y(y)); endmodule""", lib)
    rep = analyze_timing(nl, lib)
    assert rep.arrival["n"] == pytest.approx(10.0)
    assert rep.slew["n"] == pytest.approx(9.0)


def test_parallel_paths_take_max(lib):
    nl = gv("""module t(a, b, y, z); input a, b; output y, z; wire n1, m1, m2;
      INV_X1 p0(.A(a), .Y(n1)); INV_X1 p1(.A(n1), .Y(y));
      INV_X1 q0(.A(b), .Y(m1)); INV_X1 q1(.A(m1), .Y(m2)); INV_X1 q2(.A(m2), .Y(z)); endmodule""", lib)
    rep = analyze_timing(nl, lib)
    # 3-gate path: two loaded stages (4 + 2*1) and an unloaded output stage (4)
    assert rep.critical_path == pytest.approx(6 + 6 + 4)
    assert rep.endpoint == "z"


def test_adding_load_never_decreases_critical_path(corpus, lib):
    for name, nl in corpus:
        cp0 = analyze_timing(flatten(nl), lib).critical_path
        cp1 = analyze_timing(flatten(nl), lib, output_load=5.0).critical_path
        assert cp1 >= cp0, name


# --- power ----------------------------------------------------------------------


def test_leakage_sum_two_cells(lib):
    cells = dict(lib.cells)
    cells["INV_X1"] = replace(cells["INV_X1"], leakage=0.001)
    lib2 = replace(lib, cells=cells)
    nl = gv("module t(a, y); input a; output y; wire n; INV_X1 i0(.A(a), .Y(n)); INV_X1 i1(.A(n), .Y(y)); endmodule", lib2)
    assert analyze_power(nl, lib2).leakage == pytest.approx(0.002)


def test_leakage_additive_over_partition(corr, lib):
    mod = flatten(corr).top_module
    total = analyze_power(mod, lib).leakage
    parts = sum(lib[i.ref].leakage for i in mod.instances[::2]) + sum(lib[i.ref].leakage for i in mod.instances[1::2])
    assert total == pytest.approx(parts)


def test_zero_data_activity_leaves_clock_term(lib):
    nl = gv("""module t(clk, d, q); input clk, d; output q; wire n;
      DFF_X1 r(.D(d), .CK(clk), .Q(n)); INV_X1 i(.A(n), .Y(q)); endmodule""", lib)
    cfg = PowerConfig(data_activity=0.0)
    dyn = analyze_power(nl, lib, config=cfg).dynamic
    clock_cap = lib["DFF_X1"].input_caps["CK"]
    expected = 0.5 * 1.0 * clock_cap * cfg.vdd**2 * cfg.freq * 1e-12
    assert dyn == pytest.approx(expected)


def _bank(lib, gated: bool):
    n = 4
    if gated:
        body = ["ICG_X1 g(.CK(clk), .E(en), .GCLK(gck));"]
        body += [f"DFF_X1 r{i}(.D(d[{i}]), .CK(gck), .Q(q[{i}]));" for i in range(n)]
        wires = "wire gck;"
    else:
        body = [f"MUX2_X1 m{i}(.A(q[{i}]), .B(d[{i}]), .S(en), .Y(n{i}));" for i in range(n)]
        body += [f"DFF_X1 r{i}(.D(n{i}), .CK(clk), .Q(q[{i}]));" for i in range(n)]
        wires = "wire " + ", ".join(f"n{i}" for i in range(n)) + ";"
    text = f"module bank(clk, en, d, q); input clk, en; input [3:0] d; output [3:0] q; {wires}\n" + "\n".join(body) + "\nendmodule"
    return gv(text, lib)


def test_gated_bank_uses_less_dynamic_power(lib):
    act = {"en": 0.1}
    gated = analyze_power(_bank(lib, True), lib, activity=act).dynamic
    plain = analyze_power(_bank(lib, False), lib, activity=act).dynamic
    assert gated < plain
    assert check_equivalence(_bank(lib, True), _bank(lib, False), lib, vectors=128, cycles=32)


# --- fingerprint ------------------------------------------------------------------


def _report(lib, **kw):
    base = ppa_report(gv(INV_TO_PO, lib), lib)
    return replace(base, **kw)


def test_fingerprint_rounds_area(lib):
    assert fingerprint(_report(lib, area=432.94)).area_r == 432.9


def test_fingerprint_ignores_tiny_area_change(lib):
    assert fingerprint(_report(lib, area=400.00)) == fingerprint(_report(lib, area=400.01))


def test_fingerprint_sees_cell_count(lib):
    assert fingerprint(_report(lib, cell_count=5)) != fingerprint(_report(lib, cell_count=6))


def test_ppa_report_histogram(corr, lib):
    rep = ppa_report(flatten(corr), lib)
    assert rep.cell_count == sum(rep.cell_histogram.values()) == len(flatten(corr).top_module.instances)
    assert rep.area == pytest.approx(sum(lib[c].area * k for c, k in rep.cell_histogram.items()))

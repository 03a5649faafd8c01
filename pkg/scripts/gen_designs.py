#!/usr/bin/env python3
"""Generate the two bundled benchmark netlists into src/hierobf/data/designs/.

pipe.gv  hierarchical multi-module datapath pipeline (enable registers, ripple adders,
         4x4 multipliers, reduction chains, inverter/flop idioms)
corr.gv  correlator-style design: two 10-bit code LFSRs, a 10-bit epoch counter,
         a code delay line, three channel accumulators with programmable thresholds,
         registered dump strobes and a parity register over the dumped values

Both files are written through the package's own writer so they are canonical.
"""

from __future__ import annotations

import argparse
from pathlib import Path

from hierobf.library import bundled_library
from hierobf.verilog import parse, write

LIB = bundled_library()
OUT = Path(__file__).resolve().parents[1] / "src" / "hierobf" / "data" / "designs"


class Mod:
    def __init__(self, name: str):
        self.name = name
        self.ports: list[tuple[str, str, int | None]] = []
        self.wires: list[str] = []
        self.body: list[str] = []
        self.k = 0

    def port(self, direction: str, name: str, width: int | None = None):
        self.ports.append((direction, name, width))
        if width is None:
            return name
        return [f"{name}[{i}]" for i in range(width)]

    def net(self, hint: str = "n") -> str:
        self.k += 1
        n = f"{hint}_{self.k}"
        self.wires.append(n)
        return n

    def cell(self, ref: str, out: str | None = None, init: int = 0, name: str | None = None, **pins) -> str:
        spec = LIB[ref]
        if out is None and spec.output not in pins:
            out = self.net("w")
        if out is not None:
            pins[spec.output] = out
        self.k += 1
        name = name or f"{ref.split('_')[0].lower()}_{self.k}"
        conns = ", ".join(f".{p}({n})" for p, n in pins.items())
        attr = f"(* init = {init} *) " if init else ""
        self.body.append(f"  {attr}{ref} {name} ({conns});")
        return pins[spec.output]

    def sub(self, mod: str, name: str, **conns) -> None:
        parts = []
        for p, v in conns.items():
            if isinstance(v, list):
                v = "{" + ", ".join(reversed(v)) + "}"
            parts.append(f".{p}({v})")
        self.body.append(f"  {mod} {name} ({', '.join(parts)});")

    def text(self) -> str:
        names = ", ".join(p[1] for p in self.ports)
        lines = [f"module {self.name} ({names});"]
        for d, n, w in self.ports:
            lines.append(f"  {d} {'' if w is None else f'[{w - 1}:0] '}{n};")
        for w in self.wires:
            lines.append(f"  wire {w};")
        lines += self.body
        lines.append("endmodule")
        return "\n".join(lines) + "\n"


# --- shared building blocks -------------------------------------------------


def enreg(width: int) -> Mod:
    """Enable register: D = en ? d : q (gateable recirculation)."""
    m = Mod(f"enreg{width}")
    clk = m.port("input", "clk")
    en = m.port("input", "en")
    d = m.port("input", "d", width)
    q = m.port("output", "q", width)
    for i in range(width):
        mux = "MUX2_X2" if i % 7 == 3 else "MUX2_X1"
        nd = m.cell(mux, S=en, A=q[i], B=d[i])
        m.cell("DFF_X1", D=nd, CK=clk, Q=q[i], name=f"r{i}")
    return m


def full_adder(m: Mod, a: str, b: str, c: str, style: int) -> tuple[str, str]:
    p = m.cell("XOR2_X1" if style != 2 else "XOR2_X2", A=a, B=b)
    s = m.cell("XOR2_X1", A=p, B=c)
    if style == 0:
        g = m.cell("AND2_X1", A=a, B=b)
        t = m.cell("AND2_X1", A=p, B=c)
        co = m.cell("OR2_X1", A=g, B=t)
    elif style == 1:
        g = m.cell("NAND2_X1", A=a, B=b)
        t = m.cell("NAND2_X1", A=p, B=c)
        co = m.cell("NAND2_X2", A=g, B=t)
    elif style == 2:
        g = m.cell("AND2_X2", A=a, B=b)
        n = m.cell("AOI21_X1", A1=p, A2=c, B=g)
        co = m.cell("INV_X1", A=n)
    else:
        g = m.cell("NOR2_X1", A=a, B=b)
        t = m.cell("NAND2_X1", A=p, B=c)
        gn = m.cell("INV_X2", A=g)
        co = m.cell("OR2_X2", A=m.cell("INV_X1", A=t), B=m.cell("NOR2_X2", A=g, B=const0()))
        co = m.cell("OR2_X1", A=co, B=gn)
    return s, co


def const0() -> str:
    return "1'b0"


def adder8() -> Mod:
    m = Mod("add8")
    a = m.port("input", "a", 8)
    b = m.port("input", "b", 8)
    ci = m.port("input", "ci")
    s = m.port("output", "s", 8)
    co = m.port("output", "co")
    c = ci
    for i in range(8):
        si, c = full_adder(m, a[i], b[i], c, i % 4)
        m.cell("BUF_X1", A=si, out=s[i])
    m.cell("BUF_X2", A=c, out=co)
    return m


def mul4() -> Mod:
    m = Mod("mul4")
    a = m.port("input", "a", 4)
    b = m.port("input", "b", 4)
    p = m.port("output", "p", 8)
    pp = [[m.cell("AND2_X1" if (i + j) % 3 else "AND2_X2", A=a[i], B=b[j]) for i in range(4)] for j in range(4)]
    # array multiplier: row j adds pp[j] shifted by j
    acc = pp[0] + ["1'b0"] * 4
    for j in range(1, 4):
        c = "1'b0"
        for i in range(4):
            s, c = full_adder(m, acc[i + j], pp[j][i], c, (i + j) % 4)
            acc[i + j] = s
        acc[j + 4] = c
    for i in range(8):
        m.cell("BUF_X1", A=acc[i], out=p[i])
    return m


def and_chain(width: int) -> Mod:
    m = Mod(f"andchain{width}")
    x = m.port("input", "x", width)
    y = m.port("output", "y")
    cur = x[0]
    for i in range(1, width - 1):
        cur = m.cell("AND2_X1", A=cur, B=x[i])
    m.cell("AND2_X1", A=cur, B=x[width - 1], out=y)
    return m


def xor_chain(width: int) -> Mod:
    m = Mod(f"xorchain{width}")
    x = m.port("input", "x", width)
    y = m.port("output", "y")
    cur = x[0]
    for i in range(1, width - 1):
        cur = m.cell("XOR2_X1", A=cur, B=x[i])
    m.cell("XOR2_X1", A=cur, B=x[width - 1], out=y)
    return m


# --- pipeline -----------------------------------------------------------------


def pipeline(width: int = 32) -> str:
    mods = [enreg(width), adder8(), mul4(), and_chain(8), xor_chain(8)]
    m = Mod("pipe_top")
    clk = m.port("input", "clk")
    en_a = m.port("input", "en_a")
    en_b = m.port("input", "en_b")
    en_y = m.port("input", "en_y")
    mode = m.port("input", "mode")
    a = m.port("input", "a", width)
    b = m.port("input", "b", width)
    c = m.port("input", "c", 8)
    y = m.port("output", "y", width)
    flag = m.port("output", "flag")
    par = m.port("output", "par")

    ra = [m.net("ra") for _ in range(width)]
    rb = [m.net("rb") for _ in range(width)]
    m.sub(f"enreg{width}", "u_ra", clk=clk, en=en_a, d=a, q=ra)
    m.sub(f"enreg{width}", "u_rb", clk=clk, en=en_b, d=b, q=rb)

    # inverter feeding two replicated flops per bit (backward-retiming material)
    rc1, rc2 = [], []
    for i in range(8):
        cn = m.cell("INV_X1", A=c[i])
        rc1.append(m.cell("DFF_X1", D=cn, CK=clk, Q=m.net("rc1"), name=f"rc1_{i}"))
        rc2.append(m.cell("DFF_X1", D=cn, CK=clk, Q=m.net("rc2"), name=f"rc2_{i}"))
    # inverter directly feeding a single flop
    mode_n = m.cell("INV_X2", A=mode)
    rmode = m.cell("DFF_X2", D=mode_n, CK=clk, Q=m.net("rmode"), name="rmode")

    # stage 2: ripple adder of width bits, multipliers on nibbles, reductions
    carry = rmode
    ssum = []
    for k in range(width // 8):
        s = [m.net("sum") for _ in range(8)]
        co = m.net("carry")
        m.sub("add8", f"u_add{k}", a=ra[8 * k : 8 * k + 8], b=rb[8 * k : 8 * k + 8], ci=carry, s=s, co=co)
        ssum += s
        carry = co
    prods = []
    for k in range(width // 8):
        p = [m.net("prod") for _ in range(8)]
        m.sub("mul4", f"u_mul{k}", a=ra[8 * k : 8 * k + 4], b=rb[8 * k + 4 : 8 * k + 8], p=p)
        prods += p
    andr = m.net("andr")
    m.sub("andchain8", "u_and", x=ra[width - 8 :], y=andr)
    parr = m.net("parr")
    m.sub("xorchain8", "u_par", x=rb[width - 8 :], y=parr)
    mixes = []
    for i in range(8):
        cc = m.cell("AND2_X1", A=rc1[i], B=ra[i])
        dd = m.cell("NOR2_X1", A=rc2[i], B=rb[i])
        mixes.append(m.cell("OR3_X1", A=cc, B=dd, C=rc2[(i + 3) % 8]))

    s2sum = [m.cell("DFF_X1", D=ssum[i], CK=clk, Q=m.net("s2s"), name=f"s2sum_{i}") for i in range(width)]
    s2prod = [m.cell("DFF_X1", D=prods[i], CK=clk, Q=m.net("s2p"), name=f"s2prod_{i}") for i in range(width)]
    s2mix = [m.cell("DFF_X1", D=mixes[i], CK=clk, Q=m.net("s2m"), name=f"s2mix_{i}") for i in range(8)]
    s2carry = m.cell("DFF_X1", D=carry, CK=clk, Q=m.net("s2c"), name="s2carry")
    s2mode = m.cell("DFF_X1", D=rmode, CK=clk, Q=m.net("s2mode"), name="s2mode")
    # flop whose output feeds only inverters
    s2and = m.cell("DFF_X1", D=andr, CK=clk, Q=m.net("s2and"), name="s2and")
    and_n1 = m.cell("INV_X1", A=s2and)
    and_n2 = m.cell("INV_X1", A=s2and)
    # two flops feeding only one gate (forward area retiming)
    s2par = m.cell("DFF_X1", D=parr, CK=clk, Q=m.net("s2par"), name="s2par")
    s2par2 = m.cell("DFF_X1", D=m.cell("XOR2_X1", A=rb[0], B=rb[1]), CK=clk, Q=m.net("s2par2"), name="s2par2")
    par_x = m.cell("XOR2_X2", A=s2par, B=s2par2)

    # stage 3: select and combine, enable-registered outputs
    mixed = []
    for i in range(width):
        sel = m.cell("MUX2_X1", S=s2mode, A=s2prod[i], B=s2mix[i % 8])
        x = m.cell("XOR2_X1", A=s2sum[i], B=sel)
        if i % 5 == 0:
            x = m.cell("AND3_X1", A=x, B=and_n1, C=m.cell("OR2_X1", A=s2carry, B=s2prod[(i + 1) % width]))
        mixed.append(x)
    m.sub(f"enreg{width}", "u_ry", clk=clk, en=en_y, d=mixed, q=y)
    fl = m.cell("AOI21_X2", A1=and_n2, A2=s2carry, B=s2mix[0])
    m.cell("DFFQN_X1", D=fl, CK=clk, Q=flag, QN=m.net("flag_n"), name="rflag")
    m.cell("DFF_X2", D=par_x, CK=clk, Q=par, name="rpar")

    mods.append(m)
    return "".join(x.text() for x in mods)


# --- correlator ---------------------------------------------------------------


def lfsr(name: str, taps: list[int]) -> Mod:
    """10-bit Fibonacci LFSR (all-ones seed); feedback is the XOR chain of the tap stages."""
    m = Mod(name)
    clk = m.port("input", "clk")
    q = m.port("output", "q", 10)
    fb = q[taps[0] - 1]
    for t in taps[1:]:
        fb = m.cell("XOR2_X1", A=fb, B=q[t - 1])
    m.cell("DFF_X1", D=fb, CK=clk, Q=q[0], init=1, name="s0")
    for i in range(1, 10):
        m.cell("DFF_X1", D=q[i - 1], CK=clk, Q=q[i], init=1, name=f"s{i}")
    return m


def counter10() -> Mod:
    m = Mod("counter10")
    clk = m.port("input", "clk")
    en = m.port("input", "en")
    q = m.port("output", "q", 10)
    c = "1'b1"
    for i in range(10):
        s = m.cell("XOR2_X1", A=q[i], B=c) if i else m.cell("INV_X1", A=q[0])
        c = m.cell("AND2_X1", A=q[i], B=c) if i else q[0]
        nd = m.cell("MUX2_X1", S=en, A=q[i], B=s)
        m.cell("DFF_X1", D=nd, CK=clk, Q=q[i], name=f"c{i}")
    return m


THR_BITS = 4


def chan_acc() -> Mod:
    m = Mod("chan_acc")
    clk = m.port("input", "clk")
    en = m.port("input", "en")
    dump_n = m.port("input", "dump_n")
    chip = m.port("input", "chip")
    we = m.port("input", "we")
    wdata = m.port("input", "wdata", THR_BITS)
    x = m.port("input", "x", 4)
    y = m.port("output", "y", 10)
    hit = m.port("output", "hit")
    acc = [m.net("acc") for _ in range(10)]
    mixed = []
    for i in range(4):
        q = m.net("rm")
        nd = m.cell("MUX2_X1", S=en, A=q, B=m.cell("XOR2_X1", A=x[i], B=chip))
        mixed.append(m.cell("DFF_X1", D=nd, CK=clk, Q=q, name=f"m{i}"))
    c = "1'b0"
    for i in range(10):
        operand = mixed[i] if i < 4 else chip
        s, c = full_adder(m, acc[i], operand, c, i % 4)
        nxt = m.cell("AND2_X1", A=s, B=dump_n)
        nd = m.cell("MUX2_X1", S=en, A=acc[i], B=nxt)
        m.cell("DFF_X1", D=nd, CK=clk, Q=acc[i], name=f"a{i}")
    # integrate-and-dump output register, loaded while dump_n is low
    for i in range(10):
        nd = m.cell("MUX2_X1", S=dump_n, A=acc[i], B=y[i])
        m.cell("DFF_X1", D=nd, CK=clk, Q=y[i], name=f"o{i}")
    # programmable detection threshold and an equality flag against the dumped value
    cur = None
    for i in range(THR_BITS):
        q = m.net("thr")
        m.cell("DFF_X1", D=m.cell("MUX2_X1", S=we, A=q, B=wdata[i]), CK=clk, Q=q, name=f"t{i}")
        eq = m.cell("INV_X1", A=m.cell("XOR2_X1", A=y[10 - THR_BITS + i], B=q))
        cur = eq if cur is None else m.cell("AND2_X1", A=cur, B=eq)
    m.cell("DFF_X1", D=cur, CK=clk, Q=hit, name="rhit")
    return m


def correlator() -> str:
    mods = [lfsr("lfsr_g1", [3, 10]), lfsr("lfsr_g2", [2, 3, 6, 8, 9, 10]), counter10(), chan_acc()]
    m = Mod("corr_top")
    clk = m.port("input", "clk")
    en = m.port("input", "en")
    dump = m.port("input", "dump")
    en_ch = m.port("input", "en_ch", 3)
    xin = m.port("input", "x", 4)
    acc = [m.port("output", f"acc{k}", 10) for k in range(3)]
    cnt = m.port("output", "cnt", 10)
    epoch = m.port("output", "epoch")
    chip_o = m.port("output", "chip")

    g1 = [m.net("g1") for _ in range(10)]
    g2 = [m.net("g2") for _ in range(10)]
    m.sub("lfsr_g1", "u_g1", clk=clk, q=g1)
    m.sub("lfsr_g2", "u_g2", clk=clk, q=g2)
    m.sub("counter10", "u_cnt", clk=clk, en=en, q=cnt)
    code = m.cell("XOR2_X1", A=g1[9], B=m.cell("XOR2_X1", A=g2[1], B=g2[5]))
    # chip register whose output only drives inverters
    rchip = m.cell("DFF_X1", D=code, CK=clk, Q=m.net("rchip"), name="rchip")
    chip_n = m.cell("INV_X1", A=rchip)
    m.cell("INV_X2", A=rchip, out=chip_o)
    # enabled code delay line
    line = []
    prev = chip_n
    for i in range(10):
        q = m.net("dl")
        nd = m.cell("MUX2_X1", S=en, A=q, B=prev)
        m.cell("DFF_X1", D=nd, CK=clk, Q=q, name=f"dl{i}")
        line.append(q)
        prev = q
    # dump strobe, inverted once and registered per channel (replicated flops)
    dn = m.cell("INV_X1", A=dump)
    dregs = [m.cell("DFF_X1", D=dn, CK=clk, Q=m.net("dump_r"), name=f"rdump{k}") for k in range(3)]
    hits = [m.port("output", f"hit{k}") for k in range(3)]
    wdata = m.port("input", "wdata", THR_BITS)
    we = m.cell("DFF_X1", D=m.port("input", "we"), CK=clk, Q=m.net("we_r"), name="rwe")
    for k, tap in enumerate((0, 4, 9)):
        en_r = m.cell("DFF_X1", D=en_ch[k], CK=clk, Q=m.net("en_r"), name=f"ren{k}")
        m.sub("chan_acc", f"u_ch{k}", clk=clk, en=en_r, dump_n=dregs[k], chip=line[tap], x=xin, y=acc[k], hit=hits[k], we=we, wdata=wdata)
    # parity over all dumped channel values
    cur = acc[0][0]
    for bit in [b for a in acc for b in a][1:]:
        cur = m.cell("XOR2_X1", A=cur, B=bit)
    m.cell("DFF_X1", D=cur, CK=clk, Q=m.port("output", "par"), name="rpar")
    # epoch flag: AND reduction of the counter
    cur = cnt[0]
    for i in range(1, 10):
        cur = m.cell("AND2_X1", A=cur, B=cnt[i])
    m.cell("DFF_X1", D=cur, CK=clk, Q=epoch, name="repoch")
    mods.append(m)
    return "".join(x.text() for x in mods)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", type=Path, default=OUT)
    args = ap.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)
    for fname, text in (("pipe.gv", pipeline()), ("corr.gv", correlator())):
        nl = parse(text, LIB, filename=fname)
        (args.out / fname).write_text(write(nl))
        n = sum(1 for _ in _leaf_cells(nl))
        print(f"{fname}: {len(nl.modules)} modules, {n} leaf cells after flattening")


def _leaf_cells(nl):
    from hierobf.netlist import flat_top

    return flat_top(nl).instances


if __name__ == "__main__":
    main()

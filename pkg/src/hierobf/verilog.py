"""Reader and writer for the structural gate-level Verilog subset (``.gv``).

Supported: ``module``/``endmodule``, ``input``/``output``/``wire`` with optional
``[msb:lsb]``, named-port instantiation of cells and modules, ``assign`` aliases and
constants, ``(* init = 0|1 *)`` on sequential instances, escaped identifiers and
both comment styles. Everything is expanded to single-bit nets.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Optional

from .library import CellLibrary, bundled_library
from .netlist import (
    CONST0,
    CONST1,
    CONSTS,
    Instance,
    ModuleDef,
    Netlist,
    NetlistError,
    PortDecl,
    SourceSpan,
    check,
)

KEYWORDS = {"module", "endmodule", "input", "output", "wire", "assign", "inout", "reg"}

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<lcomment>//[^\n]*)
  | (?P<bcomment>/\*.*?\*/)
  | (?P<attr_open>\(\*)
  | (?P<attr_close>\*\))
  | (?P<escaped>\\\S+)
  | (?P<const>\d*'[bB][01_]+)
  | (?P<number>\d+)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_$]*)
  | (?P<sym>[()\[\]{},;.:=])
    """,
    re.VERBOSE | re.DOTALL,
)


class ParseError(NetlistError):
    def __init__(self, message: str, span: Optional[SourceSpan] = None, expected: tuple = ()):
        self.span = span
        self.expected = expected
        self.message = message
        where = f"{span}: " if span else ""
        exp = f" (expected {' or '.join(expected)})" if expected else ""
        super().__init__(f"{where}{message}{exp}")


@dataclass
class _Tok:
    kind: str
    text: str
    span: SourceSpan


def tokenize(text: str, filename: str = "<input>") -> list[_Tok]:
    toks: list[_Tok] = []
    pos, line, col = 0, 1, 1
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if not m:
            raise ParseError(f"unexpected character {text[pos]!r}", SourceSpan(filename, line, col))
        kind = m.lastgroup
        val = m.group()
        if kind not in ("ws", "lcomment", "bcomment"):
            if kind == "escaped":
                val = val[1:]
                kind = "ident"
            elif kind == "ident" and val in KEYWORDS:
                kind = "kw"
            toks.append(_Tok(kind, val, SourceSpan(filename, line, col)))
        nl = val.count("\n") if kind in ("ws", "bcomment") else 0
        if nl:
            line += nl
            col = len(val) - val.rfind("\n")
        else:
            col += m.end() - pos
        pos = m.end()
    toks.append(_Tok("eof", "", SourceSpan(filename, line, col)))
    return toks


# raw syntax ------------------------------------------------------------------

# an expression is a list of bit references; each is ("net", name) or ("const", 0|1),
# resolved against declarations later. ("vec", name) stands for a whole declared name.


@dataclass
class _RawInst:
    ref: str
    name: str
    conns: list  # (pin, expr|None, span)
    init: Optional[int]
    span: SourceSpan


@dataclass
class _RawModule:
    name: str
    span: SourceSpan
    port_order: list = field(default_factory=list)
    decls: dict = field(default_factory=dict)  # name -> (kind, msb, lsb, span)
    insts: list = field(default_factory=list)
    assigns: list = field(default_factory=list)  # (lhs expr, rhs expr, span)


class _Parser:
    def __init__(self, toks: list[_Tok]):
        self.toks = toks
        self.i = 0

    @property
    def cur(self) -> _Tok:
        return self.toks[self.i]

    def take(self, kind: str | None = None, text: str | None = None) -> _Tok:
        t = self.cur
        if (kind and t.kind != kind) or (text and t.text != text):
            raise ParseError(f"unexpected {t.text or 'end of input'!r}", t.span, (repr(text) if text else kind,))
        self.i += 1
        return t

    def accept(self, text: str) -> bool:
        if self.cur.text == text and self.cur.kind in ("sym", "kw", "attr_open", "attr_close"):
            self.i += 1
            return True
        return False

    def parse_file(self) -> list[_RawModule]:
        mods = []
        while self.cur.kind != "eof":
            if self.cur.kind == "attr_open":
                self.skip_attr()
                continue
            mods.append(self.parse_module())
        return mods

    def skip_attr(self) -> dict:
        self.take("attr_open")
        attrs = {}
        while self.cur.kind != "attr_close":
            key = self.take("ident")
            val = None
            if self.accept("="):
                t = self.cur
                if t.kind not in ("number", "const"):
                    raise ParseError("attribute value must be a number", t.span, ("number",))
                self.i += 1
                val = _const_bits(t)[-1] if t.kind == "const" else int(t.text)
            attrs[key.text] = val
            if not self.accept(","):
                break
        self.take("attr_close")
        return attrs

    def parse_range(self):
        if self.cur.text != "[":
            return None, None
        self.take("sym", "[")
        msb = int(self.take("number").text)
        self.take("sym", ":")
        lsb = int(self.take("number").text)
        self.take("sym", "]")
        return msb, lsb

    def declare(self, mod: _RawModule, kind: str, name: _Tok, rng) -> None:
        prev = mod.decls.get(name.text)
        if prev is not None:
            # port header name followed by a direction declaration, or wire after output
            if prev[0] == "port" or (prev[0] in ("input", "output") and kind == "wire") or (kind in ("input", "output") and prev[0] == "wire"):
                if prev[0] in ("input", "output"):
                    kind = prev[0]
                    rng = (prev[1], prev[2]) if prev[1] is not None else rng
            else:
                raise ParseError(f"duplicate declaration of {name.text}", name.span)
        mod.decls[name.text] = (kind, rng[0], rng[1], name.span)

    def parse_module(self) -> _RawModule:
        start = self.take("kw", "module")
        name = self.take("ident")
        mod = _RawModule(name=name.text, span=start.span)
        if self.accept("("):
            direction = None
            rng = (None, None)
            while self.cur.text != ")":
                if self.cur.kind == "kw" and self.cur.text in ("input", "output"):
                    direction = self.take().text
                    if self.cur.kind == "kw" and self.cur.text == "wire":
                        self.take()
                    rng = self.parse_range()
                p = self.take("ident")
                mod.port_order.append(p.text)
                if direction:
                    self.declare(mod, direction, p, rng)
                else:
                    mod.decls.setdefault(p.text, ("port", None, None, p.span))
                if not self.accept(","):
                    break
            self.take("sym", ")")
        self.take("sym", ";")
        pending_init = None
        while not (self.cur.kind == "kw" and self.cur.text == "endmodule"):
            t = self.cur
            if t.kind == "eof":
                raise ParseError(f"missing endmodule for {mod.name}", t.span, ("'endmodule'",))
            if t.kind == "attr_open":
                attrs = self.skip_attr()
                if "init" in attrs:
                    pending_init = attrs["init"]
                continue
            if t.kind == "kw" and t.text in ("input", "output", "wire"):
                kind = self.take().text
                if kind != "wire" and self.cur.kind == "kw" and self.cur.text == "wire":
                    self.take()
                rng = self.parse_range()
                while True:
                    n = self.take("ident")
                    self.declare(mod, kind, n, rng)
                    if kind != "wire" and n.text not in mod.port_order:
                        raise ParseError(f"{kind} {n.text} is not in the port list", n.span)
                    if not self.accept(","):
                        break
                self.take("sym", ";")
                continue
            if t.kind == "kw" and t.text == "assign":
                self.take()
                lhs = self.parse_expr()
                self.take("sym", "=")
                rhs = self.parse_expr()
                self.take("sym", ";")
                mod.assigns.append((lhs, rhs, t.span))
                continue
            if t.kind == "kw":
                raise ParseError(f"unsupported construct {t.text!r}", t.span, ("instance", "declaration", "assign"))
            mod.insts.append(self.parse_instance(pending_init))
            pending_init = None
        self.take("kw", "endmodule")
        return mod

    def parse_instance(self, init) -> _RawInst:
        ref = self.take("ident")
        if self.cur.text == "#":
            raise ParseError("parameterised instances are not supported", self.cur.span)
        name = self.take("ident")
        self.take("sym", "(")
        conns = []
        while self.cur.text != ")":
            if self.cur.text != ".":
                raise ParseError("only named port connections are supported", self.cur.span, ("'.'",))
            self.take("sym", ".")
            pin = self.take("ident")
            self.take("sym", "(")
            expr = None if self.cur.text == ")" else self.parse_expr()
            self.take("sym", ")")
            conns.append((pin.text, expr, pin.span))
            if not self.accept(","):
                break
        self.take("sym", ")")
        self.take("sym", ";")
        return _RawInst(ref=ref.text, name=name.text, conns=conns, init=init, span=ref.span)

    def parse_expr(self) -> list:
        t = self.cur
        if t.text == "{" and t.kind == "sym":
            self.take()
            parts = []
            while True:
                parts.extend(self.parse_expr())
                if not self.accept(","):
                    break
            self.take("sym", "}")
            return parts
        if t.kind == "const":
            self.take()
            return [("const", b, t.span) for b in _const_bits(t)]
        if t.kind == "number":
            self.take()
            return [("const", int(t.text) & 1, t.span)]
        name = self.take("ident")
        if self.cur.text == "[":
            self.take()
            hi = int(self.take("number").text)
            if self.accept(":"):
                lo = int(self.take("number").text)
                self.take("sym", "]")
                step = -1 if hi >= lo else 1
                return [("bit", name.text, i, name.span) for i in range(hi, lo + step, step)]
            self.take("sym", "]")
            return [("bit", name.text, hi, name.span)]
        return [("vec", name.text, None, name.span)]


def _const_bits(t: _Tok) -> list[int]:
    size, _, digits = t.text.partition("'")
    bits = [int(c) for c in digits[1:].replace("_", "")]
    width = int(size) if size else len(bits)
    bits = ([0] * max(0, width - len(bits)) + bits)[-width:]
    return bits


# elaboration ----------------------------------------------------------------


class _UnionFind:
    def __init__(self):
        self.parent: dict[str, str] = {}

    def find(self, x: str) -> str:
        p = self.parent.setdefault(x, x)
        if p != x:
            p = self.parent[x] = self.find(p)
        return p


def _elaborate(raw: _RawModule, modules: dict[str, _RawModule], lib: CellLibrary) -> ModuleDef:
    decls = raw.decls
    ports = []
    for pname in raw.port_order:
        kind, msb, lsb, span = decls[pname]
        if kind not in ("input", "output"):
            raise ParseError(f"port {pname} has no direction declaration", span)
        ports.append(PortDecl(pname, kind, msb, lsb))
    port_dir = {}
    for p in ports:
        for b in p.bits():
            port_dir[b] = p.direction
    nets: set[str] = set()
    for name, (kind, msb, lsb, _span) in decls.items():
        if kind == "wire":
            nets.update(PortDecl(name, "wire", msb, lsb).bits())

    def bits_of(expr: list) -> list[str]:
        out = []
        for item in expr:
            if item[0] == "const":
                out.append(CONST1 if item[1] else CONST0)
            elif item[0] == "bit":
                _, name, idx, span = item
                d = decls.get(name)
                if d is None or d[1] is None:
                    raise ParseError(f"bit select on undeclared vector {name}", span)
                lo, hi = sorted((d[1], d[2]))
                if not lo <= idx <= hi:
                    raise ParseError(f"index {idx} out of range for {name}[{d[1]}:{d[2]}]", span)
                out.append(f"{name}[{idx}]")
            else:
                _, name, _, span = item
                d = decls.get(name)
                if d is not None and d[1] is not None:
                    out.extend(PortDecl(name, "wire", d[1], d[2]).bits())
                else:
                    if d is None:
                        nets.add(name)  # implicit scalar wire
                    out.append(name)
        return out

    uf = _UnionFind()
    anchors = set(port_dir) | set(CONSTS)
    buffers: list[tuple[str, str, SourceSpan]] = []
    for lhs, rhs, span in raw.assigns:
        lb, rb = bits_of(lhs), bits_of(rhs)
        if len(lb) != len(rb):
            raise ParseError(f"width mismatch in assign ({len(lb)} vs {len(rb)} bits)", span)
        for dst, src in zip(lb, rb):
            if dst in CONSTS or port_dir.get(dst) == "input":
                raise ParseError(f"cannot assign to {dst}", span)
            a, b = uf.find(dst), uf.find(src)
            if a == b:
                continue
            a_anch, b_anch = a in anchors, b in anchors
            if a_anch and b_anch:
                if port_dir.get(a) != "output":
                    raise ParseError(f"conflicting assignment to {dst}", span)
                buffers.append((b, a, span))
            elif a_anch:
                uf.parent[b] = a
            else:
                uf.parent[a] = b
    rename = lambda n: uf.find(n)  # noqa: E731

    insts: list[Instance] = []
    for ri in raw.insts:
        if ri.ref in modules:
            child = modules[ri.ref]
            widths = {}
            for pname in child.port_order:
                k, msb, lsb, _ = child.decls[pname]
                widths[pname] = PortDecl(pname, k, msb, lsb).bits()
            conns = {}
            for pin, expr, span in ri.conns:
                if pin not in widths:
                    raise ParseError(f"module {ri.ref} has no port {pin}", span)
                if expr is None:
                    continue
                bits = bits_of(expr)
                if len(bits) != len(widths[pin]):
                    raise ParseError(
                        f"width mismatch on {ri.name}.{pin}: port is {len(widths[pin])} bits, got {len(bits)}", span
                    )
                for pb, nb in zip(widths[pin], bits):
                    conns[pb] = rename(nb)
            insts.append(Instance(ri.name, ri.ref, conns, hier=True, init=0, span=ri.span))
            continue
        if ri.ref not in lib:
            raise ParseError(f"unknown cell or module {ri.ref}", ri.span)
        spec = lib[ri.ref]
        conns = {}
        for pin, expr, span in ri.conns:
            if expr is None:
                continue
            bits = bits_of(expr)
            if len(bits) != 1:
                raise ParseError(f"width mismatch on {ri.name}.{pin}: cell pins are 1 bit, got {len(bits)}", span)
            conns[pin] = rename(bits[0])
        init = 0 if ri.init is None else ri.init
        if ri.init is not None and spec.kind != "ff":
            raise ParseError(f"init attribute on non-sequential cell {ri.ref}", ri.span)
        insts.append(Instance(ri.name, ri.ref, conns, hier=False, init=init, span=ri.span))
    if buffers:
        buf = lib.smallest("buf")
        if buf is None:
            raise ParseError("port-to-port assign needs a buffer cell", buffers[0][2])
        taken = {i.name for i in insts}
        for k, (src, dst, span) in enumerate(buffers):
            name = f"assign_buf_{k}"
            while name in taken:
                name += "_"
            taken.add(name)
            insts.append(Instance(name, buf.name, {buf.inputs[0]: src, buf.output: dst}, span=span))
    live = {rename(n) for n in nets}
    live -= set(port_dir)
    live -= set(CONSTS)
    return ModuleDef(name=raw.name, ports=tuple(ports), nets=frozenset(live), instances=tuple(insts))


def parse(text: str, lib: CellLibrary | None = None, filename: str = "<input>", top: str | None = None,
          validate: bool = True) -> Netlist:
    """Parse ``.gv`` text into a bit-level :class:`Netlist` and validate it."""
    lib = lib or bundled_library()
    raw_mods = _Parser(tokenize(text, filename)).parse_file()
    if not raw_mods:
        raise ParseError("no module found", SourceSpan(filename, 1, 1), ("'module'",))
    by_name: dict[str, _RawModule] = {}
    for rm in raw_mods:
        if rm.name in by_name:
            raise ParseError(f"duplicate module {rm.name}", rm.span)
        by_name[rm.name] = rm
    modules = {name: _elaborate(rm, by_name, lib) for name, rm in by_name.items()}
    if top is None:
        instantiated = {i.ref for m in modules.values() for i in m.instances if i.hier}
        roots = [m.name for m in raw_mods if m.name not in instantiated]
        top = roots[-1] if roots else raw_mods[-1].name
    nl = Netlist(name=top, modules=modules, top=top)
    if validate:
        check(nl, lib)
    return nl


def read(path, lib: CellLibrary | None = None) -> Netlist:
    with open(path, encoding="ascii") as fh:
        return parse(fh.read(), lib, filename=str(path))


# writer ----------------------------------------------------------------------

_SIMPLE = re.compile(r"^[A-Za-z_][A-Za-z0-9_$]*$")


def _ident(name: str) -> str:
    if _SIMPLE.match(name) and name not in KEYWORDS:
        return name
    return "\\" + name + " "


def _netref(net: str, port_bits: set[str]) -> str:
    if net == CONST0:
        return "1'b0"
    if net == CONST1:
        return "1'b1"
    if net in port_bits and net.endswith("]") and "[" in net:
        base, idx = net[:-1].split("[", 1)
        return f"{_ident(base)}[{idx}]"
    return _ident(net)


def _write_module(mod: ModuleDef, netlist: Netlist) -> list[str]:
    port_bits = set(mod.port_bits())
    lines = [f"module {_ident(mod.name)}(" + ", ".join(_ident(p.name) for p in mod.ports) + ");"]
    for p in mod.ports:
        rng = f" [{p.msb}:{p.lsb}]" if p.msb is not None else ""
        lines.append(f"  {p.direction}{rng} {_ident(p.name)};")
    for n in sorted(mod.nets):
        lines.append(f"  wire {_ident(n)};")
    for inst in sorted(mod.instances, key=lambda i: i.name):
        conns = []
        if inst.hier:
            child = netlist.modules[inst.ref]
            for p in child.ports:
                bits = p.bits()
                got = [inst.connections.get(b) for b in bits]
                if all(g is None for g in got):
                    conns.append(f".{_ident(p.name)}()")
                elif any(g is None for g in got):
                    raise NetlistError(f"{inst.name}.{p.name} is partially connected")
                elif len(bits) == 1:
                    conns.append(f".{_ident(p.name)}({_netref(got[0], port_bits)})")
                else:
                    conns.append(f".{_ident(p.name)}({{" + ", ".join(_netref(g, port_bits) for g in got) + "})")
        else:
            for pin in sorted(inst.connections):
                conns.append(f".{pin}({_netref(inst.connections[pin], port_bits)})")
        if inst.init:
            lines.append(f"  (* init = {inst.init} *)")
        lines.append(f"  {_ident(inst.ref)} {_ident(inst.name)} (" + ", ".join(conns) + ");")
    lines.append("endmodule")
    return lines


def write(netlist: Netlist) -> str:
    """Deterministic ``.gv`` text; modules children-first, instances sorted by name."""
    order: list[str] = []

    def visit(name: str) -> None:
        if name in order:
            return
        for inst in sorted(netlist.modules[name].instances, key=lambda i: i.name):
            if inst.hier:
                visit(inst.ref)
        order.append(name)

    visit(netlist.top)
    out: list[str] = []
    for name in order:
        out.extend(_write_module(netlist.modules[name], netlist))
        out.append("")
    return "\n".join(out)

"""Standard-cell library model: cell specs, boolean functions, dont_use masking and
functional substitution search."""

from __future__ import annotations

import itertools
import json
import re
from dataclasses import dataclass, field, replace
from functools import cached_property, lru_cache
from importlib import resources
from typing import Callable, Union

KINDS = ("combinational", "ff", "icg", "buf", "inv")


class LibraryError(ValueError):
    pass


# ---------------------------------------------------------------------------
# boolean expressions

_TOKEN = re.compile(r"\s*(?:(\()|(\))|(,)|([A-Za-z_][A-Za-z0-9_]*))")
_OPS = {"NOT", "AND", "OR", "XOR", "MUX"}
_BINARY_PREC = {"OR": 1, "XOR": 2, "AND": 3}

# AST nodes are tuples: ("pin", name) | ("not", x) | ("and"|"or"|"xor", x, y) | ("mux", s, a, b)
Expr = tuple


def parse_expr(text: str) -> Expr:
    """Parse ``NOT ((A1 AND A2) OR B)`` style expressions.

    ``MUX(S, A, B)`` selects B when S is 1 and A otherwise.
    """
    toks: list[str] = []
    pos = 0
    text = text.strip()
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            raise LibraryError(f"bad character in function {text!r} at {pos}")
        toks.append(m.group(m.lastindex))
        pos = m.end()
    if not toks:
        raise LibraryError("empty function")
    i = 0

    def peek():
        return toks[i] if i < len(toks) else None

    def take(expected=None):
        nonlocal i
        if i >= len(toks):
            raise LibraryError(f"unexpected end of function {text!r}")
        t = toks[i]
        if expected is not None and t != expected:
            raise LibraryError(f"expected {expected!r} in {text!r}, got {t!r}")
        i += 1
        return t

    def unary():
        t = take()
        if t == "NOT":
            return ("not", unary())
        if t == "MUX":
            take("(")
            s = binary(0)
            take(",")
            a = binary(0)
            take(",")
            b = binary(0)
            take(")")
            return ("mux", s, a, b)
        if t == "(":
            e = binary(0)
            take(")")
            return e
        if t in _OPS or t in {")", ","}:
            raise LibraryError(f"unexpected {t!r} in {text!r}")
        return ("pin", t)

    def binary(min_prec):
        lhs = unary()
        while True:
            op = peek()
            prec = _BINARY_PREC.get(op or "")
            if prec is None or prec <= min_prec:
                return lhs
            take()
            rhs = binary(prec)
            lhs = (op.lower(), lhs, rhs)

    e = binary(0)
    if i != len(toks):
        raise LibraryError(f"trailing tokens in function {text!r}")
    return e


def expr_pins(e: Expr) -> set[str]:
    if e[0] == "pin":
        return {e[1]}
    return set().union(*(expr_pins(c) for c in e[1:]))


def _to_python(e: Expr) -> str:
    op = e[0]
    if op == "pin":
        return "p_" + e[1]
    if op == "not":
        return f"(m ^ {_to_python(e[1])})"
    if op == "and":
        return f"({_to_python(e[1])} & {_to_python(e[2])})"
    if op == "or":
        return f"({_to_python(e[1])} | {_to_python(e[2])})"
    if op == "xor":
        return f"({_to_python(e[1])} ^ {_to_python(e[2])})"
    s, a, b = (_to_python(x) for x in e[1:])
    return f"(({s} & {b}) | ((m ^ {s}) & {a}))"


@lru_cache(maxsize=None)
def compile_function(text: str, pins: tuple[str, ...]) -> Callable[..., int]:
    """Compile to ``f(mask, *pin_values)`` operating bitwise on Python ints."""
    e = parse_expr(text)
    unknown = expr_pins(e) - set(pins)
    if unknown:
        raise LibraryError(f"function {text!r} references undeclared pins {sorted(unknown)}")
    args = ", ".join(["m"] + ["p_" + p for p in pins])
    return eval(f"lambda {args}: {_to_python(e)}", {})  # noqa: S307 - built from parsed AST


def truth_table(fn: Callable[..., int], n: int) -> int:
    """Truth table of an n-input function as a 2**n-bit integer."""
    rows = 1 << n
    mask = (1 << rows) - 1
    patterns = []
    for k in range(n):
        bits = 0
        for r in range(rows):
            if (r >> k) & 1:
                bits |= 1 << r
        patterns.append(bits)
    return fn(mask, *patterns) & mask


# ---------------------------------------------------------------------------
# cells


@dataclass(frozen=True)
class CellSpec:
    name: str
    kind: str
    function: str
    area: float
    leakage: float
    input_caps: dict
    drive_res: float
    intrinsic_delay: float
    max_output_slew: float = 100.0
    outputs: tuple = ("Y",)

    @property
    def inputs(self) -> tuple[str, ...]:
        return tuple(self.input_caps)

    @property
    def pins(self) -> set[str]:
        return set(self.input_caps) | set(self.outputs)

    @property
    def output(self) -> str:
        return self.outputs[0]

    @property
    def is_sequential(self) -> bool:
        return self.kind == "ff"

    @property
    def has_qn(self) -> bool:
        return self.kind == "ff" and "QN" in self.outputs

    @property
    def logic_inputs(self) -> tuple[str, ...]:
        """Input pins the boolean function reads (excludes clock pins of sequential cells)."""
        if self.kind == "ff":
            return ("D",)
        return self.inputs

    def evaluator(self) -> Callable[..., int]:
        return compile_function(self.function, self.logic_inputs)

    def table(self) -> int:
        return truth_table(self.evaluator(), len(self.logic_inputs))

    def delay(self, load_ff: float) -> float:
        return self.intrinsic_delay + self.drive_res * load_ff


def _check_cell(c: CellSpec) -> None:
    if c.kind not in KINDS:
        raise LibraryError(f"{c.name}: unknown kind {c.kind!r}")
    if not c.area > 0:
        raise LibraryError(f"{c.name}: area must be > 0")
    if c.leakage < 0:
        raise LibraryError(f"{c.name}: leakage must be >= 0")
    if not c.drive_res > 0:
        raise LibraryError(f"{c.name}: drive_res must be > 0")
    if any(v < 0 for v in c.input_caps.values()):
        raise LibraryError(f"{c.name}: negative pin capacitance")
    if c.intrinsic_delay < 0:
        raise LibraryError(f"{c.name}: negative intrinsic delay")
    if c.kind == "ff":
        if set(c.input_caps) != {"D", "CK"} or "Q" not in c.outputs or not set(c.outputs) <= {"Q", "QN"}:
            raise LibraryError(f"{c.name}: ff cells need pins D, CK, Q and optional QN")
        if c.function.strip() != "D":
            raise LibraryError(f"{c.name}: ff next-state function must be D")
        return
    if c.kind == "icg":
        if set(c.input_caps) != {"CK", "E"} or len(c.outputs) != 1:
            raise LibraryError(f"{c.name}: icg cells need pins CK, E and one output")
    if len(c.outputs) != 1:
        raise LibraryError(f"{c.name}: combinational cells have exactly one output")
    if set(c.outputs) & set(c.input_caps):
        raise LibraryError(f"{c.name}: output pin also declared as input")
    try:
        fn = c.evaluator()
    except LibraryError as exc:
        raise LibraryError(f"{c.name}: {exc}") from None
    if c.kind in ("buf", "inv"):
        if len(c.input_caps) != 1:
            raise LibraryError(f"{c.name}: {c.kind} cells have exactly one input")
        want = 0b10 if c.kind == "buf" else 0b01
        if truth_table(fn, 1) != want:
            raise LibraryError(f"{c.name}: {c.kind} function must be {'Y=A' if c.kind == 'buf' else 'Y=NOT A'}")


# ---------------------------------------------------------------------------
# substitutions


@dataclass(frozen=True)
class SameFunction:
    cell: str
    area: float

    def cells(self) -> list[str]:
        return [self.cell]


# A template source is ("pin", original_pin) or ("node", index).
Source = tuple


@dataclass(frozen=True)
class Decomposition:
    """Small cell network replacing one cell.

    ``nodes[i] = (cell, ((pin, source), ...))``; ``outputs`` maps each output pin of the
    replaced cell to ``(node_index, node_output_pin)``.
    """

    nodes: tuple
    outputs: tuple
    area: float

    def cells(self) -> list[str]:
        return [n[0] for n in self.nodes]


Substitution = Union[SameFunction, Decomposition]


@dataclass(frozen=True, eq=False)
class CellLibrary:
    name: str
    cells: dict
    slew_factor: float = 1.5
    banned: frozenset = field(default_factory=frozenset)

    @cached_property
    def _key(self) -> tuple:
        return (self.name, self.slew_factor, self.banned, tuple(sorted((n, repr(c)) for n, c in self.cells.items())))

    def __eq__(self, other: object) -> bool:
        return isinstance(other, CellLibrary) and self._key == other._key

    def __hash__(self) -> int:
        return hash(self._key)

    def __getitem__(self, name: str) -> CellSpec:
        return self.cells[name]

    def __contains__(self, name: str) -> bool:
        return name in self.cells

    def available(self, kind: str | None = None) -> list[CellSpec]:
        """Non-banned cells (optionally of one kind) sorted by (area, name)."""
        out = [c for c in self.cells.values() if c.name not in self.banned and (kind is None or c.kind == kind)]
        return sorted(out, key=lambda c: (c.area, c.name))

    def is_available(self, name: str) -> bool:
        return name in self.cells and name not in self.banned

    def smallest(self, kind: str) -> CellSpec | None:
        cands = self.available(kind)
        return cands[0] if cands else None

    def strongest(self, kind: str) -> CellSpec | None:
        cands = sorted(self.available(kind), key=lambda c: (c.drive_res, c.area, c.name))
        return cands[0] if cands else None

    def find_function(self, table: int, n: int) -> list[CellSpec]:
        """Available combinational cells with exactly this n-input truth table."""
        return [
            c
            for c in self.available()
            if c.kind in ("combinational", "buf", "inv") and len(c.inputs) == n and c.table() == table
        ]

    def missing_essentials(self) -> list[str]:
        missing = []
        names = [c for c in self.available()]
        nand_nor = [c for c in names if c.kind == "combinational" and len(c.inputs) == 2 and c.table() in (0b0111, 0b0001)]
        if not nand_nor:
            missing.append("NAND2 or NOR2")
        if not any(c.kind == "inv" for c in names):
            missing.append("INV")
        if not any(c.kind == "ff" for c in names):
            missing.append("flip-flop")
        if not any(c.kind == "buf" for c in names):
            missing.append("BUF")
        return missing


def check_library(lib: CellLibrary) -> None:
    for c in lib.cells.values():
        _check_cell(c)
    if lib.slew_factor <= 0:
        raise LibraryError("slew_factor must be > 0")
    missing = lib.missing_essentials()
    if missing:
        raise LibraryError(f"library is not functionally complete: missing {', '.join(missing)}")


_CELL_FIELDS = ("name", "kind", "function", "area", "leakage", "input_caps", "drive_res", "intrinsic_delay")


def load_library(text: str) -> CellLibrary:
    """Parse a ``.cl`` library document (JSON, one record per cell)."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise LibraryError(f"library is not valid JSON: {exc}") from None
    if not isinstance(doc, dict) or not isinstance(doc.get("cells"), list):
        raise LibraryError("library must be an object with a 'cells' list")
    cells: dict[str, CellSpec] = {}
    for rec in doc["cells"]:
        if not isinstance(rec, dict):
            raise LibraryError("cell record must be an object")
        missing = [f for f in _CELL_FIELDS if f not in rec]
        if missing:
            raise LibraryError(f"cell record {rec.get('name', '?')}: missing fields {missing}")
        extra = set(rec) - set(_CELL_FIELDS) - {"max_output_slew", "outputs"}
        if extra:
            raise LibraryError(f"cell {rec['name']}: unknown fields {sorted(extra)}")
        if rec["name"] in cells:
            raise LibraryError(f"duplicate cell name {rec['name']}")
        try:
            spec = CellSpec(
                name=str(rec["name"]),
                kind=str(rec["kind"]),
                function=str(rec["function"]),
                area=float(rec["area"]),
                leakage=float(rec["leakage"]),
                input_caps={str(k): float(v) for k, v in rec["input_caps"].items()},
                drive_res=float(rec["drive_res"]),
                intrinsic_delay=float(rec["intrinsic_delay"]),
                max_output_slew=float(rec.get("max_output_slew", 100.0)),
                outputs=tuple(rec.get("outputs", ["Y"])),
            )
        except (TypeError, ValueError, AttributeError) as exc:
            raise LibraryError(f"cell {rec.get('name')}: schema violation: {exc}") from None
        _check_cell(spec)
        cells[spec.name] = spec
    lib = CellLibrary(name=str(doc.get("name", "library")), cells=cells, slew_factor=float(doc.get("slew_factor", 1.5)))
    check_library(lib)
    return lib


def write_library(lib: CellLibrary) -> str:
    lines = ["{", f'  "name": {json.dumps(lib.name)},', f'  "slew_factor": {json.dumps(lib.slew_factor)},', '  "cells": [']
    recs = []
    for c in lib.cells.values():
        rec = {
            "name": c.name,
            "kind": c.kind,
            "function": c.function,
            "area": c.area,
            "leakage": c.leakage,
            "input_caps": c.input_caps,
            "drive_res": c.drive_res,
            "intrinsic_delay": c.intrinsic_delay,
            "max_output_slew": c.max_output_slew,
            "outputs": list(c.outputs),
        }
        recs.append("    " + json.dumps(rec))
    lines.append(",\n".join(recs))
    lines += ["  ]", "}", ""]
    return "\n".join(lines)


def bundled_library() -> CellLibrary:
    text = resources.files("hierobf.data").joinpath("synth15.cl").read_text(encoding="ascii")
    return load_library(text)


def mask_dont_use(lib: CellLibrary, cell: str) -> CellLibrary:
    """Copy of ``lib`` with ``cell`` excluded from use."""
    if cell not in lib.cells:
        raise LibraryError(f"unknown cell {cell}")
    out = replace(lib, banned=lib.banned | {cell})
    missing = out.missing_essentials()
    if missing:
        raise LibraryError(f"banning {cell} breaks functional completeness (no {', '.join(missing)} left)")
    return out


def _pin_patterns(n: int) -> list[int]:
    return [truth_table(lambda m, *p, _i=i: p[_i], n) for i in range(n)]


# Decomposition search runs over comb cells; results depend only on the available set.
@lru_cache(maxsize=512)
def _best_decomposition(lib: CellLibrary, n: int, target: int, bound: float | None) -> Decomposition | None:
    """Cheapest network of depth <= 2 over available cells computing ``target``.

    Only networks strictly cheaper than ``bound`` are considered when it is given.
    """
    cands = [c for c in lib.available() if c.kind in ("combinational", "inv")]
    mask = (1 << (1 << n)) - 1
    pats = _pin_patterns(n)
    layer1: dict[int, tuple] = {}
    for c in cands:
        fn = c.evaluator()
        for assign in itertools.product(range(n), repeat=len(c.inputs)):
            t = fn(mask, *(pats[a] for a in assign)) & mask
            key = (round(c.area, 6), c.name, assign)
            if t not in layer1 or key < layer1[t][0]:
                layer1[t] = (key, c.area, (c.name, tuple(zip(c.inputs, (("pin", a) for a in assign)))))
    limit = float("inf") if bound is None else round(bound, 6)
    best: list = [None]

    def offer(key, nodes, area):
        if round(area, 6) >= limit:
            return
        if best[0] is None or key < best[0][0]:
            best[0] = (key, Decomposition(nodes=tuple(nodes), outputs=(), area=area))

    if target in layer1:
        key, area, node = layer1[target]
        offer((key[0], 1, key), [node], area)
    # sources for the outer cell: original pins (free) or one depth-1 node
    sources = [(pats[i], 0.0, ("pin", i)) for i in range(n)]
    sources += sorted(((t, v[1], v[2]) for t, v in layer1.items()), key=lambda s: (round(s[1], 6), s[2][0]))
    for outer in cands:
        fn = outer.evaluator()
        k = len(outer.inputs)
        chosen: list[int] = []

        def dfs(area: float) -> None:
            cur = best[0][0][0] if best[0] is not None else limit
            if round(area, 6) > min(cur, limit):
                return
            if len(chosen) == k:
                if all(sources[j][2][0] == "pin" for j in chosen):
                    return
                if fn(mask, *(sources[j][0] for j in chosen)) & mask != target:
                    return
                inner: list[int] = []
                for j in chosen:
                    if sources[j][2][0] != "pin" and j not in inner:
                        inner.append(j)
                nodes = [sources[j][2] for j in inner]
                pins = []
                for pin, j in zip(outer.inputs, chosen):
                    src = sources[j][2]
                    pins.append((pin, src if src[0] == "pin" else ("node", inner.index(j))))
                nodes.append((outer.name, tuple(pins)))
                offer((round(area, 6), len(nodes), (outer.name,) + tuple(chosen)), nodes, area)
                return
            for j, src in enumerate(sources):
                extra = src[1] if (src[2][0] != "pin" and j not in chosen) else 0.0
                chosen.append(j)
                dfs(area + extra)
                chosen.pop()

        dfs(outer.area)
    return best[0][1] if best[0] else None


def functional_equivalents(lib: CellLibrary, cell: str) -> list[Substitution]:
    """Available replacements for ``cell``, cheapest first."""
    spec = lib[cell]
    out: list[tuple[tuple, Substitution]] = []
    if spec.kind in ("ff", "icg"):
        for c in lib.available(spec.kind):
            if c.name == cell:
                continue
            if spec.kind == "ff" and not set(spec.outputs) <= set(c.outputs):
                continue
            out.append(((round(c.area, 6), 0, c.name), SameFunction(c.name, c.area)))
        if spec.kind == "ff" and spec.has_qn:
            inv = lib.smallest("inv")
            for c in lib.available("ff"):
                if c.name == cell or c.has_qn or inv is None:
                    continue
                dec = Decomposition(
                    nodes=(
                        (c.name, (("D", ("pin", "D")), ("CK", ("pin", "CK")))),
                        (inv.name, (("A", ("node", 0)),)),
                    ),
                    outputs=(("Q", (0, "Q")), ("QN", (1, inv.output))),
                    area=c.area + inv.area,
                )
                out.append(((round(dec.area, 6), 1, c.name), dec))
        return [s for _, s in sorted(out, key=lambda kv: kv[0])]
    n = len(spec.inputs)
    table = spec.table()
    for c in lib.available():
        if c.name == cell or c.kind not in ("combinational", "buf", "inv"):
            continue
        if c.inputs == spec.inputs and c.output == spec.output and c.table() == table:
            out.append(((round(c.area, 6), 0, c.name), SameFunction(c.name, c.area)))
    if n <= 6:
        bound = min((s.area for _, s in out), default=None)
        dec = _best_decomposition(replace(lib, banned=lib.banned | {cell}), n, table, bound)
        if dec is not None:
            nodes = tuple(
                (cname, tuple((p, ("pin", spec.inputs[src[1]]) if src[0] == "pin" else src) for p, src in conns))
                for cname, conns in dec.nodes
            )
            dec = Decomposition(nodes=nodes, outputs=((spec.output, (len(nodes) - 1, lib[nodes[-1][0]].output)),), area=dec.area)
            out.append(((round(dec.area, 6), 1, "+".join(dec.cells())), dec))
    return [s for _, s in sorted(out, key=lambda kv: kv[0])]


def decomposition_table(lib: CellLibrary, d: Decomposition, pins: tuple[str, ...]) -> dict[str, int]:
    """Truth tables of a combinational decomposition's outputs over ``pins`` (test oracle helper)."""
    n = len(pins)
    rows = 1 << n
    mask = (1 << rows) - 1
    pat = {p: truth_table(lambda m, *v, _i=i: v[_i], n) for i, p in enumerate(pins)}
    vals: list[int] = []
    for cell, conns in d.nodes:
        c = lib[cell]
        args = []
        for pin in c.logic_inputs:
            src = dict(conns)[pin]
            args.append(pat[src[1]] if src[0] == "pin" else vals[src[1]])
        vals.append(c.evaluator()(mask, *args) & mask)
    return {o: vals[idx] for o, (idx, _pin) in d.outputs}

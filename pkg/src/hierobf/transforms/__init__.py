"""Netlist-to-netlist optimisation passes and recipes combining them."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

from ..library import CellLibrary, mask_dont_use
from ..netlist import Netlist, check, flatten

PASS_KINDS = ("clock-gating", "ungroup", "rebalance", "bubble-push", "max-transition", "retime-delay", "retime-area")


class PassError(RuntimeError):
    pass


@dataclass(frozen=True)
class PassConfig:
    kind: str
    level: str = "extreme"  # rebalance: basic | extreme
    limit: float = 10.0  # max-transition, ps
    max_iters: int = 50  # retiming
    min_group: int = 3  # clock gating

    def __post_init__(self):
        if self.kind not in PASS_KINDS:
            raise ValueError(f"unknown pass kind {self.kind!r}")
        if self.level not in ("basic", "extreme"):
            raise ValueError(f"rebalance level must be basic or extreme, got {self.level!r}")
        if not self.limit > 0:
            raise ValueError("max-transition limit must be > 0")
        if self.max_iters < 0 or self.min_group < 1:
            raise ValueError("max_iters must be >= 0 and min_group >= 1")

    def to_json(self) -> dict:
        d = {"kind": self.kind}
        default = PassConfig(self.kind)
        for k, v in asdict(self).items():
            if k != "kind" and v != getattr(default, k):
                d[k] = v
        return d


@dataclass
class PassResult:
    netlist: Netlist
    latency: int = 0
    log: list = field(default_factory=list)
    warnings: list = field(default_factory=list)

    def __post_init__(self):
        if self.latency < 0:
            raise ValueError("latency must be >= 0")


@dataclass(frozen=True)
class Recipe:
    passes: tuple = ()
    banned_cell: str | None = None
    label: str = ""

    def __post_init__(self):
        if not self.passes and not self.banned_cell:
            raise ValueError("a recipe needs at least one pass or a banned cell")

    def to_json(self) -> dict:
        return {"label": self.label, "banned_cell": self.banned_cell, "passes": [p.to_json() for p in self.passes]}

    @classmethod
    def from_json(cls, d: dict) -> "Recipe":
        unknown = set(d) - {"label", "banned_cell", "passes"}
        if unknown:
            raise ValueError(f"unknown recipe fields {sorted(unknown)}")
        passes = tuple(PassConfig(**p) for p in d.get("passes", []))
        return cls(passes=passes, banned_cell=d.get("banned_cell"), label=d.get("label", ""))


# The nine techniques, in the order used for canonical combination and reporting.
TECHNIQUES: dict[str, tuple] = {
    "clock-gating": (PassConfig("clock-gating"),),
    "ungroup": (PassConfig("ungroup"),),
    "datapath": (PassConfig("rebalance"),),
    "bubble-push": (PassConfig("bubble-push"),),
    "max-transition": (PassConfig("max-transition"),),
    "retime-delay": (PassConfig("retime-delay"),),
    "retime-area": (PassConfig("retime-area"),),
    "clock-gating+retime-delay": (PassConfig("clock-gating"), PassConfig("retime-delay")),
    "bubble-push+retime-area": (PassConfig("bubble-push"), PassConfig("retime-area")),
}
SINGLE_TECHNIQUES = [t for t in TECHNIQUES if "+" not in t]


def technique_recipe(names: list[str], banned_cell: str | None = None) -> Recipe:
    """Recipe for one technique or a combination given as several technique names."""
    for n in names:
        if n not in TECHNIQUES:
            raise ValueError(f"unknown technique {n!r}; choose from {', '.join(TECHNIQUES)}")
    joined = "+".join(sorted(dict.fromkeys(names), key=list(TECHNIQUES).index))
    if joined in TECHNIQUES:
        passes = TECHNIQUES[joined]
    else:
        passes = tuple(p for n in sorted(dict.fromkeys(names), key=list(TECHNIQUES).index) for p in TECHNIQUES[n])
    label = joined + (f"@{banned_cell}" if banned_cell else "")
    return Recipe(passes=passes, banned_cell=banned_cell, label=label)


def load_recipes(text: str) -> list[Recipe]:
    doc = json.loads(text)
    if isinstance(doc, dict):
        doc = doc.get("recipes", [doc])
    return [Recipe.from_json(d) for d in doc]


def dump_recipes(recipes: list[Recipe]) -> str:
    return json.dumps({"recipes": [r.to_json() for r in recipes]}, indent=2) + "\n"


def run_pass(netlist: Netlist, lib: CellLibrary, cfg: PassConfig) -> PassResult:
    from .bubble import apply_bubble_push
    from .buffering import apply_max_transition
    from .clock_gating import apply_clock_gating
    from .rebalance import apply_rebalance
    from .retime import retime_min_area, retime_min_delay

    if cfg.kind == "ungroup":
        return apply_ungroup(netlist)
    if cfg.kind == "clock-gating":
        return apply_clock_gating(netlist, lib, cfg.min_group)
    if cfg.kind == "rebalance":
        return apply_rebalance(netlist, lib, cfg.level)
    if cfg.kind == "bubble-push":
        return apply_bubble_push(netlist, lib)
    if cfg.kind == "max-transition":
        return apply_max_transition(netlist, lib, cfg.limit)
    if cfg.kind == "retime-delay":
        return retime_min_delay(netlist, lib, cfg.max_iters)
    return retime_min_area(netlist, lib, cfg.max_iters)


def apply_ungroup(netlist: Netlist) -> PassResult:
    flat = flatten(netlist)
    n = sum(1 for m in netlist.modules.values() for i in m.instances if i.hier)
    return PassResult(netlist=flat, latency=0, log=[f"ungroup: inlined {n} hierarchical instance(s)"])


def apply_recipe(netlist: Netlist, lib: CellLibrary, recipe: Recipe, validate: bool = True) -> PassResult:
    """Mask the banned cell, remap it away, then run the passes in order."""
    from .remap import apply_dont_use_remap

    log: list[str] = []
    warnings: list[str] = []
    latency = 0
    cur = netlist
    work_lib = lib
    if recipe.banned_cell:
        work_lib = mask_dont_use(lib, recipe.banned_cell)
        res = apply_dont_use_remap(cur, work_lib)
        cur = res.netlist
        log += res.log
    for cfg in recipe.passes:
        res = run_pass(cur, work_lib, cfg)
        cur = res.netlist
        latency += res.latency
        log += res.log
        warnings += res.warnings
    if validate:
        check(cur, lib)
    return PassResult(netlist=cur, latency=latency, log=log, warnings=warnings)

"""Sweep engine: enumerate (banned cell x technique) recipes, run them, deduplicate, summarise.

Besides the N x 9 technique recipes, every sweep runs two families of reference
variants that are not counted as recipes:

* ``ban@CELL``: the don't-use remap alone, one per bannable cell;
* the pure-technique runs (no banned cell), which are the Table-2 representatives.

Records are numbered baseline (0), references, then recipes, and dedup walks them in id
order, so a technique only gets credit for structure that the ban alone did not produce.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .library import CellLibrary, LibraryError, mask_dont_use
from .netlist import Netlist, flatten, netlist_hash
from .ppa import PpaFingerprint, PpaReport, fingerprint, ppa_report
from .sim import check_equivalence
from .transforms import SINGLE_TECHNIQUES, TECHNIQUES, Recipe, apply_recipe, technique_recipe
from .verilog import write

METRICS = ("area", "cell_count", "leakage", "dynamic", "critical_path")
MIN_BINS = 10
MAX_BINS = 200

EQUIVALENT, MISMATCH, NOT_RUN = "equivalent", "mismatch", "not-run"


@dataclass
class VariantRecord:
    id: int
    recipe_label: str
    technique: str | None
    banned_cell: str | None
    kind: str  # baseline | reference | recipe
    ppa: PpaReport | None = None
    fingerprint: PpaFingerprint | None = None
    structural: int | None = None
    netlist_path: str | None = None
    equivalence: str = NOT_RUN
    latency: int = 0
    error: str | None = None
    log: list = field(default_factory=list)
    netlist_text: str | None = field(default=None, repr=False)

    @property
    def ok(self) -> bool:
        return self.ppa is not None and self.equivalence == EQUIVALENT

    def key(self, ppa_only: bool = False) -> tuple:
        k = self.fingerprint.key()
        return k if ppa_only else k + (self.structural,)


@dataclass
class SweepStats:
    total: int
    unique: int
    recipes_total: int
    recipes_unique: int
    failed: int
    per_technique: dict  # technique -> {"total": n, "unique": m}
    table1: list = field(default_factory=list)  # rows: technique, metric, min, max
    table2: list = field(default_factory=list)  # rows: technique, representative id, metric deltas (%)
    histograms: dict = field(default_factory=dict)  # metric -> (edges, counts)

    @property
    def ratio(self) -> float:
        return self.recipes_unique / self.recipes_total if self.recipes_total else 0.0


# --- enumeration --------------------------------------------------------------


def bannable_cells(lib: CellLibrary) -> tuple[list[str], list[str]]:
    """Cells whose ban keeps the library complete, plus log lines for the skipped ones."""
    ok, skipped = [], []
    for name in sorted(c.name for c in lib.available()):
        try:
            mask_dont_use(lib, name)
        except LibraryError as e:
            skipped.append(f"skip {name}: {e}")
            continue
        ok.append(name)
    return ok, skipped


def enumerate_recipes(lib: CellLibrary, techniques: list[str]) -> list[Recipe]:
    """Cartesian product bannable cells x techniques (cell-major, technique order as given)."""
    if not techniques:
        raise ValueError("techniques must be non-empty")
    cells, _ = bannable_cells(lib)
    return [technique_recipe(t.split("+"), banned_cell=c) for c in cells for t in techniques]


def reference_recipes(lib: CellLibrary, techniques: list[str]) -> list[Recipe]:
    cells, _ = bannable_cells(lib)
    refs = [Recipe(passes=(), banned_cell=c, label=f"ban@{c}") for c in cells]
    refs += [technique_recipe(t.split("+")) for t in techniques]
    return refs


def recipe_technique(recipe: Recipe) -> str | None:
    label = recipe.label.split("@")[0]
    return label if label in TECHNIQUES else None


# --- execution ----------------------------------------------------------------

_STATE: dict = {}


def _init_worker(baseline: Netlist, lib: CellLibrary, seed: int, vectors: int, cycles: int) -> None:
    _STATE.update(baseline=baseline, lib=lib, seed=seed, vectors=vectors, cycles=cycles)


def _measure(rec: VariantRecord, nl: Netlist, lib: CellLibrary) -> None:
    flat = flatten(nl)
    rec.ppa = ppa_report(flat, lib)
    rec.fingerprint = fingerprint(rec.ppa)
    rec.structural = netlist_hash(flat)


def _run_one(job: tuple[int, str, Recipe]) -> VariantRecord:
    rid, kind, recipe = job
    base, lib = _STATE["baseline"], _STATE["lib"]
    rec = VariantRecord(id=rid, recipe_label=recipe.label, technique=recipe_technique(recipe),
                        banned_cell=recipe.banned_cell, kind=kind)
    try:
        res = apply_recipe(base, lib, recipe)
    except Exception as e:  # record-and-continue
        rec.error = f"{type(e).__name__}: {e}"
        return rec
    rec.latency = res.latency
    rec.log = list(res.log) + [f"warning: {w}" for w in res.warnings]
    _measure(rec, res.netlist, lib)
    verdict = check_equivalence(base, res.netlist, lib, vectors=_STATE["vectors"], cycles=_STATE["cycles"],
                                latency_b=res.latency, seed=_STATE["seed"])
    rec.equivalence = EQUIVALENT if verdict else MISMATCH
    if not verdict:
        rec.error = str(verdict)
    rec.netlist_text = write(res.netlist)
    return rec


def baseline_record(baseline: Netlist, lib: CellLibrary) -> VariantRecord:
    rec = VariantRecord(id=0, recipe_label="baseline", technique=None, banned_cell=None, kind="baseline")
    _measure(rec, baseline, lib)
    rec.equivalence = EQUIVALENT
    rec.netlist_text = write(baseline)
    return rec


def run_jobs(baseline: Netlist, lib: CellLibrary, jobs: list, workers: int = 1, seed: int = 0,
             vectors: int = 500, cycles: int = 64) -> list[VariantRecord]:
    """Run (id, kind, recipe) jobs; the result is ordered by id whatever the worker count."""
    init = (baseline, lib, seed, vectors, cycles)
    if workers <= 1 or len(jobs) <= 1:
        _init_worker(*init)
        out = [_run_one(j) for j in jobs]
    else:
        chunk = max(1, len(jobs) // (workers * 4))
        with ProcessPoolExecutor(max_workers=workers, initializer=_init_worker, initargs=init) as pool:
            out = list(pool.map(_run_one, jobs, chunksize=chunk))
    return sorted(out, key=lambda r: r.id)


def run_sweep(baseline: Netlist, lib: CellLibrary, recipes: list[Recipe], workers: int = 1, seed: int = 0,
              vectors: int = 500, cycles: int = 64, start_id: int = 0) -> list[VariantRecord]:
    """One record per recipe, ids ``start_id``, ``start_id + 1``, ..."""
    jobs = [(start_id + k, "recipe", r) for k, r in enumerate(recipes)]
    return run_jobs(baseline, lib, jobs, workers, seed, vectors, cycles)


@dataclass
class SweepResult:
    records: list  # baseline, references, recipes in id order
    unique: list
    stats: SweepStats
    skipped: list


def full_sweep(baseline: Netlist, lib: CellLibrary, techniques: list[str] | None = None, workers: int = 1,
               seed: int = 0, vectors: int = 500, cycles: int = 64, ppa_only: bool = False) -> SweepResult:
    techniques = list(techniques or TECHNIQUES)
    base = baseline_record(baseline, lib)
    refs = reference_recipes(lib, techniques)
    recipes = enumerate_recipes(lib, techniques)
    jobs = [(1 + k, "reference", r) for k, r in enumerate(refs)]
    jobs += [(1 + len(refs) + k, "recipe", r) for k, r in enumerate(recipes)]
    records = [base] + run_jobs(baseline, lib, jobs, workers, seed, vectors, cycles)
    unique, stats = dedup(records, ppa_only)
    fill_stats(stats, unique, base.ppa, techniques)
    return SweepResult(records, unique, stats, bannable_cells(lib)[1])


# --- dedup and statistics ------------------------------------------------------


def dedup(records: list[VariantRecord], ppa_only: bool = False) -> tuple[list[VariantRecord], SweepStats]:
    """Keep the first record (by id) per uniqueness key; failed or mismatching records never count."""
    seen: set = set()
    unique: list[VariantRecord] = []
    per: dict[str, dict] = {}
    for rec in sorted(records, key=lambda r: r.id):
        if rec.kind == "recipe" and rec.technique:
            per.setdefault(rec.technique, {"total": 0, "unique": 0})["total"] += 1
        if not rec.ok:
            continue
        k = rec.key(ppa_only)
        if k in seen:
            continue
        seen.add(k)
        unique.append(rec)
        if rec.kind == "recipe" and rec.technique:
            per[rec.technique]["unique"] += 1
    recipes = [r for r in records if r.kind == "recipe"]
    stats = SweepStats(
        total=len(records),
        unique=len(unique),
        recipes_total=len(recipes),
        recipes_unique=sum(1 for r in unique if r.kind == "recipe"),
        failed=sum(1 for r in records if r.ppa is None),
        per_technique=per,
    )
    return unique, stats


def metric(ppa: PpaReport, name: str) -> float:
    return float(getattr(ppa, name))


def fd_histogram(values: list[float], min_bins: int = MIN_BINS) -> tuple[np.ndarray, np.ndarray]:
    """Freedman-Diaconis bins, never fewer than ``min_bins``; counts sum to len(values)."""
    x = np.asarray(values, dtype=float)
    if x.size == 0:
        return np.linspace(0.0, 1.0, min_bins + 1), np.zeros(min_bins, dtype=int)
    lo, hi = float(x.min()), float(x.max())
    if hi - lo <= 0:
        edges = np.linspace(lo - 0.5, hi + 0.5, min_bins + 1)
    else:
        # bin count from the FD width, clamped: a near-zero IQR next to an outlier would explode it
        q75, q25 = np.percentile(x, [75, 25])
        width = 2.0 * (q75 - q25) / x.size ** (1 / 3)
        n = math.ceil((hi - lo) / width) if width > 0 else min_bins
        edges = np.linspace(lo, hi, min(max(n, min_bins), MAX_BINS) + 1)
    counts, edges = np.histogram(x, bins=edges)
    return edges, counts


def percent_delta(value: float, base: float) -> float:
    if base == 0:
        return 0.0 if value == 0 else math.copysign(math.inf, value)
    return (value - base) / base * 100.0


def fill_stats(stats: SweepStats, unique: list[VariantRecord], baseline_ppa: PpaReport,
               techniques: list[str]) -> SweepStats:
    """Table 1 (min/max per technique), Table 2 (pure-technique deltas) and histograms."""
    return compute_stats(unique, baseline_ppa, techniques, stats)


def compute_stats(unique: list[VariantRecord], baseline_ppa: PpaReport, techniques: list[str] | None = None,
                  stats: SweepStats | None = None, representatives: list[VariantRecord] | None = None) -> SweepStats:
    if not unique:
        raise ValueError("compute_stats needs at least one variant")
    if stats is None:
        _, stats = dedup(unique)
    techniques = list(techniques or sorted({r.technique for r in unique if r.technique}))
    stats.table1 = []
    rows = [("baseline", [baseline_ppa])]
    for t in techniques:
        ppas = [r.ppa for r in unique if r.technique == t]
        if ppas:
            rows.append((t, ppas))
    for t, ppas in rows:
        for m in METRICS:
            vals = [metric(p, m) for p in ppas]
            stats.table1.append((t, m, min(vals), max(vals)))
    reps = {}
    for r in representatives if representatives is not None else unique:
        if r.technique and r.banned_cell is None and r.ppa is not None and r.technique not in reps:
            reps[r.technique] = r
    stats.table2 = []
    for t in techniques:
        r = reps.get(t)
        if r is None:
            continue
        stats.table2.append((t, r.id, {m: percent_delta(metric(r.ppa, m), metric(baseline_ppa, m)) for m in METRICS}))
    stats.histograms = {m: fd_histogram([metric(r.ppa, m) for r in unique]) for m in METRICS}
    return stats


# --- persistence ----------------------------------------------------------------

MANIFEST_COLUMNS = (
    "id", "label", "technique", "banned_cell", "kind", "equivalence", "latency", "unique",
    "area", "cell_count", "leakage", "dynamic", "critical_path", "worst_slew",
    "fingerprint", "structural", "netlist_path", "error",
)


def _fmt(x: float, nd: int) -> str:
    return f"{x:.{nd}f}"


def _row(rec: VariantRecord, unique_ids: set) -> list:
    p = rec.ppa
    vals = ["", "", "", "", "", ""] if p is None else [
        _fmt(p.area, 4), str(p.cell_count), _fmt(p.leakage, 8), _fmt(p.dynamic, 8),
        _fmt(p.critical_path, 3), _fmt(p.worst_slew, 3),
    ]
    fp = "" if rec.fingerprint is None else "|".join(str(v) for v in rec.fingerprint.key())
    return [
        rec.id, rec.recipe_label, rec.technique or "", rec.banned_cell or "", rec.kind, rec.equivalence,
        rec.latency, int(rec.id in unique_ids), *vals, fp,
        "" if rec.structural is None else f"{rec.structural:016x}", rec.netlist_path or "", rec.error or "",
    ]


def _csv(rows: list, header) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def variant_filename(rec: VariantRecord) -> str:
    safe = "".join(ch if ch.isalnum() or ch in "-_+@." else "_" for ch in rec.recipe_label)
    return f"{rec.id}_{safe}.gv"


def write_outputs(out: Path, result: SweepResult, run_manifest: dict) -> None:
    out = Path(out)
    (out / "variants").mkdir(parents=True, exist_ok=True)
    (out / "stats").mkdir(parents=True, exist_ok=True)
    unique_ids = {r.id for r in result.unique}
    for rec in result.records:
        if rec.netlist_text is not None and rec.kind == "recipe":
            rec.netlist_path = f"variants/{variant_filename(rec)}"
            (out / rec.netlist_path).write_text(rec.netlist_text)
    recipes = [r for r in result.records if r.kind == "recipe"]
    others = [r for r in result.records if r.kind != "recipe"]
    (out / "manifest.csv").write_text(_csv([_row(r, unique_ids) for r in recipes], MANIFEST_COLUMNS))
    (out / "references.csv").write_text(_csv([_row(r, unique_ids) for r in others], MANIFEST_COLUMNS))
    write_stats(out / "stats", result.stats)
    (out / "run.json").write_text(json.dumps(run_manifest, indent=2, sort_keys=True) + "\n")


def write_stats(stats_dir: Path, stats: SweepStats) -> None:
    stats_dir = Path(stats_dir)
    stats_dir.mkdir(parents=True, exist_ok=True)
    t1 = [(t, m, repr(round(lo, 6)), repr(round(hi, 6))) for t, m, lo, hi in stats.table1]
    (stats_dir / "table1.csv").write_text(_csv(t1, ("technique", "metric", "min", "max")))
    t2 = [(t, rid, *(_fmt(d[m], 3) for m in METRICS)) for t, rid, d in stats.table2]
    (stats_dir / "table2.csv").write_text(_csv(t2, ("technique", "representative_id", *(f"{m}_pct" for m in METRICS))))
    for m, (edges, counts) in stats.histograms.items():
        rows = [(repr(round(float(edges[i]), 9)), repr(round(float(edges[i + 1]), 9)), int(c)) for i, c in enumerate(counts)]
        (stats_dir / f"{m}_hist.csv").write_text(_csv(rows, ("bin_lo", "bin_hi", "count")))
    summary = {
        "total": stats.total, "unique": stats.unique, "recipes_total": stats.recipes_total,
        "recipes_unique": stats.recipes_unique, "failed": stats.failed, "per_technique": stats.per_technique,
        "uniqueness_ratio": round(stats.ratio, 6),
    }
    (stats_dir / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")


def read_manifest(path: Path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def stats_from_manifest(out: Path) -> SweepStats:
    """Rebuild statistics from a sweep directory (``stats`` subcommand)."""
    out = Path(out)
    rows = read_manifest(out / "references.csv") + read_manifest(out / "manifest.csv")
    records = []
    for row in rows:
        rec = VariantRecord(id=int(row["id"]), recipe_label=row["label"], technique=row["technique"] or None,
                            banned_cell=row["banned_cell"] or None, kind=row["kind"], equivalence=row["equivalence"],
                            latency=int(row["latency"] or 0), netlist_path=row["netlist_path"] or None)
        if row["area"]:
            hist = {}
            rec.ppa = PpaReport(area=float(row["area"]), cell_count=int(row["cell_count"]), cell_histogram=hist,
                                leakage=float(row["leakage"]), dynamic=float(row["dynamic"]),
                                critical_path=float(row["critical_path"]), worst_slew=float(row["worst_slew"]))
            rec.fingerprint = fingerprint(rec.ppa)
            rec.structural = int(row["structural"], 16)
        records.append(rec)
    unique, stats = dedup(records)
    base = next(r for r in records if r.kind == "baseline")
    techniques = [t for t in TECHNIQUES if t in stats.per_technique]
    return compute_stats(unique, base.ppa, techniques, stats)


def default_workers() -> int:
    return max(1, min(8, os.cpu_count() or 1))


__all__ = [
    "EQUIVALENT", "MISMATCH", "NOT_RUN", "METRICS", "SINGLE_TECHNIQUES", "SweepResult", "SweepStats",
    "VariantRecord", "bannable_cells", "compute_stats", "dedup", "enumerate_recipes", "fd_histogram",
    "full_sweep", "read_manifest", "reference_recipes", "run_sweep", "stats_from_manifest", "write_outputs",
    "write_stats",
]

"""Command-line front end: ``hierobf {check,variant,sweep,analyze,stats}``.

Exit codes: 0 success, 1 analysis-level failure (invalid netlist, equivalence
mismatch), 2 usage or I/O error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path

from . import __version__
from .engine import (
    EQUIVALENT, MISMATCH, default_workers, full_sweep, read_manifest, stats_from_manifest, write_outputs,
    write_stats,
)
from .library import CellLibrary, LibraryError, bundled_library, load_library
from .netlist import NetlistError, flatten, netlist_hash, validate
from .ppa import fingerprint, ppa_report
from .reeval import analyze, export_group_graph, grouping_diversity
from .sim import check_equivalence
from .transforms import TECHNIQUES, PassError, Recipe, load_recipes, technique_recipe
from .transforms import apply_recipe
from .verilog import parse, write

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
BUILTIN_DESIGNS = {"pipe": "pipe.gv", "corr": "corr.gv"}
# the original sweep's count, printed for context only
REFERENCE_UNIQUE, REFERENCE_TOTAL = 509, 603


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    """Everything needed to replay a run; persisted as ``run.json``."""

    command: str
    input: str
    library: str = "builtin"
    out: str = "hierobf-out"
    seed: int = 0
    workers: int = 1
    vectors: int = 500
    cycles: int = 64
    techniques: list = field(default_factory=list)
    recipe: str | None = None
    ppa_only: bool = False
    mode: str = "normal"
    steered: int | None = None
    tau: float = 0.5

    def to_json(self) -> str:
        d = asdict(self)
        d["version"] = __version__
        return json.dumps(d, indent=2, sort_keys=True) + "\n"


# --- loading ---------------------------------------------------------------------


def load_lib(path: str | None) -> CellLibrary:
    if not path or path == "builtin":
        return bundled_library()
    try:
        text = Path(path).read_text(encoding="ascii")
    except OSError as e:
        raise UsageError(f"cannot read library {path}: {e.strerror or e}") from e
    return load_library(text)


def design_text(spec: str) -> tuple[str, str]:
    """(text, filename) for a path or a ``builtin:<name>`` design."""
    if spec.startswith("builtin:"):
        name = spec.split(":", 1)[1]
        if name not in BUILTIN_DESIGNS:
            raise UsageError(f"unknown builtin design {name!r}; choose from {', '.join(BUILTIN_DESIGNS)}")
        fname = BUILTIN_DESIGNS[name]
        return resources.files("hierobf.data").joinpath("designs", fname).read_text(encoding="ascii"), fname
    try:
        return Path(spec).read_text(encoding="ascii"), spec
    except OSError as e:
        raise UsageError(f"cannot read {spec}: {e.strerror or e}") from e


def load_design(spec: str, lib: CellLibrary):
    text, fname = design_text(spec)
    return parse(text, lib, filename=fname)


def _stem(spec: str) -> str:
    return spec.split(":", 1)[1] if spec.startswith("builtin:") else Path(spec).stem


def _write(path: Path, text: str) -> None:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
    except OSError as e:
        raise UsageError(f"cannot write {path}: {e.strerror or e}") from e


# --- commands ----------------------------------------------------------------------


def cmd_check(args) -> int:
    lib = load_lib(args.lib)
    text, fname = design_text(args.input)
    nl = parse(text, lib, filename=fname, validate=False)
    diags = validate(nl, lib)
    for d in diags:
        print(d)
    errors = sum(1 for d in diags if d.severity == "error")
    if errors:
        print(f"{fname}: {errors} error(s)")
        return EXIT_FAIL
    mods = len(nl.modules)
    cells = len(flatten(nl).modules[nl.top].instances)
    print(f"{fname}: ok ({mods} module(s), {cells} leaf cell(s) after flattening)")
    return EXIT_OK


def _variant_recipe(args) -> Recipe:
    if args.recipe and args.technique:
        raise UsageError("give either --recipe or --technique, not both")
    if args.recipe:
        try:
            text = Path(args.recipe).read_text()
        except OSError as e:
            raise UsageError(f"cannot read recipe {args.recipe}: {e.strerror or e}") from e
        try:
            recipes = load_recipes(text)
        except (ValueError, TypeError) as e:
            raise UsageError(f"bad recipe file {args.recipe}: {e}") from e
        if len(recipes) != 1:
            raise UsageError(f"recipe file must hold exactly one recipe for 'variant' (found {len(recipes)})")
        r = recipes[0]
        if args.ban:
            r = Recipe(passes=r.passes, banned_cell=args.ban, label=r.label)
        return r if r.label else Recipe(r.passes, r.banned_cell, "custom")
    if not args.technique and not args.ban:
        raise UsageError("variant needs --technique, --recipe or --ban")
    try:
        if args.technique:
            return technique_recipe(args.technique, banned_cell=args.ban)
    except ValueError as e:
        raise UsageError(str(e)) from e
    return Recipe(passes=(), banned_cell=args.ban, label=f"ban@{args.ban}")


def cmd_variant(args) -> int:
    lib = load_lib(args.lib)
    if args.ban and args.ban not in lib.cells:
        raise UsageError(f"unknown cell {args.ban!r} for --ban")
    recipe = _variant_recipe(args)
    base = load_design(args.input, lib)
    try:
        res = apply_recipe(base, lib, recipe)
    except (PassError, LibraryError) as e:
        print(f"error: {recipe.label}: {e}", file=sys.stderr)
        return EXIT_FAIL
    verdict = check_equivalence(base, res.netlist, lib, vectors=args.vectors, cycles=args.cycles,
                                latency_b=res.latency, seed=args.seed)
    flat = flatten(res.netlist)
    ppa = ppa_report(flat, lib)
    out = Path(args.out)
    name = "".join(ch if ch.isalnum() or ch in "-_+@." else "_" for ch in f"{_stem(args.input)}.{recipe.label}")
    report = {
        "input": args.input,
        "recipe": recipe.to_json(),
        "seed": args.seed,
        "vectors": args.vectors,
        "cycles": args.cycles,
        "equivalence": EQUIVALENT if verdict else MISMATCH,
        "mismatch": None if verdict else str(verdict),
        "latency": res.latency,
        "ppa": ppa.as_dict(),
        "fingerprint": list(fingerprint(ppa).key()),
        "structural": f"{netlist_hash(flat):016x}",
        "log": res.log,
        "warnings": res.warnings,
    }
    _write(out / f"{name}.gv", write(res.netlist))
    _write(out / f"{name}.report.json", json.dumps(report, indent=2, sort_keys=True) + "\n")
    for line in res.log:
        print(line)
    print(f"{recipe.label}: {report['equivalence']}, area {ppa.area:.2f}, cells {ppa.cell_count}, "
          f"critical path {ppa.critical_path:.1f} ps, dynamic {ppa.dynamic:.4f}")
    print(f"wrote {out / (name + '.gv')}")
    if not verdict:
        print(f"error: {verdict}", file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


def _parse_techniques(text: str | None) -> list[str]:
    if not text:
        return list(TECHNIQUES)
    names = [t.strip() for t in text.split(",") if t.strip()]
    bad = [t for t in names if t not in TECHNIQUES]
    if bad or not names:
        raise UsageError(f"unknown technique(s) {bad}; choose from {', '.join(TECHNIQUES)}")
    return names


def cmd_sweep(args) -> int:
    lib = load_lib(args.lib)
    techniques = _parse_techniques(args.techniques)
    base = load_design(args.input, lib)
    cfg = RunConfig(command="sweep", input=args.input, library=args.lib or "builtin", out=args.out,
                    seed=args.seed, workers=args.workers, vectors=args.vectors, cycles=args.cycles,
                    techniques=techniques, ppa_only=args.ppa_only)
    result = full_sweep(base, lib, techniques, workers=args.workers, seed=args.seed, vectors=args.vectors,
                        cycles=args.cycles, ppa_only=args.ppa_only)
    out = Path(args.out)
    try:
        write_outputs(out, result, json.loads(cfg.to_json()))
    except OSError as e:
        raise UsageError(f"cannot write sweep output under {out}: {e.strerror or e}") from e
    s = result.stats
    print(f"total={s.recipes_total} unique={s.recipes_unique}")
    print(f"uniqueness ratio {s.ratio:.3f} (reference sweep: {REFERENCE_UNIQUE}/{REFERENCE_TOTAL} = "
          f"{REFERENCE_UNIQUE / REFERENCE_TOTAL:.3f}, context only)")
    for t, d in s.per_technique.items():
        print(f"  {t:28s} {d['unique']:4d} unique of {d['total']}")
    if result.skipped:
        print(f"skipped bans (would break completeness): {', '.join(result.skipped)}")
    failed = [r for r in result.records if r.error and r.equivalence != MISMATCH]
    for r in failed:
        print(f"failed: {r.recipe_label}: {r.error}")
    bad = [r for r in result.records if r.equivalence == MISMATCH]
    for r in bad:
        print(f"MISMATCH: {r.recipe_label}: {r.error}", file=sys.stderr)
    print(f"wrote {out}")
    return EXIT_FAIL if bad else EXIT_OK


# analyze -------------------------------------------------------------------------


def _mode(args):
    return args.steered if args.steered is not None else "normal"


def _mode_tag(mode) -> str:
    return "normal" if mode == "normal" else f"steered{mode}"


def _analyze_text(job):
    text, fname, lib, mode, tau = job
    nl = parse(text, lib, filename=fname)
    return analyze(nl, lib, mode, tau)


def _groups_csv(grouping) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("flop", "group", "group_size"))
    for k, g in enumerate(grouping.groups):
        for f in g:
            w.writerow((f, k, len(g)))
    return buf.getvalue()


def _variant_set(path: Path) -> tuple[list[tuple[str, Path]], Path | None]:
    """(id, netlist path) pairs for a sweep dir or variants dir, plus the sweep root if known."""
    root = path if (path / "manifest.csv").exists() else (
        path.parent if (path.parent / "manifest.csv").exists() else None)
    if root is not None:
        rows = read_manifest(root / "manifest.csv")
        return [(r["id"], root / r["netlist_path"]) for r in rows if r["unique"] == "1" and r["netlist_path"]], root
    files = sorted(path.glob("*.gv"))
    return [(f.stem, f) for f in files], None


def _run_analysis(jobs: list, workers: int) -> list:
    if workers <= 1 or len(jobs) <= 1:
        return [_analyze_text(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_analyze_text, jobs, chunksize=max(1, len(jobs) // (workers * 4))))


def cmd_analyze(args) -> int:
    lib = load_lib(args.lib)
    mode = _mode(args)
    tag = _mode_tag(mode)
    out = Path(args.out)
    src = Path(args.input)
    if not args.input.startswith("builtin:") and src.is_dir():
        return _analyze_dir(args, lib, mode, tag, src, out)
    text, fname = design_text(args.input)
    graph, grouping = _analyze_text((text, fname, lib, mode, args.tau))
    stem = _stem(args.input)
    _write(out / f"{stem}.{tag}.dot", export_group_graph(grouping, name=stem.replace("-", "_")))
    _write(out / f"{stem}.{tag}.groups.csv", _groups_csv(grouping))
    sizes = sorted(grouping.sizes(), reverse=True)
    print(f"{fname}: {len(graph.nodes)} flops, {len(grouping.groups)} groups ({tag}, tau={args.tau}); sizes {sizes}")
    print(f"wrote {out / (stem + '.' + tag + '.dot')}")
    return EXIT_OK


def _analyze_dir(args, lib, mode, tag, src: Path, out: Path) -> int:
    items, root = _variant_set(src)
    if not items:
        raise UsageError(f"no variant netlists found under {src}")
    baseline = args.baseline
    if baseline is None and root is not None and (root / "run.json").exists():
        baseline = json.loads((root / "run.json").read_text()).get("input")
    if baseline is None:
        raise UsageError("analyze on a directory needs --baseline")
    btext, bname = design_text(baseline)
    jobs = [(btext, bname, lib, mode, args.tau)]
    for vid, p in items:
        try:
            jobs.append((p.read_text(encoding="ascii"), str(p), lib, mode, args.tau))
        except OSError as e:
            raise UsageError(f"cannot read {p}: {e.strerror or e}") from e
    results = _run_analysis(jobs, args.workers)
    (gb, grb), rest = results[0], results[1:]
    ids = [vid for vid, _ in items]
    rows = []
    low = 0
    for (vid, p), (g, gr) in zip(items, rest):
        d = grouping_diversity(grb, gr, gb, g)
        low += d.ari < args.ari_threshold
        rows.append((vid, p.name, f"{d.ari:.6f}", f"{d.size_histogram_distance:.6f}", d.matched,
                     int(d.incomparable), len(gr.groups)))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("id", "netlist", "ari_vs_baseline", "size_hist_distance", "matched_flops", "incomparable", "groups"))
    w.writerows(rows)
    _write(out / f"diversity_vs_baseline.{tag}.csv", buf.getvalue())
    if not args.no_matrix:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("id", *ids))
        n = len(rest)
        mat = [[1.0] * n for _ in range(n)]
        for i in range(n):
            for j in range(i + 1, n):
                d = grouping_diversity(rest[i][1], rest[j][1], rest[i][0], rest[j][0])
                mat[i][j] = mat[j][i] = d.ari
        for vid, row in zip(ids, mat):
            w.writerow((vid, *(f"{x:.6f}" for x in row)))
        _write(out / f"diversity_matrix.{tag}.csv", buf.getvalue())
    _write(out / f"{_stem(baseline)}.{tag}.dot", export_group_graph(grb, name="baseline"))
    frac = low / len(rows)
    print(f"{len(rows)} variants analysed ({tag}, tau={args.tau}); "
          f"{low} ({frac:.1%}) have ARI < {args.ari_threshold} vs baseline")
    print(f"wrote {out}")
    return EXIT_OK


def cmd_stats(args) -> int:
    src = Path(args.input)
    if not (src / "manifest.csv").exists():
        raise UsageError(f"{src} is not a sweep directory (no manifest.csv)")
    stats = stats_from_manifest(src)
    dest = Path(args.out) if args.out_given else src / "stats"
    try:
        write_stats(dest, stats)
    except OSError as e:
        raise UsageError(f"cannot write {dest}: {e.strerror or e}") from e
    print(f"total={stats.recipes_total} unique={stats.recipes_unique}")
    for t, lo_hi in _table1_by_technique(stats).items():
        print(f"  {t:28s} {lo_hi}")
    print(f"wrote {dest}")
    return EXIT_OK


def _table1_by_technique(stats) -> dict:
    out: dict = {}
    for t, m, lo, hi in stats.table1:
        if m == "area":
            out[t] = f"area {lo:.2f} .. {hi:.2f}"
    return out


# --- argument parsing ----------------------------------------------------------------


def _global_flags(p: argparse.ArgumentParser, suppress: bool) -> None:
    def d(v):
        return argparse.SUPPRESS if suppress else v

    p.add_argument("--lib", default=d(None), help="cell library file (.cl); default: bundled library")
    p.add_argument("--out", default=d("hierobf-out"), help="output directory")
    p.add_argument("--seed", type=int, default=d(0), help="equivalence-check seed")
    p.add_argument("--workers", type=int, default=d(default_workers()), help="worker processes")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hierobf", description="Netlist diversification and register-grouping analysis")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    _global_flags(ap, suppress=False)
    sub = ap.add_subparsers(dest="command", required=True)
    design_help = "netlist path or builtin:pipe / builtin:corr"

    p = sub.add_parser("check", help="parse and validate a netlist")
    _global_flags(p, suppress=True)
    p.add_argument("input", help=design_help)
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("variant", help="apply one recipe and check equivalence")
    _global_flags(p, suppress=True)
    p.add_argument("input", help=design_help)
    p.add_argument("--technique", action="append", default=[], help="technique name (repeat to combine)")
    p.add_argument("--recipe", help="JSON recipe file")
    p.add_argument("--ban", help="cell to exclude before the passes run")
    p.add_argument("--vectors", type=int, default=500)
    p.add_argument("--cycles", type=int, default=64)
    p.set_defaults(func=cmd_variant)

    p = sub.add_parser("sweep", help="run the banned-cell x technique sweep")
    _global_flags(p, suppress=True)
    p.add_argument("input", help=design_help)
    p.add_argument("--techniques", help="comma-separated subset of techniques")
    p.add_argument("--ppa-only", action="store_true", help="deduplicate on the PPA fingerprint alone")
    p.add_argument("--vectors", type=int, default=500)
    p.add_argument("--cycles", type=int, default=64)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("analyze", help="group registers; with a directory, score diversity vs a baseline")
    _global_flags(p, suppress=True)
    p.add_argument("input", help=f"{design_help}, or a sweep/variants directory")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--normal", action="store_true", help="normal mode (default)")
    g.add_argument("--steered", type=int, metavar="N", help="steer toward registers of N flops")
    p.add_argument("--tau", type=float, default=0.5, help="merge threshold")
    p.add_argument("--baseline", help="baseline design for directory mode")
    p.add_argument("--ari-threshold", type=float, default=0.9, help="threshold used in the printed summary")
    p.add_argument("--no-matrix", action="store_true", help="skip the pairwise variant matrix")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("stats", help="rebuild statistics CSVs from a sweep directory")
    _global_flags(p, suppress=True)
    p.add_argument("input", help="sweep output directory")
    p.set_defaults(func=cmd_stats)
    return ap


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code == 0 else EXIT_USAGE
    args.out_given = any(a == "--out" or a.startswith("--out=") for a in argv)
    try:
        if args.workers < 1:
            raise UsageError("--workers must be >= 1")
        if getattr(args, "steered", None) is not None and args.steered < 1:
            raise UsageError("--steered must be >= 1")
        if getattr(args, "tau", 0.5) is not None and not 0.0 <= getattr(args, "tau", 0.5) <= 1.0:
            raise UsageError("--tau must lie in [0, 1]")
        return args.func(args)
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except LibraryError as e:
        print(f"error: library: {e}", file=sys.stderr)
        return EXIT_USAGE
    except NetlistError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())

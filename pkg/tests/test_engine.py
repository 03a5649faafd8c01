import json
from dataclasses import replace

import numpy as np
import pytest

from hierobf.engine import (
    EQUIVALENT, METRICS, VariantRecord, bannable_cells, compute_stats, dedup, enumerate_recipes, fd_histogram,
    full_sweep, read_manifest, run_sweep, stats_from_manifest, write_outputs, write_stats,
)
from hierobf.library import load_library, write_library
from hierobf.ppa import fingerprint, ppa_report
from hierobf.transforms import TECHNIQUES, Recipe, technique_recipe

from conftest import gv

FAST = dict(vectors=64, cycles=16)


def small_lib(lib, names):
    return replace(lib, cells={n: c for n, c in lib.cells.items() if n in names})


def test_recipe_count_bundled(lib):
    cells, skipped = bannable_cells(lib)
    recipes = enumerate_recipes(lib, list(TECHNIQUES))
    assert len(recipes) == len(cells) * 9 <= 24 * 9
    assert len(cells) + len(skipped) == len(lib.cells)
    assert len({r.label for r in recipes}) == len(recipes)


def test_recipe_count_one_by_one(lib):
    tiny = load_library(write_library(small_lib(lib, {"NAND2_X1", "INV_X1", "BUF_X1", "DFF_X1", "AND2_X1"})))
    cells, skipped = bannable_cells(tiny)
    assert cells == ["AND2_X1"] and len(skipped) == 4
    recipes = enumerate_recipes(tiny, ["clock-gating"])
    assert [r.label for r in recipes] == ["clock-gating@AND2_X1"]


def test_enumerate_needs_techniques(lib):
    with pytest.raises(ValueError):
        enumerate_recipes(lib, [])


def _records(sweep):
    return [(r.id, r.recipe_label, r.equivalence, r.structural, r.fingerprint, r.error) for r in sweep]


def test_sweep_worker_count_does_not_matter(corr, lib):
    recipes = enumerate_recipes(lib, ["datapath", "bubble-push"])[:10]
    one = run_sweep(corr, lib, recipes, workers=1, **FAST)
    four = run_sweep(corr, lib, recipes, workers=4, **FAST)
    assert _records(one) == _records(four)
    assert [r.netlist_text for r in one] == [r.netlist_text for r in four]


def test_failing_recipe_recorded(corr, lib):
    recipes = [technique_recipe(["clock-gating"], banned_cell="ICG_X1")]
    recipes += enumerate_recipes(lib, ["datapath"])[:9]
    recs = run_sweep(corr, lib, recipes, workers=1, **FAST)
    assert recs[0].error and "PassError" in recs[0].error and recs[0].ppa is None
    assert all(r.equivalence == EQUIVALENT and r.error is None for r in recs[1:])


def _rec(i, area, struct=1, kind="recipe", technique="datapath", banned="AND2_X1", base=None):
    p = replace(base, area=area)
    return VariantRecord(id=i, recipe_label=f"r{i}", technique=technique, banned_cell=banned, kind=kind, ppa=p,
                         fingerprint=fingerprint(p), structural=struct, equivalence=EQUIVALENT)


@pytest.fixture(scope="module")
def base_ppa(lib):
    return ppa_report(gv("module t(a, y); input a; output y; INV_X1 i(.A(a), .Y(y)); endmodule", lib), lib)


def test_dedup_three_equal_one_distinct(base_ppa):
    recs = [_rec(1, 10.0, base=base_ppa), _rec(2, 10.0, base=base_ppa), _rec(3, 10.0, base=base_ppa),
            _rec(4, 11.0, base=base_ppa)]
    unique, stats = dedup(recs)
    assert [r.id for r in unique] == [1, 4]
    assert stats.recipes_total == 4 and stats.recipes_unique == 2
    assert stats.per_technique == {"datapath": {"total": 4, "unique": 2}}


def test_dedup_structure_breaks_ppa_tie(base_ppa):
    recs = [_rec(1, 10.0, struct=1, base=base_ppa), _rec(2, 10.0, struct=2, base=base_ppa)]
    assert len(dedup(recs)[0]) == 2
    assert len(dedup(recs, ppa_only=True)[0]) == 1


def test_dedup_baseline_only(base_ppa):
    b = _rec(0, 10.0, kind="baseline", technique=None, banned=None, base=base_ppa)
    unique, stats = dedup([b])
    assert len(unique) == 1 and stats.recipes_total == 0 and stats.ratio == 0.0


def test_dedup_skips_failures(base_ppa):
    bad = _rec(2, 12.0, base=base_ppa)
    bad.equivalence = "mismatch"
    failed = VariantRecord(id=3, recipe_label="x", technique="datapath", banned_cell="A", kind="recipe", error="boom")
    unique, stats = dedup([_rec(1, 10.0, base=base_ppa), bad, failed])
    assert [r.id for r in unique] == [1]
    assert stats.failed == 1 and stats.per_technique["datapath"]["total"] == 3


def test_dedup_idempotent(base_ppa):
    recs = [_rec(i, 10.0 + (i % 3), struct=i % 2, base=base_ppa) for i in range(1, 20)]
    unique, _ = dedup(recs)
    again, _ = dedup(unique)
    assert [r.id for r in again] == [r.id for r in unique]


def test_stats_single_variant_equal_to_baseline(base_ppa):
    r = _rec(1, base_ppa.area, banned=None, base=base_ppa)
    stats = compute_stats([r], base_ppa, ["datapath"])
    ((tech, rid, deltas),) = stats.table2
    assert tech == "datapath" and rid == 1
    assert all(v == 0 for v in deltas.values())


def test_stats_min_max(base_ppa):
    stats = compute_stats([_rec(1, 400.0, base=base_ppa), _rec(2, 500.0, base=base_ppa)], base_ppa, ["datapath"])
    row = next(r for r in stats.table1 if r[0] == "datapath" and r[1] == "area")
    assert row[2:] == (400.0, 500.0)


def test_histogram_conserves_mass():
    rng = np.random.default_rng(0)
    values = list(rng.normal(400, 20, size=100))
    edges, counts = fd_histogram(values)
    assert counts.sum() == 100
    assert len(counts) >= 10 and len(edges) == len(counts) + 1


def test_histogram_degenerate():
    edges, counts = fd_histogram([5.0] * 7)
    assert counts.sum() == 7 and len(counts) == 10
    edges, counts = fd_histogram([])
    assert counts.sum() == 0


def test_histogram_outlier_keeps_bin_count_bounded():
    edges, counts = fd_histogram([0.0, 0.0, 1e-9, 1e-9, -896588.15])
    assert counts.sum() == 5 and 10 <= len(counts) <= 200


def test_full_sweep_outputs_and_determinism(corr, lib, tmp_path):
    techs = ["ungroup", "bubble-push"]
    res = full_sweep(corr, lib, techs, workers=1, **FAST)
    n = len(bannable_cells(lib)[0])
    assert res.stats.recipes_total == n * len(techs)
    # baseline, one ban@ reference per cell, one pure run per technique, then the recipes
    assert len(res.records) == 1 + n + len(techs) + n * len(techs)
    assert [r.id for r in res.records] == list(range(len(res.records)))
    assert res.stats.per_technique["ungroup"]["unique"] == 0
    out = tmp_path / "a"
    write_outputs(out, res, {"seed": 0})
    rows = read_manifest(out / "manifest.csv")
    assert len(rows) == res.stats.recipes_total
    assert sum(int(r["unique"]) for r in rows) == res.stats.recipes_unique
    for r in rows:
        assert (out / r["netlist_path"]).exists()
    for m in METRICS:
        hist = (out / "stats" / f"{m}_hist.csv").read_text().splitlines()[1:]
        assert sum(int(line.split(",")[2]) for line in hist) == res.stats.unique
    assert json.loads((out / "run.json").read_text()) == {"seed": 0}
    # stats rebuilt from the manifest match the ones computed in memory
    rebuilt = stats_from_manifest(out)
    assert rebuilt.per_technique == res.stats.per_technique
    write_stats(tmp_path / "rebuilt", rebuilt)
    for f in ("table1.csv", "table2.csv", "summary.json", "area_hist.csv"):
        assert (tmp_path / "rebuilt" / f).read_bytes() == (out / "stats" / f).read_bytes(), f
    res2 = full_sweep(corr, lib, techs, workers=2, **FAST)
    write_outputs(tmp_path / "b", res2, {"seed": 0})
    for f in ("manifest.csv", "references.csv", "stats/table1.csv", "stats/table2.csv", "stats/area_hist.csv"):
        assert (out / f).read_bytes() == (tmp_path / "b" / f).read_bytes(), f


def test_reference_runs_do_not_count_as_recipes(corr, lib):
    res = full_sweep(corr, lib, ["bubble-push"], workers=1, **FAST)
    kinds = {r.kind for r in res.records}
    assert kinds == {"baseline", "reference", "recipe"}
    refs = [r for r in res.records if r.kind == "reference"]
    assert refs[-1].recipe_label == "bubble-push" and refs[-1].banned_cell is None
    assert res.stats.recipes_total == len(bannable_cells(lib)[0])
    assert Recipe(banned_cell="AND2_X1").passes == ()

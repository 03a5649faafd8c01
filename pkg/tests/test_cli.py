import csv
import json

import pytest

from hierobf.cli import main

GOOD = "module t(a, y); input a; output y; INV_X1 i(.A(a), .Y(y)); endmodule\n"
TWO_DRIVERS = """module t(a, b, y); input a, b; output y;
  INV_X1 i0(.A(a), .Y(y)); INV_X1 i1(.A(b), .Y(y));
endmodule
"""


@pytest.fixture
def files(tmp_path):
    (tmp_path / "good.gv").write_text(GOOD)
    (tmp_path / "bad.gv").write_text(TWO_DRIVERS)
    return tmp_path


def test_check_valid(files, capsys):
    assert main(["check", str(files / "good.gv")]) == 0
    assert "ok" in capsys.readouterr().out


def test_check_multiple_drivers_fails(files, capsys):
    assert main(["check", str(files / "bad.gv")]) == 1
    assert "error" in capsys.readouterr().out


def test_missing_library_is_usage_error(files, capsys):
    assert main(["check", str(files / "good.gv"), "--lib", str(files / "nope.cl")]) == 2
    assert "cannot read library" in capsys.readouterr().err


def test_missing_input_is_usage_error(files):
    assert main(["check", str(files / "missing.gv")]) == 2


def test_unknown_technique(files):
    assert main(["variant", "builtin:corr", "--technique", "nonsense", "--out", str(files / "v")]) == 2
    assert main(["sweep", "builtin:corr", "--techniques", "nonsense", "--out", str(files / "s")]) == 2


def test_bad_flag_values(files):
    assert main(["analyze", "builtin:corr", "--steered", "0", "--out", str(files)]) == 2
    assert main(["analyze", "builtin:corr", "--tau", "1.5", "--out", str(files)]) == 2
    assert main(["check", "builtin:corr", "--workers", "0"]) == 2
    assert main(["frobnicate"]) == 2


def test_variant_writes_netlist_and_report(files, capsys):
    out = files / "v"
    assert main(["variant", "builtin:corr", "--technique", "clock-gating", "--out", str(out),
                 "--vectors", "64", "--cycles", "16"]) == 0
    assert "equivalent" in capsys.readouterr().out
    rep = json.loads((out / "corr.clock-gating.report.json").read_text())
    assert rep["equivalence"] == "equivalent" and rep["ppa"]["cell_count"] > 0
    assert main(["check", str(out / "corr.clock-gating.gv")]) == 0


def test_variant_failing_pass_exit_one(files):
    args = ["variant", "builtin:corr", "--technique", "clock-gating", "--ban", "ICG_X1", "--out", str(files)]
    assert main(args) == 1


def test_variant_same_seed_same_bytes(files):
    for d in ("a", "b"):
        assert main(["variant", "builtin:pipe", "--technique", "bubble-push", "--out", str(files / d),
                     "--vectors", "32", "--cycles", "8", "--seed", "7"]) == 0
    for f in ("pipe.bubble-push.gv", "pipe.bubble-push.report.json"):
        assert (files / "a" / f).read_bytes() == (files / "b" / f).read_bytes()


@pytest.mark.parametrize("flag,tag", [(["--normal"], "normal"), (["--steered", "10"], "steered10")])
def test_analyze_writes_dot(flag, tag, files):
    assert main(["analyze", "builtin:corr", *flag, "--out", str(files)]) == 0
    dot = (files / f"corr.{tag}.dot").read_text()
    assert dot.startswith("digraph") and "->" in dot
    rows = list(csv.DictReader(open(files / f"corr.{tag}.groups.csv")))
    assert rows and all(int(r["group_size"]) >= 1 for r in rows)
    if tag == "steered10":
        assert max(int(r["group_size"]) for r in rows) <= 10


@pytest.fixture(scope="module")
def small_sweep(tmp_path_factory):
    out = tmp_path_factory.mktemp("sweep")
    rc = main(["sweep", "builtin:corr", "--techniques", "bubble-push,ungroup", "--vectors", "32", "--cycles", "8",
               "--workers", "1", "--out", str(out)])
    assert rc == 0
    return out


def test_sweep_summary_line(small_sweep, capsys):
    assert main(["stats", str(small_sweep)]) == 0
    first = capsys.readouterr().out.splitlines()[0]
    assert first.startswith("total=") and " unique=" in first
    manifest = list(csv.DictReader(open(small_sweep / "manifest.csv")))
    assert int(first.split()[0].split("=")[1]) == len(manifest)


def test_stats_rebuild_is_stable(small_sweep, tmp_path):
    before = (small_sweep / "stats" / "table1.csv").read_bytes()
    assert main(["stats", str(small_sweep), "--out", str(tmp_path / "st")]) == 0
    assert (tmp_path / "st" / "table1.csv").read_bytes() == before


def test_stats_rejects_non_sweep_dir(tmp_path):
    assert main(["stats", str(tmp_path)]) == 2


def test_ppa_only_never_finds_more(tmp_path, small_sweep):
    out = tmp_path / "p"
    assert main(["sweep", "builtin:corr", "--techniques", "bubble-push,ungroup", "--vectors", "32", "--cycles", "8",
                 "--ppa-only", "--out", str(out)]) == 0
    uniq = lambda d: sum(int(r["unique"]) for r in csv.DictReader(open(d / "manifest.csv")))
    assert uniq(out) <= uniq(small_sweep)
    assert json.loads((out / "run.json").read_text())["ppa_only"] is True


def test_analyze_sweep_directory(small_sweep, tmp_path):
    out = tmp_path / "an"
    assert main(["analyze", str(small_sweep), "--out", str(out)]) == 0
    rows = list(csv.DictReader(open(out / "diversity_vs_baseline.normal.csv")))
    manifest = list(csv.DictReader(open(small_sweep / "manifest.csv")))
    assert len(rows) == sum(r["unique"] == "1" for r in manifest)
    assert all(-1.0 <= float(r["ari_vs_baseline"]) <= 1.0 for r in rows)
    assert (out / "diversity_matrix.normal.csv").exists()


def test_analyze_plain_directory_needs_baseline(tmp_path):
    var = tmp_path / "vars"
    var.mkdir()
    (var / "a.gv").write_text(GOOD)
    assert main(["analyze", str(var), "--out", str(tmp_path / "o")]) == 2
    assert main(["analyze", str(var), "--baseline", str(var / "a.gv"), "--out", str(tmp_path / "o")]) == 0

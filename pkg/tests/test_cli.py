import csv
import json
import math

import pytest

from bfdirect.cli import RunConfig, fit_slope, main, parse_angles, parse_levels, run_sweep

VERIFY_KEYS = {
    "geometry", "n", "levels", "tol", "seed", "max_rank_fwd", "max_rank_inv",
    "storage_entries_fwd", "storage_entries", "storage_bytes", "smw_residual_max",
    "t_assemble_s", "t_factor_s", "current_rel_error", "dense_residual",
    "condition_estimate", "n_angles", "rcs_max_delta_db", "mie_max_delta_db_dense",
    "mie_max_delta_db_fast",
}


def read_rows(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.reader(fh))


def test_solve_csv_format(tmp_path):
    out, stats = tmp_path / "rcs.csv", tmp_path / "stats.json"
    assert main(["solve", "--geometry", "circle", "--radius", "5", "--out", str(out),
                 "--stats", str(stats)]) == 0
    rows = read_rows(out)
    assert rows[0] == ["angle_deg", "rcs_db"]
    assert len(rows) == 362
    assert float(rows[1][0]) == 0.0 and float(rows[-1][0]) == 360.0
    # at least 9 significant digits
    assert len(rows[5][1].lstrip("-").replace(".", "").lstrip("0")) >= 9
    st = json.loads(stats.read_text())
    assert st["n"] == 629 and st["mode"] == "bistatic" and st["n_rhs"] == 1
    for key in ("max_rank_fwd", "max_rank_inv", "t_assemble_s", "t_factor_s", "t_solve_s",
                "storage_entries", "seed", "levels", "tol"):
        assert key in st


def test_solve_deterministic(tmp_path):
    args = ["solve", "--geometry", "corrugated_semicircle", "--radius", "3",
            "--angles", "0:180:19", "--seed", "7"]
    outs = []
    for i in range(2):
        out, stats = tmp_path / f"r{i}.csv", tmp_path / f"s{i}.json"
        assert main(args + ["--out", str(out), "--stats", str(stats)]) == 0
        st = json.loads(stats.read_text())
        outs.append((out.read_bytes(), st["max_rank_fwd"], st["max_rank_inv"],
                     st["storage_entries"]))
    assert outs[0] == outs[1]


def test_monostatic(tmp_path):
    out, stats = tmp_path / "m.csv", tmp_path / "m.json"
    assert main(["solve", "--radius", "2", "--mode", "monostatic", "--angles", "0:90:4",
                 "--out", str(out), "--stats", str(stats)]) == 0
    assert len(read_rows(out)) == 5
    assert json.loads(stats.read_text())["n_rhs"] == 4


def test_verify_report(tmp_path):
    rep = tmp_path / "v.json"
    assert main(["verify", "--geometry", "circle", "--radius", "5", "--out", str(rep)]) == 0
    r = json.loads(rep.read_text())
    assert VERIFY_KEYS <= set(r)
    assert r["current_rel_error"] <= 1e-2
    assert r["rcs_max_delta_db"] <= 0.2
    assert r["mie_max_delta_db_dense"] <= 0.3


def test_verify_empty_grid(tmp_path):
    rep = tmp_path / "v.json"
    assert main(["verify", "--geometry", "smooth_semicircle", "--radius", "2",
                 "--angles", "0:360:0", "--out", str(rep)]) == 0
    r = json.loads(rep.read_text())
    assert VERIFY_KEYS <= set(r)
    assert r["n_angles"] == 0 and r["rcs_max_delta_db"] is None
    assert r["current_rel_error"] <= 1e-2


def test_error_json(capsys):
    assert main(["solve", "--radius", "-1"]) != 0
    err = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert set(err["error"]) == {"kind", "detail"}


def test_verify_dense_cap(capsys):
    code = main(["verify", "--geometry", "circle", "--radius", "70", "--levels", "1"])
    assert code != 0
    assert "error" in json.loads(capsys.readouterr().out.strip().splitlines()[-1])


def test_single_entry_sweep():
    rows, summary = run_sweep(RunConfig(geometry="smooth_semicircle"), [500])
    assert len(rows) == 1 and rows[0]["status"] == "ok"
    assert math.isnan(summary["time_slope"]) and math.isnan(summary["storage_slope"])


def test_sweep_csv(tmp_path):
    out, stats = tmp_path / "sw.csv", tmp_path / "sw.json"
    assert main(["sweep", "--geometry", "smooth_semicircle", "--n-list", "400,800",
                 "--out", str(out), "--stats", str(stats)]) == 0
    rows = read_rows(out)
    assert rows[0] == ["n", "t_factor_s", "storage_entries", "max_rank_fwd", "max_rank_inv",
                       "peak_rss_mb", "status"]
    assert len(rows) == 3
    assert abs(int(rows[2][0]) / 800 - 1) < 0.05
    assert math.isfinite(json.loads(stats.read_text())["storage_slope"])


def test_sweep_memory_budget():
    rows, summary = run_sweep(RunConfig(geometry="smooth_semicircle"), [400, 800],
                              memory_budget_mb=1.0)
    assert [r["status"] for r in rows] == ["ok", "MemoryBudget"]
    assert math.isnan(rows[1]["t_factor_s"])
    assert summary["rows"] == 2 and summary["rows_ok"] == 1
    assert math.isnan(summary["time_slope"])


def test_sweep_must_ascend():
    with pytest.raises(ValueError):
        run_sweep(RunConfig(), [800, 400])


def test_parsers_and_config():
    assert parse_angles("0:90:10") == (0.0, 90.0, 10)
    assert parse_levels("auto") == "auto" and parse_levels("3") == 3
    for bad in ("0:90", "a:b:c", "0:1:-2"):
        with pytest.raises(Exception):
            parse_angles(bad)
    with pytest.raises(Exception):
        parse_levels("0")
    for tol in (0.0, 0.1, -1e-4):
        with pytest.raises(ValueError):
            RunConfig(tol=tol)
    assert RunConfig(angles=(0.0, 10.0, 3)).angle_grid().tolist() == [0.0, 5.0, 10.0]


def test_fit_slope():
    assert abs(fit_slope([1, 2, 4], [3, 12, 48]) - 2.0) < 1e-12
    assert math.isnan(fit_slope([1, 2], [1, float("nan")]))

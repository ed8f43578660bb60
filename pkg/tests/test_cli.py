import csv
import json
import subprocess
import sys

import pytest

from ehaoi.cli import EXIT_INFEASIBLE, EXIT_OK, EXIT_USAGE, EXIT_VALIDATION, main
from ehaoi.experiments import CSV_COLUMNS, SOLVE_COLUMNS, MV_GRID, ST_GRID, run_validation
from ehaoi.core import Policy


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_solve_both_solvers(tmp_path):
    rc = main(["solve", "--protocol", "noma", "--policy", "mv", "--solver", "both",
               "--out", str(tmp_path)])
    assert rc == EXIT_OK
    r = rows(tmp_path / "solve.csv")
    assert [x["solver"] for x in r] == ["exact", "ccp"]
    a, b = (float(x["peak_aoi_s"]) for x in r)
    assert abs(a - b) / a <= 0.02
    header = (tmp_path / "solve.csv").read_text().splitlines()[0].split(",")
    assert tuple(header[:len(SOLVE_COLUMNS)]) == SOLVE_COLUMNS
    manifest = json.loads((tmp_path / "solve_manifest.json").read_text())
    assert manifest["config_hash"] == r[0]["config_hash"]
    assert "fading_param" in manifest["assumed_values"]


def test_solve_appends_rows(tmp_path):
    for _ in range(2):
        main(["solve", "--protocol", "tdma", "--policy", "st", "--out", str(tmp_path)])
    assert len(rows(tmp_path / "solve.csv")) == 2


def test_solve_single_grid_point(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"lambda_min": 4, "lambda_max": 4}))
    main(["solve", "--config", str(cfg), "--protocol", "fdma", "--policy", "mv",
          "--out", str(tmp_path)])
    r = rows(tmp_path / "solve.csv")[0]
    assert r["iterations"] == "1" and float(r["lambda_opt"]) == 4.0


def test_malformed_config(tmp_path, capsys):
    cfg = tmp_path / "bad.json"
    cfg.write_text(json.dumps({"eh_efficiency": 1.2}))
    assert main(["solve", "--config", str(cfg), "--out", str(tmp_path)]) == EXIT_USAGE
    assert "eh_efficiency out of (0,1)" in capsys.readouterr().err
    cfg.write_text("{")
    assert main(["solve", "--config", str(cfg), "--out", str(tmp_path)]) == EXIT_USAGE


def test_usage_error_exit_code():
    with pytest.raises(SystemExit) as exc:
        main(["solve", "--solver", "newton"])
    assert exc.value.code == EXIT_USAGE


def test_infeasible_exit_and_row(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"ee_min": 1e12}))
    rc = main(["solve", "--config", str(cfg), "--protocol", "tdma", "--policy", "mv",
               "--out", str(tmp_path)])
    assert rc == EXIT_INFEASIBLE
    r = rows(tmp_path / "solve.csv")[0]
    assert r["status"] == "infeasible:ee" and r["peak_aoi_s"] == "nan"


def test_sweep_rows_plots_and_byte_stable_replot(tmp_path):
    out = tmp_path / "a"
    rc = main(["sweep", "--axis", "packet_len_bits", "--values", "50,150,300",
               "--protocol", "all", "--policy", "all", "--benchmark", "--grid-k", "50",
               "--out", str(out)])
    assert rc == EXIT_OK
    r = rows(out / "sweep_packet_len_bits.csv")
    assert len(r) == 9 * 3
    keys = [(x["protocol"], x["policy"]) for x in r]
    assert keys == sorted(keys, key=keys.index)  # grouped by combo
    assert [float(x["L"]) for x in r[:3]] == [50.0, 150.0, 300.0]
    pngs = sorted(out.glob("*.png"))
    assert len(pngs) == 3
    again = tmp_path / "b"
    assert main(["plot", str(out / "sweep_packet_len_bits.csv"), "--axis", "packet_len_bits",
                 "--out", str(again)]) == EXIT_OK
    for f in pngs:
        assert (again / f.name).read_bytes() == f.read_bytes()


def test_sweep_parallel_matches_serial(tmp_path):
    args = ["sweep", "--axis", "n_devices", "--values", "2,5", "--policy", "mv",
            "--grid-k", "20", "--no-plots"]
    main(args + ["--out", str(tmp_path / "s")])
    main(args + ["--workers", "2", "--out", str(tmp_path / "p")])
    strip = lambda rs: [{k: v for k, v in x.items() if k != "wallclock_ms"} for x in rs]
    assert strip(rows(tmp_path / "s" / "sweep_n_devices.csv")) == \
        strip(rows(tmp_path / "p" / "sweep_n_devices.csv"))


def test_sweep_keeps_going_past_infeasible_points(tmp_path):
    rc = main(["sweep", "--axis", "packet_len_bits", "--values", "100,1e7", "--protocol",
               "tdma", "--policy", "mv", "--grid-k", "20", "--no-plots", "--out", str(tmp_path)])
    assert rc == EXIT_OK
    status = [x["status"] for x in rows(tmp_path / "sweep_packet_len_bits.csv")]
    assert status[0] == "ok" and status[1].startswith("infeasible")


def test_bad_sweep_values(tmp_path):
    assert main(["sweep", "--axis", "n_devices", "--values", "2.5", "--out", str(tmp_path)]) \
        == EXIT_USAGE
    assert main(["sweep", "--axis", "packet_len_bits", "--values", "-5", "--out",
                 str(tmp_path)]) == EXIT_USAGE


def test_validate_small_run(tmp_path):
    rc = main(["validate", "--policy", "st", "--departures", "20000", "--tolerance", "0.2",
               "--out", str(tmp_path)])
    assert rc == EXIT_OK
    r = rows(tmp_path / "validation.csv")
    assert len(r) == 12 * 4
    rc = main(["validate", "--policy", "mv", "--departures", "20000", "--tolerance", "1e-9",
               "--out", str(tmp_path)])
    assert rc == EXIT_VALIDATION


def test_validate_st_m1_matches_md1_closed_form():
    res = run_validation([Policy.ST], 20_000, grids={Policy.ST: [(0.5, 1.0, 1)]})
    closed = {r["metric"]: r["closed_form"] for r in res.rows}
    assert closed["peak_aoi"] == 3.5 and closed["mean_delay"] == 1.5


def test_validate_seed_changes_estimates_not_verdicts():
    grid = {Policy.MV: MV_GRID[:2]}
    a = run_validation([Policy.MV], 100_000, seed=0, tolerance=0.05, grids=grid)
    b = run_validation([Policy.MV], 100_000, seed=9, tolerance=0.05, grids=grid)
    assert [r["pass"] for r in a.rows] == [r["pass"] for r in b.rows]
    assert [r["des"] for r in a.rows] != [r["des"] for r in b.rows]


def test_grids_have_twelve_points():
    assert len(MV_GRID) == 12 and len(ST_GRID) == 12


def test_simulate_and_trace(tmp_path, capsys):
    assert main(["simulate", "--lambda", "0.5", "--tau-b", "1", "--tau-s", "0.4",
                 "--departures", "20000"]) == EXIT_OK
    out = json.loads(capsys.readouterr().out)
    assert out["peak_aoi_s"]["mean"] == pytest.approx(3.7, rel=0.05)
    assert main(["simulate", "--policy", "st", "--m", "3", "--lambda", "1.5", "--tau-b", "1",
                 "--trace", "50", "--out", str(tmp_path)]) == EXIT_OK
    assert (tmp_path / "events.csv").read_text().startswith("time_s,kind,queue_len")
    assert main(["simulate", "--lambda", "1.5", "--tau-b", "1"]) == EXIT_USAGE


def test_console_script(tmp_path):
    res = subprocess.run([sys.executable, "-m", "ehaoi.cli", "solve", "--protocol", "fdma",
                          "--policy", "st", "--grid-k", "10", "--out", str(tmp_path)],
                         capture_output=True, text=True)
    assert res.returncode == 0, res.stderr
    assert tuple((tmp_path / "solve.csv").read_text().splitlines()[0].split(",")) == CSV_COLUMNS

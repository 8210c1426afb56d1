import json
import os

import pytest
from hypothesis import given
from hypothesis import strategies as st

from falm.cli import (CSV_HEADER, _check_monotone, _fmt, cmd_compare,
                      cmd_ratecheck, cmd_run, main)
from falm.diagnostics import RunRecord


def _write(path, doc):
    path.write_text(json.dumps(doc), encoding="utf-8")
    return str(path)


def _small_config(tmp_path, runs=None, max_iter=400):
    if runs is None:
        runs = [
            {"label": "cd4", "rule": {"rule": "chambolle_dossal", "alpha": 4.0},
             "beta": 1.0, "max_iter": max_iter, "record_every": 5},
            {"label": "baseline", "rule": {"rule": "constant"}, "beta": 1.0,
             "max_iter": max_iter, "record_every": 5},
        ]
    doc = {
        "problem": {"kind": "random_qp", "n": 8, "p": 3, "seed": 42, "cond": 10.0},
        "output_dir": str(tmp_path / "out"),
        "runs": runs,
    }
    return _write(tmp_path / "config.json", doc)


def _read_csv(path):
    lines = path.read_text().splitlines()
    header = lines[0].split(",")
    rows = [line.split(",") for line in lines[1:]]
    return header, rows


def test_run_writes_expected_files(tmp_path):
    cfg = _small_config(tmp_path)
    assert cmd_run(cfg) == 0
    out = tmp_path / "out"
    header, rows = _read_csv(out / "cd4.csv")
    assert ",".join(header) == CSV_HEADER
    assert (out / "baseline.csv").exists()
    summary = json.loads((out / "summary.json").read_text())
    assert set(summary["runs"]) == {"cd4", "baseline"}
    assert summary["oracle"] is True
    assert summary["runs"]["cd4"]["reason"] == "iteration budget"
    assert "slope" in summary["runs"]["cd4"]["slopes"]["gap"]


def test_run_energy_column_monotone(tmp_path):
    cfg = _small_config(tmp_path)
    assert cmd_run(cfg, labels_filter="cd4") == 0
    _, rows = _read_csv(tmp_path / "out" / "cd4.csv")
    idx = CSV_HEADER.split(",").index("energy")
    energies = [float(r[idx]) for r in rows]
    tol = 1e-9 * max(1.0, energies[0])
    assert all(b <= a + tol for a, b in zip(energies, energies[1:]))


def test_run_byte_identical_reruns(tmp_path):
    cfg = _small_config(tmp_path)
    assert cmd_run(cfg) == 0
    first = (tmp_path / "out" / "cd4.csv").read_bytes()
    first_summary = (tmp_path / "out" / "summary.json").read_bytes()
    assert cmd_run(cfg) == 0
    assert (tmp_path / "out" / "cd4.csv").read_bytes() == first
    assert (tmp_path / "out" / "summary.json").read_bytes() == first_summary


def test_run_label_filter(tmp_path):
    cfg = _small_config(tmp_path)
    assert cmd_run(cfg, labels_filter="baseline") == 0
    out = tmp_path / "out"
    assert (out / "baseline.csv").exists()
    assert not (out / "cd4.csv").exists()


def test_run_unknown_label(tmp_path, capsys):
    cfg = _small_config(tmp_path)
    assert cmd_run(cfg, labels_filter="nope") == 2
    assert "unknown run labels" in capsys.readouterr().err


def test_run_rejects_invalid_sigma(tmp_path, capsys):
    runs = [{"label": "bad", "rule": {"rule": "nesterov"}, "beta": 1.0,
             "sigma": 10.0, "max_iter": 10, "record_every": 1}]
    cfg = _small_config(tmp_path, runs=runs)
    assert cmd_run(cfg) == 2
    err = capsys.readouterr().err
    assert "σ ≤ γ/(L + γβ‖A‖²)" in err


def test_run_rejects_duplicate_labels(tmp_path):
    runs = [{"label": "x", "rule": {"rule": "nesterov"}, "max_iter": 5},
            {"label": "x", "rule": {"rule": "constant"}, "max_iter": 5}]
    cfg = _small_config(tmp_path, runs=runs)
    assert cmd_run(cfg) == 2


def test_run_inline_problem(tmp_path):
    # inline dense problem document instead of a generator spec
    problem_doc = {
        "n": 2, "p": 1,
        "A": [1.0, 1.0], "b": [2.0],
        "objective": {"kind": "quadratic",
                      "Q": [1.0, 0.0, 0.0, 1.0], "c": [0.0, 0.0]},
    }
    doc = {"problem": problem_doc, "output_dir": str(tmp_path / "out"),
           "runs": [{"label": "r", "rule": {"rule": "nesterov"},
                     "beta": 1.0, "max_iter": 200, "record_every": 10}]}
    cfg = _write(tmp_path / "inline.json", doc)
    assert cmd_run(cfg) == 0
    _, rows = _read_csv(tmp_path / "out" / "r.csv")
    gap_idx = CSV_HEADER.split(",").index("gap")
    assert rows[-1][gap_idx] != ""  # oracle recovered from the inline QP


def test_compare_outputs(tmp_path):
    runs = [
        {"label": "a", "rule": {"rule": "chambolle_dossal", "alpha": 4.0},
         "beta": 1.0, "max_iter": 300, "record_every": 5},
        {"label": "b", "rule": {"rule": "chambolle_dossal", "alpha": 4.0},
         "beta": 1.0, "max_iter": 300, "record_every": 5},
    ]
    cfg = _small_config(tmp_path, runs=runs)
    assert cmd_compare(cfg) == 0
    out = tmp_path / "out"
    lines = (out / "comparison.csv").read_text().splitlines()
    assert lines[0] == "label," + CSV_HEADER
    rows_a = [l for l in lines[1:] if l.startswith("a,")]
    rows_b = [l for l in lines[1:] if l.startswith("b,")]
    # identical duplicate runs produce identical columns
    assert [r[2:] for r in rows_a] == [r[2:] for r in rows_b]
    md = (out / "comparison.md").read_text()
    assert "| a |" in md and "| b |" in md


def test_compare_needs_two_runs(tmp_path, capsys):
    runs = [{"label": "only", "rule": {"rule": "nesterov"}, "max_iter": 5}]
    cfg = _small_config(tmp_path, runs=runs)
    assert cmd_compare(cfg) == 2
    assert "at least 2" in capsys.readouterr().err


def test_compare_empty_runs(tmp_path):
    cfg = _small_config(tmp_path, runs=[])
    assert cmd_compare(cfg) == 2


def test_ratecheck_pass_and_fail(tmp_path, capsys):
    cfg = _small_config(tmp_path, max_iter=600)
    good = _write(tmp_path / "good.json", {
        "window": [20, 600],
        "checks": [
            {"kind": "slope", "metric": "gap", "label": "cd4", "max_slope": -1.8},
            {"kind": "monotone", "metric": "energy", "label": "cd4", "tol": 1e-9},
        ]})
    assert cmd_ratecheck(cfg, good) == 0
    report = json.loads((tmp_path / "out" / "ratecheck.json").read_text())
    assert report["ok"] is True
    capsys.readouterr()

    impossible = _write(tmp_path / "bad.json", {
        "window": [20, 600],
        "checks": [{"kind": "slope", "metric": "gap", "label": "baseline",
                    "max_slope": -30.0}]})
    assert cmd_ratecheck(cfg, impossible) == 1
    err = capsys.readouterr().err
    assert "FAILED" in err and "gap" in err and "baseline" in err


def test_monotone_check_requires_scaled_tolerance():
    # strict tol=0 trips on rounding-level wiggle; the 1e-9 scale absorbs it
    records = [RunRecord(k=k, t_k=1.0, gap=None, feas=0.0, obj_err=None,
                         kkt_grad=0.0, kkt_feas=0.0,
                         energy=e, cg_iters=0)
               for k, e in [(1, 2.0), (2, 1.0), (3, 1.0 + 1e-12), (4, 0.5)]]
    strict = _check_monotone({"metric": "energy", "tol": 0.0}, records)
    assert not strict["ok"] and strict["violation_k"] == 3
    scaled = _check_monotone({"metric": "energy", "tol": 1e-9}, records)
    assert scaled["ok"]


def test_monotone_check_from_k():
    records = [RunRecord(k=k, t_k=1.0, gap=None, feas=0.0, obj_err=None,
                         kkt_grad=0.0, kkt_feas=0.0, energy=e, cg_iters=0)
               for k, e in [(1, 1.0), (2, 5.0), (3, 4.0), (4, 3.0)]]
    assert not _check_monotone({"metric": "energy", "tol": 1e-9}, records)["ok"]
    assert _check_monotone({"metric": "energy", "tol": 1e-9, "from_k": 2},
                           records)["ok"]


@given(st.floats(allow_nan=False, allow_infinity=False))
def test_csv_cells_round_trip_doubles(value):
    assert float(_fmt(value)) == value


def test_csv_cells_formatting():
    assert _fmt(None) == ""
    assert _fmt(7) == "7"
    assert "." in _fmt(0.1) and "," not in _fmt(0.1)


def test_threads_env_var_keeps_determinism(tmp_path, monkeypatch):
    cfg = _small_config(tmp_path)
    assert cmd_run(cfg) == 0
    serial = (tmp_path / "out" / "cd4.csv").read_bytes()
    monkeypatch.setenv("FALM_THREADS", "2")
    assert cmd_run(cfg) == 0
    assert (tmp_path / "out" / "cd4.csv").read_bytes() == serial


def test_main_exit_codes(tmp_path):
    cfg = _small_config(tmp_path)
    with pytest.raises(SystemExit) as exc:
        main(["run", cfg, "--runs", "cd4"])
    assert exc.value.code == 0
    with pytest.raises(SystemExit) as exc:
        main(["run", str(tmp_path / "missing.json")])
    assert exc.value.code == 2


def test_shipped_config_round(tmp_path, monkeypatch):
    # the repository config runs end to end; route its output to tmp
    here = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
    doc = json.loads(open(os.path.join(here, "configs", "qp_cd.json")).read())
    doc["output_dir"] = str(tmp_path / "out")
    doc["runs"] = [r for r in doc["runs"] if r["label"] == "cd4"]
    doc["runs"][0]["max_iter"] = 2000
    cfg = _write(tmp_path / "qp_cd.json", doc)
    assert cmd_run(cfg) == 0
    _, rows = _read_csv(tmp_path / "out" / "cd4.csv")
    idx = CSV_HEADER.split(",").index("energy")
    energies = [float(r[idx]) for r in rows]
    tol = 1e-9 * max(1.0, energies[0])
    assert all(b <= a + tol for a, b in zip(energies, energies[1:]))

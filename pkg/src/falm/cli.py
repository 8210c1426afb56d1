"""Batch front-end: run experiments, compare rules, and gate rates in CI.

Subcommands::

    falm run <config.json> [--runs label1,label2]
    falm compare <config.json>
    falm ratecheck <config.json> <thresholds.json>

The experiment config names a problem (a generator spec with a "kind" field,
or an inline dense problem document) and a list of labeled runs::

    {
      "problem": {"kind": "random_qp", "n": 50, "p": 10, "seed": 7, "cond": 100.0},
      "output_dir": "out",
      "runs": [
        {"label": "cd4", "rule": {"rule": "chambolle_dossal", "alpha": 4.0},
         "beta": 1.0, "max_iter": 10000, "record_every": 10}
      ]
    }

Per-run entries may pin "gamma", "sigma", "rho"; omitted values fall back to
the solver defaults, so minimally specified runs match the documented
parameter rules. ``run`` writes one ``<label>.csv`` per run (17 significant
digits, '.' decimal separator, LF line endings; reruns are byte-identical)
plus ``summary.json``. ``compare`` merges runs into one CSV keyed by
(label, k) and writes a markdown slope table. ``ratecheck`` evaluates a
thresholds document and exits nonzero on the first violation; see
``DEFAULT_WINDOW`` and the check kinds below.

Thresholds document::

    {"window": [100, 10000],
     "checks": [
       {"kind": "slope", "metric": "gap", "max_slope": -1.8, "min_r2": 0.9},
       {"kind": "slope", "metric": "gap", "label": "baseline", "min_slope": -1.3},
       {"kind": "monotone", "metric": "energy", "tol": 1e-9}
     ]}

A "slope" check fits log(metric) against log(k) over the window and compares
against "max_slope"/"min_slope" (and optionally "min_r2"). A "monotone" check
allows per-step increases up to ``tol * max(1, first value)``, starting at the
optional index "from_k"; floating-point noise means a strict ``tol = 0`` will
fail on any real run, so keep the 1e-9 scale.

The environment variable ``FALM_THREADS`` caps how many runs execute in
parallel (default 1). Output files are written atomically per run.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .benchgen import generate, spec_from_json
from .diagnostics import RunRecord, rate_fit
from .errors import ValidationError
from .inertial import certify, rule_from_spec
from .oracle import OracleError, QpInstance, kkt_solve
from .problem import Problem, problem_from_json
from .solver import RunResult, SolverParams, run

CSV_HEADER = "k,t_k,gap,feas,obj_err,kkt_grad,kkt_feas,energy,cg_iters"
DEFAULT_WINDOW = (100, 10000)
SLOPE_FIELDS = ("gap", "feas", "obj_err")


@dataclass
class RunSpec:
    label: str
    params: SolverParams
    rule_doc: dict


@dataclass
class ExperimentConfig:
    problem: Problem
    qp: QpInstance | None
    problem_doc: dict
    runs: list[RunSpec]
    output_dir: str


def _params_from_doc(doc: dict) -> SolverParams:
    rule = rule_from_spec(doc["rule"])
    return SolverParams(rule=rule,
                        gamma=doc.get("gamma"),
                        sigma=doc.get("sigma"),
                        rho=doc.get("rho"),
                        beta=float(doc.get("beta", 1.0)),
                        max_iter=int(doc.get("max_iter", 1000)),
                        kkt_tol=doc.get("kkt_tol"),
                        cg_tol=float(doc.get("cg_tol", 1e-12)),
                        record_every=int(doc.get("record_every", 1)))


def load_experiment(path: str) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    prob_doc = doc["problem"]
    qp = None
    if "kind" in prob_doc:
        prob, qp = generate(spec_from_json(prob_doc))
    else:
        prob = problem_from_json(prob_doc)
        qp = _qp_from_problem(prob)
    runs = []
    labels = set()
    for entry in doc.get("runs", []):
        label = entry["label"]
        if label in labels:
            raise ValueError(f"duplicate run label {label!r}")
        labels.add(label)
        runs.append(RunSpec(label=label, params=_params_from_doc(entry),
                            rule_doc=entry["rule"]))
    out_dir = doc.get("output_dir", ".")
    return ExperimentConfig(problem=prob, qp=qp, problem_doc=prob_doc,
                            runs=runs, output_dir=out_dir)


def _qp_from_problem(prob: Problem) -> QpInstance | None:
    """Recover a QP oracle from an inline dense problem when possible."""
    if prob.objective.data is None or prob.a_map.matrix is None:
        return None
    kind, m1, v1 = prob.objective.data
    a = prob.a_map.matrix
    if not np.any(a) or np.linalg.matrix_rank(a) < prob.p:
        return None
    try:
        if kind == "quadratic":
            return QpInstance(q_mat=m1, c=v1, a_mat=a, b=prob.b)
        if kind == "least_squares":
            q = m1.T @ m1
            return QpInstance(q_mat=(q + q.T) / 2.0, c=-(m1.T @ v1), a_mat=a,
                              b=prob.b)
    except ValueError:
        return None
    return None


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return format(float(value), ".17g")


def _record_row(rec: RunRecord, label: str | None = None) -> str:
    cells = [str(rec.k), _fmt(rec.t_k), _fmt(rec.gap), _fmt(rec.feas),
             _fmt(rec.obj_err), _fmt(rec.kkt_grad), _fmt(rec.kkt_feas),
             _fmt(rec.energy), str(rec.cg_iters)]
    if label is not None:
        cells.insert(0, label)
    return ",".join(cells)


def _write_atomic(path: str, text: str) -> None:
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _execute(config: ExperimentConfig, labels=None) -> dict[str, RunResult]:
    saddle = None
    if config.qp is not None:
        try:
            saddle = kkt_solve(config.qp)
        except OracleError:
            saddle = None
    selected = [r for r in config.runs if labels is None or r.label in labels]
    threads = max(1, int(os.environ.get("FALM_THREADS", "1")))

    def one(spec: RunSpec) -> tuple[str, RunResult]:
        return spec.label, run(config.problem, spec.params, saddle=saddle)

    if threads == 1 or len(selected) <= 1:
        results = dict(one(s) for s in selected)
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = dict(pool.map(one, selected))
    return results


def _slopes(records, window) -> dict:
    out = {}
    for fld in SLOPE_FIELDS:
        try:
            out[fld] = rate_fit(records, fld, window[0], window[1]).to_dict()
        except ValueError as exc:
            out[fld] = {"error": str(exc)}
    return out


def _summary(config: ExperimentConfig, results: dict[str, RunResult]) -> dict:
    runs_doc = {}
    for spec in config.runs:
        if spec.label not in results:
            continue
        res = results[spec.label]
        last = res.records[-1]
        window = (DEFAULT_WINDOW[0], max(r.k for r in res.records))
        cert = certify(spec.params.rule, max(2, min(10000, spec.params.max_iter)))
        runs_doc[spec.label] = {
            "iterations": res.iterations,
            "reason": res.reason,
            "final_kkt_grad": last.kkt_grad,
            "final_kkt_feas": last.kkt_feas,
            "slopes": _slopes(res.records, window),
            "rule_certify": cert.to_dict(),
        }
        if res.error is not None:
            runs_doc[spec.label]["error"] = res.error
    return {"problem": config.problem_doc, "oracle": config.qp is not None,
            "runs": runs_doc}


def cmd_run(config_path: str, labels_filter: str | None = None) -> int:
    try:
        config = load_experiment(config_path)
        labels = None
        if labels_filter:
            labels = [s for s in labels_filter.split(",") if s]
            unknown = set(labels) - {r.label for r in config.runs}
            if unknown:
                print(f"error: unknown run labels {sorted(unknown)}", file=sys.stderr)
                return 2
        if not config.runs:
            print("error: config declares no runs", file=sys.stderr)
            return 2
        results = _execute(config, labels)
    except (ValidationError, ValueError, OSError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    os.makedirs(config.output_dir, exist_ok=True)
    for label, res in results.items():
        rows = [CSV_HEADER] + [_record_row(r) for r in res.records]
        _write_atomic(os.path.join(config.output_dir, f"{label}.csv"),
                      "\n".join(rows) + "\n")
    summary = _summary(config, results)
    _write_atomic(os.path.join(config.output_dir, "summary.json"),
                  json.dumps(summary, indent=2, sort_keys=True) + "\n")
    failed = [label for label, res in results.items() if res.error is not None]
    if failed:
        print(f"error: runs failed: {failed}", file=sys.stderr)
        return 1
    print(f"wrote {len(results)} run(s) to {config.output_dir}")
    return 0


def cmd_compare(config_path: str) -> int:
    try:
        config = load_experiment(config_path)
        if len(config.runs) < 2:
            print("error: compare needs at least 2 runs", file=sys.stderr)
            return 2
        results = _execute(config)
    except (ValidationError, ValueError, OSError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    os.makedirs(config.output_dir, exist_ok=True)
    rows = ["label," + CSV_HEADER]
    for spec in config.runs:
        res = results[spec.label]
        rows.extend(_record_row(r, spec.label) for r in res.records)
    _write_atomic(os.path.join(config.output_dir, "comparison.csv"),
                  "\n".join(rows) + "\n")

    md = ["| label | gap slope | feas slope | obj_err slope | gap r2 |",
          "|---|---|---|---|---|"]
    for spec in config.runs:
        res = results[spec.label]
        window = (DEFAULT_WINDOW[0], max(r.k for r in res.records))
        slopes = _slopes(res.records, window)

        def cell(fld, key="slope"):
            doc = slopes[fld]
            return f"{doc[key]:.3f}" if key in doc else "n/a"

        md.append(f"| {spec.label} | {cell('gap')} | {cell('feas')} | "
                  f"{cell('obj_err')} | {cell('gap', 'r2')} |")
    _write_atomic(os.path.join(config.output_dir, "comparison.md"),
                  "\n".join(md) + "\n")
    print(f"wrote comparison for {len(results)} runs to {config.output_dir}")
    return 0


def _check_slope(check: dict, records, window) -> dict:
    win = check.get("window", list(window))
    fit = rate_fit(records, check["metric"], win[0], win[1])
    ok = True
    if "max_slope" in check:
        ok = ok and fit.slope <= check["max_slope"]
    if "min_slope" in check:
        ok = ok and fit.slope >= check["min_slope"]
    if "min_r2" in check:
        ok = ok and fit.r2 >= check["min_r2"]
    return {"ok": ok, "slope": fit.slope, "r2": fit.r2, "window": list(win)}


def _check_monotone(check: dict, records) -> dict:
    tol = float(check.get("tol", 1e-9))
    from_k = int(check.get("from_k", 1))
    field = check["metric"]
    values = [(r.k, getattr(r, field)) for r in records
              if getattr(r, field) is not None]
    if not values:
        return {"ok": False, "error": f"metric {field!r} not recorded"}
    allowance = tol * max(1.0, values[0][1])
    scoped = [(k, v) for k, v in values if k >= from_k]
    for (_, prev), (k, cur) in zip(scoped, scoped[1:]):
        if cur > prev + allowance:
            return {"ok": False, "violation_k": k, "increase": cur - prev}
    return {"ok": True}


def cmd_ratecheck(config_path: str, thresholds_path: str) -> int:
    try:
        config = load_experiment(config_path)
        with open(thresholds_path, encoding="utf-8") as fh:
            thresholds = json.load(fh)
        if not config.runs:
            print("error: config declares no runs", file=sys.stderr)
            return 2
        results = _execute(config)
    except (ValidationError, ValueError, OSError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    window = tuple(thresholds.get("window", DEFAULT_WINDOW))
    report = []
    first_violation = None
    for check in thresholds.get("checks", []):
        targets = ([check["label"]] if "label" in check
                   else [r.label for r in config.runs])
        for label in targets:
            if label not in results:
                continue
            records = results[label].records
            try:
                if check.get("kind", "slope") == "slope":
                    outcome = _check_slope(check, records, window)
                elif check["kind"] == "monotone":
                    outcome = _check_monotone(check, records)
                else:
                    outcome = {"ok": False, "error": f"unknown check kind "
                                                      f"{check['kind']!r}"}
            except ValueError as exc:
                outcome = {"ok": False, "error": str(exc)}
            entry = {"check": check, "label": label, **outcome}
            report.append(entry)
            if not outcome["ok"] and first_violation is None:
                first_violation = entry
    os.makedirs(config.output_dir, exist_ok=True)
    _write_atomic(os.path.join(config.output_dir, "ratecheck.json"),
                  json.dumps({"ok": first_violation is None, "results": report},
                             indent=2, sort_keys=True) + "\n")
    if first_violation is not None:
        where = first_violation.get("violation_k", "window")
        print(f"ratecheck FAILED: metric {first_violation['check']['metric']!r} "
              f"on run {first_violation['label']!r} at k={where}", file=sys.stderr)
        return 1
    print(f"ratecheck passed ({len(report)} checks)")
    return 0


def main(argv=None) -> None:
    parser = argparse.ArgumentParser(prog="falm",
                                     description="benchmark front-end for the "
                                                 "inertial augmented Lagrangian solver")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute runs, write per-run CSV + summary")
    p_run.add_argument("config")
    p_run.add_argument("--runs", default=None,
                       help="comma-separated labels to execute (default all)")

    p_cmp = sub.add_parser("compare", help="merged CSV and slope table across runs")
    p_cmp.add_argument("config")

    p_rc = sub.add_parser("ratecheck", help="evaluate rate thresholds, exit nonzero "
                                            "on violation")
    p_rc.add_argument("config")
    p_rc.add_argument("thresholds")

    args = parser.parse_args(argv)
    if args.command == "run":
        code = cmd_run(args.config, args.runs)
    elif args.command == "compare":
        code = cmd_compare(args.config)
    else:
        code = cmd_ratecheck(args.config, args.thresholds)
    sys.exit(code)


if __name__ == "__main__":
    main()

"""Experiment orchestration: run one experiment and write its artifacts.

Every experiment writes ``checks.csv`` (one row per assertion) and
``summary.json``; sweeps add per-replication rows and tidy plot data, the
lower-bound scan adds per-flip affinities.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import verify
from .config import EXPERIMENTS, ExperimentConfig
from .sweep import estimators, run_sweep


@dataclass
class RunOutcome:
    experiment: str
    checks: list
    artifacts: list

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_rows(path: Path, rows: list[dict], columns=None) -> Path:
    columns = list(rows[0]) if columns is None else list(columns)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r[c]) for c in columns])
    return path


def _sweep(cfg: ExperimentConfig, out: Path, single: bool):
    csv_path = out / cfg.out_csv
    if single:
        rows = run_sweep(cfg.replace(reps=1), csv_path)
        checks = [
            verify.CriterionResult(
                f"fit converged and ISE finite (n={r['n']}, {r['estimator']})",
                r["ise"],
                float("inf"),
                bool(r["converged"] and np.isfinite(r["ise"])),
            )
            for r in rows
        ]
        return checks, [csv_path], {}
    checks, summ = verify.rate_suite(cfg, csv_path)
    plot = []
    for est in estimators(cfg):
        for n, v in summ.medians[est].items():
            plot.append({"x": float(np.log(n)), "y": float(np.log(v)), "series": f"median ise ({est})"})
    for n, v in summ.rho.items():
        plot.append({"x": float(np.log(n)), "y": float(np.log(v)), "series": "rho_n"})
    plot_path = write_rows(out / "plot_data.csv", plot, ["x", "y", "series"])
    return checks, [csv_path, plot_path], summ.to_dict()


def _lower_bound(cfg: ExperimentConfig, out: Path):
    rows, bounds, checks = [], {}, []
    for n in cfg.n_list:
        spec, report, ab = verify.lower_bound_scan(cfg, n)
        for r in report.rows(spec.m):
            rows.append({"n": n, "m": spec.m, "eps": spec.eps, **r})
        bounds[str(n)] = {"m": spec.m, "eps": spec.eps, "min_affinity": report.min_affinity, **ab._asdict()}
        checks.append(
            verify.CriterionResult(f"min affinity (n={n})", report.min_affinity, 0.2, report.min_affinity >= 0.2)
        )
    ratios = [b["ratio"] for b in bounds.values()]
    if len(ratios) > 1:
        s = max(ratios) / min(ratios) if min(ratios) > 0 else float("inf")
        checks.append(verify.CriterionResult("lower bound / rho_n stability", s, 2.0, s <= 2.0))
    path = write_rows(out / "affinities.csv", rows)
    return checks, [path], {"bounds": bounds}


def run(experiment: str, cfg: ExperimentConfig, out_dir) -> RunOutcome:
    """Run ``experiment`` with ``cfg`` and write its artifacts to ``out_dir``."""
    if experiment not in EXPERIMENTS:
        raise ValueError(f"unknown experiment {experiment!r}; expected one of {EXPERIMENTS}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    extra = {}
    artifacts = []
    if experiment in ("rate-sweep", "single-run"):
        checks, artifacts, extra = _sweep(cfg, out, experiment == "single-run")
    elif experiment == "lower-bound":
        checks, artifacts, extra = _lower_bound(cfg, out)
    elif experiment == "verify-hellinger":
        checks = verify.hellinger_suite(seed=cfg.seed)
    elif experiment == "verify-gaussian-tail":
        checks = verify.gaussian_tail_suite(seed=cfg.seed) + verify.covariance_moment_suite(seed=cfg.seed)
    elif experiment == "verify-spectral":
        checks = verify.eigenvalue_suite(seed=cfg.seed) + verify.eigenvector_suite(seed=cfg.seed)
    else:  # verify-mle
        checks = verify.score_norm_suite(seed=cfg.seed) + verify.remainder_suite(seed=cfg.seed)
    checks_path = write_rows(out / "checks.csv", [c.row() for c in checks], ["name", "value", "bound", "pass", "detail"])
    summary = {
        "experiment": experiment,
        "config": cfg.to_dict(),
        "passed": all(c.passed for c in checks),
        "checks": [c.row() for c in checks],
        **extra,
    }
    summary_path = out / "summary.json"
    summary_path.write_text(json.dumps(summary, indent=2, sort_keys=True, default=float) + "\n")
    return RunOutcome(experiment, checks, [*artifacts, checks_path, summary_path])

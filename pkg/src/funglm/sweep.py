"""Replicated simulation sweeps over sample sizes, with resumable CSV output."""

from __future__ import annotations

import csv
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .config import ExperimentConfig
from .estimator import (
    ModelTruth,
    estimate_known,
    estimate_unknown,
    minimax_rate,
    schedule,
    simulate_dataset,
    tv_hellinger_chain,
)
from .expfam import builtin_family
from .gp import sample_covariance
from .spectral import delta_norm

COLUMNS = ("rep", "seed", "n", "estimator", "m", "N", "ise", "tail_sq", "converged", "delta_norm", "tv_bound")


def truth_from_config(cfg: ExperimentConfig) -> ModelTruth:
    return ModelTruth.power_law(
        builtin_family(cfg.family),
        alpha=cfg.alpha,
        beta=cfg.beta,
        R=cfg.R,
        a=cfg.a,
        T=cfg.T,
        J_max=cfg.J_max,
        alternating=cfg.alternating,
        mu_coef=cfg.mu_coef,
    )


def estimators(cfg: ExperimentConfig) -> tuple[str, ...]:
    return ("known", "unknown") if cfg.mode == "both" else (cfg.mode,)


def rep_seed(cfg: ExperimentConfig, rep: int) -> int:
    """Seed of replication ``rep``; shared across sample sizes and estimators."""
    return cfg.seed + rep


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def replicate(cfg: ExperimentConfig, n: int, rep: int, truth: Optional[ModelTruth] = None) -> list[dict]:
    """One replication at sample size ``n``: one row per estimator."""
    truth = truth_from_config(cfg) if truth is None else truth
    seed = rep_seed(cfg, rep)
    rng = np.random.default_rng(seed)
    data = simulate_dataset(truth, n, rng)
    m, N = schedule(n, cfg.alpha, cfg.beta, cfg.zeta)
    if cfg.m is not None:
        m, N = cfg.m, max(N, cfg.m + 1)
    tv = tv_hellinger_chain(truth, data.sample, N).tv_bound
    dn = delta_norm(truth.gp.kernel_matrix(), sample_covariance(data.sample), data.sample.grid).delta
    rows = []
    for est in estimators(cfg):
        if est == "known":
            res = estimate_known(data, truth, m, N, cfg.fit_options)
        else:
            res = estimate_unknown(data, m, N, truth.family, truth=truth, options=cfg.fit_options)
        rows.append(
            {
                "rep": rep,
                "seed": seed,
                "n": n,
                "estimator": est,
                "m": m,
                "N": N,
                "ise": res.ise,
                "tail_sq": res.tail_sq,
                "converged": res.fit.converged,
                "delta_norm": dn,
                "tv_bound": tv,
            }
        )
    return rows


def _replicate_task(args):
    cfg, n, rep = args
    return replicate(cfg, n, rep)


def _read_existing(path: Path) -> dict:
    if not path.exists():
        return {}
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(rows[0]) != COLUMNS:
        raise ValueError(f"{path} exists with a different header; remove it or choose another output")
    out = {}
    for r in rows[1:]:
        if len(r) == len(COLUMNS):
            out[(int(r[2]), int(r[0]), r[3])] = r
    return out


def run_sweep(cfg: ExperimentConfig, csv_path=None, resume: bool = True) -> list[dict]:
    """Run every ``(n, rep)`` replication and return rows ordered by ``(n, rep, estimator)``.

    With ``csv_path`` rows are appended as they complete, so an interrupted
    sweep leaves a valid partial file; rerunning with ``resume`` skips the
    replications already present and finally rewrites the file in canonical
    order.  Outputs do not depend on ``cfg.workers``.
    """
    ests = estimators(cfg)
    path = Path(csv_path) if csv_path is not None else None
    done = _read_existing(path) if (path is not None and resume) else {}
    tasks = [
        (cfg, n, rep)
        for n in cfg.n_list
        for rep in range(cfg.reps)
        if not all((n, rep, e) in done for e in ests)
    ]
    fh = writer = None
    if path is not None:
        path.parent.mkdir(parents=True, exist_ok=True)
        fresh = not done
        fh = path.open("w" if fresh else "a", newline="")
        writer = csv.writer(fh, lineterminator="\n")
        if fresh:
            writer.writerow(COLUMNS)
            fh.flush()
    try:
        if cfg.workers > 1 and len(tasks) > 1:
            with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
                results = pool.map(_replicate_task, tasks)
                _collect(results, done, writer, fh)
        else:
            truth = truth_from_config(cfg)
            _collect((replicate(c, n, rep, truth) for c, n, rep in tasks), done, writer, fh)
    finally:
        if fh is not None:
            fh.close()

    order = {e: i for i, e in enumerate(ests)}
    keys = sorted(
        (k for k in done if k[0] in cfg.n_list and k[1] < cfg.reps and k[2] in order),
        key=lambda k: (cfg.n_list.index(k[0]), k[1], order[k[2]]),
    )
    if path is not None:
        with path.open("w", newline="") as out:
            w = csv.writer(out, lineterminator="\n")
            w.writerow(COLUMNS)
            w.writerows(done[k] for k in keys)
    return [_parse_row(done[k]) for k in keys]


def _collect(results, done: dict, writer, fh):
    for rows in results:
        for row in rows:
            text = [_fmt(row[c]) for c in COLUMNS]
            done[(row["n"], row["rep"], row["estimator"])] = text
            if writer is not None:
                writer.writerow(text)
        if fh is not None:
            fh.flush()


def _parse_row(text: list) -> dict:
    r = dict(zip(COLUMNS, text))
    out = {"estimator": r["estimator"], "converged": r["converged"] == "1"}
    for c in ("rep", "seed", "n", "m", "N"):
        out[c] = int(r[c])
    for c in ("ise", "tail_sq", "delta_norm", "tv_bound"):
        out[c] = float(r[c])
    return out


# ---------------------------------------------------------------------------
# Rate fitting
# ---------------------------------------------------------------------------


@dataclass
class RateFit:
    log_n: np.ndarray
    log_y: np.ndarray
    slope: float
    intercept: float
    target: Optional[float]
    residual: float


def fit_rate(points, target: Optional[float] = None) -> RateFit:
    """Least-squares line through ``(log n, log y)`` for points ``(n, y)``.

    Raises ``ValueError`` for fewer than three points, repeated ``n`` or
    nonpositive values.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 3:
        raise ValueError("need at least 3 (n, y) points")
    if np.unique(pts[:, 0]).size != pts.shape[0]:
        raise ValueError("repeated n values: the slope is not identified")
    if np.any(pts <= 0) or not np.all(np.isfinite(pts)):
        raise ValueError("n and y must be positive and finite")
    x, y = np.log(pts[:, 0]), np.log(pts[:, 1])
    A = np.column_stack([x, np.ones_like(x)])
    (slope, intercept), *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = float(np.sum((y - A @ np.array([slope, intercept])) ** 2))
    return RateFit(x, y, float(slope), float(intercept), target, resid)


@dataclass
class SweepSummary:
    medians: dict  # estimator -> {n: median ise}
    fits: dict  # estimator -> RateFit or None
    target: float
    rho: dict  # n -> rho_n

    def to_dict(self) -> dict:
        return {
            "target_slope": self.target,
            "rho_n": {str(n): v for n, v in self.rho.items()},
            "median_ise": {e: {str(n): v for n, v in med.items()} for e, med in self.medians.items()},
            "slope": {e: (None if f is None else f.slope) for e, f in self.fits.items()},
            "intercept": {e: (None if f is None else f.intercept) for e, f in self.fits.items()},
        }


def summarize(rows: list[dict], cfg: ExperimentConfig) -> SweepSummary:
    target = (1 - 2 * cfg.beta) / (cfg.alpha + 2 * cfg.beta)
    medians, fits = {}, {}
    for est in estimators(cfg):
        med = {}
        for n in cfg.n_list:
            vals = [r["ise"] for r in rows if r["estimator"] == est and r["n"] == n]
            if vals:
                med[n] = float(np.median(vals))
        medians[est] = med
        fits[est] = fit_rate(sorted(med.items()), target) if len(med) >= 3 else None
    rho = {n: float(minimax_rate(n, cfg.alpha, cfg.beta)) for n in cfg.n_list}
    return SweepSummary(medians, fits, target, rho)

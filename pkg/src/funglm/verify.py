"""Verification suites: Monte Carlo and deterministic checks of the error bounds.

Each suite returns ``CriterionResult`` rows ``(name, value, bound, passed)``
and is shared by the command line and the test suite.  Default arguments are
the reference settings of each check.
"""

from __future__ import annotations

import filecmp
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import ExperimentConfig
from .expfam import FAMILY_NAMES, builtin_family, hellinger_report
from .gp import GPModel, max_quad_tail_check, sample_cov_moment_report, sample_covariance, sample_paths
from .lowerbound import HypercubeSpec, affinity_scan, assouad_bound
from .mle import DesignSet, fit_mle, mle_diagnostics
from .spectral import eigendecompose, perturbation_report, reference_decomp
from .sweep import run_sweep, summarize


@dataclass
class CriterionResult:
    name: str
    value: float
    bound: float
    passed: bool
    detail: str = ""

    def row(self) -> dict:
        return {"name": self.name, "value": self.value, "bound": self.bound, "pass": self.passed, "detail": self.detail}

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        extra = f" ({self.detail})" if self.detail else ""
        return f"{tag} {self.name}: value={self.value:.6g} bound={self.bound:.6g}{extra}"


def _within(value: float, target: float, k: float, se: float) -> bool:
    return abs(value - target) <= k * se


# ---------------------------------------------------------------------------
# Rate sweeps
# ---------------------------------------------------------------------------


def rate_suite(cfg: ExperimentConfig, csv_path=None, slope_tol=None) -> tuple[list[CriterionResult], object]:
    """Slope of log median ISE against log n, per estimator, and the unknown/known ratio.

    Slope tolerances default to 0.20 (known) and 0.25 (unknown); the ratio
    bound is 3 at every ``n``.
    """
    rows = run_sweep(cfg, csv_path)
    summ = summarize(rows, cfg)
    tols = {"known": 0.20, "unknown": 0.25}
    if slope_tol is not None:
        tols.update(slope_tol)
    out = []
    for est, fit in summ.fits.items():
        if fit is None:
            continue
        out.append(
            CriterionResult(
                f"rate slope ({est})",
                abs(fit.slope - summ.target),
                tols[est],
                abs(fit.slope - summ.target) <= tols[est],
                f"slope {fit.slope:.4f} vs {summ.target:.4f}",
            )
        )
    if {"known", "unknown"} <= set(summ.medians):
        ratios = [summ.medians["unknown"][n] / summ.medians["known"][n] for n in cfg.n_list]
        worst = int(np.argmax(ratios))
        out.append(
            CriterionResult(
                "median ISE ratio unknown/known",
                max(ratios),
                3.0,
                max(ratios) <= 3.0,
                f"worst at n={cfg.n_list[worst]}",
            )
        )
    return out, summ


# ---------------------------------------------------------------------------
# Spectral perturbation
# ---------------------------------------------------------------------------


def eigenvalue_suite(n: int = 1000, reps: int = 200, jmax: int = 10, seed: int = 0, model=None) -> list[CriterionResult]:
    """``|theta_j - thetat_j| <= ||Kt - K||`` for ``j <= jmax`` in every replication."""
    model = GPModel.power_law(2.0, 2.0) if model is None else model
    ref = reference_decomp(model)
    K = model.kernel_matrix()
    rng = np.random.default_rng(seed)
    failures = 0
    worst = -np.inf
    for _ in range(reps):
        Kt = sample_covariance(sample_paths(model, n, rng))
        rep = perturbation_report(ref, eigendecompose(Kt, model.grid), K, Kt, jmax)
        ok = all(r.eigen_ok for r in rep.records)
        failures += not ok
        worst = max(worst, max(abs(r.gamma_k) for r in rep.records) - rep.delta)
    return [
        CriterionResult(
            f"eigenvalue perturbation (n={n}, j<={jmax})",
            failures / reps,
            0.0,
            failures == 0,
            f"max(|theta_j - thetat_j| - delta) = {worst:.3g}",
        )
    ]


def eigenvector_suite(ns=(500, 2000), reps: int = 200, kmax: int = 3, seed: int = 0, model=None) -> list[CriterionResult]:
    """``||f_k||^2 <= 9 ||Lambda_k||^2`` whenever ``eps_k > 5 delta``; applicable counts are reported."""
    model = GPModel.power_law(2.0, 2.0) if model is None else model
    ref = reference_decomp(model)
    K = model.kernel_matrix()
    out = []
    for n in ns:
        rng = np.random.default_rng([seed, n])
        applicable = np.zeros(kmax, dtype=int)
        violations = 0
        worst = 0.0
        for _ in range(reps):
            Kt = sample_covariance(sample_paths(model, n, rng))
            rep = perturbation_report(ref, eigendecompose(Kt, model.grid), K, Kt, kmax)
            for r in rep.records:
                if r.fk2_applicable:
                    applicable[r.k - 1] += 1
                    violations += not r.fk2_ok
                    worst = max(worst, r.f_sq / r.lam_sq if r.lam_sq > 0 else np.inf)
        counts = ", ".join(f"k={k + 1}: {c}/{reps}" for k, c in enumerate(applicable))
        out.append(
            CriterionResult(
                f"eigenvector bound ||f_k||^2 <= 9||Lambda_k||^2 (n={n})",
                float(violations),
                0.0,
                violations == 0,
                f"applicable {counts}; max ratio {worst:.3g}",
            )
        )
    return out


# ---------------------------------------------------------------------------
# Hellinger ordering
# ---------------------------------------------------------------------------


def hellinger_suite(draws: int = 10_000, seed: int = 0, lam_range=(-8.0, 8.0), delta_range=(-3.0, 3.0), tol: float = 1e-9):
    """``h2_exact <= psi bound <= model bound`` on random ``(lambda, delta)`` for every built-in family.

    Comparisons allow ``tol`` relative to ``max(1, |rhs|)``.
    """
    rng = np.random.default_rng(seed)
    out = []
    for name in FAMILY_NAMES:
        fam = builtin_family(name)
        lam = rng.uniform(*lam_range, size=draws)
        delta = rng.uniform(*delta_range, size=draws)
        rep = hellinger_report(fam, lam, delta)
        v1 = rep.h2_exact > rep.h2_psi_bound + tol * np.maximum(1.0, np.abs(rep.h2_psi_bound))
        v2 = rep.h2_psi_bound > rep.h2_model_bound + tol * np.maximum(1.0, np.abs(rep.h2_model_bound))
        bad = int(np.count_nonzero(v1 | v2))
        out.append(CriterionResult(f"Hellinger ordering ({name})", float(bad), 0.0, bad == 0, f"{draws} draws"))
    return out


# ---------------------------------------------------------------------------
# Sieve MLE
# ---------------------------------------------------------------------------


def glm_design(family_name: str, n: int, N: int, rng, R: float = 2.0, alpha: float = 2.0, beta: float = 3.0):
    """Design ``xi_i = (1, z_i1..z_iN)`` from Gaussian scores and responses from ``Q_{xi_i' gamma}``.

    ``gamma = (0, b_1..b_N)`` with ``b_k = R k^-beta``, scores ``z_ik ~ N(0, R k^-alpha)``.
    """
    k = np.arange(1, N + 1, dtype=float)
    z = rng.standard_normal((n, N)) * np.sqrt(R * k ** (-alpha))
    xi = np.column_stack([np.ones(n), z])
    gamma = np.concatenate([[0.0], R * k ** (-beta)])
    fam = builtin_family(family_name)
    y = fam.sample(xi @ gamma, rng)
    return DesignSet(xi, y, fam, gamma)


def score_norm_suite(family: str = "poisson", n: int = 2000, N: int = 6, reps: int = 500, seed: int = 0):
    """Monte Carlo mean of ``|W_n|^2`` against ``N + 1`` (4 standard errors)."""
    rng = np.random.default_rng(seed)
    vals = np.empty(reps)
    for r in range(reps):
        d = glm_design(family, n, N, rng)
        fit = fit_mle(d, start=d.gamma_true)
        vals[r] = float(np.sum(mle_diagnostics(d, d.gamma_true, fit).W_n ** 2))
    mean = float(vals.mean())
    se = float(vals.std(ddof=1) / np.sqrt(reps))
    return [
        CriterionResult(
            f"score normalization E|W_n|^2 = N+1 ({family}, n={n}, N={N})",
            abs(mean - (N + 1)) / se,
            4.0,
            _within(mean, N + 1, 4.0, se),
            f"mean {mean:.4f} +- {se:.4f}",
        )
    ]


def remainder_suite(families=("poisson", "bernoulli"), ns=(500, 2000, 8000), N: int = 6, reps: int = 100, seed: int = 0):
    """Median ``|r_n|`` strictly decreasing in ``n`` at fixed ``N``."""
    out = []
    for fam in families:
        med = []
        for n in ns:
            rng = np.random.default_rng([seed, n])
            vals = []
            for _ in range(reps):
                d = glm_design(fam, n, N, rng)
                fit = fit_mle(d)
                vals.append(float(np.linalg.norm(mle_diagnostics(d, d.gamma_true, fit).r_n)))
            med.append(float(np.median(vals)))
        steps = np.diff(med)
        out.append(
            CriterionResult(
                f"median |r_n| decreasing ({fam}, N={N})",
                float(np.max(steps)),
                0.0,
                bool(np.all(steps < 0)),
                "medians " + ", ".join(f"n={n}: {v:.4g}" for n, v in zip(ns, med)),
            )
        )
    return out


# ---------------------------------------------------------------------------
# Gaussian tails and sample covariance moments
# ---------------------------------------------------------------------------


def gaussian_tail_suite(n: int = 100, reps: int = 5000, xs=(0.0, 1.0, 2.0), seed: int = 0, model=None):
    """``P{max_i W_i > 4 T (log n + x)} <= 2 exp(-x)`` plus 3 binomial standard errors."""
    model = GPModel.power_law(2.0, 2.0) if model is None else model
    out = []
    for x in xs:
        rng = np.random.default_rng([seed, int(round(100 * x))])
        tc = max_quad_tail_check(model.theta, n, x, reps, rng)
        lim = tc.bound + 3.0 * tc.stderr
        out.append(
            CriterionResult(f"Gaussian max tail (n={n}, x={x:g})", tc.empirical_prob, lim, tc.empirical_prob <= lim)
        )
    return out


def covariance_moment_suite(n: int = 50, reps: int = 20_000, seed: int = 0):
    """``E S_jj = 1`` and ``Var S_jj = 2/(n-1)`` within 4 standard errors; ``E S_jk^2`` halves when ``n`` doubles."""
    rep = sample_cov_moment_report(n, reps, np.random.default_rng([seed, n]))
    rep2 = sample_cov_moment_report(2 * n, reps, np.random.default_rng([seed, 2 * n]))
    out = []
    for key, label in (("sjj", "E S_jj = 1"), ("sjj_dev2", "Var S_jj = 2/(n-1)")):
        e = rep[key]
        out.append(
            CriterionResult(
                f"{label} (n={n})",
                abs(e.mean - e.reference) / e.stderr,
                4.0,
                _within(e.mean, e.reference, 4.0, e.stderr),
                f"mean {e.mean:.5g} reference {e.reference:.5g}",
            )
        )
    ratio = rep2["sjk2"].mean / rep["sjk2"].mean
    out.append(
        CriterionResult(
            f"E S_jk^2 ratio n={2 * n} vs n={n}", ratio, 0.65, 0.35 <= ratio <= 0.65, "target 0.5 +- 30%"
        )
    )
    return out


# ---------------------------------------------------------------------------
# Lower bound
# ---------------------------------------------------------------------------


def lower_bound_scan(cfg: ExperimentConfig, n: int, rep: int = 0):
    """Hypercube, affinity report and assembled bound at sample size ``n``."""
    fam = builtin_family(cfg.family)
    gp = GPModel.power_law(cfg.alpha, cfg.R, T=cfg.T, J_max=cfg.J_max)
    spec = HypercubeSpec.from_schedule(n, fam, gp, cfg.beta, cfg.R, cfg.zeta)
    if cfg.m is not None:
        j = np.arange(cfg.m + 1, 2 * cfg.m + 1)
        load = np.max(cfg.R**2 * j ** (-2.0 * cfg.beta) * gp.theta[j - 1])
        spec = HypercubeSpec(cfg.m, float(1.0 / np.sqrt(n * load)), cfg.beta, cfg.R, fam, gp)
    rng = np.random.default_rng([cfg.seed + rep, n])
    sample = sample_paths(gp, n, rng)
    report = affinity_scan(spec, sample, cfg.gamma_draws, rng)
    return spec, report, assouad_bound(spec, report, n)


def lower_bound_suite(cfg=None, affinity_n: int = 500, ns=(256, 1024, 4096), min_affinity: float = 0.2, spread: float = 2.0):
    """Minimum affinity at ``affinity_n`` and stability of bound / rho_n across ``ns`` (max/min ratio)."""
    cfg = ExperimentConfig() if cfg is None else cfg
    _, rep, _ = lower_bound_scan(cfg, affinity_n)
    out = [
        CriterionResult(
            f"min affinity (n={affinity_n}, {cfg.gamma_draws} draws)",
            rep.min_affinity,
            min_affinity,
            rep.min_affinity >= min_affinity,
        )
    ]
    ratios = [lower_bound_scan(cfg, n)[2].ratio for n in ns]
    s = max(ratios) / min(ratios)
    out.append(
        CriterionResult(
            "lower bound / rho_n stability",
            s,
            spread,
            bool(min(ratios) > 0 and s <= spread),
            "ratios " + ", ".join(f"n={n}: {r:.4g}" for n, r in zip(ns, ratios)),
        )
    )
    return out


# ---------------------------------------------------------------------------
# Determinism
# ---------------------------------------------------------------------------


def determinism_suite(experiments=None, cfg=None) -> list[CriterionResult]:
    """Run each experiment twice (the second time with two workers where supported) and compare CSV bytes."""
    from .harness import run

    base = ExperimentConfig(n_list=(300, 500), reps=3, mode="both", seed=7) if cfg is None else cfg
    experiments = ("single-run", "rate-sweep", "lower-bound", "verify-hellinger") if experiments is None else experiments
    out = []
    for exp in experiments:
        with tempfile.TemporaryDirectory() as d1, tempfile.TemporaryDirectory() as d2:
            run(exp, base, Path(d1))
            run(exp, base.replace(workers=2), Path(d2))
            files = sorted(p.name for p in Path(d1).glob("*.csv"))
            same = bool(files) and files == sorted(p.name for p in Path(d2).glob("*.csv"))
            same = same and all(filecmp.cmp(Path(d1) / f, Path(d2) / f, shallow=False) for f in files)
        out.append(CriterionResult(f"byte-identical CSV ({exp})", float(not same), 0.0, same, ", ".join(files)))
    return out

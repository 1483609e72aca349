"""Gaussian predictor curves via a truncated Karhunen-Loeve expansion.

``X = mu + sum_j sqrt(theta_j) eta_j phi_j`` with iid standard normal
``eta_j`` and the cosine system as eigenfunctions.  Besides simulation this
module holds the sample mean and covariance estimators and Monte Carlo checks
of the Gaussian maximal inequality and of sample-covariance moments.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from .function_space import BasisSet, Grid, GridFunction, cosine_basis


def default_truncation(T: int) -> int:
    return min(T // 2, 200)


@dataclass(frozen=True, eq=False)
class GPModel:
    """Gaussian process with mean ``mu`` and kernel ``sum_j theta_j phi_j(s) phi_j(t)``."""

    grid: Grid
    mu: GridFunction
    theta: np.ndarray
    basis: BasisSet
    alpha: float
    R: float

    def __post_init__(self):
        theta = np.array(self.theta, dtype=float)
        theta.setflags(write=False)
        object.__setattr__(self, "theta", theta)
        if theta.ndim != 1 or theta.size != len(self.basis):
            raise ValueError(f"need one eigenvalue per basis function ({len(self.basis)}), got {theta.shape}")
        if np.any(theta < 0) or np.any(np.diff(theta) > 0):
            raise ValueError("eigenvalues must be nonnegative and nonincreasing")
        if self.mu.grid != self.grid or self.basis.grid != self.grid:
            raise ValueError("mu, basis and model must share a grid")

    @classmethod
    def power_law(
        cls,
        alpha: float,
        R: float,
        T: int = 256,
        J_max: Optional[int] = None,
        C: Optional[float] = None,
        mu: Optional[GridFunction] = None,
        check: bool = True,
    ) -> "GPModel":
        """Eigenvalues ``theta_j = C j^-alpha`` on the cosine system, ``C`` defaulting to ``R``.

        With ``check`` the eigenvalue envelope and spacing conditions of the
        model class are verified and a ``ValueError`` names the first violation.
        """
        if alpha <= 1:
            raise ValueError(f"alpha must exceed 1, got {alpha}")
        if R <= 0:
            raise ValueError(f"R must be positive, got {R}")
        J = default_truncation(T) if J_max is None else int(J_max)
        if 2 * J > T:
            raise ValueError(f"grid too coarse: need T >= 2*J_max, got T={T}, J_max={J}")
        basis = cosine_basis(T, J)
        C = R if C is None else float(C)
        theta = C * np.arange(1, J + 1, dtype=float) ** (-alpha)
        mu = GridFunction.zero(basis.grid) if mu is None else mu
        model = cls(basis.grid, mu, theta, basis, float(alpha), float(R))
        if check:
            problems = model.class_violations()
            if problems:
                raise ValueError("eigenvalues violate the model class: " + problems[0])
        return model

    @property
    def J_max(self) -> int:
        return self.theta.size

    def class_violations(self) -> list[str]:
        """Violations of ``R k^-a >= theta_k >= theta_{k+1} + (a/R) k^(-a-1)``."""
        k = np.arange(1, self.J_max + 1, dtype=float)
        a, R, th = self.alpha, self.R, self.theta
        out = []
        upper = R * k ** (-a)
        bad = np.flatnonzero(th > upper * (1 + 1e-12))
        if bad.size:
            j = bad[0]
            out.append(f"theta_{j + 1} = {th[j]:.6g} > R k^-alpha = {upper[j]:.6g}")
        spacing = th[:-1] - th[1:] - (a / R) * k[:-1] ** (-a - 1)
        bad = np.flatnonzero(spacing < -1e-12 * th[:-1])
        if bad.size:
            j = bad[0]
            out.append(
                f"theta_{j + 1} - theta_{j + 2} = {th[j] - th[j + 1]:.6g} < (alpha/R) k^(-alpha-1) = "
                f"{(a / R) * k[j] ** (-a - 1):.6g} (increase R to at least {self.min_R():.6g})"
            )
        if np.linalg.norm(self.mu.values) / np.sqrt(self.grid.T) > R * (1 + 1e-12):
            out.append("||mu|| exceeds R")
        return out

    def min_R(self) -> float:
        """Smallest ``R`` for which the power-law eigenvalues ``R j^-alpha`` satisfy the spacing condition."""
        k = np.arange(1, self.J_max, dtype=float)
        a = self.alpha
        return float(np.sqrt(np.max(a * k ** (-a - 1) / (k ** (-a) - (k + 1) ** (-a)))))

    def kernel_matrix(self) -> np.ndarray:
        """Kernel values ``K(t_g, t_h)`` on the grid."""
        Phi = self.basis.matrix
        K = (Phi.T * self.theta) @ Phi
        return 0.5 * (K + K.T)

    def trace(self) -> float:
        return float(np.sum(self.theta))


@dataclass(frozen=True, eq=False)
class SampleSet:
    """``n`` curves on a grid, with their KL scores when the mean is known.

    ``scores[i, j] = <X_i - mu, phi_j>``; ``eta`` holds the standard normals
    that generated the sample (simulation truth) when available.
    """

    grid: Grid
    paths: np.ndarray = field(repr=False)
    scores: Optional[np.ndarray] = field(default=None, repr=False)
    eta: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        paths = np.asarray(self.paths, dtype=float)
        if paths.ndim != 2 or paths.shape[1] != self.grid.T:
            raise ValueError(f"paths must have shape (n, {self.grid.T})")
        if paths.shape[0] < 2:
            raise ValueError("a sample needs at least two curves")
        if not np.all(np.isfinite(paths)):
            raise ValueError("paths must be finite")

    @property
    def n(self) -> int:
        return self.paths.shape[0]

    def path(self, i: int) -> GridFunction:
        return GridFunction(self.grid, self.paths[i])


def sample_paths(model: GPModel, n: int, rng: np.random.Generator) -> SampleSet:
    if n < 2:
        raise ValueError("need n >= 2")
    eta = rng.standard_normal((n, model.J_max))
    Z = (eta * np.sqrt(model.theta)) @ model.basis.matrix
    paths = model.mu.values + Z
    scores = model.basis.coefficients(paths - model.mu.values)
    return SampleSet(model.grid, paths, scores, eta)


def sample_mean(s: SampleSet) -> GridFunction:
    return GridFunction(s.grid, s.paths.mean(axis=0))


def sample_covariance(s: SampleSet) -> np.ndarray:
    """Unbiased sample covariance kernel on the grid (``(n-1)`` denominator)."""
    if s.n < 2:
        raise ValueError("need n >= 2")
    C = s.paths - s.paths.mean(axis=0)
    K = C.T @ C / (s.n - 1)
    return 0.5 * (K + K.T)


# ---------------------------------------------------------------------------
# Maximal inequality for Gaussian quadratic forms
# ---------------------------------------------------------------------------


class TailCheck(NamedTuple):
    empirical_prob: float
    bound: float
    stderr: float
    threshold: float


def max_quad_tail_check(tau, n: int, x: float, reps: int, rng: np.random.Generator, chunk: int = 500) -> TailCheck:
    """Monte Carlo frequency of ``max_i W_i > 4 T (log n + x)`` for ``W_i = sum_k tau_ik eta_ik^2``.

    ``tau`` is an ``(n, K)`` array of nonnegative weights, or a length-``K``
    vector shared by all ``i``.  The reference bound is ``2 exp(-x)``.
    """
    tau = np.asarray(tau, dtype=float)
    if tau.ndim == 1:
        tau = np.broadcast_to(tau, (n, tau.size))
    if tau.shape[0] != n:
        raise ValueError(f"tau has {tau.shape[0]} rows, expected n={n}")
    if np.any(tau < 0):
        raise ValueError("weights tau must be nonnegative")
    if reps < 1:
        raise ValueError("reps must be positive")
    T = float(np.max(tau.sum(axis=1)))
    threshold = 4.0 * T * (np.log(n) + x)
    hits = 0
    done = 0
    while done < reps:
        r = min(chunk, reps - done)
        eta = rng.standard_normal((r, n, tau.shape[1]))
        W = np.einsum("rik,ik->ri", eta * eta, tau)
        hits += int(np.count_nonzero(W.max(axis=1) > threshold)) if T > 0 else 0
        done += r
    p = hits / reps
    return TailCheck(p, float(2.0 * np.exp(-x)), float(np.sqrt(max(p * (1 - p), 0.0) / reps)), float(threshold))


def max_norm_tail_check(model: GPModel, n: int, x: float, reps: int, rng: np.random.Generator) -> TailCheck:
    """Frequency of ``max_i ||Z_i||^2 > C' (log n + x)`` with ``C' = 4 C sum_k k^-alpha``.

    ``C`` is read off the model as ``theta_1`` (the power-law constant).
    ``||Z_i||^2 = sum_k theta_k eta_ik^2`` so this is the quadratic-form check
    with ``tau = theta``.
    """
    C = float(model.theta[0])
    C_prime = 4.0 * C * float(np.sum(np.arange(1, model.J_max + 1, dtype=float) ** (-model.alpha)))
    threshold = C_prime * (np.log(n) + x)
    hits = 0
    done = 0
    while done < reps:
        r = min(200, reps - done)
        eta = rng.standard_normal((r, n, model.J_max))
        norms = (eta * eta) @ model.theta
        hits += int(np.count_nonzero(norms.max(axis=1) > threshold))
        done += r
    p = hits / reps
    return TailCheck(p, float(2.0 * np.exp(-x)), float(np.sqrt(p * (1 - p) / reps)), float(threshold))


# ---------------------------------------------------------------------------
# Sample covariance moments of standardized scores
# ---------------------------------------------------------------------------


class MomentEstimate(NamedTuple):
    name: str
    mean: float
    stderr: float
    reference: float


def standardized_sample_cov(eta: np.ndarray) -> np.ndarray:
    """``S_jk = (n-1)^-1 sum_i (eta_ij - mean_j)(eta_ik - mean_k)`` over the last two axes."""
    n = eta.shape[-2]
    C = eta - eta.mean(axis=-2, keepdims=True)
    return np.einsum("...ij,...ik->...jk", C, C) / (n - 1)


def sample_cov_moment_report(n: int, reps: int, rng: np.random.Generator, chunk: int = 2000) -> dict[str, MomentEstimate]:
    """Monte Carlo moments of ``S`` for three independent standard normal coordinates ``j, k, l``.

    References: ``E S_jj = 1``, ``E (S_jj - 1)^2 = 2/(n-1)``,
    ``E S_jk = E S_jk S_jl = 0``, ``E S_jk^2 = 1/(n-1)``,
    ``E S_jk^2 S_lk^2 = (n+1)/(n-1)^3`` and
    ``E S_jk^4 = 3(n+1)/(n-1)^3`` (exact values from the ``U_j' U_k``
    representation with ``U_j ~ N(0, I_{n-1})``).
    """
    if n < 3:
        raise ValueError("need n >= 3")
    parts = {k: [] for k in ("sjj", "sjj_dev2", "sjk", "sjk_sjl", "sjk2", "sjk2_slk2", "sjk4")}
    done = 0
    while done < reps:
        r = min(chunk, reps - done)
        S = standardized_sample_cov(rng.standard_normal((r, n, 3)))
        sjj, sjk, sjl, slk = S[:, 0, 0], S[:, 0, 1], S[:, 0, 2], S[:, 2, 1]
        parts["sjj"].append(sjj)
        parts["sjj_dev2"].append((sjj - 1.0) ** 2)
        parts["sjk"].append(sjk)
        parts["sjk_sjl"].append(sjk * sjl)
        parts["sjk2"].append(sjk**2)
        parts["sjk2_slk2"].append(sjk**2 * slk**2)
        parts["sjk4"].append(sjk**4)
        done += r
    m = n - 1.0
    refs = {
        "sjj": 1.0,
        "sjj_dev2": 2.0 / m,
        "sjk": 0.0,
        "sjk_sjl": 0.0,
        "sjk2": 1.0 / m,
        "sjk2_slk2": (n + 1.0) / m**3,
        "sjk4": 3.0 * (n + 1.0) / m**3,
    }
    out = {}
    for key, chunks in parts.items():
        v = np.concatenate(chunks)
        out[key] = MomentEstimate(key, float(v.mean()), float(v.std(ddof=1) / np.sqrt(v.size)), refs[key])
    return out

"""Slope estimators for functional exponential-family regression.

Observations are ``(X_i, y_i)`` with ``X_i`` a Gaussian curve and
``y_i ~ Q_{lambda_i}``, ``lambda_i = a + <X_i, beta>``.  The estimator
projects the curves on the first ``N`` eigenfunctions of the covariance
kernel (true ones when ``mu`` and ``K`` are known, sample ones otherwise),
fits an ``(N+1)``-dimensional canonical GLM by maximum likelihood and keeps
the first ``m`` slope coefficients.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from .expfam import ExpFamilySpec, hellinger_report
from .function_space import GridFunction
from .gp import GPModel, SampleSet, sample_covariance, sample_mean, sample_paths
from .mle import DesignSet, FitResult, fit_mle
from .spectral import SpectralDecomp, delta_norm, eigendecompose


@dataclass(frozen=True, eq=False)
class ModelTruth:
    """Simulation truth ``(a, beta, mu, K)`` and the response family.

    ``b`` holds the coefficients of ``beta`` on the eigenfunctions of ``K``.
    """

    a: float
    b: np.ndarray
    gp: GPModel
    family: ExpFamilySpec
    alpha: float
    beta: float
    R: float

    def __post_init__(self):
        b = np.array(self.b, dtype=float)
        b.setflags(write=False)
        object.__setattr__(self, "b", b)
        if b.shape != (self.gp.J_max,):
            raise ValueError(f"need {self.gp.J_max} slope coefficients, got {b.shape}")
        if self.alpha <= 1:
            raise ValueError(f"alpha must exceed 1, got {self.alpha}")
        if self.beta <= (self.alpha + 3) / 2:
            raise ValueError(f"beta must exceed (alpha + 3)/2 = {(self.alpha + 3) / 2}, got {self.beta}")
        if abs(self.a) > self.R:
            raise ValueError(f"|a| = {abs(self.a)} exceeds R = {self.R}")
        k = np.arange(1, b.size + 1, dtype=float)
        env = self.R * k ** (-self.beta)
        bad = np.flatnonzero(np.abs(b) > env * (1 + 1e-12))
        if bad.size:
            j = bad[0]
            raise ValueError(f"|b_{j + 1}| = {abs(b[j]):.6g} exceeds R k^-beta = {env[j]:.6g}")

    @classmethod
    def power_law(
        cls,
        family: ExpFamilySpec,
        alpha: float = 2.0,
        beta: float = 3.0,
        R: float = 2.0,
        a: float = 0.0,
        T: int = 256,
        J_max: Optional[int] = None,
        alternating: bool = False,
        mu_coef: float = 0.0,
    ) -> "ModelTruth":
        """``b_k = R k^-beta`` (signs alternating if asked), ``theta_j = R j^-alpha``, ``mu = mu_coef * phi_2``."""
        gp = GPModel.power_law(alpha, R, T=T, J_max=J_max)
        if mu_coef:
            mu = GridFunction(gp.grid, mu_coef * gp.basis.matrix[1])
            gp = GPModel(gp.grid, mu, gp.theta, gp.basis, gp.alpha, gp.R)
            problems = gp.class_violations()
            if problems:
                raise ValueError(problems[0])
        k = np.arange(1, gp.J_max + 1, dtype=float)
        b = R * k ** (-beta)
        if alternating:
            b = b * (-1.0) ** (k - 1)
        return cls(float(a), b, gp, family, float(alpha), float(beta), float(R))

    @property
    def beta_function(self) -> GridFunction:
        return self.gp.basis.synthesize(self.b)

    @property
    def b0(self) -> float:
        """Intercept of the centered model, ``a + <mu, beta>``."""
        return self.a + float(self.gp.basis.coefficients(self.gp.mu) @ self.b)

    def lam(self, sample: SampleSet) -> np.ndarray:
        return self.a + sample.paths @ self.beta_function.values / sample.grid.T

    def tail_sq(self, m: int) -> float:
        """``||beta - H_m beta||^2 = sum_{k > m} b_k^2``."""
        return float(np.sum(self.b[m:] ** 2))


# ---------------------------------------------------------------------------
# Dimension schedule
# ---------------------------------------------------------------------------


def zeta_window(alpha: float, beta: float) -> tuple[float, float]:
    """Open interval of admissible exponents for ``N ~ n^zeta``."""
    lo, hi = 1.0 / (alpha + 2 * beta - 1), 1.0 / (2 + 2 * alpha)
    if not lo < hi:
        raise ValueError(f"empty zeta window for alpha={alpha}, beta={beta}")
    return lo, hi


def default_zeta(alpha: float, beta: float) -> float:
    lo, hi = zeta_window(alpha, beta)
    return 0.5 * (lo + hi)


def schedule(n: int, alpha: float, beta: float, zeta: Optional[float] = None) -> tuple[int, int]:
    """``m = max(1, round(n^(1/(alpha+2beta))))`` and ``N = max(m+1, round(n^zeta))``.

    Examples
    --------
    >>> schedule(4096, 2.0, 3.0, 0.155)
    (3, 4)
    """
    if alpha <= 1 or beta <= (alpha + 3) / 2:
        raise ValueError(f"need alpha > 1 and beta > (alpha+3)/2, got alpha={alpha}, beta={beta}")
    lo, hi = zeta_window(alpha, beta)
    zeta = default_zeta(alpha, beta) if zeta is None else float(zeta)
    if not lo < zeta < hi:
        raise ValueError(f"zeta={zeta} outside the admissible interval ({lo:.6g}, {hi:.6g})")
    m = max(1, int(round(n ** (1.0 / (alpha + 2 * beta)))))
    N = max(m + 1, int(round(n**zeta)))
    return m, N


def minimax_rate(n, alpha: float, beta: float):
    """``rho_n = n^((1 - 2 beta)/(alpha + 2 beta))``."""
    return np.asarray(n, dtype=float) ** ((1 - 2 * beta) / (alpha + 2 * beta))


# ---------------------------------------------------------------------------
# Data
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Dataset:
    sample: SampleSet
    y: np.ndarray
    lam: np.ndarray

    @property
    def n(self) -> int:
        return self.y.size


def simulate_dataset(truth: ModelTruth, n: int, rng: np.random.Generator) -> Dataset:
    """Draw ``n`` curves from the truth's Gaussian process and responses at ``a + <X_i, beta>``."""
    if n < 2:
        raise ValueError("need n >= 2")
    sample = sample_paths(truth.gp, n, rng)
    lam = truth.lam(sample)
    y = truth.family.sample(lam, rng)
    return Dataset(sample, y, lam)


# ---------------------------------------------------------------------------
# Estimators
# ---------------------------------------------------------------------------


@dataclass
class EstimateResult:
    beta_hat: GridFunction
    m: int
    N: int
    fit: FitResult
    design: DesignSet = field(repr=False)
    ise: Optional[float] = None
    tail_sq: Optional[float] = None
    diagnostics: dict = field(default_factory=dict)

    @property
    def coefs(self) -> np.ndarray:
        return self.fit.ghat[1 : self.m + 1]


def _fit_options(options: Optional[dict]) -> dict:
    opts = dict(options or {})
    allowed = {"tol", "max_iter", "ridge", "overflow_guard", "start"}
    unknown = set(opts) - allowed
    if unknown:
        raise ValueError(f"unknown fit options: {sorted(unknown)}")
    return opts


def _check_dims(m: int, N: int, available: int):
    if not 1 <= m <= N:
        raise ValueError(f"need 1 <= m <= N, got m={m}, N={N}")
    if N > available:
        raise ValueError(f"N={N} exceeds the {available} available eigenfunctions")


def estimate_known(data: Dataset, truth: ModelTruth, m: int, N: int, options: Optional[dict] = None) -> EstimateResult:
    """Estimator with known ``mu`` and ``K``.

    The design is ``xi_i = (1, z_i1, ..., z_iN)`` with ``z_ik = <X_i - mu, phi_k>``
    and the fitted target is ``gamma = (a + <mu, beta>, b_1, ..., b_N)``.
    """
    _check_dims(m, N, truth.gp.J_max)
    basis = truth.gp.basis
    z = basis.coefficients(data.sample.paths - truth.gp.mu.values)[:, :N]
    xi = np.column_stack([np.ones(data.n), z])
    gamma = np.concatenate([[truth.b0], truth.b[:N]])
    d = DesignSet(xi, data.y, truth.family, gamma)
    fit = fit_mle(d, **_fit_options(options))
    g = fit.ghat[1 : m + 1]
    beta_hat = GridFunction(basis.grid, g @ basis.matrix[:m])
    err = truth.beta_function - beta_hat
    return EstimateResult(
        beta_hat=beta_hat,
        m=m,
        N=N,
        fit=fit,
        design=d,
        ise=err.norm() ** 2,
        tail_sq=truth.tail_sq(m),
        diagnostics={"coef_sq_error": float(np.sum((g - truth.b[:m]) ** 2))},
    )


def estimate_unknown(
    data: Dataset,
    m: int,
    N: int,
    family: ExpFamilySpec,
    truth: Optional[ModelTruth] = None,
    options: Optional[dict] = None,
    decomp: Optional[SpectralDecomp] = None,
) -> EstimateResult:
    """Estimator with ``mu`` and ``K`` replaced by the sample mean and covariance.

    The design is ``xi_i = (1, zt_i - zt_bar)`` with ``zt_ik = <X_i, phit_k>``
    for the sample eigenfunctions ``phit_k``; ``beta_hat = sum_{k<=m} ghat_k phit_k``.
    ``decomp`` overrides the eigen-system of the sample covariance (it must
    be one, up to eigenfunction signs).

    With ``truth`` the result also carries the ISE, the operator-norm error
    ``||Kt - K||`` and the deviation of the standardized score Gram matrix
    from ``diag(n/(n-1), thetat_1/theta_1, ..., thetat_N/theta_N)``.
    """
    s = data.sample
    if s.n < 3:
        raise ValueError("need n >= 3")
    if decomp is None:
        decomp = eigendecompose(sample_covariance(s), s.grid)
    _check_dims(m, N, len(decomp))
    tht = decomp.eigenvalues
    # centered curves span at most n - 1 directions; below that, trust only eigenvalues above rounding
    if N > s.n - 1 or not tht[N - 1] > 1e-10 * tht[0]:
        raise ValueError(
            f"sample covariance has rank below N={N} (thetat_N = {tht[N - 1]:.3g}); use a larger n or a smaller zeta"
        )
    T = s.grid.T
    centered = s.paths - sample_mean(s).values
    z = centered @ decomp.eigenfunctions[:N].T / T
    xi = np.column_stack([np.ones(s.n), z])
    gamma = None
    if truth is not None:
        bt = decomp.eigenfunctions[:N] @ truth.beta_function.values / T
        g0 = truth.a + float(sample_mean(s).values @ truth.beta_function.values) / T
        gamma = np.concatenate([[g0], bt])
    d = DesignSet(xi, data.y, family, gamma)
    fit = fit_mle(d, **_fit_options(options))
    beta_hat = GridFunction(s.grid, fit.ghat[1 : m + 1] @ decomp.eigenfunctions[:m])
    res = EstimateResult(beta_hat=beta_hat, m=m, N=N, fit=fit, design=d, diagnostics={"decomp": decomp})
    if truth is not None:
        err = truth.beta_function - beta_hat
        res.ise = err.norm() ** 2
        tail = truth.beta_function.values - (truth.beta_function.values @ decomp.eigenfunctions[:m].T / T) @ decomp.eigenfunctions[:m]
        res.tail_sq = float(tail @ tail) / T
        th = truth.gp.theta[:N]
        eta = xi / np.sqrt(np.concatenate([[1.0], th]))
        gram = eta.T @ eta / (s.n - 1)
        expected = np.diag(np.concatenate([[s.n / (s.n - 1)], tht[:N] / th]))
        res.diagnostics["score_gram_error"] = float(np.max(np.abs(gram - expected)))
    return res


# ---------------------------------------------------------------------------
# Diagnostics
# ---------------------------------------------------------------------------


class TVChain(NamedTuple):
    h2_sum: float
    tv_bound: float


def tv_hellinger_chain(truth: ModelTruth, sample: SampleSet, N: int) -> TVChain:
    """Hellinger bound on the total variation cost of truncating ``beta`` at ``N`` terms.

    With ``delta_i = sum_{k > N} z_ik b_k`` the gap between ``lambda_i`` and the
    truncated ``lambda_iN``, returns ``sum_i h2_i`` (each term the model bound
    ``delta_i^2 psi2(lambda_iN)(1 + |delta_i|) G(|delta_i|)``) and its square
    root, which bounds the total variation distance between the two product
    laws of the responses.
    """
    z = sample.scores
    if z is None:
        z = truth.gp.basis.coefficients(sample.paths - truth.gp.mu.values)
    lamN = truth.b0 + z[:, :N] @ truth.b[:N]
    delta = z[:, N:] @ truth.b[N:]
    h2 = float(np.sum(hellinger_report(truth.family, lamN, delta).h2_model_bound))
    return TVChain(h2, float(np.sqrt(h2)))


class TxxnReport(NamedTuple):
    delta_norm: float
    max_z_sq: float
    zbar_norm: float
    proj_m: float
    proj_N: float
    max_eta_tilde: float
    sign_gap: float

    def row(self) -> dict:
        return self._asdict()


def _projection_gap(beta: np.ndarray, ref: np.ndarray, est: np.ndarray, T: int) -> float:
    # ||(Ht_p - H_p) beta||^2 for row-stacked orthonormal systems
    diff = (est @ beta / T) @ est - (ref @ beta / T) @ ref
    return float(diff @ diff) / T


def txxn_diagnostics(data: Dataset, truth: ModelTruth, m: int, N: int, decomp: Optional[SpectralDecomp] = None) -> TxxnReport:
    """Quantities controlling the estimated-eigenfunction estimator.

    ``delta_norm = ||Kt - K||``; ``max_z_sq = max_i ||X_i - mu||^2``;
    ``zbar_norm = ||Xbar - mu||``; ``proj_p = ||(Ht_p - H_p) beta||^2`` for
    ``p = m, N``; ``max_eta_tilde = max_i |D^-1 xit_i|`` with
    ``D = diag(1, sqrt(theta_1), ..., sqrt(theta_N))``; and
    ``sign_gap = ||S At S - A||`` (spectral norm), where ``S`` holds the
    alignment signs and ``A``, ``At`` are the weighted second-moment
    matrices of the known- and estimated-eigenfunction designs.
    """
    s = data.sample
    T = s.grid.T
    gp = truth.gp
    Kt = sample_covariance(s)
    delta = delta_norm(gp.kernel_matrix(), Kt, s.grid).delta
    if decomp is None:
        decomp = eigendecompose(Kt, s.grid)
    _check_dims(m, N, min(len(decomp), gp.J_max))
    Z = s.paths - gp.mu.values
    max_z_sq = float(np.max(np.sum(Z * Z, axis=1)) / T)
    zbar = Z.mean(axis=0)
    zbar_norm = float(np.sqrt(zbar @ zbar / T))

    beta = truth.beta_function.values
    Phi = gp.basis.matrix
    Et = decomp.eigenfunctions
    proj_m = _projection_gap(beta, Phi[:m], Et[:m], T)
    proj_N = _projection_gap(beta, Phi[:N], Et[:N], T)

    Dinv = 1.0 / np.sqrt(np.concatenate([[1.0], gp.theta[:N]]))
    zt = (s.paths - s.paths.mean(axis=0)) @ Et[:N].T / T
    xit = np.column_stack([np.ones(s.n), zt])
    eta_t = xit * Dinv
    max_eta = float(np.max(np.linalg.norm(eta_t, axis=1)))

    gamma_t = np.concatenate([[truth.a + float(s.paths.mean(axis=0) @ beta) / T], Et[:N] @ beta / T])
    At = (eta_t.T * truth.family.psi2(xit @ gamma_t)) @ eta_t / s.n
    z = Z @ Phi[:N].T / T
    xi = np.column_stack([np.ones(s.n), z])
    eta = xi * Dinv
    gamma = np.concatenate([[truth.b0], truth.b[:N]])
    A = (eta.T * truth.family.psi2(xi @ gamma)) @ eta / s.n
    signs = np.where(np.sum(Phi[:N] * Et[:N], axis=1) >= 0, 1.0, -1.0)
    S = np.concatenate([[1.0], signs])
    gap = float(np.linalg.norm(S[:, None] * At * S[None, :] - A, 2))
    return TxxnReport(delta, max_z_sq, zbar_norm, proj_m, proj_N, max_eta, gap)

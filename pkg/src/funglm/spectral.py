"""Eigendecomposition of kernel operators and eigen-perturbation diagnostics.

Operators act on grid functions by ``(K f)(s) = (1/T) sum_t K(s, t) f(t)``.
Given a reference operator ``K`` (eigenpairs ``theta_j, phi_j``) and a
perturbed one ``Kt`` (eigenpairs ``thetat_k, phit_k``), the quantities here
are, for each ``k``:

* ``delta = ||Kt - K||`` (operator norm) and the gap ``eps_k``,
* the alignment sign ``sigma_k = sign <phi_k, phit_k>`` (``+1`` on ties),
* ``f_k = sigma_k phit_k - phi_k``,
* the first-order term ``Lambda_k = sum_{j != k} Kt_jk / (theta_k - theta_j) phi_j``
  with ``Kt_jk = <phi_j, Kt phi_k>``,
* the remainder ``r_k = f_k - Lambda_k``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from .function_space import Grid, GridFunction
from .gp import GPModel


class SpectralError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class SpectralDecomp:
    """Eigenvalues in nonincreasing order with discrete-orthonormal eigenfunctions (rows)."""

    grid: Grid
    eigenvalues: np.ndarray
    eigenfunctions: np.ndarray = field(repr=False)

    def __post_init__(self):
        ev = np.asarray(self.eigenvalues, dtype=float)
        ef = np.asarray(self.eigenfunctions, dtype=float)
        if ef.shape != (ev.size, self.grid.T):
            raise ValueError(f"eigenfunctions must have shape ({ev.size}, {self.grid.T}), got {ef.shape}")
        if np.any(np.diff(ev) > 1e-12 * max(1.0, float(np.max(np.abs(ev), initial=0.0)))):
            raise ValueError("eigenvalues must be sorted nonincreasing")

    def __len__(self) -> int:
        return self.eigenvalues.size

    @property
    def functions(self) -> list[GridFunction]:
        return [GridFunction(self.grid, row) for row in self.eigenfunctions]

    def reconstruct(self) -> np.ndarray:
        """Kernel matrix ``sum_k theta_k phi_k(s) phi_k(t)``."""
        E = self.eigenfunctions
        return (E.T * self.eigenvalues) @ E

    def flipped(self, signs) -> "SpectralDecomp":
        """Same decomposition with eigenfunction ``k`` multiplied by ``signs[k]``."""
        s = np.ones(len(self))
        signs = np.asarray(signs, dtype=float)
        s[: signs.size] = signs
        return SpectralDecomp(self.grid, self.eigenvalues, self.eigenfunctions * s[:, None])

    def truncated(self, r: int) -> "SpectralDecomp":
        return SpectralDecomp(self.grid, self.eigenvalues[:r], self.eigenfunctions[:r])


def reference_decomp(model: GPModel) -> SpectralDecomp:
    """Exact eigen-system of a model's kernel: ``theta_j`` on the cosine functions."""
    return SpectralDecomp(model.grid, np.array(model.theta), np.array(model.basis.matrix))


def _check_kernel(kernel: np.ndarray, T: int) -> np.ndarray:
    K = np.asarray(kernel, dtype=float)
    if K.shape != (T, T):
        raise SpectralError(f"kernel must be {T}x{T}, got {K.shape}")
    if not np.all(np.isfinite(K)):
        raise SpectralError("kernel has non-finite entries")
    scale = max(1.0, float(np.max(np.abs(K))))
    if np.max(np.abs(K - K.T)) > 1e-10 * scale:
        raise SpectralError("kernel is not symmetric")
    return K


def eigendecompose(kernel: np.ndarray, grid: Grid, neg_tol: float = 1e-10) -> SpectralDecomp:
    """Eigenpairs of the integral operator with the given kernel matrix.

    The operator matrix is ``kernel / T``; eigenvectors of unit Euclidean norm
    are scaled by ``sqrt(T)`` to have unit discrete L2 norm.  Eigenvalues in
    ``[-neg_tol * max(1, theta_max), 0)`` are clamped to zero, anything more
    negative raises ``SpectralError``.
    """
    K = _check_kernel(kernel, grid.T)
    M = 0.5 * (K + K.T) / grid.T
    w, V = np.linalg.eigh(M)
    w, V = w[::-1], V[:, ::-1]
    tol = neg_tol * max(1.0, float(w[0]))
    if w[-1] < -tol:
        raise SpectralError(f"kernel is not positive semidefinite: eigenvalue {w[-1]:.3g}")
    w = np.where(w < 0, 0.0, w)
    return SpectralDecomp(grid, w, V.T * np.sqrt(grid.T))


class DeltaNorm(NamedTuple):
    delta: float
    delta_sq_bound: float


def delta_norm(K: np.ndarray, Ktilde: np.ndarray, grid: Optional[Grid] = None) -> DeltaNorm:
    """Operator norm of ``Ktilde - K`` and the sum of squared coordinates bounding its square.

    The coordinate sum ``sum_jk (Kt_jk - theta_j [j = k])^2`` over a complete
    orthonormal basis is the squared Hilbert-Schmidt norm, which does not
    depend on the basis.
    """
    K = np.asarray(K, dtype=float)
    Kt = np.asarray(Ktilde, dtype=float)
    if K.shape != Kt.shape or K.ndim != 2 or K.shape[0] != K.shape[1]:
        raise SpectralError(f"shape mismatch: {K.shape} vs {Kt.shape}")
    T = K.shape[0] if grid is None else grid.T
    D = Kt - K
    D = 0.5 * (D + D.T) / T
    w = np.linalg.eigvalsh(D)
    return DeltaNorm(float(np.max(np.abs(w))), float(np.sum(D * D)))


def operator_coords(ref: SpectralDecomp, decomp: SpectralDecomp) -> np.ndarray:
    """Matrix ``<phi_j, Kt phi_k>`` of ``decomp``'s operator in ``ref``'s eigenbasis."""
    T = ref.grid.T
    C = ref.eigenfunctions @ decomp.eigenfunctions.T / T
    return (C * decomp.eigenvalues) @ C.T


def kernel_coords(ref: SpectralDecomp, kernel: np.ndarray) -> np.ndarray:
    """Matrix ``<phi_j, K phi_k>`` for a kernel given on the grid."""
    E = ref.eigenfunctions
    T = ref.grid.T
    out = E @ np.asarray(kernel, dtype=float) @ E.T / T**2
    return 0.5 * (out + out.T)


def eigen_gaps(theta: np.ndarray) -> np.ndarray:
    """``eps_k = min_{j != k} |theta_j - theta_k|``."""
    th = np.asarray(theta, dtype=float)
    d = np.abs(th[:, None] - th[None, :])
    np.fill_diagonal(d, np.inf)
    return d.min(axis=1)


def lambda_matrix(theta: np.ndarray, coords: np.ndarray, kmax: int) -> np.ndarray:
    """Rows ``Lambda_{k, .}``: ``coords[j, k] / (theta_k - theta_j)`` off the diagonal, zero on it.

    Coordinates with zero eigen-gap give ``inf`` (or ``nan`` when the
    coordinate is zero too).
    """
    th = np.asarray(theta, dtype=float)
    L = np.empty((kmax, th.size))
    with np.errstate(divide="ignore", invalid="ignore"):
        for k in range(kmax):
            L[k] = coords[:, k] / (th[k] - th)
    L[np.arange(kmax), np.arange(kmax)] = 0.0
    return L


def lambda_from_scores(theta: np.ndarray, S: np.ndarray, kmax: int) -> np.ndarray:
    """``Lambda_kj = sqrt(theta_j theta_k) S_jk / (theta_k - theta_j)`` from standardized score covariances."""
    th = np.asarray(theta, dtype=float)
    coords = np.sqrt(np.outer(th, th)) * S
    return lambda_matrix(th, coords, kmax)


@dataclass
class PerturbationRecord:
    k: int
    eps_k: float
    sigma_k: int
    inner_kk: float
    gamma_k: float
    f_sq: float
    lam_sq: float
    r_sq: float
    eigen_ok: bool
    fk2_applicable: bool
    fk2_ok: Optional[bool]
    rjk_ok: Optional[bool]
    lam: np.ndarray = field(repr=False)
    r_coords: np.ndarray = field(repr=False)

    def row(self) -> dict:
        na = "not applicable"
        return {
            "k": self.k,
            "eps_k": self.eps_k,
            "sigma_k": self.sigma_k,
            "inner_kk": self.inner_kk,
            "gamma_k": self.gamma_k,
            "f_sq": self.f_sq,
            "lam_sq": self.lam_sq,
            "r_sq": self.r_sq,
            "eigen_ok": self.eigen_ok,
            "fk2_ok": self.fk2_ok if self.fk2_applicable else na,
            "rjk_ok": self.rjk_ok if self.fk2_applicable else na,
        }


@dataclass
class PerturbationReport:
    delta: float
    eigen_bound_ok: bool
    max_eigen_error: float
    records: list[PerturbationRecord]

    def rows(self) -> list[dict]:
        return [{"delta": self.delta, **r.row()} for r in self.records]


def perturbation_report(
    ref: SpectralDecomp,
    pert: SpectralDecomp,
    K: np.ndarray,
    Ktilde: np.ndarray,
    kmax: int,
    slack: float = 1e-10,
) -> PerturbationReport:
    """Eigenvalue, eigenvector and first-order-expansion diagnostics for ``k <= kmax``.

    ``ref`` must be a complete eigen-system for the space in which ``Ktilde``
    lives (for simulated curves: the KL basis up to the truncation level).
    """
    if kmax > min(len(ref), len(pert)):
        raise ValueError(f"kmax={kmax} exceeds the available eigenpairs")
    T = ref.grid.T
    delta = delta_norm(K, Ktilde, ref.grid).delta
    th, tht = ref.eigenvalues, pert.eigenvalues
    r = min(th.size, tht.size)
    eig_err = np.abs(th[:r] - tht[:r])
    eig_ok = bool(np.all(eig_err <= delta + slack))

    coords = kernel_coords(ref, Ktilde)
    eps = eigen_gaps(th)
    L = lambda_matrix(th, coords, kmax)
    sig = ref.eigenfunctions @ pert.eigenfunctions[:kmax].T / T  # sig[j, k] = <phi_j, phit_k>

    records = []
    for k in range(kmax):
        s_kk = float(sig[k, k])
        sign = 1 if s_kk >= 0 else -1
        f = sign * pert.eigenfunctions[k] - ref.eigenfunctions[k]
        f_sq = float(f @ f) / T
        lam = L[k]
        lam_sq = float(np.sum(lam**2))
        r_coords = sign * sig[:, k] - lam
        r_coords[k] = abs(s_kk) - 1.0
        r_fun = f - lam @ ref.eigenfunctions
        r_sq = float(r_fun @ r_fun) / T
        applicable = bool(eps[k] > 5 * delta)
        fk2_ok = rjk_ok = None
        if applicable:
            fk2_ok = bool(f_sq <= 9 * lam_sq + slack)
            gaps = np.abs(th[k] - th)
            mask = np.arange(th.size) != k
            rjk_ok = bool(np.all(np.abs(r_coords[mask]) <= 5 * delta * np.sqrt(lam_sq) / gaps[mask] + slack))
        records.append(
            PerturbationRecord(
                k=k + 1,
                eps_k=float(eps[k]),
                sigma_k=sign,
                inner_kk=s_kk,
                gamma_k=float(tht[k] - th[k]),
                f_sq=f_sq,
                lam_sq=lam_sq,
                r_sq=r_sq,
                eigen_ok=bool(eig_err[k] <= delta + slack),
                fk2_applicable=applicable,
                fk2_ok=fk2_ok,
                rjk_ok=rjk_ok,
                lam=lam,
                r_coords=r_coords,
            )
        )
    return PerturbationReport(delta, eig_ok, float(eig_err.max()), records)


class ProjectionDiff(NamedTuple):
    actual: float
    bound_terms: list
    valid: bool
    delta: float


def projection_diff(ref: SpectralDecomp, pert: SpectralDecomp, beta: GridFunction, p: int) -> ProjectionDiff:
    """``||(Ht_p - H_p) beta||^2`` and the seven terms of its perturbation bound.

    ``H_p`` projects on ``phi_1..phi_p``, ``Ht_p`` on ``phit_1..phit_p``.  All
    sums over ``j`` run over ``ref``'s eigenfunctions.  ``valid`` records whether
    ``min_{k <= p} eps_k > 5 delta``, the condition under which the terms bound
    ``actual`` up to a universal constant.
    """
    if p > min(len(ref), len(pert)):
        raise ValueError("p exceeds the available eigenpairs")
    T = ref.grid.T
    b = ref.eigenfunctions @ beta.values / T
    bt = pert.eigenfunctions[:p] @ beta.values / T
    diff = bt @ pert.eigenfunctions[:p] - b[:p] @ ref.eigenfunctions[:p]
    actual = float(diff @ diff) / T

    th = ref.eigenvalues
    Kref = ref.reconstruct()
    delta = delta_norm(Kref, pert.reconstruct(), ref.grid).delta
    coords = operator_coords(ref, pert)
    L = lambda_matrix(th, coords, p)
    r = th.size
    inJ = np.zeros(r, dtype=bool)
    inJ[:p] = True
    lam_sq = np.sum(L**2, axis=1)
    bJ = b[:p]

    with np.errstate(divide="ignore"):
        inv_gap = 1.0 / np.abs(th[:p, None] - th[None, :])
    inv_gap[np.arange(p), np.arange(p)] = 0.0

    t1 = float(np.sum((L[:, ~inJ] @ b[~inJ]) ** 2))
    t2 = float(np.sum((bJ @ L[:, ~inJ]) ** 2))
    t3 = float(np.sum(bJ**2 * lam_sq**2))
    t4 = float(np.sum(np.abs(bJ) * lam_sq) ** 2)
    t5 = float(np.sum(lam_sq) * np.sum((L @ b) ** 2))
    t6 = float(delta**2 * np.sum(lam_sq * (inv_gap @ np.abs(b)) ** 2))
    t7 = float(delta**2 * np.sum(lam_sq) * np.sum(bJ**2 * inv_gap.sum(axis=1) ** 2))
    valid = bool(np.min(eigen_gaps(th)[:p]) > 5 * delta)
    return ProjectionDiff(actual, [t1, t2, t3, t4, t5, t6, t7], valid, delta)


def eigen_gap_sum(theta, k: int, r: float, gamma: float) -> float:
    """``sum_{j != k} j^-gamma / |theta_j - theta_k|^r`` over the available ``theta`` (``k`` one-based)."""
    th = np.asarray(theta, dtype=float)
    if not 1 <= k <= th.size:
        raise ValueError(f"k={k} outside 1..{th.size}")
    if r < 1:
        raise ValueError("r must be at least 1")
    j = np.arange(1, th.size + 1, dtype=float)
    mask = j != k
    gaps = np.abs(th[mask] - th[k - 1])
    if np.any(gaps == 0):
        raise ValueError("zero eigen-gap: eigenvalues must be strictly decreasing over the horizon")
    return float(np.sum(j[mask] ** (-gamma) / gaps**r))


# ---------------------------------------------------------------------------
# Monte Carlo moments of Lambda_k under Gaussian sampling
# ---------------------------------------------------------------------------


@dataclass
class LambdaMoments:
    n: int
    ks: tuple
    horizon: int
    mean_lkj: np.ndarray  # (len(ks), horizon)
    se_lkj: np.ndarray
    mean_lkj2: np.ndarray
    exact_lkj2: np.ndarray
    mean_lam_sq: np.ndarray  # E ||Lambda_k||^2 per k
    se_lam_sq: np.ndarray
    exact_lam_sq: np.ndarray
    mean_lam_4: np.ndarray
    se_lam_4: np.ndarray
    mean_lkj_lkl: np.ndarray  # E Lambda_kj Lambda_kl for the two nearest neighbours
    se_lkj_lkl: np.ndarray

    def rows(self) -> list[dict]:
        out = []
        for i, k in enumerate(self.ks):
            out.append(
                {
                    "n": self.n,
                    "k": k,
                    "E_lam_sq": float(self.mean_lam_sq[i]),
                    "E_lam_sq_se": float(self.se_lam_sq[i]),
                    "E_lam_sq_exact": float(self.exact_lam_sq[i]),
                    "E_lam_4": float(self.mean_lam_4[i]),
                    "E_lam_4_se": float(self.se_lam_4[i]),
                    "E_lam_sq_over_k2_per_n": float(self.mean_lam_sq[i] * self.n / k**2),
                    "max_abs_z_E_lkj": float(np.nanmax(np.abs(self.mean_lkj[i] / self.se_lkj[i]))),
                }
            )
        return out


def lambda_moment_report(
    n: int,
    reps: int,
    model: GPModel,
    rng: np.random.Generator,
    ks=(1, 2, 3, 4),
    horizon: Optional[int] = None,
    chunk: Optional[int] = None,
) -> LambdaMoments:
    """Monte Carlo moments of ``Lambda_kj = sqrt(theta_j theta_k) S_jk / (theta_k - theta_j)``.

    ``S`` is the standardized sample covariance of ``n`` Gaussian curves;
    its law does not depend on ``mu`` or ``K`` so the standard normals are
    drawn directly.  The exact second moment uses ``E S_jk^2 = 1/(n-1)``.
    """
    if n < 3:
        raise ValueError("need n >= 3")
    H = model.J_max if horizon is None else min(int(horizon), model.J_max)
    th = model.theta[:H]
    ks = tuple(int(k) for k in ks)
    if max(ks) >= H:
        raise ValueError("horizon must exceed the largest k")
    kidx = np.array(ks) - 1
    if chunk is None:
        chunk = max(1, 4_000_000 // (n * H))
    sq = np.sqrt(th)
    with np.errstate(divide="ignore"):
        W = sq[kidx, None] * sq[None, :] / (th[kidx, None] - th[None, :])
    W[np.arange(len(ks)), kidx] = 0.0

    sums = {"l": 0.0, "l2": 0.0, "n2": 0.0, "n4": 0.0, "n2sq": 0.0, "n4sq": 0.0, "pair": 0.0, "pair2": 0.0}
    l_sq_acc = np.zeros((len(ks), H))
    done = 0
    while done < reps:
        r = min(chunk, reps - done)
        eta = rng.standard_normal((r, n, H))
        C = eta - eta.mean(axis=1, keepdims=True)
        S_rows = np.einsum("rik,rij->rkj", C[:, :, kidx], C) / (n - 1)  # (r, len(ks), H)
        L = S_rows * W[None]
        lam_sq = np.sum(L**2, axis=2)
        nb1 = np.clip(kidx - 1, 0, None)
        nb2 = kidx + 1
        # neighbours distinct from k; for k = 1 use j = 2, 3
        nb1 = np.where(kidx == 0, 2, nb1)
        pair = L[:, np.arange(len(ks)), nb1] * L[:, np.arange(len(ks)), nb2]
        sums["l"] = sums["l"] + L.sum(axis=0)
        l_sq_acc += (L**2).sum(axis=0)
        sums["n2"] = sums["n2"] + lam_sq.sum(axis=0)
        sums["n2sq"] = sums["n2sq"] + (lam_sq**2).sum(axis=0)
        sums["n4"] = sums["n4"] + (lam_sq**2).sum(axis=0)
        sums["n4sq"] = sums["n4sq"] + (lam_sq**4).sum(axis=0)
        sums["pair"] = sums["pair"] + pair.sum(axis=0)
        sums["pair2"] = sums["pair2"] + (pair**2).sum(axis=0)
        done += r

    def _mean_se(s1, s2):
        m = s1 / reps
        var = np.maximum(s2 / reps - m**2, 0.0) * reps / max(reps - 1, 1)
        return m, np.sqrt(var / reps)

    mean_l = sums["l"] / reps
    mean_l2 = l_sq_acc / reps
    se_l = np.sqrt(np.maximum(mean_l2 - mean_l**2, 0.0) / reps)
    se_l[np.arange(len(ks)), kidx] = np.nan
    m2, se2 = _mean_se(sums["n2"], sums["n2sq"])
    m4, se4 = _mean_se(sums["n4"], sums["n4sq"])
    mp, sep = _mean_se(sums["pair"], sums["pair2"])
    exact = W**2 / (n - 1)
    return LambdaMoments(
        n=n,
        ks=ks,
        horizon=H,
        mean_lkj=mean_l,
        se_lkj=se_l,
        mean_lkj2=mean_l2,
        exact_lkj2=exact,
        mean_lam_sq=m2,
        se_lam_sq=se2,
        exact_lam_sq=exact.sum(axis=1),
        mean_lam_4=m4,
        se_lam_4=se4,
        mean_lkj_lkl=mp,
        se_lkj_lkl=sep,
    )

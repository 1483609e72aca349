"""Maximum likelihood for canonical exponential-family regression in growing dimension.

The log-likelihood ``L_n(g) = sum_i (xi_i' g) y_i - psi(xi_i' g)`` is concave.
Besides the damped Newton solver this module computes the quantities of the
local approximation ``ghat = gamma + J_n^{-1/2} (W_n + r_n)``: the information
``J_n``, the standardized score ``W_n``, the remainder ``r_n``, and the
matrices ``A_n`` and ``B_n = E A_n`` used to bound ``ghat - gamma``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from .expfam import ExpFamilySpec


class MLEError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class DesignSet:
    xi: np.ndarray
    y: np.ndarray
    family: ExpFamilySpec
    gamma_true: Optional[np.ndarray] = None

    def __post_init__(self):
        xi = np.atleast_2d(np.asarray(self.xi, dtype=float))
        y = np.asarray(self.y, dtype=float)
        if y.shape != (xi.shape[0],):
            raise ValueError(f"{xi.shape[0]} design rows but {y.shape} responses")
        if not (np.all(np.isfinite(xi)) and np.all(np.isfinite(y))):
            raise ValueError("design and responses must be finite")
        if self.gamma_true is not None and np.shape(self.gamma_true) != (xi.shape[1],):
            raise ValueError("gamma_true has the wrong dimension")
        if xi.shape[0] <= xi.shape[1]:
            warnings.warn(f"n={xi.shape[0]} observations for {xi.shape[1]} parameters", stacklevel=2)
        object.__setattr__(self, "xi", xi)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.xi.shape[0]

    @property
    def dim(self) -> int:
        return self.xi.shape[1]


def loglik(d: DesignSet, g) -> float:
    lam = d.xi @ np.asarray(g, dtype=float)
    return float(np.sum(lam * d.y - d.family.psi(lam)))


def score(d: DesignSet, g) -> np.ndarray:
    lam = d.xi @ np.asarray(g, dtype=float)
    return d.xi.T @ (d.y - d.family.psi1(lam))


def information(d: DesignSet, g) -> np.ndarray:
    """``J(g) = sum_i xi_i xi_i' psi2(xi_i' g)`` (minus the Hessian of ``L_n``)."""
    lam = d.xi @ np.asarray(g, dtype=float)
    J = (d.xi.T * d.family.psi2(lam)) @ d.xi
    return 0.5 * (J + J.T)


@dataclass
class FitResult:
    ghat: np.ndarray
    converged: bool
    iterations: int
    grad_norm: float
    tol_used: float
    notes: list = field(default_factory=list)


def _gradient_floor(d: DesignSet, lam: np.ndarray) -> float:
    # scale at which the score is dominated by rounding in its own summation
    scale = np.abs(d.xi).T @ (np.abs(d.y) + np.abs(d.family.psi1(lam)))
    return float(64 * np.finfo(float).eps * np.max(scale))


def fit_mle(
    d: DesignSet,
    tol: float = 1e-10,
    max_iter: int = 100,
    ridge: float = 1e-12,
    overflow_guard: float = 500.0,
    start=None,
    min_step: float = 1e-12,
    guard_patience: int = 10,
) -> FitResult:
    """Maximize ``L_n`` by Newton's method with step halving.

    Stops when ``||score||_inf <= tol`` (or below the rounding floor of the
    score when ``tol`` is unattainable in floating point) or after
    ``max_iter`` iterations; ``converged`` records which.  A step is halved
    while it lowers ``L_n`` or pushes some ``|xi_i' g|`` above
    ``overflow_guard``; if the guard cuts the step on ``guard_patience``
    consecutive iterations the iterates are taken to diverge and
    ``MLEError`` names the offending row.
    """
    g = np.zeros(d.dim) if start is None else np.array(start, dtype=float)
    lam = d.xi @ g
    bad = np.flatnonzero(np.abs(lam) > overflow_guard)
    if bad.size:
        raise MLEError(f"start point gives |xi_{bad[0]}' g| = {abs(lam[bad[0]]):.4g} above the overflow guard")
    notes = []
    L = float(np.sum(lam * d.y - d.family.psi(lam)))
    grad = d.xi.T @ (d.y - d.family.psi1(lam))
    tol_used = max(tol, _gradient_floor(d, lam))
    it = 0
    pinned = 0  # consecutive iterations on which the overflow guard shortened the step
    while np.max(np.abs(grad)) > tol_used and it < max_iter:
        it += 1
        J = (d.xi.T * d.family.psi2(lam)) @ d.xi
        J = 0.5 * (J + J.T)
        try:
            chol = np.linalg.cholesky(J)
        except np.linalg.LinAlgError:
            bump = ridge * max(np.trace(J), 1e-300) / d.dim
            notes.append(f"iteration {it}: singular information, ridge {bump:.3g} added")
            chol = np.linalg.cholesky(J + bump * np.eye(d.dim))
        step = np.linalg.solve(chol.T, np.linalg.solve(chol, grad))
        t = 1.0
        accepted = False
        guard_row = None
        while t >= min_step:
            g_new = g + t * step
            lam_new = d.xi @ g_new
            over = np.flatnonzero(np.abs(lam_new) > overflow_guard)
            if over.size:
                guard_row = int(over[0])
                t *= 0.5
                continue
            terms = lam_new * d.y - d.family.psi(lam_new)
            L_new = float(np.sum(terms))
            # ascent below the rounding error of L_n is not a reliable signal
            slack = 64 * np.finfo(float).eps * float(np.sum(np.abs(terms)))
            if L_new >= L - slack:
                accepted = True
                break
            t *= 0.5
        if not accepted:
            if guard_row is not None and t < min_step:
                raise MLEError(f"Newton iterates diverge: row {guard_row} keeps |xi' g| above {overflow_guard}")
            # no ascent possible at machine precision: we are at the maximum numerically
            notes.append(f"iteration {it}: line search stalled")
            break
        pinned = pinned + 1 if guard_row is not None else 0
        if pinned >= guard_patience:
            raise MLEError(
                f"Newton iterates diverge: row {guard_row} pushes |xi' g| past {overflow_guard} "
                f"on {pinned} consecutive iterations (is the likelihood maximized at infinity?)"
            )
        g, lam, L = g_new, lam_new, L_new
        grad = d.xi.T @ (d.y - d.family.psi1(lam))
        tol_used = max(tol, _gradient_floor(d, lam))
    gnorm = float(np.max(np.abs(grad)))
    return FitResult(g, gnorm <= tol_used, it, gnorm, tol_used, notes)


# ---------------------------------------------------------------------------
# Local approximation diagnostics
# ---------------------------------------------------------------------------


def sym_sqrt(J: np.ndarray, inverse: bool = False) -> np.ndarray:
    """Symmetric square root (or inverse square root) of a positive definite matrix."""
    w, V = np.linalg.eigh(0.5 * (J + J.T))
    if w[0] <= 0:
        raise MLEError(f"matrix is not positive definite (smallest eigenvalue {w[0]:.3g})")
    p = -0.5 if inverse else 0.5
    return (V * w**p) @ V.T


@dataclass
class MleDiagnostics:
    J_n: np.ndarray
    W_n: np.ndarray
    r_n: np.ndarray
    M_n: float
    J_inv_sqrt: np.ndarray = field(repr=False)

    @property
    def dim(self) -> int:
        return self.W_n.size

    def local_approx_check(self, G1: float, eps1: float = 0.5, eps2: float = 0.1) -> dict:
        """Precondition, event and conclusion of the local approximation bound.

        precondition: ``M_n <= eps1 eps2 / (2 G(1) (N+1))``;
        event: ``|W_n| <= sqrt((N+1)/eps2)``; conclusion: ``|r_n| <= eps1``.
        """
        Np = self.dim
        pre_bound = eps1 * eps2 / (2.0 * G1 * Np)
        return {
            "M_n": self.M_n,
            "precondition_bound": pre_bound,
            "precondition": bool(self.M_n <= pre_bound),
            "event": bool(np.linalg.norm(self.W_n) <= np.sqrt(Np / eps2)),
            "r_norm": float(np.linalg.norm(self.r_n)),
            "conclusion": bool(np.linalg.norm(self.r_n) <= eps1),
        }


def mle_diagnostics(d: DesignSet, gamma, fit: FitResult) -> MleDiagnostics:
    gamma = np.asarray(gamma, dtype=float)
    lam = d.xi @ gamma
    J = information(d, gamma)
    Jis = sym_sqrt(J, inverse=True)
    Js = sym_sqrt(J)
    w = d.xi @ Jis  # row i is w_i' (J^{-1/2} is symmetric)
    W = w.T @ (d.y - d.family.psi1(lam))
    r = Js @ (fit.ghat - gamma) - W
    M = float(np.max(np.linalg.norm(w, axis=1)))
    return MleDiagnostics(J, W, r, M, Jis)


# ---------------------------------------------------------------------------
# A_n and its expectation B_n
# ---------------------------------------------------------------------------

_GH_NODES, _GH_WEIGHTS = np.polynomial.hermite_e.hermegauss(64)
_GH_WEIGHTS = _GH_WEIGHTS / np.sqrt(2.0 * np.pi)


def gaussian_moments(family: ExpFamilySpec, abar: float, kappa: float) -> tuple[float, float, float]:
    """``r_j = E eta^j psi2(abar + kappa eta)`` for ``j = 0, 1, 2``, ``eta ~ N(0, 1)``, by Gauss-Hermite."""
    lam = abar + kappa * _GH_NODES
    family.check_lambda(lam, "quadrature node")
    with np.errstate(over="raise", invalid="raise"):
        try:
            v = family.psi2(lam)
        except FloatingPointError as exc:
            raise MLEError(f"overflow in quadrature for {family.name}") from exc
    return tuple(float(np.sum(_GH_WEIGHTS * _GH_NODES**j * v)) for j in range(3))


class AnBn(NamedTuple):
    A_n: np.ndarray
    B_n: np.ndarray
    r: tuple
    abar: float
    kappa: float


def an_bn_matrices(d: DesignSet, D, gamma, family: Optional[ExpFamilySpec] = None) -> AnBn:
    """``A_n = n^-1 sum eta_i eta_i' psi2(lambda_i)`` with ``eta_i = D^-1 xi_i`` and ``B_n = E A_n``.

    ``B_n`` assumes ``eta_i = (1, eta_i1, ..., eta_iN)`` with iid standard
    normal coordinates, so ``lambda = abar + kappa * (u' eta)`` for a unit
    vector ``u``.  In the frame where ``u`` is the first coordinate direction
    ``B_n = diag(F, r0 I)`` with ``F = [[r0, r1], [r1, r2]]``; it is returned
    here rotated back to the coordinates of ``eta``.
    """
    family = d.family if family is None else family
    Dv = np.diag(D) if np.ndim(D) == 2 else np.asarray(D, dtype=float)
    if np.any(Dv == 0):
        raise ValueError("D must be nonsingular")
    gamma = np.asarray(gamma, dtype=float)
    eta = d.xi / Dv
    lam = d.xi @ gamma
    A = (eta.T * family.psi2(lam)) @ eta / d.n
    A = 0.5 * (A + A.T)

    c = gamma * Dv  # lambda = c' eta
    abar = float(c[0])
    kappa = float(np.linalg.norm(c[1:]))
    r0, r1, r2 = gaussian_moments(family, abar, kappa)
    p = d.dim
    B = np.zeros((p, p))
    B[0, 0] = r0
    if p > 1:
        u = c[1:] / kappa if kappa > 0 else np.eye(p - 1)[0]
        B[0, 1:] = B[1:, 0] = r1 * u
        B[1:, 1:] = r0 * np.eye(p - 1) + (r2 - r0) * np.outer(u, u)
    return AnBn(A, B, (r0, r1, r2), abar, kappa)


def coordinate_kappas(N: int, m: int) -> np.ndarray:
    """``kappa_j = e_j`` for ``1 <= j <= m`` and zero otherwise (rows of an ``(N+1, N+1)`` array).

    Selects the slope coefficients kept by the estimator; the intercept is
    excluded.
    """
    K = np.zeros((N + 1, N + 1))
    for j in range(1, m + 1):
        K[j, j] = 1.0
    return K


@dataclass
class AnBnCheck:
    lhs: float
    rhs: float
    holds: bool
    assumption_A: bool
    max_eta_ok: bool
    norm_A_minus_B: float
    norm_B_inv: float
    max_eta: float
    max_eta_bound: float


def anbn_error_check(d: DesignSet, D, gamma, fit: FitResult, kappa_set, eps: float) -> AnBnCheck:
    """Both sides of ``sum_j |kappa_j'(ghat - gamma)|^2 <= 6 ||B^-1|| / (n eps) sum_j |D^-1 kappa_j|^2``.

    The two preconditions (``||A - B|| <= 1 / (2 ||B^-1||)`` and the bound on
    ``max_i |eta_i|``) are reported, not enforced.
    """
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    Dv = np.diag(D) if np.ndim(D) == 2 else np.asarray(D, dtype=float)
    ab = an_bn_matrices(d, Dv, gamma)
    kap = np.atleast_2d(np.asarray(kappa_set, dtype=float))
    err = fit.ghat - np.asarray(gamma, dtype=float)
    lhs = float(np.sum((kap @ err) ** 2))
    B_inv_norm = float(np.linalg.norm(np.linalg.inv(ab.B_n), 2))
    rhs = 6.0 * B_inv_norm / (d.n * eps) * float(np.sum((kap / Dv) ** 2))
    gap = float(np.linalg.norm(ab.A_n - ab.B_n, 2))
    eta = d.xi / Dv
    max_eta = float(np.max(np.linalg.norm(eta, axis=1)))
    G1 = float(d.family.G(1.0))
    eta_bound = eps * np.sqrt(d.n) / d.dim / (G1 * np.sqrt(32.0 * B_inv_norm))
    return AnBnCheck(
        lhs=lhs,
        rhs=rhs,
        holds=lhs <= rhs,
        assumption_A=gap <= 1.0 / (2.0 * B_inv_norm),
        max_eta_ok=max_eta <= eta_bound,
        norm_A_minus_B=gap,
        norm_B_inv=B_inv_norm,
        max_eta=max_eta,
        max_eta_bound=float(eta_bound),
    )

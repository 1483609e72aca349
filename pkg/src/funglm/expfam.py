"""One-parameter exponential families in canonical form.

A family ``{Q_lam}`` has densities ``exp(lam * y - psi(lam))`` with respect to
a base measure.  ``psi1`` is the mean, ``psi2`` the variance and ``psi3`` the
third cumulant.  ``G`` is a growth function with
``|psi3(lam + h)| <= psi2(lam) * G(|h|)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, NamedTuple, Optional

import numpy as np
from scipy.special import expit


class FamilyOverflowError(ValueError):
    """Raised when a canonical parameter is outside the family's safe range."""


@dataclass(frozen=True)
class ExpFamilySpec:
    name: str
    psi: Callable[[np.ndarray], np.ndarray]
    psi1: Callable[[np.ndarray], np.ndarray]
    psi2: Callable[[np.ndarray], np.ndarray]
    psi3: Callable[[np.ndarray], np.ndarray]
    G: Callable[[np.ndarray], np.ndarray]
    sampler: Callable[[np.ndarray, np.random.Generator], np.ndarray]
    # |lam| beyond this makes psi (or its derivatives) overflow or lose all precision
    lam_max: float = np.inf
    # closed form of psi(lam) + psi(lam + d) - 2 psi(lam + d/2) free of cancellation, if known
    psi_gap: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None

    def gap(self, lam, delta) -> np.ndarray:
        """``psi(lam) + psi(lam + delta) - 2 psi(lam + delta/2)``."""
        if self.psi_gap is not None:
            return self.psi_gap(lam, delta)
        return self.psi(lam) + self.psi(lam + delta) - 2.0 * self.psi(lam + 0.5 * delta)

    def check_lambda(self, lam, what: str = "lambda") -> np.ndarray:
        lam = np.asarray(lam, dtype=float)
        if not np.all(np.isfinite(lam)):
            raise FamilyOverflowError(f"{self.name}: non-finite {what}")
        bad = np.abs(lam) > self.lam_max
        if np.any(bad):
            idx = np.flatnonzero(np.atleast_1d(bad))[0]
            val = np.atleast_1d(lam)[idx]
            raise FamilyOverflowError(
                f"{self.name}: {what}[{idx}] = {val:.6g} exceeds the overflow guard |lambda| <= {self.lam_max}"
            )
        return lam

    def sample(self, lam, rng: np.random.Generator) -> np.ndarray:
        lam = self.check_lambda(lam)
        return self.sampler(lam, rng)

    def __repr__(self) -> str:
        return f"ExpFamilySpec({self.name!r})"


def _gaussian() -> ExpFamilySpec:
    return ExpFamilySpec(
        name="gaussian",
        psi=lambda lam: 0.5 * np.square(lam),
        psi1=lambda lam: np.asarray(lam, dtype=float) * 1.0,
        psi2=lambda lam: np.ones_like(np.asarray(lam, dtype=float)),
        psi3=lambda lam: np.zeros_like(np.asarray(lam, dtype=float)),
        G=lambda h: np.ones_like(np.asarray(h, dtype=float)),
        sampler=lambda lam, rng: lam + rng.standard_normal(np.shape(lam)),
        lam_max=1e150,
        psi_gap=lambda lam, d: 0.25 * np.square(d) + 0.0 * lam,
    )


# numpy's Poisson sampler rejects means above ~9.2e18
_POISSON_SAMPLE_MAX = float(np.log(1e18))


def _poisson_sampler(lam, rng):
    if np.any(lam > _POISSON_SAMPLE_MAX):
        raise FamilyOverflowError(f"poisson: mean exp({np.max(lam):.3g}) too large to sample")
    return rng.poisson(np.exp(lam)).astype(float)


def _poisson() -> ExpFamilySpec:
    return ExpFamilySpec(
        name="poisson",
        psi=np.exp,
        psi1=np.exp,
        psi2=np.exp,
        psi3=np.exp,
        G=np.exp,
        sampler=_poisson_sampler,
        lam_max=700.0,
        psi_gap=lambda lam, d: np.exp(lam) * np.square(np.expm1(0.5 * np.asarray(d, dtype=float))),
    )


def _bernoulli_var(lam):
    # p(1-p) written to avoid cancellation when p is near 1
    return expit(lam) * expit(-np.asarray(lam, dtype=float))


def _bernoulli_gap(lam, d):
    # log[(1 + e^lam)(1 + e^(lam+d)) / (1 + e^(lam+d/2))^2] = log1p(4 sinh^2(d/4) p(1-p)) at lam + d/2
    d = np.asarray(d, dtype=float)
    return np.log1p(4.0 * np.square(np.sinh(0.25 * d)) * _bernoulli_var(lam + 0.5 * d))


def _bernoulli() -> ExpFamilySpec:
    return ExpFamilySpec(
        name="bernoulli",
        psi=lambda lam: np.logaddexp(0.0, lam),
        psi1=expit,
        psi2=_bernoulli_var,
        psi3=lambda lam: -_bernoulli_var(lam) * np.tanh(0.5 * np.asarray(lam, dtype=float)),
        G=np.exp,
        sampler=lambda lam, rng: (rng.random(np.shape(lam)) < expit(lam)).astype(float),
        lam_max=700.0,
        psi_gap=_bernoulli_gap,
    )


_BUILTINS = {"gaussian": _gaussian, "poisson": _poisson, "bernoulli": _bernoulli}

FAMILY_NAMES = tuple(_BUILTINS)


def builtin_family(name: str) -> ExpFamilySpec:
    """Return one of the built-in families: ``gaussian``, ``poisson`` or ``bernoulli``."""
    try:
        return _BUILTINS[name]()
    except KeyError:
        raise ValueError(f"unknown family {name!r}; expected one of {sorted(_BUILTINS)}") from None


# ---------------------------------------------------------------------------
# Hellinger distances
# ---------------------------------------------------------------------------


class HellingerReport(NamedTuple):
    h2_exact: np.ndarray
    h2_psi_bound: np.ndarray
    h2_model_bound: np.ndarray


def hellinger_report(family: ExpFamilySpec, lam, delta) -> HellingerReport:
    """Squared Hellinger distance between ``Q_lam`` and ``Q_{lam+delta}`` and two upper bounds.

    The exact value uses the cumulant closed form
    ``h^2 = 2 - 2 exp(psi(lam + delta/2) - psi(lam)/2 - psi(lam + delta)/2)``.
    The first bound is ``psi(lam) + psi(lam + delta) - 2 psi(lam + delta/2)``,
    the second ``delta^2 psi2(lam) (1 + |delta|) G(|delta|)``.

    Accepts scalars or broadcastable arrays.
    """
    lam = np.asarray(lam, dtype=float)
    delta = np.asarray(delta, dtype=float)
    family.check_lambda(lam)
    family.check_lambda(lam + delta, "lambda + delta")
    with np.errstate(over="raise", invalid="raise"):
        try:
            gap = family.gap(lam, delta)
            h2 = -2.0 * np.expm1(-0.5 * np.maximum(gap, 0.0))
            ad = np.abs(delta)
            model = np.square(delta) * family.psi2(lam) * (1.0 + ad) * family.G(ad)
        except FloatingPointError as exc:
            raise FamilyOverflowError(f"{family.name}: overflow evaluating psi ({exc})") from exc
    return HellingerReport(h2, gap, model)


def hellinger_quadrature(family: ExpFamilySpec, lam: float, delta: float) -> float:
    """Squared Hellinger distance by direct integration of ``(sqrt p - sqrt q)^2``.

    Only implemented for the Gaussian family (Lebesgue base measure); used as an
    oracle for the closed form.
    """
    if family.name != "gaussian":
        raise NotImplementedError("quadrature oracle is only available for the gaussian family")
    from scipy import integrate

    mu0, mu1 = float(lam), float(lam + delta)

    def integrand(y):
        p = np.exp(-0.5 * (y - mu0) ** 2) / np.sqrt(2 * np.pi)
        q = np.exp(-0.5 * (y - mu1) ** 2) / np.sqrt(2 * np.pi)
        return (np.sqrt(p) - np.sqrt(q)) ** 2

    val, _ = integrate.quad(integrand, -np.inf, np.inf, epsabs=1e-14, epsrel=1e-12)
    return float(val)


# ---------------------------------------------------------------------------
# Assumption checks on lattices
# ---------------------------------------------------------------------------

LAMBDA_LATTICE = np.arange(-30.0, 30.0 + 1e-9, 0.25)
SHIFT_LATTICE = np.arange(0.0, 3.0 + 1e-9, 0.05)


def third_cumulant_ratio(family: ExpFamilySpec, lam_grid=LAMBDA_LATTICE, h_grid=SHIFT_LATTICE) -> float:
    """Largest ``|psi3(lam + h)| / (psi2(lam) G(|h|))`` over the lattice, shifts of both signs.

    The growth assumption on the third cumulant holds on the lattice iff this is ``<= 1``.
    """
    lam = np.asarray(lam_grid, dtype=float)[:, None]
    h = np.concatenate([-np.asarray(h_grid)[::-1], np.asarray(h_grid)])[None, :]
    num = np.abs(family.psi3(lam + h))
    den = family.psi2(lam) * family.G(np.abs(h))
    return float(np.max(num / den))


def variance_growth_constant(family: ExpFamilySpec, eps: float, lam_grid=LAMBDA_LATTICE) -> float:
    """Smallest ``C`` with ``psi2(lam) <= C exp(eps lam^2)`` on the lattice."""
    lam = np.asarray(lam_grid, dtype=float)
    return float(np.max(np.exp(np.log(family.psi2(lam)) - eps * lam**2)))


class SamplerMomentCheck(NamedTuple):
    mean: float
    mean_stderr: float
    var: float
    var_stderr: float
    mean_z: float
    var_z: float


def sampler_moment_check(family: ExpFamilySpec, lam: float, size: int, rng: np.random.Generator) -> SamplerMomentCheck:
    """Compare the sampler's empirical mean and variance with ``psi1`` and ``psi2``.

    Returns the estimates, their Monte Carlo standard errors and z-scores
    against the cumulant values.
    """
    y = family.sample(np.full(size, float(lam)), rng)
    mean = float(np.mean(y))
    dev2 = (y - mean) ** 2
    var = float(np.sum(dev2) / (size - 1))
    mean_se = float(np.sqrt(var / size))
    var_se = float(np.std(dev2, ddof=1) / np.sqrt(size))
    mu, v = float(family.psi1(lam)), float(family.psi2(lam))
    return SamplerMomentCheck(
        mean, mean_se, var, var_se, (mean - mu) / max(mean_se, 1e-300), (var - v) / max(var_se, 1e-300)
    )

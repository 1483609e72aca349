"""Hypercube construction for the minimax lower bound.

Slopes ``B_gamma = eps * sum_{j in J} gamma_j beta_j phi_j`` with
``J = {m+1, ..., 2m}``, ``beta_j = R j^-beta`` and ``gamma in {0, 1}^J``
(intercept zero, mean zero).  Flipping coordinate ``j`` moves each canonical
parameter by ``eps beta_j z_ij``; the squared Hellinger distance between the
two product laws, summed over observations, controls the affinity between
neighbouring hypotheses.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .estimator import minimax_rate, schedule
from .expfam import ExpFamilySpec, hellinger_report
from .gp import GPModel, SampleSet


@dataclass(frozen=True, eq=False)
class HypercubeSpec:
    m: int
    eps: float
    beta: float
    R: float
    family: ExpFamilySpec
    gp: GPModel

    def __post_init__(self):
        if self.m < 1:
            raise ValueError("m must be positive")
        if self.eps < 0:
            raise ValueError("eps must be nonnegative")
        if 2 * self.m > self.gp.J_max:
            raise ValueError(f"J = {{m+1..2m}} needs 2m <= J_max = {self.gp.J_max}")
        if np.any(self.gp.mu.values != 0):
            raise ValueError("the hypercube is built for a mean-zero process")

    @classmethod
    def from_schedule(
        cls, n: int, family: ExpFamilySpec, gp: GPModel, beta: float, R: float, zeta=None
    ) -> "HypercubeSpec":
        """``m`` from the dimension schedule and ``eps`` with ``max_j n eps^2 beta_j^2 theta_j = 1``."""
        m, _ = schedule(n, gp.alpha, beta, zeta)
        j = np.arange(m + 1, 2 * m + 1)
        load = np.max(R**2 * j ** (-2.0 * beta) * gp.theta[j - 1])
        return cls(m, float(1.0 / np.sqrt(n * load)), float(beta), float(R), family, gp)

    @property
    def J(self) -> np.ndarray:
        """One-based indices ``m+1..2m``."""
        return np.arange(self.m + 1, 2 * self.m + 1)

    @property
    def beta_env(self) -> np.ndarray:
        return self.R * self.J.astype(float) ** (-self.beta)

    def scores(self, sample: SampleSet) -> np.ndarray:
        """``z_ij`` for ``j in J``, shape ``(n, m)``."""
        if sample.scores is not None:
            return sample.scores[:, self.J - 1]
        return sample.paths @ self.gp.basis.matrix[self.J - 1].T / sample.grid.T

    def lam(self, gamma, z: np.ndarray) -> np.ndarray:
        gamma = np.asarray(gamma, dtype=float)
        return self.eps * z @ (gamma * self.beta_env)


def flip_h2_sum(spec: HypercubeSpec, gamma, j: int, sample: SampleSet) -> float:
    """``sum_i h^2(Q_{lambda_i(gamma)}, Q_{lambda_i(gamma')})`` with ``gamma'`` equal to ``gamma`` but bit ``j`` flipped.

    ``j`` is one-based and must lie in ``m+1..2m``.
    """
    z = spec.scores(sample)
    return _flip_h2(spec, np.asarray(gamma, dtype=int), j, z)


def _flip_h2(spec: HypercubeSpec, gamma: np.ndarray, j: int, z: np.ndarray) -> float:
    if not spec.m + 1 <= j <= 2 * spec.m:
        raise ValueError(f"j={j} outside {spec.m + 1}..{2 * spec.m}")
    if gamma.shape != (spec.m,) or np.any((gamma != 0) & (gamma != 1)):
        raise ValueError(f"gamma must be a 0/1 vector of length {spec.m}")
    c = j - spec.m - 1
    lam = spec.lam(gamma, z)
    sign = 1.0 - 2.0 * gamma[c]  # +1 turns the bit on, -1 turns it off
    shift = sign * spec.eps * spec.beta_env[c] * z[:, c]
    return float(np.sum(hellinger_report(spec.family, lam, shift).h2_exact))


def affinity_lb(h2_sum):
    """``1 - min(sqrt(h2), sqrt(2))``, floored at zero."""
    h2 = np.asarray(h2_sum, dtype=float)
    return np.maximum(0.0, 1.0 - np.sqrt(np.minimum(h2, 2.0)))


@dataclass
class AffinityReport:
    gammas: np.ndarray  # (draws, m)
    h2: np.ndarray  # (draws, m), column c for j = m + 1 + c
    affinity: np.ndarray = field(init=False)

    def __post_init__(self):
        self.affinity = affinity_lb(self.h2)

    @property
    def min_affinity(self) -> float:
        return float(np.min(self.affinity))

    def rows(self, m: int) -> list[dict]:
        out = []
        for d in range(self.gammas.shape[0]):
            pattern = "".join(str(int(b)) for b in self.gammas[d])
            for c in range(m):
                out.append({"draw": d, "gamma": pattern, "j": m + 1 + c, "h2_sum": float(self.h2[d, c]),
                            "affinity_lb": float(self.affinity[d, c])})
        return out


def affinity_scan(
    spec: HypercubeSpec, sample: SampleSet, gamma_draws: int = 32, rng=None, enumerate_all: bool = False
) -> AffinityReport:
    """Affinity lower bounds for every flip ``j in J`` at random (or all) vertices ``gamma``.

    ``enumerate_all`` walks all ``2^m`` vertices and is only allowed for ``m <= 12``.
    """
    if enumerate_all:
        if spec.m > 12:
            raise ValueError("enumeration is limited to m <= 12")
        gammas = np.array(list(itertools.product((0, 1), repeat=spec.m)), dtype=int)
    else:
        if gamma_draws < 1:
            raise ValueError("gamma_draws must be positive")
        rng = np.random.default_rng(rng)
        gammas = rng.integers(0, 2, size=(gamma_draws, spec.m))
    z = spec.scores(sample)
    h2 = np.array([[_flip_h2(spec, g, j, z) for j in spec.J] for g in gammas])
    return AffinityReport(gammas, h2)


class AssouadBound(NamedTuple):
    bound: float
    rho_n: float
    ratio: float


def assouad_bound(spec: HypercubeSpec, report: AffinityReport, n: int) -> AssouadBound:
    """``eps^2 sum_{j in J} beta_j^2 / 8`` times the smallest affinity, with ``rho_n`` and their ratio.

    Each ``j`` contributes ``(eps beta_j / 2)^2`` to the loss of any estimator
    on half the vertices, hence the ``1/8``.
    """
    if report.gammas.shape[1] != spec.m:
        raise ValueError("report does not match the hypercube")
    bound = 0.125 * spec.eps**2 * float(np.sum(spec.beta_env**2)) * report.min_affinity
    rho = float(minimax_rate(n, spec.gp.alpha, spec.beta))
    return AssouadBound(bound, rho, bound / rho)

"""Experiment configuration: flat JSON keys, validated up front."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from .estimator import zeta_window
from .expfam import FAMILY_NAMES
from .gp import GPModel

EXPERIMENTS = (
    "rate-sweep",
    "verify-spectral",
    "verify-mle",
    "verify-hellinger",
    "verify-gaussian-tail",
    "lower-bound",
    "single-run",
)
ESTIMATORS = ("known", "unknown", "both")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    family: str = "gaussian"
    alpha: float = 2.0
    beta: float = 3.0
    R: float = 2.0
    a: float = 0.0
    zeta: Optional[float] = None
    T: int = 256
    J_max: Optional[int] = None
    n_list: tuple = (256, 512, 1024, 2048, 4096)
    reps: int = 50
    seed: int = 0
    # which estimator(s) a sweep runs
    mode: str = "known"
    out_csv: str = "results.csv"
    alternating: bool = False
    mu_coef: float = 0.0
    tol: float = 1e-10
    max_iter: int = 100
    ridge: float = 1e-12
    overflow_guard: float = 500.0
    m: Optional[int] = None
    eps_rule: str = "unit-load"
    gamma_draws: int = 32
    workers: int = 1

    def __post_init__(self):
        object.__setattr__(self, "n_list", tuple(int(n) for n in self.n_list))
        self.validate()

    def validate(self):
        if self.family not in FAMILY_NAMES:
            raise ConfigError(f"family must be one of {FAMILY_NAMES}, got {self.family!r}")
        if not self.alpha > 1:
            raise ConfigError(f"alpha > 1 required, got alpha={self.alpha}")
        if not self.beta > (self.alpha + 3) / 2:
            raise ConfigError(f"beta > (alpha+3)/2 = {(self.alpha + 3) / 2} required, got beta={self.beta}")
        lo, hi = zeta_window(self.alpha, self.beta)
        if self.zeta is not None and not lo < self.zeta < hi:
            raise ConfigError(f"zeta={self.zeta} outside the admissible interval ({lo:.6g}, {hi:.6g})")
        if self.R <= 0:
            raise ConfigError("R must be positive")
        if abs(self.a) > self.R:
            raise ConfigError(f"|a| <= R required, got a={self.a}, R={self.R}")
        if self.mode not in ESTIMATORS:
            raise ConfigError(f"mode must be one of {ESTIMATORS}, got {self.mode!r}")
        if not self.n_list or min(self.n_list) < 3:
            raise ConfigError("n_list must be a nonempty list of sample sizes >= 3")
        if len(set(self.n_list)) != len(self.n_list):
            raise ConfigError("n_list has repeated sample sizes")
        if self.reps < 1:
            raise ConfigError("reps must be positive")
        if self.seed < 0:
            raise ConfigError("seed must be nonnegative")
        if self.workers < 1:
            raise ConfigError("workers must be positive")
        if self.gamma_draws < 1:
            raise ConfigError("gamma_draws must be positive")
        if self.m is not None and self.m < 1:
            raise ConfigError("m must be positive")
        if self.eps_rule != "unit-load":
            raise ConfigError(f"eps_rule must be 'unit-load', got {self.eps_rule!r}")
        if not (self.tol > 0 and self.max_iter >= 1 and self.ridge >= 0 and self.overflow_guard > 0):
            raise ConfigError("tol, max_iter, ridge and overflow_guard must be positive")
        try:
            GPModel.power_law(self.alpha, self.R, T=self.T, J_max=self.J_max)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def keys(cls) -> list[str]:
        return [f.name for f in dataclasses.fields(cls)]

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        unknown = sorted(set(d) - set(cls.keys()))
        if unknown:
            raise ConfigError(f"unknown config keys: {unknown}")
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            d = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
        if not isinstance(d, dict):
            raise ConfigError(f"{path}: expected a JSON object")
        return cls.from_dict(d)

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in self.keys()}
        d["n_list"] = list(self.n_list)
        return d

    @property
    def fit_options(self) -> dict:
        return {"tol": self.tol, "max_iter": self.max_iter, "ridge": self.ridge, "overflow_guard": self.overflow_guard}

"""
Synthetic label/prediction streams.

Every replication owns a generator seeded with ``(base_seed, rep)`` and draws
its whole stream from it, so a replication gives the same data whether it
runs alone, in a block or on another worker.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Optional, Sequence, Union

import numpy as np

from anytime_ppi.utils.errors import ConfigError
from anytime_ppi.utils.utils import StrEnum

SeedLike = Union[int, Sequence[int]]


class ScenarioKind(StrEnum):
    NOISY = "noisy"
    BIASED = "biased"
    GAUSSIAN = "gaussian"


@dataclass
class LabelledStream:
    labels: np.ndarray
    predictions: np.ndarray
    pool: np.ndarray
    theta_star: float
    lambda_star: Optional[float] = None
    population_mean_f: Optional[float] = None
    sigma: Optional[float] = None


def make_rng(rep_seed: SeedLike) -> np.random.Generator:
    return np.random.default_rng(rep_seed)


def student_t(rng: np.random.Generator, dof: float, size) -> np.ndarray:
    """Student-t draws as a standard normal over sqrt(chi2_dof / dof)."""
    z = rng.standard_normal(size)
    if math.isinf(dof):
        return z
    return z / np.sqrt(rng.chisquare(dof, size) / dof)


def gen_noisy(
    rep_seed: SeedLike, sigma_y: float, n_max: int, n_unlabelled: int = 0
) -> LabelledStream:
    """Y ~ N(0, 1) and f = Y + N(0, sigma_y^2)."""
    if sigma_y < 0:
        raise ConfigError(f"sigma_y must be >= 0, got {sigma_y}")
    rng = make_rng(rep_seed)
    labels = rng.standard_normal(n_max)
    predictions = labels + sigma_y * rng.standard_normal(n_max)
    pool_labels = rng.standard_normal(n_unlabelled)
    pool = pool_labels + sigma_y * rng.standard_normal(n_unlabelled)
    return LabelledStream(
        labels=labels,
        predictions=predictions,
        pool=pool,
        theta_star=0.0,
        lambda_star=1 / (1 + sigma_y**2),
        population_mean_f=0.0,
    )


def gen_biased(
    rep_seed: SeedLike,
    upsilon: float,
    dof: float,
    n_max: int,
    noise_scale: float = 10.0,
    n_unlabelled: int = 0,
) -> LabelledStream:
    """X ~ N(0, 1), Y = X + noise_scale * t_dof and the shifted predictor f = X + upsilon."""
    if not dof > 2:
        raise ConfigError(f"biased scenario needs dof > 2 for a finite variance, got {dof}")
    if not noise_scale > 0:
        raise ConfigError(f"noise_scale must be > 0, got {noise_scale}")
    rng = make_rng(rep_seed)
    x = rng.standard_normal(n_max)
    labels = x + noise_scale * student_t(rng, dof, n_max)
    pool = rng.standard_normal(n_unlabelled) + upsilon
    return LabelledStream(
        labels=labels,
        predictions=x + upsilon,
        pool=pool,
        theta_star=0.0,
        lambda_star=1.0,
        population_mean_f=float(upsilon),
    )


def gen_gaussian(rep_seed: SeedLike, mean: float, sigma: float, n_max: int) -> LabelledStream:
    """I.i.d. N(mean, sigma^2) labels with the standard deviation known."""
    if not sigma > 0:
        raise ConfigError(f"sigma must be > 0, got {sigma}")
    rng = make_rng(rep_seed)
    labels = mean + sigma * rng.standard_normal(n_max)
    return LabelledStream(
        labels=labels,
        predictions=labels.copy(),
        pool=np.empty(0),
        theta_star=float(mean),
        sigma=float(sigma),
    )


@dataclass
class Scenario:
    kind: ScenarioKind
    sigma_y: float = 0.1
    upsilon: float = 0.0
    dof: float = math.inf
    noise_scale: float = 10.0
    mean: float = 0.0
    sigma: float = 1.0
    n_max: int = 1000
    reps: int = 100
    base_seed: int = 0
    start_n: int = 40
    n_unlabelled: int = 0

    def __post_init__(self):
        try:
            self.kind = ScenarioKind(self.kind)
        except ValueError as e:
            raise ConfigError(f"Unknown scenario '{self.kind}'") from e
        self.dof = float(self.dof)
        if self.n_max < self.start_n:
            raise ConfigError(f"n_max={self.n_max} must be >= start_n={self.start_n}")
        if self.reps < 1:
            raise ConfigError(f"reps must be >= 1, got {self.reps}")
        if self.n_unlabelled < 0:
            raise ConfigError(f"n_unlabelled must be >= 0, got {self.n_unlabelled}")
        if self.kind == ScenarioKind.NOISY and self.sigma_y < 0:
            raise ConfigError(f"sigma_y must be >= 0, got {self.sigma_y}")
        if self.kind == ScenarioKind.BIASED and not self.dof > 2:
            raise ConfigError(f"biased scenario needs dof > 2, got {self.dof}")
        if self.kind == ScenarioKind.GAUSSIAN and not self.sigma > 0:
            raise ConfigError(f"sigma must be > 0, got {self.sigma}")

    @property
    def label(self) -> str:
        if self.kind == ScenarioKind.NOISY:
            return f"noisy(sigma_y={self.sigma_y:g})"
        if self.kind == ScenarioKind.BIASED:
            return f"biased(upsilon={self.upsilon:g},df={self.dof:g})"
        return f"gaussian(mean={self.mean:g},sigma={self.sigma:g})"

    def rep_seed(self, rep: int):
        return (self.base_seed, rep)

    def generate(self, rep: int) -> LabelledStream:
        seed = self.rep_seed(rep)
        if self.kind == ScenarioKind.NOISY:
            return gen_noisy(seed, self.sigma_y, self.n_max, self.n_unlabelled)
        if self.kind == ScenarioKind.BIASED:
            return gen_biased(
                seed, self.upsilon, self.dof, self.n_max, self.noise_scale, self.n_unlabelled
            )
        return gen_gaussian(seed, self.mean, self.sigma, self.n_max)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["kind"] = str(self.kind)
        return d

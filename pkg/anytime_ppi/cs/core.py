from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Optional, Union

import numpy as np
from scipy import special

from anytime_ppi.cs.priors import Prior
from anytime_ppi.cs.quadrature import log_eta
from anytime_ppi.utils.errors import ConfigError, DegenerateScaleError

Array = Union[float, np.ndarray]


def _check_alpha(alpha, name="alpha"):
    if not np.all((np.asarray(alpha) > 0) & (np.asarray(alpha) < 1)):
        raise ConfigError(f"{name} must lie in (0, 1), got {alpha}")


def _check_t(t):
    if not np.all(np.asarray(t) >= 1):
        raise ConfigError(f"time index must be >= 1, got {t}")


@dataclass
class Interval:
    center: Array
    radius: Array
    level: float
    t: int

    def __post_init__(self):
        radius = np.asarray(self.radius, dtype=float)
        if not np.all(np.isfinite(radius) & (radius >= 0)):
            raise ValueError(f"radius must be finite and >= 0, got {self.radius}")

    @property
    def lower(self) -> Array:
        return self.center - self.radius

    @property
    def upper(self) -> Array:
        return self.center + self.radius

    @property
    def width(self) -> Array:
        return 2 * self.radius

    @property
    def volume(self) -> Array:
        return self.width

    def contains(self, x) -> Union[bool, np.ndarray]:
        return (self.lower <= x) & (x <= self.upper)


@dataclass
class CsConfig:
    """
    Settings of a confidence sequence.

    ``delta`` is the share of ``alpha`` spent on the sequence for the mean of
    the unlabelled subgradients, the rest (kappa) goes to the rectifier. When
    the population mean of the predictions is known (``population_mean_f``) or
    the unlabelled pool is declared infinite (``assume_infinite_unlabelled``)
    that sequence has radius zero and kappa = alpha.

    ``pool_t_star`` is the pool size at which the mixing parameter of the
    unlabelled sequence is tuned; None tunes it at the current pool size,
    which is fixed for a static pool.
    """

    alpha: float = 0.1
    delta: Optional[float] = None
    rho: Optional[float] = None
    prior: Optional[Prior] = None
    t_star: int = 100
    start_n: int = 40
    population_mean_f: Optional[float] = None
    assume_infinite_unlabelled: bool = False
    pool_t_star: Optional[int] = None

    def __post_init__(self):
        _check_alpha(self.alpha)
        if self.delta is not None and not (0 <= self.delta < self.alpha):
            raise ConfigError(f"delta must lie in [0, alpha={self.alpha}), got {self.delta}")
        if self.rho is not None and not (self.rho > 0 and math.isfinite(self.rho)):
            raise ConfigError(f"rho must be > 0, got {self.rho}")
        if int(self.t_star) != self.t_star or self.t_star < 1:
            raise ConfigError(f"t_star must be a positive integer, got {self.t_star}")
        if int(self.start_n) != self.start_n or self.start_n < 1:
            raise ConfigError(f"start_n must be a positive integer, got {self.start_n}")
        if self.population_mean_f is not None and not math.isfinite(self.population_mean_f):
            raise ConfigError(f"population_mean_f must be finite, got {self.population_mean_f}")
        if self.pool_t_star is not None:
            if int(self.pool_t_star) != self.pool_t_star or self.pool_t_star < 1:
                raise ConfigError(f"pool_t_star must be a positive integer, got {self.pool_t_star}")
            self.pool_t_star = int(self.pool_t_star)
        self.t_star = int(self.t_star)
        self.start_n = int(self.start_n)

    @property
    def known_population(self) -> bool:
        return self.population_mean_f is not None or self.assume_infinite_unlabelled

    @property
    def effective_delta(self) -> float:
        if self.known_population:
            return 0.0
        return self.alpha / 10 if self.delta is None else self.delta

    @property
    def kappa(self) -> float:
        return self.alpha - self.effective_delta

    @property
    def effective_rho(self) -> float:
        return self.rho if self.rho is not None else rho_opt(self.t_star, self.alpha)

    def pool_rho(self, N: int) -> float:
        """Mixing parameter of the unlabelled sequence at pool size N."""
        return rho_opt(self.pool_t_star or int(N), self.effective_delta)

    @property
    def level(self) -> float:
        return 1 - self.alpha

    def to_dict(self) -> dict:
        d = asdict(self)
        d["prior"] = None if self.prior is None else {
            k: (str(v) if k == "kind" else v) for k, v in asdict(self.prior).items()
        }
        d["effective_delta"] = self.effective_delta
        d["effective_rho"] = self.effective_rho
        return d


def radius_na(t, sigma_hat, rho, alpha) -> Array:
    """
    Radius of the asymptotic confidence sequence without prior,
    sigma / sqrt(t) * sqrt((1 + 1 / (t rho^2)) * log((t rho^2 + 1) / alpha^2)).
    """
    _check_alpha(alpha)
    _check_t(t)
    if not np.all(np.asarray(rho) > 0):
        raise ConfigError(f"rho must be > 0, got {rho}")
    if not np.all(np.asarray(sigma_hat) >= 0):
        raise ConfigError(f"sigma_hat must be >= 0, got {sigma_hat}")
    t = np.asarray(t, dtype=float) if np.ndim(t) else float(t)
    x = t * rho**2
    return sigma_hat / np.sqrt(t) * np.sqrt((1 + 1 / x) * np.log((x + 1) / alpha**2))


def radius_ba(t, mean_hat, sigma_hat, prior: Prior, alpha) -> Array:
    """
    Radius of the prior-assisted confidence sequence,
    sigma / sqrt(t) * sqrt(log(t / (2 pi alpha^2)) - 2 log eta_t(mean / sigma)).
    """
    _check_alpha(alpha)
    _check_t(t)
    if not np.all(np.asarray(sigma_hat) > 0):
        raise DegenerateScaleError(f"prior-assisted radius needs sigma_hat > 0, got {sigma_hat}")
    t = np.asarray(t, dtype=float) if np.ndim(t) else float(t)
    z = mean_hat / sigma_hat
    radicand = np.log(t / (2 * math.pi * alpha**2)) - 2 * log_eta(z, t, prior)
    return sigma_hat / np.sqrt(t) * np.sqrt(np.maximum(radicand, 0.0))


def radius_improper(t, sigma_hat, alpha) -> Array:
    """Parameter-free radius sigma / sqrt(t) * sqrt(log(t / alpha^2))."""
    _check_alpha(alpha)
    _check_t(t)
    t = np.asarray(t, dtype=float) if np.ndim(t) else float(t)
    return sigma_hat / np.sqrt(t) * np.sqrt(np.log(t / alpha**2))


def radius_exact_gaussian(t, mean, sigma, prior: Prior, alpha) -> Array:
    """
    Radius of the exact sequence for the mean of i.i.d. Gaussian data with
    known standard deviation ``sigma``, the prior being on mean / sigma.
    """
    return radius_ba(t, mean, sigma, prior, alpha)


def rho_opt(t_star: int, alpha: float) -> float:
    """
    The rho minimising the unassisted width at t = t_star,
    sqrt((-W_{-1}(-alpha^2 / e) - 1) / t_star).
    """
    _check_alpha(alpha)
    if t_star < 1:
        raise ConfigError(f"t_star must be >= 1, got {t_star}")
    w = special.lambertw(-(alpha**2) / math.e, k=-1)
    return math.sqrt((-w.real - 1) / t_star)


def tau_heuristic(t_star: int) -> float:
    if t_star < 1:
        raise ConfigError(f"t_star must be >= 1, got {t_star}")
    return 1 / math.sqrt(t_star)

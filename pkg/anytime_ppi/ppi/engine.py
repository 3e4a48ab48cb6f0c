"""
Prediction-powered estimators and their confidence sequences.

For a candidate theta, with U = l'_theta at the predictions of the labelled
records, V = l'_theta at their labels and U~ = l'_theta at the unlabelled
predictions, the measure of fit g_theta = E[V] is estimated as m + Delta where
m is the mean of U~ and Delta = E[V - U] is the rectifier. Confidence regions
for theta* collect the theta whose g-sequence covers zero.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Tuple, Union

import numpy as np
from scipy import optimize

from anytime_ppi.cs.core import CsConfig, Interval, radius_ba, radius_na
from anytime_ppi.logger.text_logger import get_logger
from anytime_ppi.ppi.loss import LossKind, LossModel
from anytime_ppi.stats.running_moments import (
    StreamState,
    cv_plus_variance,
    cv_variance,
    is_degenerate,
)
from anytime_ppi.utils.errors import (
    ConfigError,
    InsufficientDataError,
    NumericalError,
)
from anytime_ppi.utils.utils import StrEnum

logger = get_logger(__name__)

Array = Union[float, np.ndarray]

DEFAULT_GRID_STEPS = 2001
DEFAULT_GRID_HALF_WIDTH = 8.0


class EstimatorKind(StrEnum):
    CLASSICAL = "classical"
    PPI = "ppi"
    PPI_PLUS = "ppi_plus"


ESTIMATOR_ALIASES = {
    "classical": EstimatorKind.CLASSICAL,
    "ppi": EstimatorKind.PPI,
    "ppi++": EstimatorKind.PPI_PLUS,
    "ppi_plus": EstimatorKind.PPI_PLUS,
    "ppi+": EstimatorKind.PPI_PLUS,
}


@dataclass(frozen=True)
class EstimatorFlavor:
    """
    Which estimator of g_theta to use. ``fixed_lambda`` pins the power-tuning
    coefficient of PPI++; pinning it to 1 gives standard PPI.
    """

    kind: EstimatorKind
    fixed_lambda: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "kind", EstimatorKind(self.kind))
        if self.fixed_lambda is not None:
            if self.kind != EstimatorKind.PPI_PLUS:
                raise ConfigError("a fixed lambda only applies to ppi++")
            if not math.isfinite(self.fixed_lambda):
                raise ConfigError(f"fixed lambda must be finite, got {self.fixed_lambda}")

    @classmethod
    def from_name(cls, name: str, fixed_lambda: Optional[float] = None) -> "EstimatorFlavor":
        key = name.strip().lower()
        if key not in ESTIMATOR_ALIASES:
            raise ConfigError(f"Unknown method '{name}', choose from classical, ppi, ppi++")
        return cls(ESTIMATOR_ALIASES[key], fixed_lambda)

    def resolved(self) -> "EstimatorFlavor":
        if self.kind == EstimatorKind.PPI_PLUS and self.fixed_lambda == 1.0:
            return EstimatorFlavor(EstimatorKind.PPI)
        return self

    @property
    def label(self) -> str:
        name = "ppi++" if self.kind == EstimatorKind.PPI_PLUS else str(self.kind)
        if self.fixed_lambda is not None:
            name += f"(lambda={self.fixed_lambda:g})"
        return name


@dataclass
class SubgradientMoments:
    """Counts, means and centered sums of U, V (labelled) and U~ (unlabelled)."""

    n: int
    N: float
    mean_u: Array
    mean_v: Array
    mean_ut: Array
    s_uu: Array
    s_vv: Array
    s_uv: Array
    s_utut: Array
    # squared magnitude of the U values, sets the round-off floor of s_uu
    u_scale2: Array = 0.0

    @classmethod
    def from_state(
        cls, state: StreamState, theta: float, loss: LossModel, cfg: Optional[CsConfig] = None
    ) -> "SubgradientMoments":
        if loss.kind == LossKind.SQUARED:
            return cls._squared(state, theta, cfg)
        return cls.from_buffer(BufferView.from_state(state), theta, loss, cfg)

    @classmethod
    def _squared(cls, state: StreamState, theta: float, cfg: Optional[CsConfig]):
        # U = theta - F, V = theta - Y: every centered sum is free of theta
        N, mean_ut, s_utut = state.N, theta - state.mean_ft, state.s_ftft
        if cfg is not None and cfg.known_population:
            if cfg.population_mean_f is not None:
                mean_ut, s_utut = theta - cfg.population_mean_f, 0.0
            elif state.N < 1:
                raise InsufficientDataError("no unlabelled predictions to plug in")
            N = math.inf
        return cls(
            n=state.n,
            N=N,
            mean_u=theta - state.mean_f,
            mean_v=theta - state.mean_y,
            mean_ut=mean_ut,
            s_uu=state.s_ff,
            s_vv=state.s_yy,
            s_uv=state.s_yf,
            s_utut=s_utut,
            u_scale2=np.asarray(state.mean_f) ** 2,
        )

    @classmethod
    def from_buffer(
        cls, view: "BufferView", theta: float, loss: LossModel, cfg: Optional[CsConfig] = None
    ) -> "SubgradientMoments":
        if cfg is not None and cfg.population_mean_f is not None:
            raise ConfigError(
                "population_mean_f only applies to the squared loss, use assume_infinite_unlabelled"
            )
        u = loss(theta, view.covariates, view.predictions)
        v = loss(theta, view.covariates, view.labels)
        ut = loss(theta, view.pool_covariates, view.pool_predictions)
        n, N = len(v), len(ut)
        mean_u = u.mean() if n else 0.0
        mean_v = v.mean() if n else 0.0
        mean_ut = ut.mean() if N else 0.0
        cu, cv, cut = u - mean_u, v - mean_v, ut - mean_ut
        if cfg is not None and cfg.known_population:
            if N < 1:
                raise InsufficientDataError("no unlabelled predictions to plug in")
            N = math.inf
        return cls(
            n=n,
            N=N,
            mean_u=mean_u,
            mean_v=mean_v,
            mean_ut=mean_ut,
            s_uu=(cu**2).sum(),
            s_vv=(cv**2).sum(),
            s_uv=(cu * cv).sum(),
            s_utut=(cut**2).sum(),
            u_scale2=mean_u**2,
        )


@dataclass
class BufferView:
    """Column arrays of a buffered stream, extracted once per inversion."""

    labels: np.ndarray
    predictions: np.ndarray
    covariates: Optional[np.ndarray]
    pool_predictions: np.ndarray
    pool_covariates: Optional[np.ndarray]

    @classmethod
    def from_state(cls, state: StreamState) -> "BufferView":
        if not state.buffered:
            raise ConfigError("generic losses need a buffered stream state")
        labels, predictions, covariates = state.labelled_arrays()
        pool_predictions, pool_covariates = state.unlabelled_arrays()
        return cls(labels, predictions, covariates, pool_predictions, pool_covariates)


@dataclass
class GCs:
    g_hat: Array
    radius: Array
    sigma_g: Optional[Array] = None
    sigma_delta: Optional[Array] = None
    sigma_f: Optional[Array] = None
    components: Optional[Tuple[Array, Array]] = None
    lambda_used: Array = 0.0
    degenerate_lambda: Union[bool, np.ndarray] = False

    @property
    def contains_zero(self):
        return np.abs(self.g_hat) <= self.radius


@dataclass
class _Estimate:
    g_hat: Array
    delta_hat: Array
    m_hat: Array
    lam: Array
    degenerate: Union[bool, np.ndarray]


def _require_pool(moments: SubgradientMoments):
    if moments.N < 1:
        raise InsufficientDataError("no unlabelled predictions seen yet")


def power_tuning(moments: SubgradientMoments):
    """
    lambda = S_UV / S_UU, falling back to 0 where the predictions are constant.
    :return: (lambda, degenerate flag)
    """
    if moments.n < 2:
        raise InsufficientDataError(f"power tuning needs n >= 2, got n={moments.n}")
    degenerate = is_degenerate(moments.s_uu, moments.n, moments.u_scale2 ** 0.5)
    safe = np.where(degenerate, 1.0, moments.s_uu)
    lam = np.where(degenerate, 0.0, moments.s_uv / safe)
    if np.ndim(lam) == 0:
        return float(lam), bool(degenerate)
    return lam, degenerate


def _estimate(moments: SubgradientMoments, flavor: EstimatorFlavor) -> _Estimate:
    flavor = flavor.resolved()
    if moments.n < 1:
        raise InsufficientDataError("no labelled observations seen yet")
    if flavor.kind == EstimatorKind.CLASSICAL:
        return _Estimate(moments.mean_v, math.nan, math.nan, 0.0, False)
    _require_pool(moments)
    rectifier = moments.mean_v - moments.mean_u
    if flavor.kind == EstimatorKind.PPI:
        lam, degenerate = 1.0, False
    elif flavor.fixed_lambda is not None:
        lam, degenerate = flavor.fixed_lambda, False
    else:
        lam, degenerate = power_tuning(moments)
    delta = rectifier - (lam - 1) * (moments.mean_u - moments.mean_ut)
    return _Estimate(moments.mean_ut + delta, delta, moments.mean_ut, lam, degenerate)


def _note_degenerate(degenerate, state: StreamState):
    # once per stream, later steps go to DEBUG
    if not np.any(degenerate):
        return
    if state.lambda_fallback_noted:
        logger.debug(f"constant predictions at n={state.n}, lambda = 0")
        return
    state.lambda_fallback_noted = True
    logger.warning(f"constant predictions at n={state.n}, power tuning falls back to lambda = 0")


def m_hat(
    state: StreamState, theta: float, loss: LossModel, cfg: Optional[CsConfig] = None
) -> Array:
    moments = SubgradientMoments.from_state(state, theta, loss, cfg)
    if not (cfg is not None and cfg.population_mean_f is not None):
        _require_pool(moments)
    return moments.mean_ut


def delta_hat(
    state: StreamState,
    theta: float,
    loss: LossModel,
    flavor: EstimatorFlavor,
    cfg: Optional[CsConfig] = None,
) -> Array:
    flavor = flavor.resolved()
    if flavor.kind == EstimatorKind.CLASSICAL:
        raise ConfigError("the classical estimator has no rectifier")
    est = _estimate(SubgradientMoments.from_state(state, theta, loss, cfg), flavor)
    _note_degenerate(est.degenerate, state)
    return est.delta_hat


def _pool_mean_f(state: StreamState, cfg: Optional[CsConfig]) -> Array:
    if cfg is not None and cfg.population_mean_f is not None:
        return cfg.population_mean_f
    if state.N < 1:
        raise InsufficientDataError("no unlabelled predictions seen yet")
    return state.mean_ft


def theta_hat(
    state: StreamState, flavor: EstimatorFlavor, cfg: Optional[CsConfig] = None
) -> Array:
    """Closed-form estimate of theta* for the squared loss."""
    flavor = flavor.resolved()
    if state.n < 1:
        raise InsufficientDataError("no labelled observations seen yet")
    if flavor.kind == EstimatorKind.CLASSICAL:
        return state.mean_y
    pool = _pool_mean_f(state, cfg)
    if flavor.kind == EstimatorKind.PPI:
        return state.mean_y - (state.mean_f - pool)
    if flavor.fixed_lambda is not None:
        lam = flavor.fixed_lambda
    else:
        lam, degenerate = power_tuning(SubgradientMoments._squared(state, 0.0, cfg))
        _note_degenerate(degenerate, state)
    return state.mean_y - lam * (state.mean_f - pool)


def cs_g_from_moments(
    moments: SubgradientMoments,
    flavor: EstimatorFlavor,
    cfg: CsConfig,
    assisted: bool = False,
) -> GCs:
    flavor = flavor.resolved()
    n = moments.n
    if n < 3:
        raise InsufficientDataError(f"confidence sequence needs n >= 3, got n={n}")
    if assisted and flavor.kind == EstimatorKind.CLASSICAL:
        raise ConfigError("prior assistance applies to the rectifier, the classical estimator has none")
    est = _estimate(moments, flavor)
    s_vv, s_uv, s_uu, N = moments.s_vv, moments.s_uv, moments.s_uu, moments.N

    if not assisted:
        if flavor.kind == EstimatorKind.CLASSICAL:
            var_g = s_vv / (n - 1)
        elif flavor.kind == EstimatorKind.PPI or flavor.fixed_lambda is not None:
            var_g = cv_variance(n, N, s_vv, s_uv, s_uu, moments.s_utut, est.lam)
        else:
            var_g = cv_plus_variance(n, N, s_vv, s_uv, s_uu, est.lam)
        sigma_g = np.sqrt(var_g)
        radius = radius_na(n, sigma_g, cfg.effective_rho, cfg.alpha)
        return GCs(
            g_hat=est.g_hat,
            radius=radius,
            sigma_g=sigma_g,
            lambda_used=est.lam,
            degenerate_lambda=est.degenerate,
        )

    if cfg.prior is None:
        raise ConfigError("prior assistance needs a prior")
    # moments of the pair (U, V - U)
    s_dd = s_vv - 2 * s_uv + s_uu
    s_ud = s_uv - s_uu
    if flavor.kind == EstimatorKind.PPI:
        var_delta = np.maximum(s_dd, 0.0) / (n - 1)
    elif flavor.fixed_lambda is not None:
        var_delta = cv_variance(n, N, s_dd, s_ud, s_uu, moments.s_utut, est.lam - 1)
    else:
        var_delta = cv_plus_variance(n, N, s_dd, s_ud, s_uu, est.lam - 1)
    sigma_delta = np.sqrt(var_delta)
    # a constant rectifier sample pins Delta at its mean
    flat = sigma_delta <= 0
    r_delta = np.where(
        flat,
        0.0,
        radius_ba(n, est.delta_hat, np.where(flat, 1.0, sigma_delta), cfg.prior, cfg.kappa),
    )

    if cfg.known_population:
        sigma_f, r_m = 0.0, 0.0
    else:
        delta = cfg.effective_delta
        if delta <= 0:
            raise ConfigError("a finite unlabelled pool needs delta > 0")
        if N < 2:
            raise InsufficientDataError(f"unlabelled sequence needs N >= 2, got N={N}")
        sigma_f = np.sqrt(moments.s_utut / (N - 1))
        r_m = radius_na(N, sigma_f, cfg.pool_rho(N), delta)

    if np.ndim(r_delta) == 0:
        r_delta = float(r_delta)
    return GCs(
        g_hat=est.g_hat,
        radius=r_delta + r_m,
        sigma_delta=sigma_delta,
        sigma_f=sigma_f,
        components=(r_delta, r_m),
        lambda_used=est.lam,
        degenerate_lambda=est.degenerate,
    )


def cs_g(
    state: StreamState,
    theta: float,
    loss: LossModel,
    flavor: EstimatorFlavor,
    cfg: CsConfig,
    assisted: bool = False,
) -> GCs:
    gcs = cs_g_from_moments(SubgradientMoments.from_state(state, theta, loss, cfg), flavor, cfg, assisted)
    _note_degenerate(gcs.degenerate_lambda, state)
    return gcs


@dataclass
class GridRegion:
    """Union of maximal runs of grid points whose g-sequence covers zero."""

    intervals: List[Tuple[float, float]]
    level: float
    t: int
    grid: Tuple[float, float, int]
    touches_boundary: bool = False
    notes: Tuple[str, ...] = field(default_factory=tuple)

    @classmethod
    def from_mask(cls, thetas: np.ndarray, mask: np.ndarray, level: float, t: int) -> "GridRegion":
        intervals = []
        start = None
        for i, inside in enumerate(mask):
            if inside and start is None:
                start = i
            if not inside and start is not None:
                intervals.append((float(thetas[start]), float(thetas[i - 1])))
                start = None
        if start is not None:
            intervals.append((float(thetas[start]), float(thetas[-1])))
        return cls(
            intervals=intervals,
            level=level,
            t=t,
            grid=(float(thetas[0]), float(thetas[-1]), len(thetas)),
            touches_boundary=bool(mask[0] or mask[-1]),
        )

    @property
    def empty(self) -> bool:
        return not self.intervals

    @property
    def volume(self) -> float:
        return float(sum(hi - lo for lo, hi in self.intervals))

    @property
    def hull(self) -> Optional[Tuple[float, float]]:
        if self.empty:
            return None
        return self.intervals[0][0], self.intervals[-1][1]

    def contains(self, x: float) -> bool:
        return any(lo <= x <= hi for lo, hi in self.intervals)


def classical_root(state: StreamState, loss: LossModel) -> Tuple[float, float]:
    """
    Root of the labelled mean subgradient and its standard error.
    :return: (root, standard error)
    """
    if state.n < 2:
        raise InsufficientDataError(f"classical estimate needs n >= 2, got n={state.n}")
    if loss.kind == LossKind.SQUARED:
        return float(state.mean_y), math.sqrt(state.s_yy / (state.n - 1) / state.n)
    view = BufferView.from_state(state)

    def mean_subgradient(theta):
        return float(loss(theta, view.covariates, view.labels).mean())

    center = float(np.median(view.labels))
    width = max(1.0, float(np.ptp(view.labels)))
    lo, hi = center - width, center + width
    for _ in range(60):
        if mean_subgradient(lo) <= 0 <= mean_subgradient(hi):
            break
        width *= 2
        lo, hi = center - width, center + width
    else:
        raise NumericalError("cannot bracket the classical root", diagnostics={"width": width})
    root = lo if mean_subgradient(lo) == 0 else optimize.brentq(mean_subgradient, lo, hi, xtol=1e-12)
    eps = 1e-6 * max(1.0, abs(root))
    slope = (mean_subgradient(root + eps) - mean_subgradient(root - eps)) / (2 * eps)
    if not (math.isfinite(slope) and slope > 0):
        slope = 1.0
    v = loss(root, view.covariates, view.labels)
    return root, float(v.std(ddof=1) / math.sqrt(state.n) / slope)


def default_grid(state: StreamState, loss: LossModel) -> Tuple[float, float, int]:
    root, se = classical_root(state, loss)
    half = DEFAULT_GRID_HALF_WIDTH * se if se > 0 else 1e-8 * max(1.0, abs(root))
    return root - half, root + half, DEFAULT_GRID_STEPS


def invert_grid(
    state: StreamState,
    loss: LossModel,
    flavor: EstimatorFlavor,
    cfg: CsConfig,
    assisted: bool,
    grid: Tuple[float, float, int],
) -> GridRegion:
    lo, hi, steps = grid
    if not (hi > lo and int(steps) >= 2):
        raise ConfigError(f"grid needs lo < hi and at least 2 steps, got {grid}")
    thetas = np.linspace(lo, hi, int(steps))
    view = None if loss.kind == LossKind.SQUARED else BufferView.from_state(state)
    inside = np.zeros(len(thetas), dtype=bool)
    for i, theta in enumerate(thetas):
        if view is None:
            moments = SubgradientMoments._squared(state, theta, cfg)
        else:
            moments = SubgradientMoments.from_buffer(view, theta, loss, cfg)
        inside[i] = bool(cs_g_from_moments(moments, flavor, cfg, assisted).contains_zero)
    region = GridRegion.from_mask(thetas, inside, cfg.level, state.n)
    if region.empty:
        logger.warning(f"empty confidence region on grid {grid} at n={state.n}")
        region.notes += ("empty",)
    elif region.touches_boundary:
        logger.warning(f"confidence region touches the grid boundary {grid} at n={state.n}")
        region.notes += ("boundary",)
    return region


def invert(
    state: StreamState,
    loss: LossModel,
    flavor: EstimatorFlavor,
    cfg: CsConfig,
    assisted: bool = False,
    grid: Optional[Tuple[float, float, int]] = None,
) -> Union[Interval, GridRegion]:
    """
    Confidence region for theta*: a closed-form interval for the squared loss,
    the set of grid points covering zero otherwise (or whenever a grid is given).
    """
    if grid is None and loss.kind != LossKind.SQUARED:
        grid = default_grid(state, loss)
    if grid is not None:
        return invert_grid(state, loss, flavor, cfg, assisted, grid)
    gcs = cs_g_from_moments(SubgradientMoments._squared(state, 0.0, cfg), flavor, cfg, assisted)
    _note_degenerate(gcs.degenerate_lambda, state)
    return Interval(center=theta_hat(state, flavor, cfg), radius=gcs.radius, level=cfg.level, t=state.n)

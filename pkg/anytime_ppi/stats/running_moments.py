"""
Streaming sufficient statistics for labelled pairs (Y, f(X)) and unlabelled
predictions f(X~).

The state keeps counts, running means and centered (co-)moment sums updated by
Welford's recurrence; bulk updates use Chan's pairwise combination so that a
chunk gives the same statistics as pushing its records one at a time. Every
numeric field may be a numpy array of shape ``(reps,)``: all recurrences
broadcast, which lets one state advance many independent replications in
lock-step (the counts ``n`` and ``N`` are then shared).
"""
from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Union

import numpy as np

from anytime_ppi.utils.errors import (
    DataError,
    DegeneratePredictorError,
    InsufficientDataError,
    InvalidRatioError,
)
from anytime_ppi.utils.utils import StrEnum

Array = Union[float, np.ndarray]

# centered sums below this many squared ulps of the mean are round-off of a constant stream
_ROUNDOFF = 16 * np.finfo(float).eps ** 2


class VarianceFlavor(StrEnum):
    CV = "cv"
    CV_PLUS = "cv_plus"


@dataclass
class Observation:
    prediction: float
    label: Optional[float] = None
    covariates: Optional[Sequence[float]] = None

    @property
    def labelled(self) -> bool:
        return self.label is not None

    def validate(self, index: Optional[int] = None, line: Optional[int] = None):
        if not math.isfinite(self.prediction):
            raise DataError(f"non-finite prediction {self.prediction}", index=index, line=line)
        if self.label is not None and not math.isfinite(self.label):
            raise DataError(f"non-finite label {self.label}", index=index, line=line)
        if self.covariates is not None and not all(
            math.isfinite(c) for c in self.covariates
        ):
            raise DataError("non-finite covariate", index=index, line=line)
        return self


def _chunk_stats(values: np.ndarray):
    mean = values.mean(axis=-1)
    centered = values - np.expand_dims(mean, -1)
    return mean, centered


def _check_finite(values: np.ndarray, what: str, offset: int):
    bad = ~np.isfinite(values)
    if bad.any():
        position = int(np.argwhere(bad)[0][-1])
        raise DataError(f"non-finite {what}", index=offset + position)


@dataclass
class StreamState:
    n: int = 0
    N: int = 0
    t_total: int = 0
    mean_y: Array = 0.0
    mean_f: Array = 0.0
    mean_ft: Array = 0.0
    s_yy: Array = 0.0
    s_ff: Array = 0.0
    s_yf: Array = 0.0
    s_ftft: Array = 0.0
    pool_labelled: bool = False
    buffered: bool = False
    buffer: List[Observation] = field(default_factory=list)
    lambda_fallback_noted: bool = field(default=False, repr=False)

    @classmethod
    def batch(cls, size: int, **kwargs) -> "StreamState":
        """A state tracking ``size`` replications at once."""
        zeros = {
            name: np.zeros(size)
            for name in ("mean_y", "mean_f", "mean_ft", "s_yy", "s_ff", "s_yf", "s_ftft")
        }
        return cls(**zeros, **kwargs)

    def copy(self) -> "StreamState":
        return copy.deepcopy(self)

    def update(self, obs: Observation, index: Optional[int] = None) -> "StreamState":
        obs.validate(index=index if index is not None else self.t_total)
        if obs.labelled:
            self.push_labelled(obs.label, obs.prediction)
        else:
            self.push_unlabelled(obs.prediction)
        if self.buffered:
            self.buffer.append(obs)
        return self

    def push_labelled(self, label: Array, prediction: Array) -> "StreamState":
        self.n += 1
        self.t_total += 1
        dy = label - self.mean_y
        df = prediction - self.mean_f
        self.mean_y = self.mean_y + dy / self.n
        self.mean_f = self.mean_f + df / self.n
        self.s_yy = self.s_yy + dy * (label - self.mean_y)
        self.s_ff = self.s_ff + df * (prediction - self.mean_f)
        self.s_yf = self.s_yf + dy * (prediction - self.mean_f)
        if self.pool_labelled:
            self._absorb_prediction(prediction)
        return self

    def push_unlabelled(self, prediction: Array) -> "StreamState":
        self.t_total += 1
        self._absorb_prediction(prediction)
        return self

    def _absorb_prediction(self, prediction: Array):
        self.N += 1
        d = prediction - self.mean_ft
        self.mean_ft = self.mean_ft + d / self.N
        self.s_ftft = self.s_ftft + d * (prediction - self.mean_ft)

    def extend(self, labels, predictions) -> "StreamState":
        """Absorb a chunk of labelled pairs along the last axis."""
        y = np.asarray(labels, dtype=float)
        f = np.asarray(predictions, dtype=float)
        if y.shape != f.shape:
            raise DataError(f"labels {y.shape} and predictions {f.shape} differ in shape")
        k = y.shape[-1] if y.ndim else 1
        if k == 0:
            return self
        y = y.reshape(y.shape if y.ndim else (1,))
        f = f.reshape(y.shape)
        _check_finite(y, "label", self.t_total)
        _check_finite(f, "prediction", self.t_total)

        my, cy = _chunk_stats(y)
        mf, cf = _chunk_stats(f)
        n = self.n + k
        w = self.n * k / n
        dy = my - self.mean_y
        df = mf - self.mean_f
        self.mean_y = self.mean_y + dy * k / n
        self.mean_f = self.mean_f + df * k / n
        self.s_yy = self.s_yy + (cy**2).sum(axis=-1) + dy * dy * w
        self.s_ff = self.s_ff + (cf**2).sum(axis=-1) + df * df * w
        self.s_yf = self.s_yf + (cy * cf).sum(axis=-1) + dy * df * w
        self.n = n
        self.t_total += k
        if self.pool_labelled:
            self.merge_unlabelled(k, mf, (cf**2).sum(axis=-1), count_records=False)
        if self.buffered and y.ndim == 1:
            self.buffer.extend(Observation(float(p), float(l)) for l, p in zip(y, f))
        return self

    def extend_unlabelled(self, predictions) -> "StreamState":
        f = np.asarray(predictions, dtype=float)
        f = f.reshape(f.shape if f.ndim else (1,))
        k = f.shape[-1]
        if k == 0:
            return self
        _check_finite(f, "prediction", self.t_total)
        mf, cf = _chunk_stats(f)
        self.merge_unlabelled(k, mf, (cf**2).sum(axis=-1))
        if self.buffered and f.ndim == 1:
            self.buffer.extend(Observation(float(p)) for p in f)
        return self

    def merge_unlabelled(
        self, count: int, mean: Array, m2: Array, count_records: bool = True
    ) -> "StreamState":
        """Absorb a pre-summarised pool of unlabelled predictions."""
        if count <= 0:
            return self
        N = self.N + count
        d = mean - self.mean_ft
        self.mean_ft = self.mean_ft + d * count / N
        self.s_ftft = self.s_ftft + m2 + d * d * self.N * count / N
        self.N = N
        if count_records:
            self.t_total += count
        return self

    def labelled_arrays(self):
        """Labels, predictions and covariates of the buffered labelled records."""
        obs = [o for o in self.buffer if o.labelled]
        return (
            np.array([o.label for o in obs], dtype=float),
            np.array([o.prediction for o in obs], dtype=float),
            _covariate_matrix(obs),
        )

    def unlabelled_arrays(self):
        """Predictions and covariates of the buffered unlabelled pool."""
        if self.pool_labelled:
            obs = list(self.buffer)
        else:
            obs = [o for o in self.buffer if not o.labelled]
        return (
            np.array([o.prediction for o in obs], dtype=float),
            _covariate_matrix(obs),
        )


def _covariate_matrix(obs: Sequence[Observation]):
    if not obs or any(o.covariates is None for o in obs):
        return None
    return np.array([list(o.covariates) for o in obs], dtype=float)


def update(state: StreamState, obs: Observation, index: Optional[int] = None) -> StreamState:
    return state.update(obs, index=index)


def is_degenerate(s: Array, n: int, mean: Array) -> Array:
    """True where a centered sum is zero up to the round-off of a constant stream."""
    return np.asarray(s) <= _ROUNDOFF * n * (np.asarray(mean) ** 2)


def lambda_hat(state: StreamState) -> float:
    if state.n < 2:
        raise InsufficientDataError(f"power tuning needs n >= 2, got n={state.n}")
    if np.any(is_degenerate(state.s_ff, state.n, state.mean_f)):
        raise DegeneratePredictorError("constant predictions on labelled data")
    return state.s_yf / state.s_ff


def cv_variance(n, N, s_vv, s_uv, s_uu, s_utut, lam):
    """
    Fixed-coefficient control-variate variance
    (S_VV - 2 lam S_UV + lam^2 S_UU) / (n - 2) + n lam^2 S_UtUt / (N (N - 1)).
    ``N`` may be ``math.inf`` for a known population.
    """
    if n < 3:
        raise InsufficientDataError(f"variance estimate needs n >= 3, got n={n}")
    if N < 2:
        raise InsufficientDataError(f"variance estimate needs N >= 2, got N={N}")
    residual = s_vv - 2 * lam * s_uv + lam**2 * s_uu
    pool = 0.0 if math.isinf(N) else n * lam**2 * s_utut / (N * (N - 1))
    return np.maximum(residual / (n - 2) + pool, 0.0)


def cv_plus_variance(n, N, s_vv, s_uv, s_uu, lam):
    """
    Power-tuned control-variate variance
    (1 - n/N) / (n - 2) (S_VV - 2 lam S_UV + lam^2 S_UU) + (n/N) / (n - 1) S_VV.
    """
    if n < 3:
        raise InsufficientDataError(f"variance estimate needs n >= 3, got n={n}")
    if N < n:
        raise InvalidRatioError(f"N={N} unlabelled is smaller than n={n} labelled")
    r = 0.0 if math.isinf(N) else n / N
    residual = s_vv - 2 * lam * s_uv + lam**2 * s_uu
    return np.maximum((1 - r) / (n - 2) * residual + r / (n - 1) * s_vv, 0.0)


def var_estimators(
    state: StreamState,
    lam: float,
    flavor: Union[VarianceFlavor, str],
    n_unlabelled: Optional[float] = None,
) -> Array:
    """
    Variance of the control-variate mean of Y with f as control.

    Args:
        state: the running moments.
        lam: the coefficient for the ``cv`` flavor (ignored by ``cv_plus``,
            which uses ``lambda_hat(state)``).
        flavor: ``cv`` or ``cv_plus``.
        n_unlabelled: overrides ``state.N``, ``math.inf`` for a known population.
    """
    flavor = VarianceFlavor(flavor)
    N = state.N if n_unlabelled is None else n_unlabelled
    if flavor == VarianceFlavor.CV:
        if not np.all(np.isfinite(lam)):
            raise ValueError(f"lambda must be finite, got {lam}")
        return cv_variance(state.n, N, state.s_yy, state.s_yf, state.s_ff, state.s_ftft, lam)
    if state.n < 3:
        raise InsufficientDataError(f"variance estimate needs n >= 3, got n={state.n}")
    return cv_plus_variance(state.n, N, state.s_yy, state.s_yf, state.s_ff, lambda_hat(state))


def two_pass_moments(buffer: Sequence[Observation], pool_labelled: bool = False) -> dict:
    """Recompute every StreamState statistic from raw observations."""
    labelled = [o for o in buffer if o.labelled]
    pool = list(buffer) if pool_labelled else [o for o in buffer if not o.labelled]
    y = np.array([o.label for o in labelled], dtype=float)
    f = np.array([o.prediction for o in labelled], dtype=float)
    ft = np.array([o.prediction for o in pool], dtype=float)
    out = {"n": len(y), "N": len(ft)}
    out["mean_y"] = y.mean() if len(y) else 0.0
    out["mean_f"] = f.mean() if len(f) else 0.0
    out["mean_ft"] = ft.mean() if len(ft) else 0.0
    out["s_yy"] = ((y - out["mean_y"]) ** 2).sum()
    out["s_ff"] = ((f - out["mean_f"]) ** 2).sum()
    out["s_yf"] = ((y - out["mean_y"]) * (f - out["mean_f"])).sum()
    out["s_ftft"] = ((ft - out["mean_ft"]) ** 2).sum()
    return out

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from anytime_ppi.utils.errors import ConfigError
from anytime_ppi.utils.utils import StrEnum, load_callable


class LossKind(StrEnum):
    SQUARED = "squared"
    GENERIC = "generic"


# (theta, covariates or None, values) -> subgradient of the loss at theta for each record
Subgradient = Callable[[float, Optional[np.ndarray], np.ndarray], np.ndarray]


@dataclass(frozen=True)
class LossModel:
    """
    Estimand defined by the root of E[l'_theta(X, Y)] = 0.

    The subgradient is evaluated on whole columns: ``values`` are labels for the
    labelled records and predictions f(x) where the label is replaced by the
    prediction. Only the squared kind is served from running moments, every
    other loss needs the observations kept in the stream buffer.
    """

    subgradient: Subgradient
    kind: LossKind = LossKind.GENERIC
    name: str = "generic"

    def __call__(self, theta, covariates, values) -> np.ndarray:
        values = np.asarray(values, dtype=float)
        out = np.asarray(self.subgradient(theta, covariates, values), dtype=float)
        if out.shape != values.shape:
            raise ConfigError(
                f"subgradient of loss '{self.name}' returned shape {out.shape}, expected {values.shape}"
            )
        return out


def squared_subgradient(theta, covariates, values):
    return theta - values


def squared_loss() -> LossModel:
    return LossModel(squared_subgradient, LossKind.SQUARED, "squared")


def generic_loss(subgradient: Subgradient, name: str = "generic") -> LossModel:
    return LossModel(subgradient, LossKind.GENERIC, name)


def build_loss(kind: str = "squared", subgradient_path: Optional[str] = None) -> LossModel:
    """
    :param kind: ``squared`` or ``generic``
    :param subgradient_path: ``module:function`` for a generic loss; without
        it the generic path runs the squared subgradient on the buffer
    """
    try:
        kind = LossKind(kind)
    except ValueError as e:
        raise ConfigError(f"Unknown loss '{kind}', choose squared or generic") from e
    if kind == LossKind.SQUARED:
        if subgradient_path is not None:
            raise ConfigError("a subgradient can only be given with the generic loss")
        return squared_loss()
    if subgradient_path is None:
        return generic_loss(squared_subgradient, "squared (buffered)")
    return generic_loss(load_callable(subgradient_path), subgradient_path)

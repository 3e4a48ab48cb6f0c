from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import special, stats

from anytime_ppi.utils.errors import ConfigError
from anytime_ppi.utils.utils import StrEnum


class PriorKind(StrEnum):
    GAUSSIAN = "gaussian"
    LAPLACE = "laplace"
    STUDENT_T = "student_t"
    IMPROPER = "improper"


PRIOR_ALIASES = {
    "gaussian": PriorKind.GAUSSIAN,
    "normal": PriorKind.GAUSSIAN,
    "laplace": PriorKind.LAPLACE,
    "student_t": PriorKind.STUDENT_T,
    "student-t": PriorKind.STUDENT_T,
    "t": PriorKind.STUDENT_T,
    "improper": PriorKind.IMPROPER,
}

DEFAULT_STUDENT_DOF = 3.0
_LOG_FLAT = -0.5 * math.log(2 * math.pi)


@dataclass(frozen=True)
class Prior:
    """
    Prior on the standardized rectifier (mean divided by standard deviation).

    ``scale`` is the standard deviation for the Gaussian prior, the diversity
    ``b`` for the Laplace prior and the scale ``s`` of the Student-t prior.
    The improper prior has the flat density (2 pi)^(-1/2) and no scale.
    """

    kind: PriorKind
    location: float = 0.0
    scale: Optional[float] = None
    dof: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "kind", PriorKind(self.kind))
        if not math.isfinite(self.location):
            raise ConfigError(f"prior location must be finite, got {self.location}")
        if self.kind == PriorKind.IMPROPER:
            return
        if self.scale is None or not (self.scale > 0 and math.isfinite(self.scale)):
            raise ConfigError(f"{self.kind} prior needs a finite scale > 0, got {self.scale}")
        if self.kind == PriorKind.STUDENT_T:
            if self.dof is None or not self.dof > 0:
                raise ConfigError(f"student_t prior needs dof > 0, got {self.dof}")

    @classmethod
    def from_name(
        cls,
        name: str,
        scale: Optional[float] = None,
        dof: Optional[float] = None,
        location: float = 0.0,
    ) -> Optional["Prior"]:
        """Build a prior from its CLI name, ``none`` gives None."""
        key = name.strip().lower()
        if key in ("none", ""):
            return None
        if key not in PRIOR_ALIASES:
            raise ConfigError(f"Unknown prior '{name}', choose from {sorted(PRIOR_ALIASES)}")
        kind = PRIOR_ALIASES[key]
        if kind == PriorKind.IMPROPER:
            return cls(kind, location=location)
        if kind == PriorKind.STUDENT_T and dof is None:
            dof = DEFAULT_STUDENT_DOF
        return cls(kind, location=location, scale=scale, dof=dof if kind == PriorKind.STUDENT_T else None)

    @property
    def proper(self) -> bool:
        return self.kind != PriorKind.IMPROPER

    @property
    def label(self) -> str:
        return "student-t" if self.kind == PriorKind.STUDENT_T else str(self.kind)

    @property
    def kink(self) -> Optional[float]:
        """Point where the density is not differentiable."""
        return self.location if self.kind == PriorKind.LAPLACE else None

    def frozen(self):
        """The matching ``scipy.stats`` distribution (proper priors only)."""
        if self.kind == PriorKind.GAUSSIAN:
            return stats.norm(loc=self.location, scale=self.scale)
        if self.kind == PriorKind.LAPLACE:
            return stats.laplace(loc=self.location, scale=self.scale)
        if self.kind == PriorKind.STUDENT_T:
            return stats.t(df=self.dof, loc=self.location, scale=self.scale)
        raise ConfigError("the improper prior has no distribution")

    def logpdf(self, zeta):
        # explicit forms: this sits in the inner loop of the quadrature
        if self.kind == PriorKind.IMPROPER:
            return np.full(np.shape(zeta), _LOG_FLAT)
        u = (np.asarray(zeta, dtype=float) - self.location) / self.scale
        if self.kind == PriorKind.GAUSSIAN:
            return -0.5 * u * u - math.log(self.scale) + _LOG_FLAT
        if self.kind == PriorKind.LAPLACE:
            return -np.abs(u) - math.log(2 * self.scale)
        nu = self.dof
        const = (
            special.gammaln((nu + 1) / 2)
            - special.gammaln(nu / 2)
            - 0.5 * math.log(nu * math.pi)
            - math.log(self.scale)
        )
        return const - (nu + 1) / 2 * np.log1p(u * u / nu)

    def pdf(self, zeta):
        return np.exp(self.logpdf(zeta))

"""
Marginal density of the running mean under a prior:

    eta_t(z) = integral N(zeta; z, 1/t) pi(zeta) d zeta

evaluated in log space. The Gaussian prior has a closed form, the improper
prior is constant, other priors use Gauss-Hermite quadrature centred on ``z``
with the kernel width 1/sqrt(t), doubling the node count until successive
values agree. Points where the rule does not settle (e.g. the Laplace kink
inside the kernel window) fall back to adaptive quadrature.
"""
import math
from functools import lru_cache

import numpy as np
from scipy import integrate, special

from anytime_ppi.cs.priors import Prior, PriorKind
from anytime_ppi.logger.text_logger import get_logger
from anytime_ppi.utils.errors import NumericalError

logger = get_logger(__name__)

GH_START_NODES = 64
GH_MAX_NODES = 1024
GH_RTOL = 1e-9
QUAD_HALF_WIDTH = 40.0
QUAD_RTOL = 1e-8
_LOG_SQRT_2PI = 0.5 * math.log(2 * math.pi)


@lru_cache(maxsize=None)
def hermite_rule(n_nodes: int):
    """Probabilists' Gauss-Hermite nodes and log-weights (weights sum to sqrt(2 pi))."""
    nodes, weights = special.roots_hermitenorm(n_nodes)
    with np.errstate(divide="ignore"):
        log_weights = np.log(weights)
    return nodes, log_weights


def _log_eta_gauss_hermite(z, t, prior: Prior, n_nodes: int):
    nodes, log_weights = hermite_rule(n_nodes)
    zeta = z[..., None] + nodes / np.sqrt(t)[..., None]
    values = special.logsumexp(log_weights + prior.logpdf(zeta), axis=-1) - _LOG_SQRT_2PI
    return np.asarray(values, dtype=float).reshape(np.shape(z))


def _log_eta_quad(z: float, t: float, prior: Prior) -> float:
    s = 1.0 / math.sqrt(t)
    lo, hi = z - QUAD_HALF_WIDTH * s, z + QUAD_HALF_WIDTH * s

    def log_integrand(zeta):
        return -0.5 * ((zeta - z) / s) ** 2 - math.log(s) - _LOG_SQRT_2PI + prior.logpdf(zeta)

    points = sorted({p for p in (prior.location, prior.kink) if p is not None and lo < p < hi})
    probe = np.concatenate([np.linspace(lo, hi, 401), np.asarray(points, dtype=float)])
    shift = float(np.max(log_integrand(probe)))

    result = integrate.quad(
        lambda zeta: math.exp(log_integrand(zeta) - shift),
        lo,
        hi,
        points=points or None,
        limit=500,
        epsabs=0.0,
        epsrel=1e-12,
        full_output=1,
    )
    value, abserr = result[0], result[1]
    if not value > 0 or abserr > QUAD_RTOL * value:
        raise NumericalError(
            "eta quadrature did not converge",
            diagnostics={
                "z": z,
                "t": t,
                "prior": prior.label,
                "value": value,
                "abserr": abserr,
                "message": result[3] if len(result) > 3 else "",
            },
        )
    return shift + math.log(value)


def log_eta_closed_form_gaussian(z, t, prior: Prior):
    var = prior.scale**2 + 1.0 / np.asarray(t, dtype=float)
    return -0.5 * (np.asarray(z) - prior.location) ** 2 / var - 0.5 * np.log(var) - _LOG_SQRT_2PI


def log_eta_laplace_closed_form(z, t, prior: Prior):
    """
    Laplace prior via the exponential-times-Gaussian-tail identity,
    log of sum over both half lines of exp(s^2/(2b^2) -+ u/b) Phi((+-u - s^2/b)/s) / (2b).
    """
    b = prior.scale
    s = 1.0 / np.sqrt(np.asarray(t, dtype=float))
    u = np.asarray(z, dtype=float) - prior.location
    base = -math.log(2 * b) + s**2 / (2 * b**2)
    right = base - u / b + special.log_ndtr((u - s**2 / b) / s)
    left = base + u / b + special.log_ndtr((-u - s**2 / b) / s)
    return np.logaddexp(right, left)


def log_eta(z, t, prior: Prior):
    """Log of eta_t(z), broadcasting over ``z`` and ``t``."""
    scalar = np.ndim(z) == 0 and np.ndim(t) == 0
    z, t = np.broadcast_arrays(np.asarray(z, dtype=float), np.asarray(t, dtype=float))
    if prior.kind == PriorKind.IMPROPER:
        out = np.full(z.shape, -_LOG_SQRT_2PI)
    elif prior.kind == PriorKind.GAUSSIAN:
        out = log_eta_closed_form_gaussian(z, t, prior)
    else:
        out = _log_eta_numerical(z, t, prior)
    return float(out) if scalar else out


def _log_eta_numerical(z, t, prior: Prior):
    n_nodes = GH_START_NODES
    previous = _log_eta_gauss_hermite(z, t, prior, n_nodes)
    settled = np.zeros(z.shape, dtype=bool)
    out = previous.copy()
    while n_nodes < GH_MAX_NODES and not settled.all():
        n_nodes *= 2
        current = _log_eta_gauss_hermite(z, t, prior, n_nodes)
        newly = ~settled & (np.abs(np.expm1(current - previous)) <= GH_RTOL)
        out[newly] = current[newly]
        settled |= newly
        previous = current
    if not settled.all():
        pending = np.argwhere(~settled)
        logger.debug(
            f"Gauss-Hermite unsettled at {len(pending)} point(s) for the {prior.label} prior, using adaptive quadrature"
        )
        for idx in map(tuple, pending):
            out[idx] = _log_eta_quad(float(z[idx]), float(t[idx]), prior)
    return out


def eta(z, t, prior: Prior):
    """eta_t(z), a value in (0, sqrt(t / (2 pi))]."""
    return np.exp(log_eta(z, t, prior))


def eta_laplace_closed_form(z, t, prior: Prior):
    if prior.kind != PriorKind.LAPLACE:
        raise ValueError(f"closed form is for the laplace prior, got {prior.kind}")
    return np.exp(log_eta_laplace_closed_form(z, t, prior))

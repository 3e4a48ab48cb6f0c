import dataclasses
import math
from typing import Iterable, List, Mapping, Optional, Tuple

from anytime_ppi.cs.core import CsConfig, tau_heuristic
from anytime_ppi.data.scenarios import Scenario
from anytime_ppi.experiment.harness import MethodSpec, parse_methods
from anytime_ppi.ppi.engine import EstimatorKind
from anytime_ppi.utils.errors import ConfigError

CS_KEYS = (
    "alpha",
    "delta",
    "rho",
    "t_star",
    "start_n",
    "population_mean_f",
    "assume_infinite_unlabelled",
)
DEFAULT_METHODS = ("classical", "ppi", "ppi++")


def _check_keys(section: str, params: Mapping, allowed: Iterable[str]):
    unknown = sorted(set(params) - set(allowed))
    if unknown:
        raise ConfigError(f"Unknown key(s) {unknown} in '{section}', allowed: {sorted(allowed)}")


def parse_params(params: Mapping) -> Tuple[dict, dict, list, dict, dict]:
    """Split a run's parameters into scenario, cs, methods, prior and run sections."""
    _check_keys("parameters", params, ("experiment", "scenario", "cs", "methods", "prior", "run"))
    methods = params.get("methods") or list(DEFAULT_METHODS)
    if isinstance(methods, str):
        methods = [methods]
    return (
        dict(params.get("scenario") or {}),
        dict(params.get("cs") or {}),
        list(methods),
        dict(params.get("prior") or {}),
        dict(params.get("run") or {}),
    )


def build_cs_config(values: Mapping) -> CsConfig:
    _check_keys("cs", values, CS_KEYS)
    return CsConfig(**{k: v for k, v in values.items() if v is not None})


def build_scenario(values: Mapping) -> Scenario:
    allowed = [f.name for f in dataclasses.fields(Scenario)]
    _check_keys("scenario", values, allowed)
    if "kind" not in values:
        raise ConfigError("scenario.kind is required (noisy, biased or gaussian)")
    return Scenario(**values)


def resolve_prior_scale(prior_scale: Optional[float], t_star: int) -> float:
    """The explicit scale, else tau = 1 / sqrt(t*)."""
    if prior_scale is None:
        return tau_heuristic(t_star)
    if not (prior_scale > 0 and math.isfinite(prior_scale)):
        raise ConfigError(f"prior scale must be > 0, got {prior_scale}")
    return float(prior_scale)


def build_methods(
    texts: Iterable[str],
    t_star: int,
    prior: Optional[str] = None,
    prior_scale: Optional[float] = None,
    dof: Optional[float] = None,
    fixed_lambda: Optional[float] = None,
) -> List[MethodSpec]:
    """
    Method specs with the prior scale resolved against t*. ``prior`` applies to
    every prediction-powered method given without a bracketed prior.
    """
    methods = parse_methods(
        texts,
        prior_scale=resolve_prior_scale(prior_scale, t_star),
        dof=dof,
        default_prior=prior,
    )
    if fixed_lambda is None:
        return methods
    pinned = [
        dataclasses.replace(m, flavor=dataclasses.replace(m.flavor, fixed_lambda=fixed_lambda))
        if not m.exact and m.flavor.kind == EstimatorKind.PPI_PLUS
        else m
        for m in methods
    ]
    if pinned == methods:
        raise ConfigError("a fixed lambda needs a ppi++ method")
    return pinned

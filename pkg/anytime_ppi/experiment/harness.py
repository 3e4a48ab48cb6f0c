"""
Monte Carlo audit of time-uniform coverage and interval volume.

Replications are processed in fixed blocks of consecutive indices. Inside a
block one batched StreamState advances all replications together; blocks may
run on several workers and are summed in block order, so the metric table does
not depend on the number of jobs.
"""
from __future__ import annotations

import dataclasses
import re
import sys
from dataclasses import dataclass
from typing import Iterable, List, Optional, Sequence

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from tqdm import tqdm

from anytime_ppi.cs.core import CsConfig, radius_exact_gaussian
from anytime_ppi.cs.priors import Prior
from anytime_ppi.data.scenarios import Scenario, ScenarioKind
from anytime_ppi.logger.text_logger import get_logger, mute_current_process
from anytime_ppi.ppi.engine import EstimatorFlavor, EstimatorKind, invert
from anytime_ppi.ppi.loss import squared_loss
from anytime_ppi.stats.running_moments import StreamState
from anytime_ppi.utils.errors import ConfigError, InsufficientDataError, InvalidRatioError

logger = get_logger(__name__)

DEFAULT_BLOCK_SIZE = 100
METRIC_COLUMNS = ["scenario", "method", "n", "avg_volume", "cum_miscoverage"]
EXACT = "exact"
_METHOD_PATTERN = re.compile(r"^\s*([A-Za-z_+]+)\s*(?:\[\s*([A-Za-z_-]+)\s*\])?\s*$")


@dataclass(frozen=True)
class MethodSpec:
    """
    A confidence sequence to audit. ``flavor`` None is the exact sequence for
    Gaussian data with known standard deviation.
    """

    flavor: Optional[EstimatorFlavor]
    prior: Optional[Prior] = None

    def __post_init__(self):
        if self.flavor is None and self.prior is None:
            raise ConfigError("the exact sequence needs a prior")
        if self.flavor is not None and self.flavor.kind == EstimatorKind.CLASSICAL and self.prior is not None:
            raise ConfigError("the classical estimator cannot be prior-assisted")

    @property
    def exact(self) -> bool:
        return self.flavor is None

    @property
    def assisted(self) -> bool:
        return self.prior is not None and not self.exact

    @property
    def label(self) -> str:
        name = EXACT if self.exact else self.flavor.label
        return f"{name}[{self.prior.label}]" if self.prior is not None else name

    @property
    def power_tuned(self) -> bool:
        """Uses the variance estimator that requires N >= n."""
        if self.exact:
            return False
        flavor = self.flavor.resolved()
        return flavor.kind == EstimatorKind.PPI_PLUS and flavor.fixed_lambda is None


def check_pool_size(methods: Sequence[MethodSpec], n: int, n_unlabelled: int, cfg: CsConfig):
    """Power-tuned methods need at least as many unlabelled as labelled records."""
    if cfg.known_population or n_unlabelled >= n:
        return
    tuned = [m.label for m in methods if m.power_tuned]
    if tuned:
        raise InvalidRatioError(f"{tuned} need N >= n, got N={n_unlabelled} unlabelled for n={n} labelled")


@dataclass
class MetricRow:
    scenario: str
    method: str
    n: int
    avg_volume: float
    cum_miscoverage: float


def parse_method(
    text: str,
    prior_scale: Optional[float] = None,
    dof: Optional[float] = None,
    default_prior: Optional[str] = None,
) -> MethodSpec:
    """
    Parse ``classical``, ``ppi``, ``ppi++`` or ``exact``, optionally followed by
    a prior in brackets (``ppi++[student-t]``). ``default_prior`` applies to the
    prediction-powered methods given without brackets.
    """
    match = _METHOD_PATTERN.match(text)
    if match is None:
        raise ConfigError(f"Cannot parse method '{text}'")
    name, prior_name = match.group(1).lower(), match.group(2)
    flavor = None if name == EXACT else EstimatorFlavor.from_name(name)
    if prior_name is None and default_prior is not None:
        if flavor is None or flavor.kind != EstimatorKind.CLASSICAL:
            prior_name = default_prior
    prior = Prior.from_name(prior_name, scale=prior_scale, dof=dof) if prior_name else None
    return MethodSpec(flavor, prior)


def parse_methods(texts: Iterable[str], **kwargs) -> List[MethodSpec]:
    methods = []
    for text in texts:
        methods.extend(parse_method(part, **kwargs) for part in text.split(",") if part.strip())
    labels = [m.label for m in methods]
    if len(set(labels)) != len(labels):
        raise ConfigError(f"duplicated methods in {labels}")
    if not methods:
        raise ConfigError("no method given")
    return methods


def _interval(state: StreamState, method: MethodSpec, cfg: CsConfig, known_sigma: Optional[float]):
    if method.exact:
        if known_sigma is None:
            raise ConfigError("the exact sequence needs data with a known standard deviation")
        center = state.mean_y
        return center, radius_exact_gaussian(state.n, center, known_sigma, method.prior, cfg.alpha)
    method_cfg = dataclasses.replace(cfg, prior=method.prior)
    interval = invert(state, squared_loss(), method.flavor, method_cfg, method.assisted)
    return interval.center, interval.radius


def audit_block(
    labels: np.ndarray,
    predictions: np.ndarray,
    pool: Optional[np.ndarray],
    theta_star,
    methods: Sequence[MethodSpec],
    cfg: CsConfig,
    known_sigma: Optional[float] = None,
):
    """
    Stream a block of replications and tally coverage failures and widths.

    :param labels: (reps, n_max) labels in stream order
    :param predictions: (reps, n_max) predictions of the labelled records
    :param pool: (reps, N) unlabelled predictions available from the start, or None
    :return: (fails, volume_sums, defined) arrays of shape (methods, n_max - start_n + 1)
    """
    reps, n_max = labels.shape
    start_n = cfg.start_n
    steps = n_max - start_n + 1
    state = StreamState.batch(reps)
    if pool is not None and pool.shape[-1]:
        state.extend_unlabelled(pool)

    failed = np.zeros((len(methods), reps), dtype=bool)
    fails = np.zeros((len(methods), steps), dtype=np.int64)
    volume = np.zeros((len(methods), steps))
    defined = np.zeros((len(methods), steps), dtype=np.int64)
    for i in range(n_max):
        state.push_labelled(labels[:, i], predictions[:, i])
        k = state.n - start_n
        if k < 0:
            continue
        for m, method in enumerate(methods):
            try:
                center, radius = _interval(state, method, cfg, known_sigma)
            except InsufficientDataError:
                fails[m, k] = failed[m].sum()
                continue
            radius = np.broadcast_to(radius, (reps,))
            failed[m] |= np.abs(center - theta_star) > radius
            fails[m, k] = failed[m].sum()
            volume[m, k] = np.sum(2 * radius)
            defined[m, k] = reps
    return fails, volume, defined


def make_blocks(reps: int, block_size: int = DEFAULT_BLOCK_SIZE) -> List[range]:
    if block_size < 1:
        raise ConfigError(f"block_size must be >= 1, got {block_size}")
    return [range(start, min(start + block_size, reps)) for start in range(0, reps, block_size)]


def run_blocks(fn, blocks: Sequence, jobs: int = 1, progress: bool = False, desc: str = ""):
    """Run ``fn(block, mute)`` over blocks, results in block order."""
    blocks = tqdm(blocks, desc=desc, disable=not progress, file=sys.stderr)
    if jobs == 1:
        return [fn(block, False) for block in blocks]
    return Parallel(n_jobs=jobs)(delayed(fn)(block, True) for block in blocks)


def aggregate(tallies, methods: Sequence[MethodSpec], reps: int, scenario_label: str, start_n: int) -> List[MetricRow]:
    fails = sum(t[0] for t in tallies)
    volume = sum(t[1] for t in tallies)
    defined = sum(t[2] for t in tallies)
    rows = []
    for m, method in enumerate(methods):
        with np.errstate(invalid="ignore", divide="ignore"):
            avg = np.where(defined[m] > 0, volume[m] / defined[m], np.nan)
        miss = fails[m] / reps
        rows.extend(
            MetricRow(scenario_label, method.label, start_n + k, float(avg[k]), float(miss[k]))
            for k in range(len(avg))
        )
    return rows


def _simulation_config(scenario: Scenario, cfg: CsConfig) -> CsConfig:
    cfg = dataclasses.replace(cfg, start_n=scenario.start_n)
    if scenario.kind == ScenarioKind.GAUSSIAN or scenario.n_unlabelled > 0 or cfg.known_population:
        return cfg
    mean_f = scenario.generate(0).population_mean_f
    logger.info(f"{scenario.label}: no unlabelled pool, using the known E[f] = {mean_f:g}")
    return dataclasses.replace(cfg, population_mean_f=mean_f)


def _simulate_block(scenario: Scenario, methods, cfg: CsConfig, block: range, mute: bool):
    if mute:
        mute_current_process()
    streams = [scenario.generate(rep) for rep in block]
    labels = np.stack([s.labels for s in streams])
    predictions = np.stack([s.predictions for s in streams])
    pool = np.stack([s.pool for s in streams]) if scenario.n_unlabelled else None
    return audit_block(
        labels,
        predictions,
        pool,
        streams[0].theta_star,
        methods,
        cfg,
        known_sigma=streams[0].sigma,
    )


def run_replications(
    scenario: Scenario,
    methods: Sequence[MethodSpec],
    cfg: CsConfig,
    jobs: int = 1,
    block_size: int = DEFAULT_BLOCK_SIZE,
    progress: bool = False,
) -> List[MetricRow]:
    """Cumulative miscoverage and average width for n = start_n .. n_max."""
    if scenario.kind == ScenarioKind.GAUSSIAN:
        bad = [m.label for m in methods if not (m.exact or m.flavor.kind == EstimatorKind.CLASSICAL)]
        if bad:
            raise ConfigError(f"the gaussian scenario has no predictions, cannot run {bad}")
    elif any(m.exact for m in methods):
        raise ConfigError("the exact sequence only applies to the gaussian scenario")
    cfg = _simulation_config(scenario, cfg)
    check_pool_size(methods, scenario.n_max, scenario.n_unlabelled, cfg)
    blocks = make_blocks(scenario.reps, block_size)
    logger.info(
        f"Simulating {scenario.label}: {scenario.reps} replications in {len(blocks)} block(s), "
        f"methods {[m.label for m in methods]}"
    )

    def fn(block, mute):
        return _simulate_block(scenario, methods, cfg, block, mute)

    tallies = run_blocks(fn, blocks, jobs=jobs, progress=progress, desc=scenario.label)
    return aggregate(tallies, methods, scenario.reps, scenario.label, scenario.start_n)


def metrics_frame(rows: Sequence[MetricRow]) -> pd.DataFrame:
    return pd.DataFrame([dataclasses.asdict(r) for r in rows], columns=METRIC_COLUMNS)


def summary_frame(rows: Sequence[MetricRow]) -> pd.DataFrame:
    """The last row of every scenario/method pair."""
    frame = metrics_frame(rows)
    return frame.groupby(["scenario", "method"], sort=False).tail(1).reset_index(drop=True)

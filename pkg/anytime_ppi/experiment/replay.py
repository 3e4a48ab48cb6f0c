"""
Replay of a real label/prediction file.

Every replication shuffles the labelled records with its own generator, streams
the first ``n`` of them and puts the predictions of the remaining ones (plus any
record without a label, plus an optional separate unlabelled file) in the
unlabelled pool. The target is the mean label over the whole file.
"""
from __future__ import annotations

import os
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from anytime_ppi.cs.core import CsConfig
from anytime_ppi.data.io import LABEL_COLUMN, PREDICTION_COLUMN, load_table
from anytime_ppi.experiment.harness import (
    DEFAULT_BLOCK_SIZE,
    MetricRow,
    MethodSpec,
    aggregate,
    audit_block,
    check_pool_size,
    make_blocks,
    run_blocks,
)
from anytime_ppi.logger.text_logger import get_logger, mute_current_process
from anytime_ppi.stats.running_moments import StreamState
from anytime_ppi.utils.errors import ConfigError, DataError

logger = get_logger(__name__)


@dataclass
class ReplayData:
    labels: np.ndarray
    predictions: np.ndarray
    extra_pool: np.ndarray
    theta_star: float
    name: str = "data"

    @property
    def n_labelled(self) -> int:
        return len(self.labels)

    @property
    def n_available(self) -> int:
        return len(self.labels) + len(self.extra_pool)


def load_replay_data(data_path, unlabelled_path=None) -> ReplayData:
    table = load_table(data_path)
    labelled = table[LABEL_COLUMN].notna().to_numpy()
    labels = table.loc[labelled, LABEL_COLUMN].to_numpy(dtype=float)
    predictions = table.loc[labelled, PREDICTION_COLUMN].to_numpy(dtype=float)
    if len(labels) == 0:
        raise DataError(f"'{data_path}' has no labelled record")
    extra = [table.loc[~labelled, PREDICTION_COLUMN].to_numpy(dtype=float)]
    if unlabelled_path is not None:
        extra.append(load_table(unlabelled_path)[PREDICTION_COLUMN].to_numpy(dtype=float))
    theta_star = float(StreamState().extend(labels, predictions).mean_y)
    logger.info(
        f"Loaded {len(labels)} labelled and {sum(len(e) for e in extra)} unlabelled records, "
        f"theta* = full-file label mean = {theta_star:.6g}"
    )
    return ReplayData(
        labels=labels,
        predictions=predictions,
        extra_pool=np.concatenate(extra),
        theta_star=theta_star,
        name=os.path.basename(str(data_path)),
    )


def split_replication(data: ReplayData, n: int, n_unlabelled: int, rep_seed):
    """Shuffle with the replication's generator and split into stream and pool."""
    perm = np.random.default_rng(rep_seed).permutation(data.n_labelled)
    stream, rest = perm[:n], perm[n:]
    pool = np.concatenate([data.predictions[rest], data.extra_pool])[:n_unlabelled]
    return data.labels[stream], data.predictions[stream], pool


def _replay_block(data: ReplayData, n, n_unlabelled, base_seed, methods, cfg, block: range, mute: bool):
    if mute:
        mute_current_process()
    splits = [split_replication(data, n, n_unlabelled, (base_seed, rep)) for rep in block]
    labels, predictions, pools = (np.stack(parts) for parts in zip(*splits))
    return audit_block(labels, predictions, pools, data.theta_star, methods, cfg)


def replay(
    data: ReplayData,
    cfg: CsConfig,
    methods: Sequence[MethodSpec],
    reps: int,
    n: Optional[int] = None,
    n_unlabelled: Optional[int] = None,
    base_seed: int = 0,
    jobs: int = 1,
    block_size: int = DEFAULT_BLOCK_SIZE,
    progress: bool = False,
) -> List[MetricRow]:
    """
    :param n: labelled records streamed per replication, all labelled records by default
    :param n_unlabelled: pool size, everything not streamed by default
    """
    if any(m.exact for m in methods):
        raise ConfigError("the exact sequence needs a known standard deviation, not available in replay")
    if reps < 1:
        raise ConfigError(f"reps must be >= 1, got {reps}")
    n = data.n_labelled if n is None else int(n)
    if n > data.n_labelled:
        raise ConfigError(f"n={n} exceeds the {data.n_labelled} labelled records")
    if n < cfg.start_n:
        raise ConfigError(f"n={n} must be >= start_n={cfg.start_n}")
    n_unlabelled = data.n_available - n if n_unlabelled is None else int(n_unlabelled)
    if n_unlabelled < 0 or n + n_unlabelled > data.n_available:
        raise ConfigError(
            f"n + N = {n + n_unlabelled} exceeds the {data.n_available} available records"
        )
    check_pool_size(methods, n, n_unlabelled, cfg)
    if cfg.population_mean_f is not None:
        logger.warning("population_mean_f given, the unlabelled pool is ignored")
    label = f"replay({data.name})"
    blocks = make_blocks(reps, block_size)
    logger.info(f"Replaying {label}: n={n}, N={n_unlabelled}, {reps} replications")

    def fn(block, mute):
        return _replay_block(data, n, n_unlabelled, base_seed, methods, cfg, block, mute)

    tallies = run_blocks(fn, blocks, jobs=jobs, progress=progress, desc=label)
    return aggregate(tallies, methods, reps, label, cfg.start_n)


def replay_file(data_path, cfg: CsConfig, methods, reps: int, unlabelled_path=None, **kwargs) -> List[MetricRow]:
    return replay(load_replay_data(data_path, unlabelled_path), cfg, methods, reps, **kwargs)


import sys
from copy import deepcopy
from typing import Optional

import pandas as pd

from anytime_ppi.experiment.harness import (
    DEFAULT_BLOCK_SIZE,
    metrics_frame,
    run_replications,
    summary_frame,
)
from anytime_ppi.experiment.utils import (
    build_cs_config,
    build_methods,
    build_scenario,
    parse_params,
)
from anytime_ppi.logger.text_logger import get_logger
from anytime_ppi.utils.errors import ConfigError
from anytime_ppi.utils.utils import write_yaml

logger = get_logger(__name__)


class Run:
    """One simulation: a scenario audited for a list of methods."""

    def __init__(self):
        self.params = None
        self.scenario = None
        self.cfg = None
        self.methods = None
        self.jobs = 1
        self.block_size = DEFAULT_BLOCK_SIZE
        self.progress = False
        self.metrics: Optional[pd.DataFrame] = None

    def parse_params(self, params: dict):
        self.params = deepcopy(params)
        scenario, cs, methods, prior, run = parse_params(self.params)
        self.scenario = build_scenario(scenario)
        self.cfg = build_cs_config(cs)
        self.methods = build_methods(
            methods,
            t_star=self.cfg.t_star,
            prior=prior.get("name"),
            prior_scale=prior.get("scale"),
            dof=prior.get("dof"),
        )
        unknown = sorted(set(run) - {"jobs", "block_size", "progress"})
        if unknown:
            raise ConfigError(f"Unknown key(s) {unknown} in 'run'")
        self.jobs = int(run.get("jobs", self.jobs))
        self.block_size = int(run.get("block_size", self.block_size))
        self.progress = bool(run.get("progress", self.progress))

    def init(self, params: dict):
        logger.info("Parameters: ")
        write_yaml(params, file=sys.stderr)
        self.parse_params(params)

    def launch(self) -> pd.DataFrame:
        rows = run_replications(
            self.scenario,
            self.methods,
            self.cfg,
            jobs=self.jobs,
            block_size=self.block_size,
            progress=self.progress,
        )
        self.metrics = metrics_frame(rows)
        logger.info(f"Summary at n={self.scenario.n_max}:\n{summary_frame(rows).to_string(index=False)}")
        return self.metrics

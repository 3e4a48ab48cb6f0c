from __future__ import annotations

import copy
import gc
import sys
from typing import List, Mapping, Optional

import pandas as pd
from easydict import EasyDict

from anytime_ppi.data.io import write_table
from anytime_ppi.experiment.harness import METRIC_COLUMNS
from anytime_ppi.experiment.run import Run
from anytime_ppi.logger.text_logger import get_logger
from anytime_ppi.utils.errors import ConfigError
from anytime_ppi.utils.grid import make_grid
from anytime_ppi.utils.manifest import RunManifest, command_line
from anytime_ppi.utils.utils import ensure_parent_dir, get_timestamp, load_yaml, nested_dict_update

logger = get_logger(__name__)

EXPERIMENT_COLUMNS = ["grid", "run"] + METRIC_COLUMNS


class ExpSettings(EasyDict):
    def __init__(self, *args, **kwargs):
        self.name = ""
        self.group = ""
        self.continue_with_errors = True
        self.out = None
        self.timestamp = get_timestamp()
        super().__init__(*args, **kwargs)


class GridSummary:
    def __init__(self, total_runs, runs_per_grid):
        self.total_runs = total_runs
        self.runs_per_grid = runs_per_grid


class Experimenter:
    EXP_FINISH_SEP = "#" * 50 + " FINISHED " + "#" * 50 + "\n"
    EXP_CRASHED_SEP = "|\\" * 50 + "CRASHED" + "|\\" * 50 + "\n"

    def __init__(self):
        self.gs = None
        self.exp_settings = ExpSettings()
        self.grids = None
        self.results: List[pd.DataFrame] = []
        self.crashed: List[tuple] = []

    def calculate_runs(self, settings: Mapping):
        if "parameters" not in settings:
            raise ConfigError("the experiment file needs a 'parameters' block")
        base_grid = settings["parameters"]
        other_grids = settings.get("other_grids") or []
        self.exp_settings = ExpSettings(settings.get("experiment") or {})

        complete_grids = [base_grid]
        complete_grids += [
            nested_dict_update(copy.deepcopy(base_grid), other_run)
            for other_run in other_grids
        ]
        logger.info(f"There are {len(complete_grids)} grids")

        self.grids, dot_elements = zip(
            *[make_grid(grid, return_cartesian_elements=True) for grid in complete_grids]
        )
        for i, grid in enumerate(self.grids):
            logger.info(f"Found {len(grid)} runs from grid {i}")
        self.gs = GridSummary(
            total_runs=sum(len(grid) for grid in self.grids),
            runs_per_grid=[len(grid) for grid in self.grids],
        )
        print_preview(self, self.gs, self.grids, dot_elements)
        return self.gs, self.grids, dot_elements

    def execute_runs_generator(self):
        done = 0
        for i, grid in enumerate(self.grids):
            for j, params in enumerate(grid):
                logger.info(f"Running grid {i} out of {len(self.grids) - 1}")
                logger.info(f"Running run {j} out of {len(grid) - 1} ({done} / {self.gs.total_runs - 1})")
                done += 1
                try:
                    run = Run()
                    run.init({"experiment": {**self.exp_settings}, **params})
                    metrics = run.launch()
                    metrics.insert(0, "run", j)
                    metrics.insert(0, "grid", i)
                    self.results.append(metrics)
                    logger.info(self.EXP_FINISH_SEP)
                    gc.collect()
                    yield i, j, metrics
                except Exception as ex:
                    logger.error(f"Experiment {i} run {j} failed with error {ex}")
                    logger.error(self.EXP_CRASHED_SEP)
                    if not self.exp_settings.continue_with_errors:
                        raise ex
                    self.crashed.append((i, j, ex))
                    yield i, j, None

    def execute_runs(self) -> pd.DataFrame:
        for _ in self.execute_runs_generator():
            pass
        if self.crashed:
            logger.warning(f"{len(self.crashed)} run(s) crashed: {[(i, j) for i, j, _ in self.crashed]}")
        if not self.results:
            return pd.DataFrame(columns=EXPERIMENT_COLUMNS)
        return pd.concat(self.results, ignore_index=True)


def print_preview(experimenter, grid_summary, grids, cartesian_elements):
    summary_series = pd.concat(
        [
            pd.Series(grid_summary.__dict__, dtype=object),
            pd.Series(dict(experimenter.exp_settings), dtype=object),
        ]
    )
    summary_string = f"\n{summary_series.to_string()}\n"

    dfs = [
        pd.DataFrame(
            [(key, ", ".join(map(str, values))) for key, values in dot_element],
            columns=[f"Grid {i}", f"N. runs: {len(grid)}"],
        )
        for i, (dot_element, grid) in enumerate(zip(cartesian_elements, grids))
    ]
    mark_grids = "\n\n".join(df.to_string(index=False) for df in dfs)
    mark_grids = "Varying parameters for each grid \n" + mark_grids
    logger.info(f"\n{summary_string}\n{mark_grids}")


def experiment(param_path: str = "parameters.yaml", preview: bool = False, out: Optional[str] = None):
    """
    Run every grid point of a YAML experiment file and write one metric table.
    :return: the combined table, None on preview
    """
    logger.info("Running experiment")
    settings = load_yaml(param_path)
    logger.info(f"Loaded parameters from {param_path}")

    experimenter = Experimenter()
    experimenter.calculate_runs(settings)
    if preview:
        return None
    table = experimenter.execute_runs()
    out = out or experimenter.exp_settings.out
    RunManifest(
        command_line(), {"parameters": param_path, **experimenter.exp_settings}
    ).emit(out)
    if out:
        ensure_parent_dir(out)
        write_table(table, out)
        logger.info(f"Wrote {len(table)} rows to {out}")
    else:
        write_table(table, sys.stdout)
    return table

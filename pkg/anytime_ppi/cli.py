import dataclasses
import functools
import math
from typing import Optional

import click
import numpy as np
import pandas as pd
from click.core import ParameterSource

from anytime_ppi import __version__
from anytime_ppi.cs.core import CsConfig, rho_opt, tau_heuristic
from anytime_ppi.data.io import iter_observations, write_table
from anytime_ppi.data.scenarios import Scenario
from anytime_ppi.experiment.experiment import experiment as run_experiment
from anytime_ppi.experiment.harness import DEFAULT_BLOCK_SIZE, metrics_frame, run_replications, summary_frame
from anytime_ppi.experiment.replay import load_replay_data, replay
from anytime_ppi.experiment.utils import DEFAULT_METHODS, build_methods
from anytime_ppi.logger.text_logger import AutoLoggerConfig, get_logger
from anytime_ppi.ppi.engine import GridRegion, invert
from anytime_ppi.ppi.loss import LossKind, build_loss
from anytime_ppi.stats.running_moments import StreamState
from anytime_ppi.utils.errors import (
    AnytimePPIError,
    ConfigError,
    DataError,
    InsufficientDataError,
    InvalidRatioError,
)
from anytime_ppi.utils.manifest import RunManifest, command_line
from anytime_ppi.utils.utils import ensure_parent_dir, load_config

logger = get_logger(__name__)

INTERVAL_COLUMNS = ["n", "t_total", "center", "lower", "upper", "width"]
ROWS_PER_FLUSH = 1000
PRIOR_CHOICES = ["none", "gaussian", "laplace", "student-t", "improper"]
METHOD_CHOICES = ["classical", "ppi", "ppi++"]


def handle_errors(fn):
    """Turn domain errors into their exit codes."""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except AnytimePPIError as e:
            logger.error(f"{type(e).__name__}: {e}")
            raise click.exceptions.Exit(e.exit_code) from e

    return wrapper


def _cast(ctx: click.Context, name: str, value):
    param = next(p for p in ctx.command.params if p.name == name)
    if param.multiple and isinstance(value, str):
        value = [value]
    try:
        return param.type_cast_value(ctx, value)
    except click.BadParameter as e:
        raise ConfigError(f"config value for '{name}': {e.message}") from e


def effective_params(ctx: click.Context) -> dict:
    """Flags > ``--config`` file > defaults."""
    params = dict(ctx.params)
    config_path = params.pop("config", None)
    if config_path is None:
        return params
    config = load_config(config_path)
    unknown = sorted(set(config) - set(params))
    if unknown:
        raise ConfigError(f"Unknown key(s) {unknown} in {config_path}")
    for key, value in config.items():
        if ctx.get_parameter_source(key) in (ParameterSource.DEFAULT, ParameterSource.DEFAULT_MAP):
            params[key] = _cast(ctx, key, value)
    logger.info(f"Loaded configuration from {config_path}")
    return params


def _resolve_seed(seed: Optional[int]) -> int:
    if seed is not None:
        return seed
    seed = int(np.random.SeedSequence().entropy)
    logger.info(f"No seed given, generated seed {seed}")
    return seed


def _cs_config(params: dict, t_star: Optional[int] = None) -> CsConfig:
    return CsConfig(
        alpha=params["alpha"],
        delta=params["delta"],
        rho=params["rho"],
        t_star=t_star or params["t_star"] or CsConfig.t_star,
        start_n=params.get("start_n") or CsConfig.start_n,
        population_mean_f=params["population_mean_f"],
        assume_infinite_unlabelled=params["assume_infinite_unlabelled"],
    )


def _parse_grid(text: Optional[str]):
    if text is None:
        return None
    parts = text.split(":")
    try:
        lo, hi, steps = float(parts[0]), float(parts[1]), int(parts[2])
    except (ValueError, IndexError) as e:
        raise ConfigError(f"--grid expects lo:hi:steps, got '{text}'") from e
    if len(parts) != 3 or not (math.isfinite(lo) and math.isfinite(hi)):
        raise ConfigError(f"--grid expects lo:hi:steps, got '{text}'")
    return lo, hi, steps


def cs_options(fn):
    """Options shared by the commands that build confidence sequences."""
    options = [
        click.option("--alpha", default=0.1, show_default=True, help="Error level"),
        click.option("--delta", type=float, default=None, help="Share of alpha for the unlabelled sequence (alpha/10)"),
        click.option("--rho", type=float, default=None, help="Mixing parameter, tuned at --t-star if absent"),
        click.option("--t-star", type=int, default=None, help="Time at which rho and the prior scale are tuned (100)"),
        click.option("--prior", type=click.Choice(PRIOR_CHOICES, case_sensitive=False), default="none", show_default=True),
        click.option("--prior-scale", type=float, default=None, help="Prior scale, 1/sqrt(t*) if absent"),
        click.option("--dof", type=float, default=None, help="Degrees of freedom of the student-t prior (3)"),
        click.option("--population-mean-f", type=float, default=None, help="Known population mean of the predictions"),
        click.option("--assume-infinite-unlabelled", is_flag=True, default=False, help="Treat the unlabelled pool as the population"),
        click.option("--config", type=click.Path(dir_okay=False), default=None, help="YAML or key=value configuration file"),
    ]
    for option in reversed(options):
        fn = option(fn)
    return fn


def _prior_name(params: dict) -> Optional[str]:
    return None if params["prior"] == "none" else params["prior"]


@click.group()
@click.version_option(__version__)
@click.option(
    "--log-level",
    type=click.Choice(["DEBUG", "INFO", "WARNING", "ERROR"], case_sensitive=False),
    default=None,
    help="Console log level (CONSOLE_LOG_LEVEL otherwise)",
)
def main(log_level):
    if log_level is not None:
        AutoLoggerConfig.set_console_level(log_level)
    log_file = AutoLoggerConfig.get_log_file_path()
    if log_file is not None:
        logger.debug(f"Logging to {log_file}")


def _region_row(state: StreamState, region) -> dict:
    if isinstance(region, GridRegion):
        hull = region.hull
        lower, upper = hull if hull is not None else (math.nan, math.nan)
        center = (lower + upper) / 2
        width = region.volume
    else:
        center, lower, upper, width = region.center, region.lower, region.upper, region.width
    return {
        "n": state.n,
        "t_total": state.t_total,
        "center": float(center),
        "lower": float(lower),
        "upper": float(upper),
        "width": float(width),
    }


@main.command("analyze")
@click.option("--data", required=True, help="CSV with columns label,prediction (empty label = unlabelled)")
@click.option("--out", default="-", show_default=True, help="Output CSV, - for stdout")
@click.option("--manifest", default=None, help="Manifest file when writing to stdout")
@click.option("--method", type=click.Choice(METHOD_CHOICES, case_sensitive=False), default="classical", show_default=True)
@click.option("--fixed-lambda", type=float, default=None, help="Pin the ppi++ coefficient")
@click.option("--loss", type=click.Choice([str(k) for k in LossKind]), default="squared", show_default=True)
@click.option("--subgradient", default=None, help="module:function of a generic loss subgradient")
@click.option("--grid", default=None, help="lo:hi:steps, invert on a grid of candidate values")
@click.option("--pool-labelled", is_flag=True, default=False, help="Predictions of labelled records join the unlabelled pool")
@click.option("--n-unlabelled", type=int, default=None, help="Pool size at which the unlabelled sequence is tuned (pool size at the first labelled record)")
@cs_options
@click.pass_context
@handle_errors
def analyze(ctx, **_):
    """Stream a data file and print the confidence interval after every label."""
    params = effective_params(ctx)
    cfg = _cs_config(params)
    prior = _prior_name(params)
    text = params["method"] if prior is None else f"{params['method']}[{prior}]"
    (method,) = build_methods(
        [text],
        t_star=cfg.t_star,
        prior_scale=params["prior_scale"],
        dof=params["dof"],
        fixed_lambda=params["fixed_lambda"],
    )
    cfg = dataclasses.replace(cfg, prior=method.prior, pool_t_star=params["n_unlabelled"])
    loss = build_loss(params["loss"], params["subgradient"])
    grid = _parse_grid(params["grid"])
    state = StreamState(
        pool_labelled=params["pool_labelled"],
        buffered=loss.kind != LossKind.SQUARED,
    )
    RunManifest(command_line(), {**params, "method_label": method.label}).emit(params["out"], params["manifest"])

    rows = []
    header = True
    with click.open_file(params["out"], "w", encoding="utf-8") as stream:
        for index, (line, obs) in enumerate(iter_observations(params["data"])):
            try:
                state.update(obs, index)
            except DataError as e:
                raise DataError(str(e), line=line) from e
            if not obs.labelled:
                continue
            if method.assisted and cfg.pool_t_star is None and not cfg.known_population and state.N >= 1:
                # tuned once, the live pool keeps growing
                cfg = dataclasses.replace(cfg, pool_t_star=state.N)
                logger.info(f"Unlabelled sequence tuned at N={state.N}")
            try:
                region = invert(state, loss, method.flavor, cfg, method.assisted, grid)
            except InsufficientDataError as e:
                logger.debug(f"no interval at n={state.n}: {e}")
                continue
            except InvalidRatioError:
                if rows:
                    write_table(pd.DataFrame(rows, columns=INTERVAL_COLUMNS), stream, header=header)
                raise
            rows.append(_region_row(state, region))
            if len(rows) >= ROWS_PER_FLUSH:
                write_table(pd.DataFrame(rows, columns=INTERVAL_COLUMNS), stream, header=header)
                rows, header = [], False
        if rows or header:
            write_table(pd.DataFrame(rows, columns=INTERVAL_COLUMNS), stream, header=header)
    logger.info(f"Processed {state.t_total} records, {state.n} labelled")


def _write_metrics(rows, out: str, n_max: int):
    frame = metrics_frame(rows)
    if out != "-":
        ensure_parent_dir(out)
    with click.open_file(out, "w", encoding="utf-8") as stream:
        write_table(frame, stream)
    summary = summary_frame(rows).to_string(index=False)
    click.echo(f"Summary at n={n_max}:\n{summary}", err=out == "-")


@main.command("simulate")
@click.option("--scenario", type=click.Choice(["noisy", "biased", "gaussian"]), required=True)
@click.option("--sigma-y", default=0.1, show_default=True, help="Prediction noise (noisy)")
@click.option("--upsilon", default=0.0, show_default=True, help="Prediction bias (biased)")
@click.option("--df", default=math.inf, show_default=True, help="Student-t degrees of freedom of the label noise (biased)")
@click.option("--noise-scale", default=10.0, show_default=True, help="Scale of the label noise (biased)")
@click.option("--mean", default=0.0, show_default=True, help="Mean (gaussian)")
@click.option("--sigma", default=1.0, show_default=True, help="Known standard deviation (gaussian)")
@click.option("--n-max", default=1000, show_default=True)
@click.option("--start-n", default=40, show_default=True)
@click.option("--n-unlabelled", default=0, show_default=True, help="Unlabelled pool size, 0 for a known E[f]")
@click.option("--reps", default=100, show_default=True)
@click.option("--seed", type=int, default=None)
@click.option("--method", multiple=True, default=DEFAULT_METHODS, show_default=True, help="Method, e.g. ppi++[student-t]; repeatable")
@click.option("--jobs", default=1, show_default=True, help="Parallel workers over replication blocks")
@click.option("--block-size", default=DEFAULT_BLOCK_SIZE, show_default=True)
@click.option("--progress", is_flag=True, default=False)
@click.option("--out", default="-", show_default=True)
@click.option("--manifest", default=None)
@cs_options
@click.pass_context
@handle_errors
def simulate(ctx, **_):
    """Monte Carlo audit of coverage and width on a synthetic scenario."""
    params = effective_params(ctx)
    seed = _resolve_seed(params["seed"])
    scenario = Scenario(
        kind=params["scenario"],
        sigma_y=params["sigma_y"],
        upsilon=params["upsilon"],
        dof=params["df"],
        noise_scale=params["noise_scale"],
        mean=params["mean"],
        sigma=params["sigma"],
        n_max=params["n_max"],
        reps=params["reps"],
        base_seed=seed,
        start_n=params["start_n"],
        n_unlabelled=params["n_unlabelled"],
    )
    cfg = _cs_config(params)
    methods = build_methods(
        params["method"],
        t_star=cfg.t_star,
        prior=_prior_name(params),
        prior_scale=params["prior_scale"],
        dof=params["dof"],
    )
    RunManifest(command_line(), {**params, "methods": [m.label for m in methods]}, {"base_seed": seed}).emit(
        params["out"], params["manifest"]
    )
    rows = run_replications(
        scenario,
        methods,
        cfg,
        jobs=params["jobs"],
        block_size=params["block_size"],
        progress=params["progress"],
    )
    _write_metrics(rows, params["out"], scenario.n_max)


@main.command("replay")
@click.option("--data", required=True, help="CSV with columns label,prediction")
@click.option("--unlabelled", default=None, help="Extra CSV whose predictions join the unlabelled pool")
@click.option("--n", "n_labelled", type=int, default=None, help="Labelled records per replication (all)")
@click.option("--n-unlabelled", type=int, default=None, help="Unlabelled pool size (the rest)")
@click.option("--start-n", default=40, show_default=True)
@click.option("--reps", default=100, show_default=True)
@click.option("--seed", type=int, default=None)
@click.option("--method", multiple=True, default=DEFAULT_METHODS, show_default=True)
@click.option("--jobs", default=1, show_default=True)
@click.option("--block-size", default=DEFAULT_BLOCK_SIZE, show_default=True)
@click.option("--progress", is_flag=True, default=False)
@click.option("--out", default="-", show_default=True)
@click.option("--manifest", default=None)
@cs_options
@click.pass_context
@handle_errors
def replay_cmd(ctx, **_):
    """Coverage and width over random splits of a real data file."""
    params = effective_params(ctx)
    seed = _resolve_seed(params["seed"])
    data = load_replay_data(params["data"], params["unlabelled"])
    n = params["n_labelled"] or data.n_labelled
    # rho and the prior scale are tuned at the largest n unless t* is given
    cfg = _cs_config(params, t_star=params["t_star"] or n)
    methods = build_methods(
        params["method"],
        t_star=cfg.t_star,
        prior=_prior_name(params),
        prior_scale=params["prior_scale"],
        dof=params["dof"],
    )
    RunManifest(
        command_line(),
        {**params, "methods": [m.label for m in methods], "theta_star": data.theta_star, "theta_star_rule": "full-file label mean"},
        {"base_seed": seed},
    ).emit(params["out"], params["manifest"])
    rows = replay(
        data,
        cfg,
        methods,
        reps=params["reps"],
        n=n,
        n_unlabelled=params["n_unlabelled"],
        base_seed=seed,
        jobs=params["jobs"],
        block_size=params["block_size"],
        progress=params["progress"],
    )
    _write_metrics(rows, params["out"], n)


@main.command("tune")
@click.option("--t-star", default=100, show_default=True)
@click.option("--alpha", default=0.1, show_default=True)
@handle_errors
def tune(t_star, alpha):
    """Print rho and the prior scale tau tuned at t*."""
    click.echo(f"rho={rho_opt(t_star, alpha):.12g}")
    click.echo(f"tau={tau_heuristic(t_star):.12g}")


@main.command("experiment")
@click.option("--parameters", default="parameters.yaml", help="Path to the parameters file")
@click.option("--out", default=None, help="Output CSV, overrides experiment.out")
@click.option("--preview", is_flag=True, default=False, help="Only show the grids")
@handle_errors
def experiment(parameters, out, preview):
    """Run a YAML grid of simulations."""
    run_experiment(param_path=parameters, preview=preview, out=out)

import numpy as np
import pandas as pd
import pytest

from anytime_ppi.cs.core import CsConfig
from anytime_ppi.data.scenarios import Scenario
from anytime_ppi.experiment.harness import (
    METRIC_COLUMNS,
    metrics_frame,
    parse_method,
    parse_methods,
    run_replications,
    summary_frame,
)
from anytime_ppi.experiment.replay import load_replay_data, replay, split_replication
from anytime_ppi.experiment.utils import build_methods
from anytime_ppi.utils.errors import ConfigError, InvalidRatioError


def _frame(scenario, texts, cfg=None, **kwargs):
    methods = build_methods(texts, t_star=100)
    return metrics_frame(run_replications(scenario, methods, cfg or CsConfig(), **kwargs))


def test_one_row_per_method_and_n():
    frame = _frame(Scenario("noisy", sigma_y=0.8, n_max=500, reps=3), ["classical", "ppi++"])
    assert list(frame.columns) == METRIC_COLUMNS
    assert len(frame) == 2 * 461
    for _, group in frame.groupby("method"):
        assert group["n"].tolist() == list(range(40, 501))


def test_miscoverage_is_cumulative():
    frame = _frame(Scenario("noisy", sigma_y=3.0, n_max=200, reps=20, start_n=10), ["classical", "ppi", "ppi++"])
    for _, group in frame.groupby("method"):
        miss = group["cum_miscoverage"].to_numpy()
        assert np.all(np.diff(miss) >= 0)
        assert np.all((miss >= 0) & (miss <= 1))
        assert np.all(group["avg_volume"] > 0)


def test_single_replication():
    frame = _frame(Scenario("biased", upsilon=2.0, dof=5.0, n_max=80, reps=1), ["ppi++"])
    assert set(frame["cum_miscoverage"]).issubset({0.0, 1.0})


def test_results_do_not_depend_on_jobs():
    scenario = Scenario("noisy", sigma_y=0.8, n_max=120, reps=6)
    serial = _frame(scenario, ["classical", "ppi++[gaussian]"], jobs=1, block_size=2)
    parallel = _frame(scenario, ["classical", "ppi++[gaussian]"], jobs=2, block_size=2)
    pd.testing.assert_frame_equal(serial, parallel, check_exact=True)


def test_results_do_not_depend_on_block_size():
    scenario = Scenario("noisy", sigma_y=0.8, n_max=100, reps=7)
    a = _frame(scenario, ["ppi"], block_size=1)
    b = _frame(scenario, ["ppi"], block_size=100)
    pd.testing.assert_frame_equal(a, b, check_exact=False, rtol=1e-12)


def test_pool_scenario_runs_the_unlabelled_sequence():
    scenario = Scenario("noisy", sigma_y=0.8, n_max=60, reps=4, n_unlabelled=600)
    rows = run_replications(scenario, build_methods(["ppi++", "ppi++[laplace]"], t_star=100), CsConfig())
    summary = summary_frame(rows)
    assert summary["method"].tolist() == ["ppi++", "ppi++[laplace]"]
    assert summary["n"].tolist() == [60, 60]


def test_method_family_checks():
    with pytest.raises(ConfigError):
        _frame(Scenario("gaussian", n_max=50, reps=2), ["ppi"])
    with pytest.raises(ConfigError):
        _frame(Scenario("noisy", n_max=50, reps=2), ["exact[gaussian]"])


@pytest.mark.slow
def test_exact_gaussian_sequence_is_valid():
    scenario = Scenario("gaussian", mean=0.0, sigma=1.0, n_max=10_000, reps=2000)
    methods = parse_methods(["exact[gaussian]"], prior_scale=0.1)
    frame = metrics_frame(run_replications(scenario, methods, CsConfig(alpha=0.1)))
    assert frame["cum_miscoverage"].iloc[-1] <= 0.1 + 2 * np.sqrt(0.09 / 2000)


@pytest.mark.slow
def test_power_tuned_sequence_covers():
    scenario = Scenario("noisy", sigma_y=0.8, n_max=400, reps=200)
    frame = _frame(scenario, ["ppi++", "ppi++[gaussian]"])
    final = frame.groupby("method")["cum_miscoverage"].last()
    assert (final <= 0.2).all()
    widths = frame.groupby("method")["avg_volume"].last()
    assert widths["ppi++[gaussian]"] > 0


def test_parse_method():
    m = parse_method("ppi++[student-t]", prior_scale=0.1)
    assert m.assisted
    assert m.label == "ppi++[student-t]"
    assert m.prior.dof == 3.0
    assert parse_method(" ppi ").label == "ppi"
    assert parse_method("classical", default_prior="gaussian", prior_scale=0.1).prior is None
    assert parse_method("ppi", default_prior="gaussian", prior_scale=0.1).label == "ppi[gaussian]"
    assert parse_method("exact[improper]").exact


@pytest.mark.parametrize("text", ["exact", "classical[gaussian]", "ppi++[", "ppi[gaussian", "bayes"])
def test_parse_method_rejects(text):
    with pytest.raises(ConfigError):
        parse_method(text, prior_scale=0.1)


def test_parse_methods():
    methods = parse_methods(["classical,ppi", "ppi++"])
    assert [m.label for m in methods] == ["classical", "ppi", "ppi++"]
    with pytest.raises(ConfigError):
        parse_methods(["ppi,ppi"])
    with pytest.raises(ConfigError):
        parse_methods([" , "])


def test_build_methods_resolves_scale_and_lambda():
    methods = build_methods(["ppi++[gaussian]"], t_star=400)
    assert methods[0].prior.scale == pytest.approx(0.05)
    pinned = build_methods(["ppi", "ppi++"], t_star=100, fixed_lambda=0.5)
    assert [m.label for m in pinned] == ["ppi", "ppi++(lambda=0.5)"]
    with pytest.raises(ConfigError):
        build_methods(["ppi"], t_star=100, fixed_lambda=0.5)


def _replay_file(tmp_path, labels, predictions, unlabelled=()):
    lines = ["label,prediction"]
    lines += [f"{float(y)!r},{float(f)!r}" for y, f in zip(labels, predictions)]
    lines += [f",{float(f)!r}" for f in unlabelled]
    path = tmp_path / "replay.csv"
    path.write_text("\n".join(lines) + "\n")
    return str(path)


def test_split_uses_every_labelled_row(rng, tmp_path):
    labels = rng.normal(size=30)
    data = load_replay_data(_replay_file(tmp_path, labels, labels + 0.1, [5.0, 6.0]))
    assert data.n_labelled == 30
    assert data.n_available == 32
    assert data.theta_star == pytest.approx(labels.mean())
    y, f, pool = split_replication(data, 30, 2, (0, 0))
    np.testing.assert_array_equal(np.sort(y), np.sort(labels))
    np.testing.assert_allclose(f, y + 0.1)
    np.testing.assert_array_equal(pool, [5.0, 6.0])
    y, f, pool = split_replication(data, 10, 22, (0, 1))
    assert len(pool) == 22
    np.testing.assert_allclose(np.sort(np.concatenate([y, pool[:20] - 0.1])), np.sort(labels), atol=1e-12)


def test_replay_identical_rows(tmp_path):
    data = load_replay_data(_replay_file(tmp_path, [1.0] * 100, [1.0] * 100))
    methods = build_methods(["classical", "ppi", "ppi++"], t_star=50)
    frame = metrics_frame(replay(data, CsConfig(t_star=50), methods, reps=3, n=50))
    assert len(frame) == 3 * 11
    assert (frame["cum_miscoverage"] == 0).all()
    assert (frame["avg_volume"] == 0).all()
    assert frame["scenario"].iloc[0] == "replay(replay.csv)"


def test_replay_is_reproducible(rng, tmp_path):
    labels = rng.normal(size=200)
    data = load_replay_data(_replay_file(tmp_path, labels, labels + rng.normal(size=200)))
    methods = build_methods(["ppi++"], t_star=60)
    a = metrics_frame(replay(data, CsConfig(t_star=60), methods, reps=4, n=60, base_seed=3))
    b = metrics_frame(replay(data, CsConfig(t_star=60), methods, reps=4, n=60, base_seed=3, jobs=2, block_size=1))
    pd.testing.assert_frame_equal(a, b, check_exact=False, rtol=1e-12)


def test_replay_checks(rng, tmp_path):
    labels = rng.normal(size=50)
    data = load_replay_data(_replay_file(tmp_path, labels, labels))
    methods = build_methods(["ppi"], t_star=50)
    with pytest.raises(ConfigError):
        replay(data, CsConfig(), methods, reps=2, n=51)
    with pytest.raises(ConfigError):
        replay(data, CsConfig(), methods, reps=2, n=20)
    with pytest.raises(ConfigError):
        replay(data, CsConfig(), methods, reps=2, n=45, n_unlabelled=10)
    with pytest.raises(ConfigError):
        replay(data, CsConfig(), methods, reps=0, n=45)
    with pytest.raises(ConfigError):
        replay(data, CsConfig(), parse_methods(["exact[improper]"]), reps=2, n=45)


def test_power_tuning_adapts_to_prediction_quality():
    methods = ["classical", "ppi", "ppi++"]
    noisy = _frame(Scenario("noisy", sigma_y=3.0, n_max=200, reps=100), methods)
    width = noisy[noisy["n"] == 200].set_index("method")["avg_volume"]
    assert width["ppi++"] <= 1.05 * width["classical"]
    assert width["ppi"] >= 1.15 * width["ppi++"]
    sharp = _frame(Scenario("noisy", sigma_y=0.1, n_max=200, reps=100), methods)
    width = sharp[sharp["n"] == 200].set_index("method")["avg_volume"]
    assert width["ppi++"] <= 0.25 * width["classical"]


def test_prior_assistance_depends_on_the_bias():
    methods = ["ppi++", "ppi++[gaussian]", "ppi++[student-t]"]
    widths = {}
    for upsilon in (0.0, 5.0):
        frame = _frame(Scenario("biased", upsilon=upsilon, n_max=100, reps=100), methods)
        widths[upsilon] = frame[frame["n"] == 100].set_index("method")["avg_volume"]
    assert widths[0.0]["ppi++[gaussian]"] < widths[0.0]["ppi++"]
    assert widths[5.0]["ppi++[gaussian]"] > widths[5.0]["ppi++[student-t]"]
    assert widths[5.0]["ppi++"] == pytest.approx(widths[0.0]["ppi++"], rel=0.03)


@pytest.mark.slow
@pytest.mark.parametrize("sigma_y", [0.1, 0.8, 3.0])
def test_asymptotic_sequences_stay_valid(sigma_y):
    frame = _frame(Scenario("noisy", sigma_y=sigma_y, n_max=1000, reps=1000), ["classical", "ppi", "ppi++"])
    assert (frame["cum_miscoverage"] <= 0.12).all()
    for _, group in frame.groupby("method"):
        width = group.set_index("n")["avg_volume"]
        assert width[1000] <= width[100] / 2


def test_power_tuning_needs_a_large_enough_pool(rng, tmp_path):
    scenario = Scenario("noisy", sigma_y=0.8, n_max=60, reps=2, n_unlabelled=30)
    with pytest.raises(InvalidRatioError):
        _frame(scenario, ["ppi", "ppi++"])
    assert len(_frame(scenario, ["classical", "ppi"])) == 2 * 21
    labels = rng.normal(size=100)
    data = load_replay_data(_replay_file(tmp_path, labels, labels + rng.normal(size=100)))
    methods = build_methods(["ppi++[gaussian]"], t_star=45)
    with pytest.raises(InvalidRatioError):
        replay(data, CsConfig(), methods, reps=2, n=45, n_unlabelled=20)
    frame = metrics_frame(replay(data, CsConfig(assume_infinite_unlabelled=True), methods, reps=2, n=45, n_unlabelled=20))
    assert np.isfinite(frame["avg_volume"]).all()

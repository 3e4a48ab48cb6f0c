import math

import pytest

from anytime_ppi.utils.errors import ConfigError, DataError, NumericalError
from anytime_ppi.utils.grid import delinearize, linearize, make_grid
from anytime_ppi.utils.manifest import RunManifest
from anytime_ppi.utils.utils import load_callable, load_config, load_key_value, nested_dict_update


def test_make_grid():
    grid, varying = make_grid(
        {"scenario": {"kind": "noisy", "sigma_y": [0.1, 0.8, 3.0]}, "cs": {"alpha": [0.05, 0.1]}},
        return_cartesian_elements=True,
    )
    assert len(grid) == 6
    assert grid[0] == {"scenario": {"kind": "noisy", "sigma_y": 0.1}, "cs": {"alpha": 0.05}}
    assert [key for key, _ in varying] == ["scenario.sigma_y", "cs.alpha"]


def test_make_grid_keeps_list_values():
    grid = make_grid({"methods": [["classical", "ppi"]], "prior": {"scale": None}})
    assert grid == [{"methods": ["classical", "ppi"], "prior": {"scale": None}}]


def test_make_grid_rejects_empty_lists():
    with pytest.raises(ConfigError):
        make_grid({"scenario": {"sigma_y": []}})


def test_linearize_round_trip():
    nested = {"a": {"b": 1, "c": {"d": 2}}, "e": 3}
    flat = dict((k, v[0]) for k, v in linearize(nested))
    assert flat == {"a.b": 1, "a.c.d": 2, "e": 3}
    assert delinearize(flat) == nested


def test_load_key_value(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("# comment\n\nalpha = 0.05\nprior=student-t\nassume-infinite-unlabelled=true\nrho=null\n")
    assert load_key_value(str(path)) == {
        "alpha": 0.05,
        "prior": "student-t",
        "assume_infinite_unlabelled": True,
        "rho": None,
    }


def test_load_key_value_errors(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("alpha 0.05\n")
    with pytest.raises(ConfigError, match="run.cfg:1"):
        load_key_value(str(path))
    with pytest.raises(ConfigError):
        load_key_value(str(tmp_path / "absent.cfg"))


def test_load_config_yaml(tmp_path):
    path = tmp_path / "run.yaml"
    path.write_text("t-star: 500\nprior: laplace\n")
    assert load_config(str(path)) == {"t_star": 500, "prior": "laplace"}
    path.write_text("- 1\n- 2\n")
    with pytest.raises(ConfigError):
        load_config(str(path))


def test_nested_dict_update():
    base = {"scenario": {"kind": "biased", "dof": 3}, "cs": {"alpha": 0.1}}
    assert nested_dict_update(base, {"scenario": {"dof": 5}}) == {
        "scenario": {"kind": "biased", "dof": 5},
        "cs": {"alpha": 0.1},
    }


def test_load_callable():
    assert load_callable("math:sqrt") is math.sqrt
    assert load_callable("math.sqrt") is math.sqrt
    with pytest.raises(ConfigError):
        load_callable("math:nothing")
    with pytest.raises(ConfigError):
        load_callable("no_such_module_here:fn")
    with pytest.raises(ConfigError):
        load_callable("math:pi")


def test_error_messages():
    assert str(DataError("invalid label 'x'", index=4, line=6)) == "invalid label 'x' (line 6, record 4)"
    assert DataError("x").exit_code == 3
    error = NumericalError("no convergence", diagnostics={"z": 0.5})
    assert error.exit_code == 4
    assert "z=0.5" in str(error)
    assert ConfigError("bad").exit_code == 2


def test_manifest(tmp_path):
    manifest = RunManifest(
        "anytime-ppi simulate", {"alpha": 0.1, "prior": None, "methods": ["ppi", "ppi++"]}, {"base_seed": 7}
    )
    lines = manifest.lines()
    assert lines[0] == "command=anytime-ppi simulate"
    assert "seed.base_seed=7" in lines
    assert "config.alpha=0.10000000000000001" in lines
    assert "config.prior=none" in lines
    assert "config.methods=ppi,ppi++" in lines
    out = tmp_path / "metrics.csv"
    path = manifest.emit(str(out))
    assert path == f"{out}.manifest.txt"
    assert open(path).read().splitlines() == lines
    assert manifest.emit("-") is None

import io

import numpy as np
import pandas as pd
import pytest

from anytime_ppi.data.io import iter_observations, load_table, read_table, write_table
from anytime_ppi.utils.errors import DataError


def _write(tmp_path, text, name="data.csv"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def test_iter_observations(tmp_path):
    path = _write(tmp_path, "label,prediction\n1.0,0.9\n,0.5\n2.0,2.5\n")
    records = list(iter_observations(path, chunksize=2))
    assert [line for line, _ in records] == [2, 3, 4]
    (_, first), (_, second), (_, third) = records
    assert first.label == 1.0 and first.prediction == 0.9
    assert not second.labelled
    assert second.prediction == 0.5
    assert third.label == 2.0
    assert first.covariates is None


def test_covariate_columns(tmp_path):
    path = _write(tmp_path, "label,prediction,x1,x2\n1,2,3,4\n,5,6,7\n")
    records = [obs for _, obs in iter_observations(path)]
    assert records[0].covariates == [3.0, 4.0]
    assert records[1].covariates == [6.0, 7.0]


def test_invalid_value_reports_its_line(tmp_path):
    path = _write(tmp_path, "label,prediction\n1.0,0.9\n,0.5\n2.0,abc\n")
    with pytest.raises(DataError) as info:
        list(iter_observations(path))
    assert info.value.line == 4
    assert info.value.index == 2


def test_line_numbers_continue_across_chunks(tmp_path):
    path = _write(tmp_path, "label,prediction\n1,1\n2,2\n3,3\n4,inf\n")
    with pytest.raises(DataError) as info:
        list(iter_observations(path, chunksize=2))
    assert info.value.line == 5


def test_missing_prediction_is_an_error(tmp_path):
    path = _write(tmp_path, "label,prediction\n1.0,\n")
    with pytest.raises(DataError):
        load_table(path)


def test_missing_column(tmp_path):
    path = _write(tmp_path, "label,score\n1.0,0.9\n")
    with pytest.raises(DataError) as info:
        load_table(path)
    assert info.value.line == 1


def test_missing_file(tmp_path):
    with pytest.raises(DataError):
        list(iter_observations(str(tmp_path / "absent.csv")))


def test_load_table_marks_unlabelled(tmp_path):
    table = load_table(_write(tmp_path, "label,prediction\n1.0,0.9\n,0.5\n"))
    assert np.isnan(table["label"].iloc[1])
    assert table["prediction"].tolist() == [0.9, 0.5]


def test_written_floats_read_back_exactly(tmp_path):
    frame = pd.DataFrame({"n": [40, 41], "avg_volume": [0.1, 1 / 3], "cum_miscoverage": [0.0, float("nan")]})
    buffer = io.StringIO()
    write_table(frame, buffer)
    assert buffer.getvalue().splitlines()[0] == "n,avg_volume,cum_miscoverage"
    path = _write(tmp_path, buffer.getvalue(), "out.csv")
    back = read_table(path)
    assert back["avg_volume"].tolist() == [0.1, 1 / 3]
    assert np.isnan(back["cum_miscoverage"].iloc[1])


def test_input_floats_parse_exactly(tmp_path, rng):
    values = rng.normal(scale=10.0, size=5000)
    text = "label,prediction\n" + "".join(f"{v!r},{-v!r}\n" for v in values)
    table = load_table(_write(tmp_path, text))
    np.testing.assert_array_equal(table["label"].to_numpy(), values)
    np.testing.assert_array_equal(table["prediction"].to_numpy(), -values)
    records = [obs.label for _, obs in iter_observations(str(tmp_path / "data.csv"), chunksize=777)]
    assert records == values.tolist()

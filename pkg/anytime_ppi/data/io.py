"""
File formats.

Input: CSV with header and columns ``label,prediction``; an empty label marks
an unlabelled record, any further column is a numeric covariate. Output
tables are CSV with numbers written with 17 significant digits.
"""
from typing import Iterator, List, Optional, Tuple

import numpy as np
import pandas as pd

from anytime_ppi.stats.running_moments import Observation
from anytime_ppi.utils.errors import DataError
from anytime_ppi.utils.utils import FLOAT_FORMAT

LABEL_COLUMN = "label"
PREDICTION_COLUMN = "prediction"
# header is line 1
_FIRST_DATA_LINE = 2


def _reader(path, chunksize: Optional[int]):
    try:
        return pd.read_csv(
            path,
            dtype=str,
            keep_default_na=False,
            skip_blank_lines=False,
            encoding="utf-8",
            chunksize=chunksize,
        )
    except FileNotFoundError as e:
        raise DataError(f"data file '{path}' not found") from e
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
        raise DataError(f"cannot parse '{path}': {e}") from e


def _check_columns(frame: pd.DataFrame, path) -> List[str]:
    missing = [c for c in (LABEL_COLUMN, PREDICTION_COLUMN) if c not in frame.columns]
    if missing:
        raise DataError(f"'{path}' lacks column(s) {missing}", line=1)
    return [c for c in frame.columns if c not in (LABEL_COLUMN, PREDICTION_COLUMN)]


def _to_float(column: pd.Series, name: str, first_line: int, allow_empty: bool) -> np.ndarray:
    text = column.str.strip()
    empty = (text == "").to_numpy()
    # coerced values only locate bad rows, they are not correctly rounded
    coerced = pd.to_numeric(text, errors="coerce").to_numpy(dtype=float)
    bad = ~np.isfinite(coerced) & ~(empty & allow_empty)
    if bad.any():
        i = int(np.argmax(bad))
        raise DataError(
            f"invalid {name} '{column.iloc[i]}'", index=i + first_line - _FIRST_DATA_LINE, line=i + first_line
        )
    try:
        return text.mask(empty, "nan").astype(float).to_numpy()
    except ValueError as e:
        raise DataError(f"invalid {name}: {e}", line=first_line) from e


def parse_chunk(chunk: pd.DataFrame, first_line: int, path="<data>") -> pd.DataFrame:
    """Validate a raw string chunk and convert it to floats (NaN label = unlabelled)."""
    covariates = _check_columns(chunk, path)
    out = pd.DataFrame(
        {
            LABEL_COLUMN: _to_float(chunk[LABEL_COLUMN], LABEL_COLUMN, first_line, True),
            PREDICTION_COLUMN: _to_float(chunk[PREDICTION_COLUMN], PREDICTION_COLUMN, first_line, False),
        }
    )
    for name in covariates:
        out[name] = _to_float(chunk[name], f"covariate {name}", first_line, False)
    return out


def iter_observations(path, chunksize: int = 10_000) -> Iterator[Tuple[int, Observation]]:
    """Yield ``(line number, observation)`` in file order."""
    first_line = _FIRST_DATA_LINE
    try:
        for chunk in _reader(path, chunksize):
            frame = parse_chunk(chunk, first_line, path)
            covariates = frame.columns[2:]
            for offset, row in enumerate(frame.itertuples(index=False)):
                label = None if np.isnan(row[0]) else float(row[0])
                obs = Observation(
                    prediction=float(row[1]),
                    label=label,
                    covariates=[float(v) for v in row[2:]] if len(covariates) else None,
                )
                yield first_line + offset, obs
            first_line += len(frame)
    except pd.errors.ParserError as e:
        raise DataError(f"cannot parse '{path}': {e}") from e


def load_table(path) -> pd.DataFrame:
    """The whole file as floats, unlabelled records with NaN label."""
    try:
        return parse_chunk(_reader(path, None), _FIRST_DATA_LINE, path)
    except pd.errors.ParserError as e:
        raise DataError(f"cannot parse '{path}': {e}") from e


def write_table(frame: pd.DataFrame, path_or_buffer, header: bool = True) -> None:
    frame.to_csv(
        path_or_buffer,
        index=False,
        header=header,
        float_format=FLOAT_FORMAT,
        lineterminator="\n",
        na_rep="",
    )


def read_table(path) -> pd.DataFrame:
    return pd.read_csv(path, float_precision="round_trip")

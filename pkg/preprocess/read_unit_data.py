"""
Readers for the unit, area and population CSV files.

Schemas (headers required, '.' decimal separator):

- units.csv:      ``area_id,y,x1,...,xq``        sampled units, no intercept column
- areas.csv:      ``area_id,N,xbar1,...,xbarq``  population size and covariate means
- population.csv: ``area_id,y,x1,...,xq``        every unit of the finite population

With ``intercept=True`` (the default) a leading column of ones is prepended to the unit
covariates and to the area means, so the intercept is beta_0 of the coefficient vector.
"""
import logging
import os
from typing import List, Optional, Tuple

import numpy as np
import pandas as pd

from preprocess.data_types import AreaFrame, UnitRecord
from preprocess.errors import AreaMismatch, EmptyData, InputError, NonFiniteValue, \
    NonPositiveValue

logger = logging.getLogger(__name__)


def read_csv_checked(file_path: str) -> pd.DataFrame:
    """``pd.read_csv`` with '#' comments; parse failures surface as InputError."""
    if not os.path.exists(file_path):
        raise InputError(f'file not found: {file_path}')
    try:
        return pd.read_csv(file_path, dtype={'area_id': str}, comment='#')
    except pd.errors.EmptyDataError:
        raise EmptyData(f'{file_path} is empty')
    except (pd.errors.ParserError, UnicodeDecodeError) as exc:
        raise InputError(f'{file_path} is not a readable CSV file: {exc}')


def _read_table(file_path: str, required: List[str]) -> pd.DataFrame:
    df = read_csv_checked(file_path)
    df.columns = [str(c).strip() for c in df.columns]
    missing = [c for c in required if c not in df.columns]
    if missing:
        raise InputError(f'{os.path.basename(file_path)} lacks required columns {missing}')
    df['area_id'] = df['area_id'].astype(str).str.strip()
    return df


def _covariate_columns(df: pd.DataFrame, skip: Tuple[str, ...]) -> List[str]:
    return [c for c in df.columns if c not in skip]


def _numeric(df: pd.DataFrame, cols: List[str], file_path: str) -> np.ndarray:
    values = df[cols].apply(pd.to_numeric, errors='coerce').to_numpy(dtype=float)
    if not np.all(np.isfinite(values)):
        bad = int(np.argwhere(~np.isfinite(values))[0][0])
        raise NonFiniteValue(f'{os.path.basename(file_path)}: non-numeric or non-finite value '
                             f'in data row {bad + 1}')
    return values


def units_from_frame(df: pd.DataFrame, intercept: bool = True,
                     annotations: Tuple[str, ...] = ('suspected',)) -> Tuple[List[UnitRecord], List[str]]:
    """Turn a ``area_id,y,x1..xq`` DataFrame into UnitRecords.

    Args:
        df: unit table; columns listed in ``annotations`` are ignored.
        intercept: prepend the constant covariate.

    Returns:
        (records, covariate names).
    """
    x_cols = _covariate_columns(df, ('area_id', 'y') + tuple(annotations))
    values = _numeric(df, ['y'] + x_cols, '<units>')
    names = (['intercept'] if intercept else []) + x_cols
    records = []
    for area_id, row in zip(df['area_id'], values):
        x = tuple(([1.0] if intercept else []) + [float(v) for v in row[1:]])
        records.append(UnitRecord(area_id=area_id, y=float(row[0]), x=x))
    return records, names


def read_units_csv(file_path: str, intercept: bool = True) -> Tuple[List[UnitRecord], List[str]]:
    """Read the sampled units file. See ``units_from_frame``."""
    df = _read_table(file_path, ['area_id', 'y'])
    if df.empty:
        raise EmptyData(f'{file_path} has no data rows')
    records, names = units_from_frame(df, intercept=intercept)
    logger.info(f'Read {len(records)} units in {df["area_id"].nunique()} areas from {file_path}')
    return records, names


def read_areas_csv(file_path: str, intercept: bool = True,
                   xbar_log_scale: bool = False) -> AreaFrame:
    """Read the area frame file.

    Args:
        file_path: ``area_id,N,xbar1..xbarq`` CSV.
        intercept: prepend a mean of 1 for the intercept column.
        xbar_log_scale: the xbar columns already hold means of log covariates.
    """
    df = _read_table(file_path, ['area_id', 'N'])
    if df.empty:
        raise EmptyData(f'{file_path} has no data rows')
    if df['area_id'].duplicated().any():
        dup = df.loc[df['area_id'].duplicated(), 'area_id'].iloc[0]
        raise AreaMismatch(f'area {dup} listed twice in {file_path}')
    xbar_cols = _covariate_columns(df, ('area_id', 'N', 'name'))
    xbar = _numeric(df, xbar_cols, file_path)
    N = _numeric(df, ['N'], file_path)[:, 0]
    if np.any(N < 1) or np.any(N != np.round(N)):
        raise InputError(f'{file_path}: N must be a positive integer in every area')
    if intercept:
        xbar = np.column_stack([np.ones(len(df)), xbar])
    return AreaFrame(area_ids=tuple(df['area_id']), N=N.astype(np.int64), xbar=xbar,
                     xbar_log_scale=xbar_log_scale)


def read_population_csv(file_path: str) -> pd.DataFrame:
    """Read a full finite population (``area_id,y,x1..xq``) into a DataFrame."""
    df = _read_table(file_path, ['area_id', 'y'])
    if df.empty:
        raise EmptyData(f'{file_path} has no data rows')
    cols = _covariate_columns(df, ('area_id',))
    df[cols] = _numeric(df, cols, file_path)
    logger.info(f'Read population of {len(df)} units in {df["area_id"].nunique()} areas')
    return df


def area_frame_from_population(population: pd.DataFrame, intercept: bool = True,
                               log_scale: bool = False,
                               area_ids: Optional[List[str]] = None) -> AreaFrame:
    """Population sizes and covariate means computed from a full population table.

    With ``log_scale=True`` the means are means of log covariates, i.e. the covariate
    averages the log-scale model needs for its area means.
    """
    x_cols = _covariate_columns(population, ('area_id', 'y'))
    x = population[x_cols].to_numpy(dtype=float)
    if log_scale:
        if np.any(x <= 0):
            raise NonPositiveValue('population covariates must be positive for the log scale')
        x = np.log(x)
    frame = pd.DataFrame(x, columns=x_cols)
    frame['area_id'] = population['area_id'].to_numpy()
    grouped = frame.groupby('area_id', sort=False)
    means = grouped[x_cols].mean()
    sizes = grouped.size()
    if area_ids is not None:
        missing = [a for a in area_ids if a not in means.index]
        if missing:
            raise AreaMismatch(f'areas {missing} are absent from the population')
        means = means.loc[list(area_ids)]
        sizes = sizes.loc[list(area_ids)]
    xbar = means.to_numpy(dtype=float)
    if intercept:
        xbar = np.column_stack([np.ones(len(means)), xbar])
    return AreaFrame(area_ids=tuple(means.index), N=sizes.to_numpy(dtype=np.int64), xbar=xbar,
                     xbar_log_scale=log_scale)

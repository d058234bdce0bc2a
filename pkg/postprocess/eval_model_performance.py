"""
Deviation of small-area estimates from known area truths.

The truth of a log-scale analysis is the per-area geometric mean of the population
responses; the four deviation summaries are

    AAD  = mean |est - truth|            ASD  = mean (est - truth)^2
    AARD = mean |est - truth| / truth    ASRD = mean (est - truth)^2 / truth^2
"""
import logging
import os
from dataclasses import dataclass
from typing import Dict, Mapping, Optional, Sequence

import numpy as np
import pandas as pd

from preprocess.errors import AreaMismatch, EmptyData, InputError, NonFiniteValue, \
    NonPositiveTruth, NonPositiveValue
from preprocess.read_unit_data import read_csv_checked
from postprocess.summarize_posterior import PosteriorReport
from postprocess.write_reports import ensure_dir, write_csv, write_json

logger = logging.getLogger(__name__)

MEASURES = ('AAD', 'ASD', 'AARD', 'ASRD')


@dataclass(frozen=True)
class TruthFrame:
    """Known target value per area, tagged with where it came from."""
    area_ids: tuple
    target: np.ndarray
    source: tuple

    def __post_init__(self):
        object.__setattr__(self, 'area_ids', tuple(str(a) for a in self.area_ids))
        object.__setattr__(self, 'target', np.asarray(self.target, dtype=float))
        object.__setattr__(self, 'source', tuple(self.source))
        if len(self.area_ids) != len(set(self.area_ids)):
            raise AreaMismatch('truth lists an area twice')
        if not (len(self.source) == len(self.target) == len(self.area_ids)):
            raise InputError('truth needs one target and one source tag per area')

    def as_series(self) -> pd.Series:
        return pd.Series(self.target, index=list(self.area_ids), name='target')

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({'area_id': list(self.area_ids), 'target': self.target,
                             'source': list(self.source)})


def geometric_means(population: pd.DataFrame, value_col: str = 'y',
                    area_col: str = 'area_id') -> TruthFrame:
    """Per-area geometric mean exp(mean(log y)), in order of first appearance."""
    y = population[value_col].to_numpy(dtype=float)
    if np.any(~np.isfinite(y)):
        raise NonFiniteValue('population responses must be finite')
    if np.any(y <= 0):
        raise NonPositiveValue('geometric means need every population response > 0')
    logs = pd.DataFrame({'area_id': population[area_col].astype(str).to_numpy(),
                         'log_y': np.log(y)})
    means = logs.groupby('area_id', sort=False)['log_y'].mean()
    return TruthFrame(area_ids=tuple(means.index), target=np.exp(means.to_numpy()),
                      source=('population_geometric_mean',) * len(means))


def read_truth_csv(file_path: str) -> TruthFrame:
    """Read a ``area_id,target[,source]`` file."""
    if not os.path.exists(file_path):
        raise InputError(f'truth file not found: {file_path}')
    df = read_csv_checked(file_path)
    if 'area_id' not in df.columns or 'target' not in df.columns:
        raise InputError(f'{file_path} needs columns area_id,target')
    if df.empty:
        raise EmptyData(f'{file_path} has no data rows')
    source = df['source'].astype(str) if 'source' in df.columns else \
        pd.Series([os.path.basename(file_path)] * len(df))
    target = pd.to_numeric(df['target'], errors='coerce').to_numpy(dtype=float)
    if not np.all(np.isfinite(target)):
        raise NonFiniteValue(f'{file_path}: non-numeric truth value')
    return TruthFrame(area_ids=tuple(df['area_id'].str.strip()), target=target,
                      source=tuple(source))


def _aligned(estimates: Mapping, truth: TruthFrame):
    est = pd.Series(estimates, dtype=float).copy()
    est.index = [str(a) for a in est.index]
    tru = truth.as_series()
    if set(est.index) != set(tru.index):
        missing = sorted(set(tru.index) - set(est.index))
        extra = sorted(set(est.index) - set(tru.index))
        raise AreaMismatch(f'estimates and truth differ in areas (missing {missing}, extra {extra})')
    return est.loc[tru.index].to_numpy(dtype=float), tru.to_numpy(dtype=float)


def deviation_measures(estimates: Mapping, truth: TruthFrame,
                       relative: bool = True) -> Dict[str, float]:
    """AAD and ASD, plus AARD and ASRD when ``relative`` is set (needs truth > 0)."""
    est, tru = _aligned(estimates, truth)
    if tru.size == 0:
        raise EmptyData('no areas to compare')
    diff = est - tru
    out = {'AAD': float(np.mean(np.abs(diff))), 'ASD': float(np.mean(diff ** 2))}
    if relative:
        if np.any(tru <= 0):
            raise NonPositiveTruth('relative deviations need every truth value > 0')
        out['AARD'] = float(np.mean(np.abs(diff) / tru))
        out['ASRD'] = float(np.mean((diff / tru) ** 2))
    return out


def evaluate_reports(reports: Mapping[str, PosteriorReport], truth: TruthFrame) -> pd.DataFrame:
    """One row of deviation measures per method, in the order given."""
    rows = []
    for method, report in reports.items():
        measures = deviation_measures(report.estimates(), truth)
        rows.append({'method': method, **measures})
        logger.info(f'  - {method}: ' + ', '.join(f'{k}={v:.4g}' for k, v in measures.items()))
    return pd.DataFrame(rows, columns=['method', *MEASURES])


def evaluate_performance(reports: Mapping[str, PosteriorReport], truth: TruthFrame,
                         out_dir: str, digits: Optional[Sequence[int]] = (0, 0, 2, 2)) -> pd.DataFrame:
    """Compute the deviation table and write ``performance.csv``/``performance.json``.

    ``digits`` rounds the human-readable ``performance_table.csv``; the machine outputs keep
    full precision.
    """
    ensure_dir(out_dir)
    logger.info(f'Evaluating {len(reports)} report(s) against {len(truth.area_ids)} area truths')
    table = evaluate_reports(reports, truth)
    write_csv(table, os.path.join(out_dir, 'performance.csv'))
    write_json({'truth_source': sorted(set(truth.source)), 'performance': table},
               os.path.join(out_dir, 'performance.json'))
    if digits is not None:
        rounded = table.copy()
        for col, d in zip(MEASURES, digits):
            rounded[col] = rounded[col].round(d)
        rounded.to_csv(os.path.join(out_dir, 'performance_table.csv'), index=False,
                       lineterminator='\n')
    return table

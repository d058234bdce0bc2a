"""
Posterior summaries of a fitted nested-error regression model.

Small-area predictors with equal-tail credible intervals, parameter tables, the posterior
probability that a unit comes from the second (wider) error component, and standardized
residuals. Every quantile uses numpy's default linear interpolation between order statistics.
"""
import json
import logging
import os
from dataclasses import dataclass, field
from typing import Any, Dict, Optional, Sequence

import numpy as np
import pandas as pd
from scipy import special

from preprocess.data_types import ChainDraws, Dataset, Variant
from preprocess.errors import AreaMismatch, EmptyData, InputError, InvalidParameter, \
    VariantMismatch, ZeroPosteriorVariance
from mcmc.full_conditionals import indicator_log_odds
from postprocess.write_reports import ensure_dir, read_json, write_csv, write_json

logger = logging.getLogger(__name__)

DEFAULT_LEVELS = (0.90, 0.95)
MEMBERSHIP_METHODS = ('rao_blackwell', 'indicator')


def level_tag(level: float) -> str:
    """0.9 -> '90', 0.95 -> '95', 0.975 -> '97.5'."""
    return f'{round(level * 100, 6):g}'


def _check_levels(levels: Sequence[float]) -> Sequence[float]:
    for level in levels:
        if not 0.0 < level < 1.0:
            raise InvalidParameter(f'credible level must lie in (0, 1), got {level}')
    return levels


def _sd(values: np.ndarray, axis=0) -> np.ndarray:
    n = values.shape[axis]
    return np.std(values, axis=axis, ddof=1 if n > 1 else 0)


def summarize_theta(draws: ChainDraws, levels: Sequence[float] = DEFAULT_LEVELS) -> pd.DataFrame:
    """Mean, SD, median and equal-tail intervals of theta_i, one row per area.

    Log-scale fits are summarized on the original scale (exp of each theta draw) and their
    ``estimate`` column is the posterior median; otherwise it is the posterior mean.
    """
    _check_levels(levels)
    theta = draws.theta_reported()
    if theta is None or theta.shape[0] == 0:
        raise EmptyData('no theta draws to summarize')
    if draws.log_transformed:
        # quantiles are taken on the log scale and mapped back, so they commute with exp
        def quantile(p):
            return np.exp(np.quantile(draws.theta, p, axis=0))
    else:
        def quantile(p):
            return np.quantile(theta, p, axis=0)
    mean = theta.mean(axis=0)
    median = quantile(0.5)
    df = pd.DataFrame({'area_id': list(draws.area_ids),
                       'estimate': median if draws.log_transformed else mean,
                       'mean': mean,
                       'sd': _sd(theta),
                       'median': median})
    for level in sorted(levels):
        tail = (1.0 - level) / 2.0
        lo, hi = quantile([tail, 1.0 - tail])
        df[f'cri{level_tag(level)}_lower'] = lo
        df[f'cri{level_tag(level)}_upper'] = hi
    return df


def summarize_params(draws: ChainDraws) -> pd.DataFrame:
    """Mean, SD, median and IQR of beta, p_e, sigma_v_sq, sigma1_sq and sigma2_sq = eta sigma1_sq."""
    columns: Dict[str, np.ndarray] = {f'beta_{k}': draws.beta[:, k] for k in range(draws.q)}
    if draws.variant is not Variant.DG:
        columns['p_e'] = draws.p_e
    columns['sigma_v_sq'] = draws.sigma_v_sq
    columns['sigma1_sq'] = draws.sigma1_sq
    if draws.variant is not Variant.DG:
        columns['sigma2_sq'] = draws.sigma2_sq
        columns['eta'] = draws.eta
    rows = []
    for name, values in columns.items():
        q25, q50, q75 = np.quantile(values, [0.25, 0.5, 0.75])
        rows.append({'parameter': name, 'mean': float(np.mean(values)),
                     'sd': float(_sd(values)), 'median': float(q50),
                     'q25': float(q25), 'q75': float(q75), 'iqr': float(q75 - q25)})
    return pd.DataFrame(rows, columns=['parameter', 'mean', 'sd', 'median', 'q25', 'q75', 'iqr'])


def _residual_draws(draws: ChainDraws, dataset: Dataset) -> np.ndarray:
    # (draws, units) matrix of y - x'beta - v on the model scale
    return dataset.y[None, :] - draws.beta @ dataset.X.T - draws.v[:, dataset.area_index]


def membership_probabilities(draws: ChainDraws, dataset: Dataset,
                             method: str = 'rao_blackwell') -> np.ndarray:
    """Posterior probability that each unit belongs to the second error component.

    ``rao_blackwell`` averages 1 - p*_ij over the draws; ``indicator`` averages 1 - z_ij.
    """
    if draws.variant is Variant.DG:
        raise VariantMismatch('the DG model has no mixture components')
    if method == 'indicator':
        return 1.0 - draws.z.astype(float).mean(axis=0)
    if method != 'rao_blackwell':
        raise InvalidParameter(f'unknown membership method {method}, use one of {MEMBERSHIP_METHODS}')
    r = _residual_draws(draws, dataset)
    log_odds = indicator_log_odds(r, draws.sigma1_sq[:, None], draws.eta[:, None],
                                  draws.p_e[:, None])
    return special.expit(-log_odds).mean(axis=0)


def standardized_residuals(draws: ChainDraws, dataset: Dataset,
                           on_zero_variance: str = 'raise') -> np.ndarray:
    """E(y_ij - theta_i | y) / sqrt(var(y_ij - theta_i | y)) from the theta draws (model scale).

    ``on_zero_variance='nan'`` gives NaN for units whose variance is zero instead of raising.
    """
    if on_zero_variance not in ('raise', 'nan'):
        raise InvalidParameter(f'on_zero_variance must be raise or nan, got {on_zero_variance}')
    diff = dataset.y[None, :] - draws.theta[:, dataset.area_index]
    mean = diff.mean(axis=0)
    var = diff.var(axis=0)
    zero = var <= 0
    if np.any(zero):
        bad = int(np.flatnonzero(zero)[0])
        area, unit = dataset.unit_labels()[bad]
        message = f'y - theta has zero posterior variance for unit {unit} of area {area}'
        if on_zero_variance == 'raise':
            raise ZeroPosteriorVariance(message)
        logger.warning(f'{message} ({int(zero.sum())} unit(s)); std_residual set to NaN')
    out = np.full(mean.shape, np.nan)
    out[~zero] = mean[~zero] / np.sqrt(var[~zero])
    return out


@dataclass
class PosteriorReport:
    """Tables produced from one fit."""
    variant: Variant
    areas: pd.DataFrame
    params: pd.DataFrame
    units: pd.DataFrame
    levels: Sequence[float] = DEFAULT_LEVELS
    provenance: Dict[str, Any] = field(default_factory=dict)
    diagnostics: Optional[pd.DataFrame] = None

    def interval_lengths(self, level: float) -> pd.Series:
        tag = level_tag(level)
        lo, hi = f'cri{tag}_lower', f'cri{tag}_upper'
        if lo not in self.areas.columns:
            raise InvalidParameter(f'report has no {tag}% credible intervals')
        lengths = self.areas[hi] - self.areas[lo]
        return pd.Series(lengths.to_numpy(), index=self.areas['area_id'].astype(str))

    def estimates(self) -> pd.Series:
        return pd.Series(self.areas['estimate'].to_numpy(),
                         index=self.areas['area_id'].astype(str))


def build_report(draws: ChainDraws, dataset: Dataset, levels: Sequence[float] = DEFAULT_LEVELS,
                 diagnostics: Optional[pd.DataFrame] = None) -> PosteriorReport:
    """Assemble the area, parameter and unit tables of one fit."""
    if tuple(draws.area_ids) != tuple(dataset.area_ids):
        raise AreaMismatch('draws and dataset list different areas')
    areas = summarize_theta(draws, levels)
    params = summarize_params(draws)
    labels = dataset.unit_labels()
    y = np.exp(dataset.y) if dataset.log_transformed else dataset.y
    units = pd.DataFrame({'area_id': [a for a, _ in labels], 'unit': [u for _, u in labels],
                          'y': y})
    if draws.variant is not Variant.DG:
        units['membership_prob'] = membership_probabilities(draws, dataset, 'rao_blackwell')
        units['membership_prob_indicator'] = membership_probabilities(draws, dataset, 'indicator')
    units['std_residual'] = standardized_residuals(draws, dataset, on_zero_variance='nan')
    provenance = {'variant': draws.variant.value, 'seed': int(draws.seed),
                  'config': draws.config, 'log_transformed': bool(draws.log_transformed),
                  'point_estimate': 'median' if draws.log_transformed else 'mean',
                  'n_draws_total': draws.n_rows, 'n_chains': draws.n_chains}
    return PosteriorReport(variant=draws.variant, areas=areas, params=params, units=units,
                           levels=tuple(levels), provenance=provenance, diagnostics=diagnostics)


def credible_interval_ratios(report_a: PosteriorReport, report_b: PosteriorReport,
                             level: float = 0.90) -> pd.Series:
    """Per-area ratio length(CrI of a) / length(CrI of b)."""
    la = report_a.interval_lengths(level)
    lb = report_b.interval_lengths(level)
    if set(la.index) != set(lb.index):
        raise AreaMismatch('the two reports cover different areas')
    lb = lb.loc[la.index]
    ratios = la / lb
    ratios.name = f'ratio_{level_tag(level)}'
    return ratios


def report_to_frames(report: PosteriorReport) -> Dict[str, pd.DataFrame]:
    frames = {'areas': report.areas, 'params': report.params, 'units': report.units}
    if report.diagnostics is not None and not report.diagnostics.empty:
        frames['diagnostics'] = report.diagnostics
    return frames


def write_report(report: PosteriorReport, out_dir: str) -> Dict[str, str]:
    """Write ``areas.csv``, ``params.csv``, ``units.csv`` (+ ``diagnostics.csv``) and ``report.json``."""
    ensure_dir(out_dir)
    written = {}
    frames = report_to_frames(report)
    for name, df in frames.items():
        path = os.path.join(out_dir, f'{name}.csv')
        write_csv(df, path)
        written[name] = path
    doc = {'provenance': report.provenance, 'levels': list(report.levels)}
    doc.update(frames)
    path = os.path.join(out_dir, 'report.json')
    write_json(doc, path)
    written['report'] = path
    logger.info(f'Report written to {out_dir}')
    return written


def read_report(file_path: str) -> PosteriorReport:
    """Load ``report.json`` (or the directory holding it) back into a PosteriorReport."""
    if os.path.isdir(file_path):
        file_path = os.path.join(file_path, 'report.json')
    if not os.path.exists(file_path):
        raise InvalidParameter(f'report not found: {file_path}')
    try:
        doc = read_json(file_path)
        areas = pd.DataFrame(doc['areas'])
        areas['area_id'] = areas['area_id'].astype(str)
        params = pd.DataFrame(doc['params'])
    except json.JSONDecodeError as exc:
        raise InputError(f'{file_path} is not valid JSON: {exc}')
    except (KeyError, TypeError) as exc:
        raise InputError(f'{file_path} is not a fit report (missing {exc})')
    units = pd.DataFrame(doc.get('units', []))
    diagnostics = pd.DataFrame(doc['diagnostics']) if 'diagnostics' in doc else None
    provenance = doc.get('provenance', {})
    return PosteriorReport(variant=Variant.parse(provenance.get('variant', 'dg')), areas=areas,
                           params=params, units=units,
                           levels=tuple(doc.get('levels', DEFAULT_LEVELS)),
                           provenance=provenance, diagnostics=diagnostics)

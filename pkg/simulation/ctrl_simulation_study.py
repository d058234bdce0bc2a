"""
Controller of the Monte Carlo study: distribute (replicate, method) fits, aggregate the
per-area metrics and write the metric and plot-data files.

Per area i and method, over S replicates with posterior mean theta_hat, posterior
variance V and credible interval I at level l:

    eB   = mean(theta_hat - theta)          eM  = mean((theta_hat - theta)^2)
    V    = mean(V)                          RE_V = (V - eM) / eM
    eC_l = mean(theta not in I_l)           L_l = mean(length of I_l)
"""
import logging
import os
import time
from dataclasses import asdict, dataclass, field
from multiprocessing import Pool
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from preprocess.data_types import ChainConfig, Variant
from preprocess.errors import ConfigurationError, StudyFailure
from postprocess.summarize_posterior import level_tag
from postprocess.write_reports import ensure_dir, write_csv, write_json
from simulation.generate_population import area_labels
from simulation.scenario_defs import ScenarioSpec
from simulation.worker_fit_replicate import ReplicateRecord, run_job

logger = logging.getLogger(__name__)

DESK_CHAIN = ChainConfig(n_draws=4000, burn_in=2000, thin=1, n_chains=1)
STUDY_LEVELS = (0.90, 0.95)


def metric_names(levels: Sequence[float]) -> List[str]:
    names = ['eB', 'eM', 'V', 'RE_V']
    names += [f'eC_{level_tag(l)}' for l in levels]
    names += [f'L_{level_tag(l)}' for l in levels]
    return names


@dataclass
class MetricsTable:
    """Per area x method metrics in long format (scenario, method, area, metric, value)."""
    scenario: str
    long: pd.DataFrame
    levels: Sequence[float] = STUDY_LEVELS
    config: Dict = field(default_factory=dict)

    @property
    def methods(self) -> List[str]:
        return list(dict.fromkeys(self.long['method']))

    def wide(self, method: str) -> pd.DataFrame:
        """One row per area, one column per metric."""
        sub = self.long[self.long['method'] == method]
        table = sub.pivot(index='area', columns='metric', values='value')
        return table.loc[list(dict.fromkeys(sub['area'])), metric_names(self.levels)].reset_index()

    def summary(self) -> pd.DataFrame:
        """Means across areas, one row per method."""
        rows = []
        for method in self.methods:
            wide = self.wide(method)
            row = {'method': method}
            row.update({name: float(wide[name].mean()) for name in metric_names(self.levels)})
            rows.append(row)
        return pd.DataFrame(rows)

    def length_ratios(self, baseline: str = 'gdm') -> pd.DataFrame:
        """Mean interval length of every method relative to ``baseline``, per level."""
        if baseline not in self.methods:
            return pd.DataFrame(columns=['level', 'ratio', 'value'])
        summary = self.summary().set_index('method')
        rows = []
        for level in self.levels:
            col = f'L_{level_tag(level)}'
            for method in self.methods:
                if method == baseline:
                    continue
                rows.append({'level': level_tag(level), 'ratio': f'{method}/{baseline}',
                             'value': summary.loc[method, col] / summary.loc[baseline, col]})
        return pd.DataFrame(rows, columns=['level', 'ratio', 'value'])


def aggregate_metrics(records: Sequence[ReplicateRecord], scenario: str, area_ids: Sequence[str],
                      levels: Sequence[float] = STUDY_LEVELS) -> MetricsTable:
    """Reduce replicate records keyed by (replicate, method, area) into a MetricsTable."""
    by_method: Dict[str, List[ReplicateRecord]] = {}
    for rec in sorted(records, key=lambda r: (r.method, r.replicate)):
        by_method.setdefault(rec.method, []).append(rec)
    order = [m for m in (v.value for v in Variant) if m in by_method] + \
        [m for m in by_method if m not in {v.value for v in Variant}]
    frames = []
    for method in order:
        recs = by_method[method]
        truth = np.vstack([r.theta_true for r in recs])
        err = np.vstack([r.theta_hat for r in recs]) - truth
        eM = np.mean(err ** 2, axis=0)
        V = np.mean(np.vstack([r.post_var for r in recs]), axis=0)
        with np.errstate(divide='ignore', invalid='ignore'):
            re_v = np.where(eM > 0, (V - eM) / eM, np.nan)
        metrics = {'eB': err.mean(axis=0), 'eM': eM, 'V': V, 'RE_V': re_v}
        for level in levels:
            lo = np.vstack([r.lower[level] for r in recs])
            hi = np.vstack([r.upper[level] for r in recs])
            metrics[f'eC_{level_tag(level)}'] = np.mean((truth < lo) | (truth > hi), axis=0)
            metrics[f'L_{level_tag(level)}'] = np.mean(hi - lo, axis=0)
        for name in metric_names(levels):
            frames.append(pd.DataFrame({'scenario': scenario, 'method': method,
                                        'area': list(area_ids), 'metric': name,
                                        'value': metrics[name]}))
    long = pd.concat(frames, ignore_index=True) if frames else \
        pd.DataFrame(columns=['scenario', 'method', 'area', 'metric', 'value'])
    return MetricsTable(scenario=scenario, long=long, levels=tuple(levels))


def run_study(scenario: ScenarioSpec, methods: Sequence[str], chain: ChainConfig = DESK_CHAIN,
              n_workers: Optional[int] = 1, levels: Sequence[float] = STUDY_LEVELS,
              replicates: Sequence[int] = None) -> MetricsTable:
    """Fit every method on every replicate and aggregate the metrics.

    A failed fit aborts the study with ``StudyFailure``; nothing is dropped silently.
    The table does not depend on ``n_workers`` (None: one process per CPU).
    """
    scenario.validate()
    if n_workers is None:
        n_workers = max(1, os.cpu_count() or 1)
    chain.validate()
    methods = [Variant.parse(m).value for m in methods]
    if not methods:
        raise ConfigurationError('no methods requested')
    replicates = list(range(scenario.S)) if replicates is None else list(replicates)
    jobs = [(scenario, s, method, chain, tuple(levels)) for s in replicates for method in methods]
    logger.info(f'Scenario {scenario.name} ({scenario.error.label()}): {len(replicates)} '
                f'replicates x {len(methods)} methods, m={scenario.m}, N_i={scenario.N_i}, '
                f'n_i={scenario.n_i}, {n_workers} worker(s)')
    start = time.time()
    if n_workers > 1:
        with Pool(processes=n_workers) as pool:
            results = pool.map(run_job, jobs, chunksize=1)
    else:
        results = [run_job(job) for job in jobs]
    results.sort(key=lambda r: r[0])
    failures = [out for _, out in results if isinstance(out, StudyFailure)]
    if failures:
        for f in failures:
            logger.error(str(f))
        raise failures[0]
    records = [out for _, out in results]
    table = aggregate_metrics(records, scenario.name, area_labels(scenario.m), levels)
    table.config = {'scenario': scenario.to_dict(), 'chain': asdict(chain),
                    'methods': methods, 'replicates': len(replicates),
                    'error_label': scenario.error.label()}
    logger.info(f'Study finished in {time.time() - start:.1f} s')
    return table


def panel_frames(table: MetricsTable) -> Dict[str, pd.DataFrame]:
    """Plot data, one frame per panel: bias, mse, postvar, rev, noncoverage and length."""
    panels = {}
    simple = {'bias': 'eB', 'mse': 'eM', 'postvar': 'V', 'rev': 'RE_V'}
    for method in table.methods:
        wide = table.wide(method)
        for prefix, metric in simple.items():
            panels[f'{prefix}_{method}'] = wide[['area', metric]].rename(columns={metric: 'value'})
        for level in table.levels:
            tag = level_tag(level)
            panels[f'noncoverage_{tag}_{method}'] = \
                wide[['area', f'eC_{tag}']].rename(columns={f'eC_{tag}': 'value'})
            panels[f'length_{tag}_{method}'] = \
                wide[['area', f'L_{tag}']].rename(columns={f'L_{tag}': 'value'})
    panels['length_ratios'] = table.length_ratios()
    return panels


def write_study(table: MetricsTable, out_dir: str) -> Dict[str, str]:
    """``metrics.csv`` (long), ``metrics.json``, ``summary.csv`` and the panel files."""
    ensure_dir(out_dir)
    written = {}
    path = os.path.join(out_dir, 'metrics.csv')
    write_csv(table.long, path)
    written['metrics'] = path
    summary = table.summary()
    write_csv(summary, os.path.join(out_dir, 'summary.csv'))
    write_json({'scenario': table.scenario, 'config': table.config,
                'levels': list(table.levels), 'summary': summary, 'metrics': table.long},
               os.path.join(out_dir, 'metrics.json'))
    panel_dir = ensure_dir(os.path.join(out_dir, 'panels'))
    for name, df in panel_frames(table).items():
        write_csv(df, os.path.join(panel_dir, f'{name}.csv'))
    logger.info(f'Metrics written to {out_dir}')
    return written

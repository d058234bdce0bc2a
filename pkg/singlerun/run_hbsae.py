"""
Command line of the hierarchical Bayes small area estimation tools.

    python singlerun/run_hbsae.py fit --model gdm --units data/corn_units_full.csv \
        --areas data/corn_areas.csv --out out/corn_gdm
    python singlerun/run_hbsae.py simulate --scenario iii --S 50 --seed 7 --methods dg,cdm,gdm
    python singlerun/run_hbsae.py evaluate --reports out/dg out/cdm out/gdm \
        --truth data/aagis_truth.csv

Exit codes: 0 success, 2 input or validation error, 3 sampler failure. Errors are reported
on stderr as one line ``error: <reason>: <message>``.
"""
from __future__ import absolute_import
import os
import sys
if os.path.abspath(os.path.join(os.path.dirname(__file__), '..')) not in sys.path:
    sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))
import argparse
import logging
import time
from typing import List, Optional

import pandas as pd

from preprocess.errors import InputError, SamplerError
from preprocess.read_unit_data import area_frame_from_population, read_areas_csv, \
    read_population_csv, read_units_csv
from preprocess.validate_dataset import log_transform_dataset, validate_dataset
from mcmc.gibbs_engine import fit, write_draws_csv
from postprocess.eval_model_performance import evaluate_performance, geometric_means, \
    read_truth_csv
from postprocess.summarize_posterior import build_report, credible_interval_ratios, level_tag, \
    read_report, write_report
from postprocess.write_reports import ensure_dir, write_csv, write_json
from simulation.ctrl_simulation_study import run_study, write_study
from singlerun.run_config import RunConfig, build_manifest, resolve_config

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_SAMPLER = 3

logger = logging.getLogger('hbsae')


def _str2bool(value) -> bool:
    if isinstance(value, bool):
        return value
    text = str(value).strip().lower()
    if text in ('1', 'true', 'yes', 'y', 'on'):
        return True
    if text in ('0', 'false', 'no', 'n', 'off'):
        return False
    raise argparse.ArgumentTypeError(f'expected a boolean, got {value!r}')


def _levels(value: str) -> List[float]:
    try:
        return [float(s) for s in value.split(',') if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f'expected comma-separated levels, got {value!r}')


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--seed', type=int, help='64-bit base seed')
    common.add_argument('--out', help='output directory')
    common.add_argument('--config', help='JSON config file (flags override its values)')
    common.add_argument('--chains', type=int, help='number of chains per fit')
    common.add_argument('--draws', type=int, help='retained draws per chain')
    common.add_argument('--burn-in', dest='burn_in', type=int, help='discarded initial iterations')
    common.add_argument('--thin', type=int, help='keep every k-th iteration')
    common.add_argument('--workers', type=int, help='worker processes for chains / replicates')
    common.add_argument('--quiet', action='store_const', const=True, help='warnings only on stdout')

    parser = argparse.ArgumentParser(prog='hbsae',
                                     description='Hierarchical Bayes small area estimation '
                                                 'under the nested-error regression model.')
    sub = parser.add_subparsers(dest='command', required=True)

    p_fit = sub.add_parser('fit', parents=[common], help='fit DG, CDM or GDM to a unit sample')
    p_fit.add_argument('--model', choices=['dg', 'cdm', 'gdm'])
    p_fit.add_argument('--units', help='units.csv: area_id,y,x1..xq')
    p_fit.add_argument('--areas', help='areas.csv: area_id,N,xbar1..xbarq')
    p_fit.add_argument('--population', help='population.csv used to derive the area frame')
    for name, helptext in (('intercept', 'prepend an intercept column (default true)'),
                           ('log-transform', 'fit log(y) on log(x) (default false)'),
                           ('xbar-log-scale', 'areas.csv already holds means of log covariates'),
                           ('allow-unsampled', 'predict frame areas without sampled units'),
                           ('dump-draws', 'also write draws.csv')):
        p_fit.add_argument(f'--{name}', dest=name.replace('-', '_'), type=_str2bool, nargs='?',
                           const=True, help=helptext)
    p_fit.add_argument('--levels', type=_levels, help='credible levels, e.g. 0.9,0.95')

    p_sim = sub.add_parser('simulate', parents=[common], help='Monte Carlo study')
    p_sim.add_argument('--scenario', choices=['i', 'ii', 'iii', 'iv', 'v'])
    p_sim.add_argument('--generator', choices=['normal', 'mixture', 't'])
    p_sim.add_argument('--pe', type=float, help='mixture: probability of the N(0, sd1^2) part')
    p_sim.add_argument('--sd1', type=float)
    p_sim.add_argument('--mu2', type=float)
    p_sim.add_argument('--sd2', type=float)
    p_sim.add_argument('--df', type=float, help='t: degrees of freedom')
    p_sim.add_argument('--full-scale', dest='full_scale', type=_str2bool, nargs='?', const=True,
                       help='full study scale (m=40, N_i=200, S=100) instead of the desk scale')
    p_sim.add_argument('--S', type=int, help='replicates')
    p_sim.add_argument('--m', type=int, help='areas')
    p_sim.add_argument('--N', type=int, help='population units per area')
    p_sim.add_argument('--n', type=int, help='sampled units per area')
    p_sim.add_argument('--beta0', type=float)
    p_sim.add_argument('--beta1', type=float)
    p_sim.add_argument('--methods', help='comma-separated subset of dg,cdm,gdm')
    p_sim.add_argument('--levels', type=_levels)

    p_eval = sub.add_parser('evaluate', parents=[common], help='deviation from area truths')
    p_eval.add_argument('--reports', nargs='+', help='fit output directories or report.json files')
    p_eval.add_argument('--truth', help='truth.csv: area_id,target[,source]')
    p_eval.add_argument('--population', help='population.csv; truth = per-area geometric mean')
    p_eval.add_argument('--levels', type=_levels)
    return parser


def setup_logging(out_dir: str, quiet: bool) -> List[logging.Handler]:
    """File handler (run.log) plus console handler on the root logger."""
    root = logging.getLogger()
    root.setLevel(logging.INFO)
    file_handler = logging.FileHandler(os.path.join(out_dir, 'run.log'), 'w', encoding='utf-8')
    file_handler.setLevel(logging.INFO)
    file_handler.setFormatter(logging.Formatter('%(asctime)s - %(name)s - %(levelname)s - %(message)s'))
    console_handler = logging.StreamHandler(sys.stdout)
    console_handler.setLevel(logging.WARNING if quiet else logging.INFO)
    console_handler.setFormatter(logging.Formatter('%(message)s'))
    root.addHandler(file_handler)
    root.addHandler(console_handler)
    return [file_handler, console_handler]


def teardown_logging(handlers: List[logging.Handler]) -> None:
    root = logging.getLogger()
    for handler in handlers:
        root.removeHandler(handler)
        handler.close()


def cmd_fit(config: RunConfig) -> int:
    out_dir = config.out_dir
    spec = config.model_spec()
    levels = config.levels()
    if not config['units']:
        raise InputError('fit needs --units')
    intercept = bool(config['intercept'])
    log_scale = bool(config['log_transform'])
    records, names = read_units_csv(config['units'], intercept=intercept)
    if config['areas']:
        frame = read_areas_csv(config['areas'], intercept=intercept,
                               xbar_log_scale=bool(config['xbar_log_scale']))
    elif config['population']:
        frame = area_frame_from_population(read_population_csv(config['population']),
                                           intercept=intercept, log_scale=log_scale)
    else:
        raise InputError('fit needs --areas or --population')
    dataset, frame = validate_dataset(records, frame, spec, covariate_names=names,
                                      allow_unsampled=bool(config['allow_unsampled']))
    if log_scale:
        dataset, frame = log_transform_dataset(dataset, frame, intercept=intercept)
    logger.info(f'Dataset: n={dataset.n}, m={dataset.m}, q={dataset.q}, '
                f'log scale={dataset.log_transformed}')

    result = fit(dataset, frame, spec)
    report = build_report(result.draws, dataset, levels, diagnostics=result.diagnostics)
    write_report(report, out_dir)
    if config['dump_draws']:
        write_draws_csv(result.draws, os.path.join(out_dir, 'draws.csv'))
    rhat = result.diagnostics['rhat'].max() if not result.diagnostics.empty else float('nan')
    logger.info(f'Max split R-hat {rhat:.3f}; precision clamps {sum(result.clamp_counts.values())}')
    _write_provenance(config, {'units': config['units'], 'areas': config['areas'],
                               'population': config['population']})
    return EXIT_OK


def cmd_simulate(config: RunConfig) -> int:
    scenario = config.scenario()
    chain = config.chain_config()
    table = run_study(scenario, config['methods'], chain=chain, n_workers=chain.n_workers,
                      levels=config.levels())
    write_study(table, config.out_dir)
    summary = table.summary()
    for _, row in summary.iterrows():
        logger.info(f"  - {row['method']}: mean eM={row['eM']:.4f}, mean eB={row['eB']:.4f}")
    _write_provenance(config, {})
    return EXIT_OK


def cmd_evaluate(config: RunConfig) -> int:
    paths = list(config['reports'])
    if not paths:
        raise InputError('evaluate needs --reports')
    reports = {}
    for path in paths:
        report = read_report(path)
        name = report.variant.value
        if name in reports:
            name = f'{name}_{len(reports)}'
        reports[name] = report
    if config['truth']:
        truth = read_truth_csv(config['truth'])
    elif config['population']:
        truth = geometric_means(read_population_csv(config['population']))
    else:
        raise InputError('evaluate needs --truth or --population')
    out_dir = config.out_dir
    evaluate_performance(reports, truth, out_dir)

    if 'gdm' in reports and len(reports) > 1:
        frames = []
        for level in config.levels():
            ratios = pd.DataFrame({'level': level_tag(level)}, index=reports['gdm'].areas['area_id'])
            for name, report in reports.items():
                if name != 'gdm':
                    ratios[f'{name}/gdm'] = credible_interval_ratios(report, reports['gdm'], level)
            frames.append(ratios.rename_axis('area_id').reset_index())
        write_csv(pd.concat(frames, ignore_index=True), os.path.join(out_dir, 'cri_ratios.csv'))
    _write_provenance(config, {'truth': config['truth'], 'population': config['population'],
                               **{f'report_{i}': p if os.path.isfile(p)
                                  else os.path.join(p, 'report.json')
                                  for i, p in enumerate(paths)}})
    return EXIT_OK


def _write_provenance(config: RunConfig, inputs) -> None:
    write_json(config.to_dict(), os.path.join(config.out_dir, 'resolved_config.json'))
    write_json(build_manifest(config, inputs), os.path.join(config.out_dir, 'manifest.json'))


COMMAND_FUNCS = {'fit': cmd_fit, 'simulate': cmd_simulate, 'evaluate': cmd_evaluate}


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    flags = {k: v for k, v in vars(args).items() if k not in ('command', 'config')}
    handlers: List[logging.Handler] = []
    try:
        config = resolve_config(args.command, flags, args.config)
        ensure_dir(config.out_dir)
        handlers = setup_logging(config.out_dir, bool(config['quiet']))
        start_time = time.time()
        logger.info(f'hbsae {args.command}: output in {config.out_dir}')
        code = COMMAND_FUNCS[args.command](config)
        logger.info(f'Done in {time.time() - start_time:.1f} s')
        return code
    except InputError as exc:
        logger.error(f'{exc.reason}: {exc}')
        print(f'error: {exc.reason}: {exc}', file=sys.stderr)
        return EXIT_INPUT
    except SamplerError as exc:
        logger.error(f'{exc.reason}: {exc}')
        print(f'error: {exc.reason}: {exc}', file=sys.stderr)
        return EXIT_SAMPLER
    finally:
        teardown_logging(handlers)


if __name__ == '__main__':
    sys.exit(main())

"""
Gibbs sampling engine for the nested-error regression models.

One chain is a systematic scan beta -> v -> z -> p_e -> sigma_v_sq -> sigma1_sq -> eta
(DG skips z, p_e and eta). ``fit`` runs several chains, in a ``multiprocessing.Pool`` when
more than one worker is configured, and merges them in chain-index order so the result does
not depend on scheduling.
"""
import logging
import time
from dataclasses import asdict, dataclass, field
from multiprocessing import Pool
from typing import Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

from preprocess.data_types import AreaFrame, ChainDraws, ChainState, Dataset, ModelSpec, Variant
from preprocess.errors import ChainFailure, ConfigurationError, HBSAEError, InvalidParameter, \
    SamplerError
from mcmc.chain_diagnostics import diagnostics_table
from mcmc.full_conditionals import ClampCounter, ConditionalContext, draw_area_effects, \
    draw_beta_coeff, draw_eta, draw_indicators, draw_pe, draw_sigma1, draw_sigma_v
from mcmc.random_streams import PURPOSE_CHAIN, RngStream

logger = logging.getLogger(__name__)

INIT_ETA = 4.0
INIT_PE = {Variant.GDM: 0.75, Variant.CDM: 0.9}
JITTER_SD = 0.1
VARIANCE_FLOOR = 1e-8


@dataclass
class FitResult:
    """Merged draws plus convergence diagnostics, timing and clamp counts."""
    draws: ChainDraws
    diagnostics: pd.DataFrame
    elapsed_seconds: float
    chain_seconds: List[float] = field(default_factory=list)
    clamp_counts: Dict[str, int] = field(default_factory=dict)


def _set_initial(state: ChainState, name: str, value) -> None:
    if name in ('beta', 'v'):
        value = np.array(value, dtype=float)
        if value.shape != getattr(state, name).shape:
            raise InvalidParameter(f'initial {name} has shape {value.shape}, '
                                   f'expected {getattr(state, name).shape}')
    elif name == 'z':
        value = np.array(value, dtype=np.int8)
        if value.shape != state.z.shape or not np.all((value == 0) | (value == 1)):
            raise InvalidParameter('initial z must be a 0/1 vector with one entry per unit')
    else:
        value = float(value)
    setattr(state, name, value)


def initialize(dataset: Dataset, spec: ModelSpec, stream: RngStream,
               chain_index: int = 0) -> ChainState:
    """Starting state from an ordinary least-squares fit.

    v is half the per-area mean OLS residual, sigma1_sq the variance of what remains and
    sigma_v_sq the variance of the per-area residual means (at least 0.1 sigma1_sq). Chains
    after the first perturb beta and the log variances with N(0, 0.1^2) noise.
    """
    variant = spec.variant
    beta, *_ = np.linalg.lstsq(dataset.X, dataset.y, rcond=None)
    resid = dataset.y - dataset.X @ beta
    counts = np.maximum(dataset.n_i, 1)
    area_means = np.bincount(dataset.area_index, weights=resid, minlength=dataset.m) / counts
    v = 0.5 * area_means
    remainder = resid - v[dataset.area_index]
    floor = VARIANCE_FLOOR * max(float(np.var(dataset.y)), 1.0)
    sigma1_sq = max(float(np.var(remainder)), floor)
    sampled = dataset.sampled_areas
    spread = float(np.var(area_means[sampled])) if sampled.size > 1 else 0.0
    sigma_v_sq = max(spread, 0.1 * sigma1_sq)
    eta = INIT_ETA if variant.is_mixture else 1.0

    if chain_index > 0:
        beta = beta + JITTER_SD * stream.standard_normal(beta.shape[0])
        sigma1_sq *= float(np.exp(JITTER_SD * stream.standard_normal()))
        sigma_v_sq *= float(np.exp(JITTER_SD * stream.standard_normal()))
        if variant.is_mixture:
            eta *= float(np.exp(JITTER_SD * stream.standard_normal()))

    state = ChainState(beta=beta, v=v, z=np.ones(dataset.n, dtype=np.int8),
                       sigma1_sq=sigma1_sq, eta=eta, sigma_v_sq=sigma_v_sq,
                       p_e=INIT_PE.get(variant, float('nan')))
    for name, value in spec.initial.items():
        _set_initial(state, name, value)
    state.check(variant)
    return state


def _sweep(ctx: ConditionalContext, stream: RngStream, variant: Variant, frozen) -> None:
    s = ctx.state
    if 'beta' not in frozen:
        s.beta = draw_beta_coeff(ctx, stream)
    if 'v' not in frozen:
        s.v = draw_area_effects(ctx, stream)
    if variant.is_mixture:
        if 'z' not in frozen:
            s.z = draw_indicators(ctx, stream)
        if 'p_e' not in frozen:
            s.p_e = draw_pe(ctx, stream, variant)
    if 'sigma_v_sq' not in frozen:
        s.sigma_v_sq = draw_sigma_v(ctx, stream)
    if 'sigma1_sq' not in frozen:
        s.sigma1_sq = draw_sigma1(ctx, stream, variant)
    if variant.is_mixture and 'eta' not in frozen:
        s.eta = draw_eta(ctx, stream, variant)


def _run_chain(dataset: Dataset, area_frame: AreaFrame, spec: ModelSpec, chain_index: int,
               replicate: int = 0) -> Tuple[ChainDraws, Dict[str, int], float]:
    cfg = spec.chain
    variant = spec.variant
    if cfg.n_draws < 1:
        raise ConfigurationError(f'n_draws must be >= 1, got {cfg.n_draws}')
    if tuple(area_frame.area_ids) != tuple(dataset.area_ids):
        area_frame = area_frame.reindex(dataset.area_ids)
    stream = RngStream(cfg.seed, chain=chain_index, replicate=replicate, purpose=PURPOSE_CHAIN)
    start = time.time()
    state = initialize(dataset, spec, stream, chain_index)
    clamp = ClampCounter()
    ctx = ConditionalContext(dataset, state, clamp)

    D, q, m, n = cfg.n_draws, dataset.q, dataset.m, dataset.n
    out = {'beta': np.empty((D, q)), 'v': np.empty((D, m)), 'z': np.empty((D, n), dtype=np.int8),
           'sigma1_sq': np.empty(D), 'eta': np.empty(D), 'sigma_v_sq': np.empty(D),
           'p_e': np.empty(D)}
    total = cfg.burn_in + D * cfg.thin
    kept = 0
    for it in range(total):
        try:
            _sweep(ctx, stream, variant, spec.frozen)
            state.check(variant)
        except HBSAEError as exc:
            raise ChainFailure(chain_index, it, exc)
        except (FloatingPointError, ValueError, ArithmeticError) as exc:
            raise ChainFailure(chain_index, it, exc)
        if it >= cfg.burn_in and (it - cfg.burn_in + 1) % cfg.thin == 0:
            out['beta'][kept] = state.beta
            out['v'][kept] = state.v
            out['z'][kept] = state.z
            out['sigma1_sq'][kept] = state.sigma1_sq
            out['eta'][kept] = state.eta
            out['sigma_v_sq'][kept] = state.sigma_v_sq
            out['p_e'][kept] = state.p_e
            kept += 1

    # theta_i = xbar_i' beta + v_i for every retained draw
    theta = out['beta'] @ area_frame.xbar.T + out['v']
    theta_original = np.exp(theta) if dataset.log_transformed else None
    elapsed = time.time() - start
    draws = ChainDraws(variant=variant, area_ids=dataset.area_ids, beta=out['beta'], v=out['v'],
                       z=out['z'], sigma1_sq=out['sigma1_sq'], eta=out['eta'],
                       sigma_v_sq=out['sigma_v_sq'], p_e=out['p_e'], theta=theta,
                       chain_index=np.full(D, chain_index, dtype=np.int64), seed=cfg.seed,
                       config=_provenance(spec), log_transformed=dataset.log_transformed,
                       theta_original=theta_original)
    return draws, dict(clamp.counts), elapsed


def _provenance(spec: ModelSpec) -> dict:
    return {'variant': spec.variant.value, 'chain': asdict(spec.chain),
            'frozen': sorted(spec.frozen)}


def run_chain(dataset: Dataset, area_frame: AreaFrame, spec: ModelSpec,
              chain_index: int = 0, replicate: int = 0) -> ChainDraws:
    """Run one chain and return its retained draws.

    Args:
        dataset: validated sample.
        area_frame: area frame in the dataset's area order.
        spec: model variant and chain settings.
        chain_index: selects the random stream and whether the start is jittered.
        replicate: simulation replicate index, folded into the random stream key.

    Returns:
        ChainDraws with ``n_draws`` rows.
    """
    draws, _, _ = _run_chain(dataset, area_frame, spec, chain_index, replicate)
    return draws


def _chain_job(args):
    dataset, area_frame, spec, chain_index, replicate = args
    try:
        return chain_index, _run_chain(dataset, area_frame, spec, chain_index, replicate), None
    except SamplerError as exc:
        return chain_index, None, exc


def fit(dataset: Dataset, area_frame: AreaFrame, spec: ModelSpec, replicate: int = 0,
        diagnostics: bool = True) -> FitResult:
    """Run ``n_chains`` chains, merge them and compute diagnostics.

    Every chain runs to completion or failure; the lowest-index failure is raised with the
    full list attached as ``failures``.
    """
    spec.validate()
    cfg = spec.chain
    start = time.time()
    jobs = [(dataset, area_frame, spec, c, replicate) for c in range(cfg.n_chains)]
    logger.info(f'Fitting {spec.variant.name}: {cfg.n_chains} chain(s), burn-in {cfg.burn_in}, '
                f'{cfg.n_draws} draws, thin {cfg.thin}, seed {cfg.seed}')
    workers = cfg.workers()
    if workers > 1:
        with Pool(processes=workers) as pool:
            results = pool.map(_chain_job, jobs)
    else:
        results = [_chain_job(job) for job in jobs]
    results.sort(key=lambda r: r[0])

    failures = [r[2] for r in results if r[2] is not None]
    if failures:
        for exc in failures:
            logger.error(str(exc))
        first = failures[0]
        first.failures = failures
        raise first

    parts = [r[1][0] for r in results]
    chain_seconds = [r[1][2] for r in results]
    clamp_total: Dict[str, int] = {}
    for r in results:
        for k, v in r[1][1].items():
            clamp_total[k] = clamp_total.get(k, 0) + v
    draws = ChainDraws.merge(parts)
    table = diagnostics_table(draws) if diagnostics else pd.DataFrame()
    elapsed = time.time() - start
    if clamp_total:
        logger.warning(f'Precision clamped to the floor: {clamp_total}')
    logger.info(f'Finished {spec.variant.name} fit in {elapsed:.1f} s')
    return FitResult(draws=draws, diagnostics=table, elapsed_seconds=elapsed,
                     chain_seconds=chain_seconds, clamp_counts=clamp_total)


def write_draws_csv(draws: ChainDraws, file_path: str) -> None:
    """Dump every retained draw, one row per draw, 17 significant digits."""
    draws.to_frame().to_csv(file_path, index=False, float_format='%.17g', lineterminator='\n')
    logger.info(f'Draws written to {file_path}')

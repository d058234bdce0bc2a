"""
Work unit of the Monte Carlo study: one (replicate, method) fit.
"""
import logging
import time
from dataclasses import dataclass, replace
from typing import Dict, Sequence, Tuple

import numpy as np

from preprocess.data_types import ChainConfig, ModelSpec, Variant
from preprocess.errors import HBSAEError, StudyFailure
from simulation.generate_population import draw_sample, fixed_covariates, generate_population
from simulation.scenario_defs import ScenarioSpec
from mcmc.gibbs_engine import fit
from mcmc.random_streams import PURPOSE_SAMPLE, RngStream

logger = logging.getLogger(__name__)


@dataclass
class ReplicateRecord:
    """Per-area outcome of one fit: truth, posterior mean and variance, interval bounds."""
    replicate: int
    method: str
    theta_true: np.ndarray
    theta_hat: np.ndarray
    post_var: np.ndarray
    lower: Dict[float, np.ndarray]
    upper: Dict[float, np.ndarray]
    seconds: float = 0.0


def record_from_draws(replicate: int, method: str, theta_true: np.ndarray, theta_draws: np.ndarray,
                      levels: Sequence[float], seconds: float = 0.0) -> ReplicateRecord:
    lower, upper = {}, {}
    for level in levels:
        tail = (1.0 - level) / 2.0
        lower[level], upper[level] = np.quantile(theta_draws, [tail, 1.0 - tail], axis=0)
    return ReplicateRecord(replicate=replicate, method=method, theta_true=theta_true,
                           theta_hat=theta_draws.mean(axis=0),
                           post_var=theta_draws.var(axis=0, ddof=1) if theta_draws.shape[0] > 1
                           else np.zeros(theta_draws.shape[1]),
                           lower=lower, upper=upper, seconds=seconds)


def fit_replicate(scenario: ScenarioSpec, replicate: int, method: str, chain: ChainConfig,
                  levels: Sequence[float], covariates: np.ndarray = None) -> ReplicateRecord:
    """Generate the replicate's population, sample it, fit ``method`` and summarize theta.

    The population and sample depend only on (scenario seed, replicate); the chain stream adds
    the replicate index, so any subset of replicates reproduces in isolation.
    """
    start = time.time()
    population, theta = generate_population(scenario, replicate, covariates)
    stream = RngStream(scenario.seed, replicate=replicate, purpose=PURPOSE_SAMPLE)
    dataset, frame = draw_sample(population, scenario.n_i, stream)
    spec = ModelSpec(variant=Variant.parse(method), chain=replace(chain, seed=scenario.seed, n_workers=1))
    result = fit(dataset, frame, spec, replicate=replicate, diagnostics=False)
    return record_from_draws(replicate, spec.variant.value, theta, result.draws.theta, levels,
                             time.time() - start)


def run_job(args: Tuple) -> Tuple[Tuple[int, str], object]:
    """Pool entry point; returns ((replicate, method), record or StudyFailure)."""
    scenario, replicate, method, chain, levels = args
    try:
        record = fit_replicate(scenario, replicate, method, chain, levels,
                               covariates=fixed_covariates(scenario))
        logger.info(f'Replicate {replicate} {method}: {record.seconds:.1f} s')
        return (replicate, method), record
    except (HBSAEError, ArithmeticError, ValueError) as exc:
        return (replicate, method), StudyFailure(replicate, method, exc)

"""
Finite populations and simple random samples for the Monte Carlo study.
"""
import logging
from dataclasses import dataclass
from typing import Sequence, Tuple, Union

import numpy as np
import pandas as pd

from preprocess.data_types import AreaFrame, Dataset
from preprocess.errors import SampleTooLarge
from preprocess.read_unit_data import area_frame_from_population, units_from_frame
from preprocess.validate_dataset import validate_dataset
from simulation.scenario_defs import ScenarioSpec
from mcmc.random_streams import PURPOSE_COVARIATES, PURPOSE_POPULATION, RngStream

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Population:
    """One finite population: ``frame`` holds ``area_id, y, x`` for every unit."""
    frame: pd.DataFrame
    area_ids: Tuple[str, ...]
    N_i: np.ndarray
    v: np.ndarray
    component: np.ndarray
    xbar: np.ndarray
    replicate: int


def area_labels(m: int) -> Tuple[str, ...]:
    width = len(str(m))
    return tuple(f'{i + 1:0{width}d}' for i in range(m))


def fixed_covariates(scenario: ScenarioSpec) -> np.ndarray:
    """Covariates x_ij ~ N(x_mean, x_sd^2), drawn once per scenario seed."""
    stream = RngStream(scenario.seed, replicate=0, purpose=PURPOSE_COVARIATES)
    return stream.normal(scenario.x_mean, scenario.x_sd, scenario.m * scenario.N_i)


def generate_population(scenario: ScenarioSpec, replicate_index: int,
                        covariates: np.ndarray = None) -> Tuple[Population, np.ndarray]:
    """Population of replicate ``replicate_index`` and its true theta_i = b0 + b1 xbar_i + v_i.

    Args:
        scenario: validated scenario.
        replicate_index: selects the stream for v and e; x does not depend on it.
        covariates: precomputed ``fixed_covariates(scenario)``, to skip regenerating them.
    """
    m, N = scenario.m, scenario.N_i
    x = fixed_covariates(scenario) if covariates is None else covariates
    stream = RngStream(scenario.seed, replicate=replicate_index, purpose=PURPOSE_POPULATION)
    v = stream.normal(0.0, scenario.sigma_v, m) if scenario.sigma_v > 0 else np.zeros(m)
    e, component = scenario.error.draw(stream.generator, m * N)
    area = np.repeat(np.arange(m), N)
    b0, b1 = scenario.beta
    y = b0 + b1 * x + v[area] + e

    ids = area_labels(m)
    frame = pd.DataFrame({'area_id': [ids[a] for a in area], 'y': y, 'x': x})
    xbar = x.reshape(m, N).mean(axis=1)
    theta = b0 + b1 * xbar + v
    population = Population(frame=frame, area_ids=ids, N_i=np.full(m, N, dtype=np.int64), v=v,
                            component=component, xbar=xbar, replicate=replicate_index)
    return population, theta


def draw_sample(population: Population, n_i: Union[int, Sequence[int]],
                stream: RngStream) -> Tuple[Dataset, AreaFrame]:
    """Simple random sample without replacement of n_i units in every area.

    The area frame carries N_i and the covariate means of the whole population.
    """
    m = len(population.area_ids)
    sizes = np.full(m, n_i, dtype=np.int64) if np.isscalar(n_i) else np.asarray(n_i, dtype=np.int64)
    if np.any(sizes > population.N_i):
        a = int(np.flatnonzero(sizes > population.N_i)[0])
        raise SampleTooLarge(f'area {population.area_ids[a]}: sample of {sizes[a]} from '
                             f'{population.N_i[a]} units')
    offsets = np.concatenate([[0], np.cumsum(population.N_i)[:-1]])
    rows = []
    for a in range(m):
        picked = stream.generator.choice(population.N_i[a], size=sizes[a], replace=False)
        rows.append(offsets[a] + np.sort(picked))
    sample = population.frame.iloc[np.concatenate(rows)].reset_index(drop=True)
    records, names = units_from_frame(sample, intercept=True)
    frame = area_frame_from_population(population.frame, intercept=True,
                                       area_ids=list(population.area_ids))
    return validate_dataset(records, frame, covariate_names=names)

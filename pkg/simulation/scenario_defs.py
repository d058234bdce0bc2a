"""
Error-generating scenarios of the Monte Carlo study.

Five named setups share beta = (1, 1), x ~ N(1, 1), v ~ N(0, 1), m = 40 areas of
N_i = 200 units with n_i = 4 sampled per area and S = 100 replicates. They differ only in
the unit errors:

    i    N(0, 1)
    ii   N(0, 1) w.p. 0.90, N(0, 25) otherwise
    iii  N(0, 1) w.p. 0.60, N(0, 25) otherwise
    iv   t with 4 degrees of freedom
    v    N(0, 1) w.p. 0.97, N(5, 25) otherwise
"""
from dataclasses import asdict, dataclass, replace
from typing import Optional, Tuple

import numpy as np

from preprocess.errors import ConfigurationError

GENERATORS = ('normal', 'mixture', 't', 'zero')


@dataclass(frozen=True)
class ErrorGenerator:
    """Unit-error distribution: 'normal' N(0, sd1^2); 'mixture' N(0, sd1^2) w.p. p_e else
    N(mu2, sd2^2); 't' Student t with ``df`` degrees of freedom; 'zero' e = 0."""
    kind: str = 'normal'
    p_e: float = 1.0
    sd1: float = 1.0
    mu2: float = 0.0
    sd2: float = 5.0
    df: float = 4.0

    def validate(self) -> 'ErrorGenerator':
        if self.kind not in GENERATORS:
            raise ConfigurationError(f'unknown error generator {self.kind}, use one of {GENERATORS}')
        if self.kind == 'mixture' and not 0.0 <= self.p_e <= 1.0:
            raise ConfigurationError(f'mixture p_e must lie in [0, 1], got {self.p_e}')
        if self.sd1 <= 0 or self.sd2 <= 0:
            raise ConfigurationError('error standard deviations must be positive')
        if self.kind == 't' and self.df <= 0:
            raise ConfigurationError(f't degrees of freedom must be positive, got {self.df}')
        return self

    def label(self) -> str:
        if self.kind == 'normal':
            return f'N(0,{self.sd1:g}^2)'
        if self.kind == 'mixture':
            return f'{(1.0 - self.p_e) * 100:g}% N({self.mu2:g},{self.sd2:g}^2)'
        if self.kind == 't':
            return f't_{self.df:g}'
        return 'e=0'

    def draw(self, generator: np.random.Generator, size: int) -> Tuple[np.ndarray, np.ndarray]:
        """(errors, component) with component 1 for the main and 0 for the contaminating part."""
        if self.kind == 'zero':
            return np.zeros(size), np.ones(size, dtype=np.int8)
        if self.kind == 'normal':
            return generator.normal(0.0, self.sd1, size), np.ones(size, dtype=np.int8)
        if self.kind == 't':
            return generator.standard_t(self.df, size), np.ones(size, dtype=np.int8)
        main = generator.random(size) < self.p_e
        e = np.where(main, generator.normal(0.0, self.sd1, size),
                     generator.normal(self.mu2, self.sd2, size))
        return e, main.astype(np.int8)


@dataclass(frozen=True)
class ScenarioSpec:
    name: str
    error: ErrorGenerator
    m: int = 40
    N_i: int = 200
    n_i: int = 4
    beta: Tuple[float, float] = (1.0, 1.0)
    x_mean: float = 1.0
    x_sd: float = 1.0
    sigma_v: float = 1.0
    S: int = 100
    seed: int = 20190801

    def validate(self) -> 'ScenarioSpec':
        self.error.validate()
        if self.m < 3:
            raise ConfigurationError(f'a scenario needs at least 3 areas, got {self.m}')
        if self.N_i < 1 or self.n_i < 1:
            raise ConfigurationError('N_i and n_i must be positive')
        if self.S < 1:
            raise ConfigurationError(f'S must be >= 1, got {self.S}')
        if len(self.beta) != 2:
            raise ConfigurationError('beta must be (intercept, slope)')
        if self.sigma_v < 0:
            raise ConfigurationError('sigma_v must be >= 0')
        return self

    def to_dict(self) -> dict:
        return asdict(self)


NAMED_ERRORS = {
    'i': ErrorGenerator('normal'),
    'ii': ErrorGenerator('mixture', p_e=0.90, mu2=0.0, sd2=5.0),
    'iii': ErrorGenerator('mixture', p_e=0.60, mu2=0.0, sd2=5.0),
    'iv': ErrorGenerator('t', df=4.0),
    'v': ErrorGenerator('mixture', p_e=0.97, mu2=5.0, sd2=5.0),
}


def named_scenario(name: str, seed: Optional[int] = None) -> ScenarioSpec:
    """Full-scale named scenario ('i' .. 'v')."""
    key = str(name).strip().lower()
    if key not in NAMED_ERRORS:
        raise ConfigurationError(f"unknown scenario '{name}', use one of {sorted(NAMED_ERRORS)}")
    spec = ScenarioSpec(name=key, error=NAMED_ERRORS[key])
    if seed is not None:
        spec = replace(spec, seed=int(seed))
    return spec


def desk_scale(scenario: ScenarioSpec) -> ScenarioSpec:
    """Reduced study: S = 50 replicates of m = 20 areas with N_i = 100."""
    return replace(scenario, S=50, m=20, N_i=100, n_i=4)

"""
Core data types of the nested-error regression workflow.

The sampled unit-level observations (``UnitRecord`` / ``Dataset``), the per-area population
information (``AreaFrame``), the model/chain settings (``ModelSpec`` / ``ChainConfig``), one
Gibbs state (``ChainState``) and the retained posterior sample (``ChainDraws``).

All arrays held by ``Dataset`` and ``AreaFrame`` are read-only, so these objects can be shared
by concurrent chains and replicates.
"""
import os
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Dict, FrozenSet, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from preprocess.errors import ConfigurationError, InvalidParameter


class Variant(str, Enum):
    """HB model variant: normal errors (DG), contamination mixture (CDM), symmetric mixture (GDM)."""
    DG = 'dg'
    CDM = 'cdm'
    GDM = 'gdm'

    @classmethod
    def parse(cls, value) -> 'Variant':
        if isinstance(value, Variant):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            raise ConfigurationError(f"unknown model variant '{value}', use one of dg, cdm, gdm")

    @property
    def is_mixture(self) -> bool:
        return self is not Variant.DG


def _readonly(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class UnitRecord:
    area_id: Any
    y: float
    x: Tuple[float, ...]


@dataclass(frozen=True)
class Dataset:
    """Validated sample, indexed by area (0..m-1) and by unit within area.

    Build it through ``preprocess.validate_dataset.validate_dataset``; the constructor
    itself does not check the modelling guards.
    """
    records: Tuple[UnitRecord, ...]
    area_ids: Tuple[Any, ...]
    area_index: np.ndarray
    unit_index: np.ndarray
    y: np.ndarray
    X: np.ndarray
    n_i: np.ndarray
    covariate_names: Tuple[str, ...] = ()
    log_transformed: bool = False

    @property
    def m(self) -> int:
        return len(self.area_ids)

    @property
    def n(self) -> int:
        return int(self.y.shape[0])

    @property
    def q(self) -> int:
        return int(self.X.shape[1])

    @property
    def sampled_areas(self) -> np.ndarray:
        return np.flatnonzero(self.n_i > 0)

    def unit_labels(self) -> List[Tuple[Any, int]]:
        """(area_id, unit number) for every row, in row order."""
        return [(self.area_ids[a], int(u)) for a, u in zip(self.area_index, self.unit_index)]

    def to_frame(self) -> pd.DataFrame:
        cols = list(self.covariate_names) if self.covariate_names else \
            [f'x{k}' for k in range(self.q)]
        df = pd.DataFrame(self.X, columns=cols)
        df.insert(0, 'y', self.y)
        df.insert(0, 'unit', self.unit_index)
        df.insert(0, 'area_id', [self.area_ids[a] for a in self.area_index])
        return df


def make_dataset(records: Sequence[UnitRecord], area_ids: Sequence[Any],
                 covariate_names: Sequence[str] = (), log_transformed: bool = False) -> Dataset:
    """Index ``records`` by ``area_ids`` order; areas without records get n_i = 0."""
    pos = {a: i for i, a in enumerate(area_ids)}
    m = len(area_ids)
    area_index = np.array([pos[r.area_id] for r in records], dtype=np.int64)
    counts = np.zeros(m, dtype=np.int64)
    unit_index = np.empty(len(records), dtype=np.int64)
    for row, a in enumerate(area_index):
        unit_index[row] = counts[a]
        counts[a] += 1
    y = np.array([r.y for r in records], dtype=float)
    X = np.array([r.x for r in records], dtype=float).reshape(len(records), -1)
    return Dataset(records=tuple(records), area_ids=tuple(area_ids),
                   area_index=_readonly(area_index), unit_index=_readonly(unit_index),
                   y=_readonly(y), X=_readonly(X), n_i=_readonly(counts),
                   covariate_names=tuple(covariate_names), log_transformed=log_transformed)


@dataclass(frozen=True)
class AreaFrame:
    """Population size N_i and population covariate means per area.

    ``xbar`` has the same q columns as the unit covariates (intercept column included when the
    model has one). ``xbar_log_scale`` marks means that are already means of log covariates.
    """
    area_ids: Tuple[Any, ...]
    N: np.ndarray
    xbar: np.ndarray
    xbar_log_scale: bool = False

    def __post_init__(self):
        object.__setattr__(self, 'area_ids', tuple(self.area_ids))
        object.__setattr__(self, 'N', _readonly(np.asarray(self.N, dtype=np.int64)))
        xbar = np.asarray(self.xbar, dtype=float)
        object.__setattr__(self, 'xbar', _readonly(xbar.reshape(len(self.area_ids), -1)))

    @property
    def q(self) -> int:
        return int(self.xbar.shape[1])

    def reindex(self, area_ids: Sequence[Any]) -> 'AreaFrame':
        pos = {a: i for i, a in enumerate(self.area_ids)}
        idx = [pos[a] for a in area_ids]
        return replace(self, area_ids=tuple(area_ids), N=self.N[idx], xbar=self.xbar[idx])

    def to_frame(self) -> pd.DataFrame:
        df = pd.DataFrame(self.xbar, columns=[f'xbar{k}' for k in range(self.q)])
        df.insert(0, 'N', self.N)
        df.insert(0, 'area_id', list(self.area_ids))
        return df


@dataclass(frozen=True)
class ChainConfig:
    n_draws: int = 10000
    burn_in: int = 5000
    thin: int = 1
    n_chains: int = 2
    seed: int = 20190801
    n_workers: Optional[int] = None

    def validate(self) -> 'ChainConfig':
        if self.n_draws < 1:
            raise ConfigurationError(f'n_draws must be >= 1, got {self.n_draws}')
        if self.burn_in < 0:
            raise ConfigurationError(f'burn_in must be >= 0, got {self.burn_in}')
        if self.thin < 1:
            raise ConfigurationError(f'thin must be >= 1, got {self.thin}')
        if self.n_chains < 1:
            raise ConfigurationError(f'n_chains must be >= 1, got {self.n_chains}')
        if self.n_workers is not None and self.n_workers < 1:
            raise ConfigurationError(f'n_workers must be >= 1, got {self.n_workers}')
        if not 0 <= int(self.seed) < 2 ** 64:
            raise ConfigurationError(f'seed must be a 64-bit unsigned integer, got {self.seed}')
        return self

    def workers(self) -> int:
        """Processes for the chains: ``n_workers`` if set, else one per chain up to the CPU count."""
        if self.n_workers is not None:
            return max(1, min(self.n_workers, self.n_chains))
        return max(1, min(self.n_chains, os.cpu_count() or 1))


FREEZABLE = frozenset({'beta', 'v', 'z', 'p_e', 'sigma_v_sq', 'sigma1_sq', 'eta'})


@dataclass(frozen=True)
class ModelSpec:
    """Model variant plus chain settings.

    ``frozen`` names parameters that keep their initial value throughout the chain and
    ``initial`` overrides initial values; both exist to build conjugate sub-models.
    """
    variant: Variant
    chain: ChainConfig = field(default_factory=ChainConfig)
    frozen: FrozenSet[str] = frozenset()
    initial: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, 'variant', Variant.parse(self.variant))
        object.__setattr__(self, 'frozen', frozenset(self.frozen))

    def validate(self) -> 'ModelSpec':
        self.chain.validate()
        unknown = set(self.frozen) - FREEZABLE
        if unknown:
            raise ConfigurationError(f'cannot freeze unknown parameters: {sorted(unknown)}')
        unknown = set(self.initial) - FREEZABLE
        if unknown:
            raise ConfigurationError(f'unknown initial values: {sorted(unknown)}')
        return self


@dataclass
class ChainState:
    """One Gibbs state. For DG, ``z`` is all ones, ``eta`` is 1 and ``p_e`` is NaN."""
    beta: np.ndarray
    v: np.ndarray
    z: np.ndarray
    sigma1_sq: float
    eta: float
    sigma_v_sq: float
    p_e: float

    def copy(self) -> 'ChainState':
        return ChainState(beta=self.beta.copy(), v=self.v.copy(), z=self.z.copy(),
                          sigma1_sq=self.sigma1_sq, eta=self.eta,
                          sigma_v_sq=self.sigma_v_sq, p_e=self.p_e)

    def check(self, variant: Variant) -> None:
        """Raise ``InvalidParameter`` when the state breaks a variant constraint."""
        if not (np.all(np.isfinite(self.beta)) and np.all(np.isfinite(self.v))):
            raise InvalidParameter('non-finite regression coefficient or area effect')
        for name in ('sigma1_sq', 'sigma_v_sq', 'eta'):
            value = getattr(self, name)
            if not (np.isfinite(value) and value > 0):
                raise InvalidParameter(f'{name} must be finite and positive, got {value}')
        if variant is Variant.GDM and not 0.5 < self.p_e < 1.0:
            raise InvalidParameter(f'GDM requires 1/2 < p_e < 1, got {self.p_e}')
        if variant is Variant.CDM:
            if not 0.0 < self.p_e < 1.0:
                raise InvalidParameter(f'CDM requires 0 < p_e < 1, got {self.p_e}')
            if not self.eta > 1.0:
                raise InvalidParameter(f'CDM requires eta > 1, got {self.eta}')


@dataclass
class ChainDraws:
    """Retained draws, one row per kept iteration, chains stacked in chain-index order."""
    variant: Variant
    area_ids: Tuple[Any, ...]
    beta: np.ndarray
    v: np.ndarray
    z: np.ndarray
    sigma1_sq: np.ndarray
    eta: np.ndarray
    sigma_v_sq: np.ndarray
    p_e: np.ndarray
    theta: np.ndarray
    chain_index: np.ndarray
    seed: int
    config: Dict[str, Any] = field(default_factory=dict)
    log_transformed: bool = False
    theta_original: Optional[np.ndarray] = None

    @property
    def n_rows(self) -> int:
        return int(self.beta.shape[0])

    @property
    def q(self) -> int:
        return int(self.beta.shape[1])

    @property
    def n_chains(self) -> int:
        return int(np.unique(self.chain_index).size)

    @property
    def sigma2_sq(self) -> np.ndarray:
        return self.eta * self.sigma1_sq

    def theta_reported(self) -> np.ndarray:
        """θ draws on the reporting scale (exp(θ*) for log-transformed fits)."""
        return self.theta_original if self.log_transformed else self.theta

    def chain(self, index: int) -> 'ChainDraws':
        keep = self.chain_index == index
        return self._subset(keep)

    def _subset(self, keep: np.ndarray) -> 'ChainDraws':
        return replace(self, beta=self.beta[keep], v=self.v[keep], z=self.z[keep],
                       sigma1_sq=self.sigma1_sq[keep], eta=self.eta[keep],
                       sigma_v_sq=self.sigma_v_sq[keep], p_e=self.p_e[keep],
                       theta=self.theta[keep], chain_index=self.chain_index[keep],
                       theta_original=None if self.theta_original is None
                       else self.theta_original[keep])

    @classmethod
    def merge(cls, parts: Sequence['ChainDraws']) -> 'ChainDraws':
        """Stack chains; ``parts`` is sorted by chain index first so the result is schedule-free."""
        if not parts:
            raise ConfigurationError('nothing to merge')
        parts = sorted(parts, key=lambda d: int(d.chain_index[0]))
        first = parts[0]

        def stack(name):
            return np.concatenate([getattr(p, name) for p in parts], axis=0)

        theta_original = None
        if first.theta_original is not None:
            theta_original = stack('theta_original')
        return replace(first, beta=stack('beta'), v=stack('v'), z=stack('z'),
                       sigma1_sq=stack('sigma1_sq'), eta=stack('eta'),
                       sigma_v_sq=stack('sigma_v_sq'), p_e=stack('p_e'), theta=stack('theta'),
                       chain_index=stack('chain_index'), theta_original=theta_original)

    def parameter_columns(self) -> List[str]:
        return ([f'beta_{k}' for k in range(self.q)] +
                [f'v_{a}' for a in self.area_ids] +
                ['sigma1_sq', 'eta', 'sigma_v_sq', 'p_e'] +
                [f'theta_{a}' for a in self.area_ids])

    def to_frame(self) -> pd.DataFrame:
        """Draw matrix with the header used by the draw dump."""
        values = np.column_stack([self.beta, self.v, self.sigma1_sq, self.eta,
                                  self.sigma_v_sq, self.p_e, self.theta_reported()])
        return pd.DataFrame(values, columns=self.parameter_columns())

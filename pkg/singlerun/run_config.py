"""
Run configuration of the command line: built-in defaults, overridden by an optional JSON
config file, overridden by explicit command-line flags.

The config file is either flat (``{"seed": 7, "draws": 2000}``) or split by command
(``{"fit": {...}, "simulate": {...}}``); keys are the long flag names with '-' replaced by '_'.
"""
import json
import os
import platform
from dataclasses import dataclass, field, replace
from typing import Any, Dict, List, Mapping, Optional

import numpy as np
import pandas as pd
import scipy

from preprocess.data_types import ChainConfig, ModelSpec, Variant
from preprocess.errors import ConfigurationError
from postprocess.write_reports import file_digest
from simulation.scenario_defs import ErrorGenerator, ScenarioSpec, desk_scale, named_scenario

__version__ = '1.0.0'

COMMANDS = ('fit', 'simulate', 'evaluate')

GLOBAL_DEFAULTS: Dict[str, Any] = {
    'seed': ChainConfig.seed,
    'out': 'hbsae_out',
    'chains': None,
    'draws': None,
    'burn_in': None,
    'thin': 1,
    'workers': None,
    'quiet': False,
}

COMMAND_DEFAULTS: Dict[str, Dict[str, Any]] = {
    'fit': {
        'model': 'gdm', 'units': None, 'areas': None, 'population': None,
        'intercept': True, 'log_transform': False, 'xbar_log_scale': False,
        'allow_unsampled': False, 'levels': [0.90, 0.95], 'dump_draws': False,
        'chains': ChainConfig.n_chains, 'draws': ChainConfig.n_draws,
        'burn_in': ChainConfig.burn_in,
    },
    'simulate': {
        'scenario': None, 'generator': None, 'pe': 0.9, 'sd1': 1.0, 'mu2': 0.0, 'sd2': 5.0,
        'df': 4.0, 'full_scale': False, 'S': None, 'm': None, 'N': None, 'n': None,
        'beta0': 1.0, 'beta1': 1.0, 'methods': ['dg', 'cdm', 'gdm'], 'levels': [0.90, 0.95],
        'chains': 1, 'draws': 4000, 'burn_in': 2000,
    },
    'evaluate': {
        'reports': [], 'truth': None, 'population': None, 'levels': [0.90, 0.95],
    },
}


def load_config_file(file_path: Optional[str], command: str) -> Dict[str, Any]:
    """Flat keys plus the keys of the ``command`` section, the latter winning."""
    if not file_path:
        return {}
    if not os.path.exists(file_path):
        raise ConfigurationError(f'config file not found: {file_path}')
    try:
        with open(file_path, 'r', encoding='utf-8') as f:
            data = json.load(f)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f'{file_path} is not valid JSON: {exc}')
    if not isinstance(data, dict):
        raise ConfigurationError(f'{file_path} must hold a JSON object')
    flat = {k.replace('-', '_'): v for k, v in data.items() if k not in COMMANDS}
    section = data.get(command, {})
    if not isinstance(section, dict):
        raise ConfigurationError(f"section '{command}' of {file_path} must be an object")
    flat.update({k.replace('-', '_'): v for k, v in section.items()})
    known = set(GLOBAL_DEFAULTS) | set(COMMAND_DEFAULTS[command])
    unknown = sorted(set(flat) - known)
    if unknown:
        raise ConfigurationError(f'unknown config keys for {command}: {unknown}')
    return flat


@dataclass(frozen=True)
class RunConfig:
    """Fully resolved settings of one command."""
    command: str
    values: Mapping[str, Any] = field(default_factory=dict)
    config_file: Optional[str] = None

    def __getitem__(self, key):
        return self.values[key]

    def get(self, key, default=None):
        return self.values.get(key, default)

    @property
    def out_dir(self) -> str:
        return str(self.values['out'])

    def chain_config(self) -> ChainConfig:
        v = self.values
        return ChainConfig(n_draws=int(v['draws']), burn_in=int(v['burn_in']), thin=int(v['thin']),
                           n_chains=int(v['chains']), seed=int(v['seed']),
                           n_workers=None if v['workers'] is None
                           else int(v['workers'])).validate()

    def model_spec(self) -> ModelSpec:
        return ModelSpec(variant=Variant.parse(self.values['model']),
                         chain=self.chain_config()).validate()

    def levels(self) -> List[float]:
        levels = [float(l) for l in self.values['levels']]
        if not levels or any(not 0.0 < l < 1.0 for l in levels):
            raise ConfigurationError(f'credible levels must lie in (0, 1), got {levels}')
        return levels

    def scenario(self) -> ScenarioSpec:
        v = self.values
        if v.get('scenario'):
            spec = named_scenario(v['scenario'], seed=v['seed'])
        elif v.get('generator'):
            kind = str(v['generator']).lower()
            error = ErrorGenerator(kind=kind, p_e=float(v['pe']) if kind == 'mixture' else 1.0,
                                   sd1=float(v['sd1']), mu2=float(v['mu2']), sd2=float(v['sd2']),
                                   df=float(v['df']))
            spec = ScenarioSpec(name=f'custom_{kind}', error=error, seed=int(v['seed']))
        else:
            raise ConfigurationError('simulate needs --scenario or --generator')
        if not v.get('full_scale'):
            spec = desk_scale(spec)
        overrides = {}
        for key, attr in (('S', 'S'), ('m', 'm'), ('N', 'N_i'), ('n', 'n_i')):
            if v.get(key) is not None:
                overrides[attr] = int(v[key])
        spec = replace(spec, beta=(float(v['beta0']), float(v['beta1'])), **overrides)
        return spec.validate()

    def to_dict(self) -> Dict[str, Any]:
        return {'command': self.command, 'config_file': self.config_file, **dict(self.values)}


def resolve_config(command: str, flags: Mapping[str, Any],
                   config_file: Optional[str] = None) -> RunConfig:
    """Merge defaults < config file < flags; flags equal to None count as not given."""
    if command not in COMMANDS:
        raise ConfigurationError(f'unknown command {command}')
    values = dict(GLOBAL_DEFAULTS)
    values.update(COMMAND_DEFAULTS[command])
    values.update(load_config_file(config_file, command))
    values.update({k: v for k, v in flags.items() if v is not None and k in values})
    for key in ('methods', 'levels', 'reports'):
        if isinstance(values.get(key), str):
            values[key] = [s.strip() for s in values[key].split(',') if s.strip()]
    return RunConfig(command=command, values=values, config_file=config_file)


def build_manifest(config: RunConfig, inputs: Mapping[str, Optional[str]]) -> Dict[str, Any]:
    """Input digests, seed and software versions."""
    files = {}
    for label, path in inputs.items():
        if path and os.path.isfile(path):
            files[label] = {'path': os.path.abspath(path), 'sha256': file_digest(path)}
    return {'command': config.command, 'seed': config.get('seed'), 'version': __version__,
            'inputs': files,
            'python': platform.python_version(), 'numpy': np.__version__,
            'scipy': scipy.__version__, 'pandas': pd.__version__}

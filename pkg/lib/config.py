import json
from pathlib import Path
from typing import Optional

import numpy as np

from lib import utils
from lib.model import Scenario, build_cellular_scenario
from lib.shaping import ShapingOptions
from lib.simulate import SweepConfig
from lib.utils import ConfigError
from network.cellular import Geometry
from network.params import CellularParams

FIELD_MAP = {
    'K': 'K',
    'L': 'L',
    'M': 'M',
    'N': 'N',
    'q_h': 'q_h',
    'q_errors': 'q',
    'coop': 'coop',
    'rates': 'rates',
    'm2n': 'm2n',
}
CELLULAR_KEYS = ('cellular', 'geometry', 'geometry_seed')
SECTIONS = ('description', 'scenario', 'sweep', 'solver', 'allocation', 'training')


def parse_matrix(obj, n: int, name: str) -> np.ndarray:
    """"identity", a real diagonal, a real matrix or a matrix of [re, im] pairs."""
    if isinstance(obj, str):
        if obj == 'identity':
            return np.eye(n, dtype=complex)
        raise ConfigError(f'{name}: unknown matrix keyword {obj!r}')
    try:
        arr = np.asarray(obj, dtype=float)
    except (TypeError, ValueError):
        raise ConfigError(f'{name}: not a numeric array')
    if arr.ndim == 1:
        mat = np.diag(arr).astype(complex)
    elif arr.ndim == 2:
        mat = arr.astype(complex)
    elif arr.ndim == 3 and arr.shape[-1] == 2:
        mat = utils.from_pairs(arr)
    else:
        raise ConfigError(f'{name}: cannot read an array of shape {arr.shape} as a matrix')
    if mat.shape != (n, n):
        raise ConfigError(f'{name} is {mat.shape[0]}x{mat.shape[1]}, expected {n}x{n}')
    return mat


def scenario_from_dict(d: dict) -> Scenario:
    if 'cellular' in d:
        return _cellular_from_dict(d)
    kwargs = {}
    for key, val in d.items():
        try:
            kwargs[FIELD_MAP[key]] = val
        except KeyError:
            raise ConfigError(f'unknown scenario key {key!r}')
    for key in ('K', 'L', 'q_h', 'q'):
        if key not in kwargs:
            raise ConfigError(f'scenario is missing {key!r}')
    kwargs.setdefault('M', 1)
    kwargs.setdefault('N', 1)
    n = kwargs['N'] * kwargs['M'] * kwargs['K'] * kwargs['L']
    kwargs['q_h'] = parse_matrix(kwargs['q_h'], n, 'Q_h')
    kwargs['q'] = [parse_matrix(q, n, f'Q_{i}') for i, q in enumerate(kwargs['q'])]
    return Scenario(**kwargs)


def _cellular_from_dict(d: dict) -> Scenario:
    extra = set(d) - set(CELLULAR_KEYS) - {'coop', 'rates', 'm2n'}
    if extra:
        raise ConfigError(f'unknown cellular scenario keys: {sorted(extra)}')
    p = CellularParams.from_dict(d['cellular'])
    geometry = None
    if g := d.get('geometry'):
        try:
            geometry = Geometry(g['tx_positions_km'], g['rx_positions_km'], g['theta_windows_rad'])
        except KeyError as e:
            raise ConfigError(f'geometry is missing {e.args[0]!r}')
    rng = np.random.default_rng(d.get('geometry_seed', 0))
    s, _ = build_cellular_scenario(p, rng, geometry, coop=d.get('coop'), rates=d.get('rates'), m2n=d.get('m2n'))
    return s


def scenario_to_dict(s: Scenario) -> dict:
    return s.to_dict()


class Experiment:
    def __init__(self, raw: dict, path: Optional[Path] = None):
        unknown = set(raw) - set(SECTIONS)
        if unknown:
            raise ConfigError(f'unknown config sections: {sorted(unknown)}')
        if 'scenario' not in raw:
            raise ConfigError('config has no scenario section')
        self.raw = raw
        self.path = path
        self.scenario = scenario_from_dict(raw['scenario'])
        self.solver = ShapingOptions.from_dict(raw.get('solver', {}))
        self.allocation: dict = raw.get('allocation', {})
        self.training: dict = raw.get('training', {})

    def sweep_config(self, defaults: Optional[dict] = None, **overrides) -> SweepConfig:
        """cli defaults < JSON sweep block < command line overrides (None means not given)."""
        merged = dict(defaults or {})
        merged.update(self.raw.get('sweep', {}))
        merged.update({k: v for k, v in overrides.items() if v is not None})
        return SweepConfig.from_dict(merged, shaping=self.solver)


def load_experiment(path) -> Experiment:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except OSError as e:
        raise ConfigError(f'cannot read {path}: {e.strerror}')
    except json.JSONDecodeError as e:
        raise ConfigError(f'{path} is not valid JSON: {e}')
    if not isinstance(raw, dict):
        raise ConfigError(f'{path}: top level must be an object')
    return Experiment(raw, path)

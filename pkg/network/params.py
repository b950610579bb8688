from enum import Enum, EnumMeta

import numpy as np
from scipy import constants

from lib.utils import ConfigError


class AlgMeta(EnumMeta):
    alt_names_map = {}

    def __getitem__(cls, item):
        try:
            return cls.alt_names_map[cls.__name__][item.lower().replace('-', '_')]
        except (KeyError, AttributeError):
            raise ConfigError(f'unknown {cls.__name__.lower()}: {item!r}')


class Algorithm(Enum, metaclass=AlgMeta):
    shaped = 'shaped', 'shaped coordination'
    unshaped = 'unshaped', 'unshaped coordination'
    wz_bound = 'wz_bound', 'Wyner-Ziv bound', 'wz'
    no_coop = 'no_coop', 'no cooperation', 'local'
    infinite = 'infinite', 'infinite backhaul', 'perfect'

    def __new__(cls, csv_name, label, *alt):
        obj = object.__new__(cls)
        obj._value_ = csv_name
        obj.label = label
        for name in (csv_name, *alt):
            cls.alt_names_map.setdefault(cls.__name__, {})[name] = obj
        return obj

    @property
    def quantized(self) -> bool:
        return self in (Algorithm.shaped, Algorithm.unshaped)


class Mode(Enum, metaclass=AlgMeta):
    analytic = 'analytic',
    trained_vq = 'trained_vq', 'trained'

    def __new__(cls, csv_name, *alt):
        obj = object.__new__(cls)
        obj._value_ = csv_name
        for name in (csv_name, *alt):
            cls.alt_names_map.setdefault(cls.__name__, {})[name] = obj
        return obj


class PowerMode(Enum, metaclass=AlgMeta):
    per_tx = 'per_tx', 'per-tx'
    sum_power = 'sum_power', 'sum'

    def __new__(cls, csv_name, *alt):
        obj = object.__new__(cls)
        obj._value_ = csv_name
        for name in (csv_name, *alt):
            cls.alt_names_map.setdefault(cls.__name__, {})[name] = obj
        return obj


MSE_ALGORITHMS = (Algorithm.no_coop, Algorithm.unshaped, Algorithm.shaped, Algorithm.wz_bound)
RATE_ALGORITHMS = (Algorithm.no_coop, Algorithm.unshaped, Algorithm.shaped)


class CellularParams:
    """Cellular layout constants. Distances in km, frequency in Hz, angles in rad.

    Pathloss ``gamma * d**-epsilon`` is evaluated with d in metres.
    """
    FIELD_MAP = {
        'r_c': 'r_c',
        'gamma': 'gamma',
        'epsilon': 'epsilon',
        'd_0': 'd_0',
        'f': 'f',
        'd_as': 'd_as',
        'phi': 'phi',
        'sigma_e2': 'sigma_e2',
        'r_fb': 'r_fb',
        'r_fb_own': 'r_fb_own',
        'r_fb_other': 'r_fb_other',
        'M': 'M',
        'N': 'N',
        'K': 'K',
    }

    def __init__(self, r_c=1.0, gamma=1e9, epsilon=3.0, d_0=0.1, f=2e9, d_as=None, phi=np.pi / 6,
                 sigma_e2=1.0, r_fb=None, r_fb_own=5, r_fb_other=1, M=2, N=1, K=2):
        self.r_c: float = float(r_c)
        self.gamma: float = float(gamma)
        self.epsilon: float = float(epsilon)
        self.d_0: float = float(d_0)
        self.f: float = float(f)
        self.wavelength: float = constants.c / self.f
        self.d_as: float = self.wavelength / 2 if d_as is None else float(d_as)
        self.phi: float = float(phi)
        self.sigma_e2: float = float(sigma_e2)
        self.M: int = int(M)
        self.N: int = int(N)
        self.K: int = int(K)
        self.L: int = self.K
        if r_fb is None:
            r_fb = [[r_fb_own if k == l else r_fb_other for l in range(self.L)] for k in range(self.K)]
        self.r_fb = np.asarray(r_fb, dtype=float)
        self.validate()

    def validate(self):
        if not 0 < self.d_0 < self.r_c:
            raise ConfigError(f'need 0 < d_0 < r_c, got d_0={self.d_0}, r_c={self.r_c}')
        if self.phi <= 0:
            raise ConfigError('angle spread must be positive')
        if self.sigma_e2 <= 0:
            raise ConfigError('sigma_e2 must be positive')
        if self.r_fb.shape != (self.K, self.L):
            raise ConfigError(f'r_fb must be {self.K}x{self.L}')
        if np.any(self.r_fb < 0):
            raise ConfigError('feedback rates must be nonnegative')
        if min(self.M, self.N, self.K) < 1:
            raise ConfigError('antenna and TX counts must be positive')

    def pathloss(self, d_km: float) -> float:
        if self.epsilon == 0:
            return self.gamma
        return self.gamma * (1000 * d_km) ** -self.epsilon

    @property
    def n(self) -> int:
        return self.N * self.M * self.K * self.L

    @classmethod
    def from_dict(cls, d: dict) -> 'CellularParams':
        kwargs = {}
        for key, val in d.items():
            try:
                kwargs[cls.FIELD_MAP[key]] = val
            except KeyError:
                raise ConfigError(f'unknown cellular key {key!r}')
        return cls(**kwargs)

    def to_dict(self) -> dict:
        return {
            'r_c': self.r_c, 'gamma': self.gamma, 'epsilon': self.epsilon, 'd_0': self.d_0, 'f': self.f,
            'd_as': self.d_as, 'phi': self.phi, 'sigma_e2': self.sigma_e2, 'r_fb': self.r_fb.tolist(),
            'M': self.M, 'N': self.N, 'K': self.K,
        }

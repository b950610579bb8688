import logging
from typing import Optional, Sequence

import numpy as np
from scipy import integrate
from scipy.linalg import block_diag, toeplitz

from lib import covmat, cs_text, utils
from lib.utils import ConfigError
from network.cellular import Geometry
from network.params import CellularParams

report = logging.getLogger('cc.model')

REG_SCALE = 1e-8
SINGULAR_TOL = 1e-14


class InvalidGeometryError(ConfigError):
    pass


class Scenario:
    """K transmitters estimating one channel vector h ~ CN(0, q_h) of length n = N*M*K*L.

    ``q[i]`` is the local error covariance at TX i, ``coop[i]`` the ordered list of
    TXs that send to i and ``rates[k, i]`` the bits on the link k -> i.
    """

    def __init__(self, K: int, L: int, M: int, N: int, q_h, q: Sequence, coop: Optional[Sequence] = None,
                 rates=None, m2n: Optional[dict] = None, meta: Optional[dict] = None):
        self.K = int(K)
        self.L = int(L)
        self.M = int(M)
        self.N = int(N)
        self.n = self.N * self.M * self.K * self.L
        self.q_h = covmat.check_cov(q_h, 'Q_h')
        self.q = [covmat.check_cov(qi, f'Q_{i}') for i, qi in enumerate(q)]
        if coop is None:
            coop = [[k for k in range(self.K) if k != i] for i in range(self.K)]
        self.coop: list[list[int]] = [list(map(int, a)) for a in coop]
        if rates is None:
            rates = np.zeros((self.K, self.K), dtype=int)
        self.rates = np.array(rates, dtype=int)
        self.m2n: dict[int, float] = {int(k): float(v) for k, v in (m2n or {}).items()}
        self.meta: dict = dict(meta or {})
        self._validate()
        self._reg_cache: dict[int, np.ndarray] = {}

    def _validate(self):
        if self.q_h.shape != (self.n, self.n):
            raise ConfigError(f'Q_h is {self.q_h.shape[0]}x{self.q_h.shape[1]}, expected n = {self.n}')
        if len(self.q) != self.K:
            raise ConfigError(f'{len(self.q)} error covariances for K = {self.K} TXs')
        for i, qi in enumerate(self.q):
            if qi.shape != (self.n, self.n):
                raise ConfigError(f'Q_{i} has dimension {qi.shape[0]}, expected {self.n}')
        if len(self.coop) != self.K:
            raise ConfigError('one cooperation list per TX required')
        for i, a in enumerate(self.coop):
            if i in a:
                raise ConfigError(f'TX {i} listed in its own cooperation set')
            if len(set(a)) != len(a) or any(not 0 <= k < self.K for k in a):
                raise ConfigError(f'bad cooperation set for TX {i}: {a}')
        if self.rates.shape != (self.K, self.K):
            raise ConfigError(f'rate table must be {self.K}x{self.K}')
        if np.any(self.rates < 0):
            raise ConfigError('link rates must be nonnegative')

    @property
    def delta_reg(self) -> float:
        return REG_SCALE * float(np.real(np.trace(self.q_h))) / self.n

    def q_reg(self, i: int) -> np.ndarray:
        """Q_i, with delta_reg * I added when it is singular."""
        if i not in self._reg_cache:
            qi = self.q[i]
            if covmat.min_eig(qi) <= SINGULAR_TOL * max(np.linalg.norm(self.q_h, 2), 1.0):
                report.debug(cs_text.regularized.format(i, self.delta_reg))
                qi = qi + self.delta_reg * np.eye(self.n)
            self._reg_cache[i] = qi
        return self._reg_cache[i]

    def gamma(self, k: int) -> np.ndarray:
        """Covariance of the local estimate at TX k, the source of the k -> i quantizer."""
        return self.q_h + self.q_reg(k)

    def links(self) -> list[tuple[int, int]]:
        return [(k, i) for i in range(self.K) for k in self.coop[i]]

    def link_rates(self, i: int) -> tuple[int, ...]:
        return tuple(int(self.rates[k, i]) for k in self.coop[i])

    def with_rates(self, rates) -> 'Scenario':
        new = self._copy()
        new.rates = np.array(rates, dtype=int)
        new._validate()
        return new

    def with_link_rate(self, k: int, i: int, rate: int) -> 'Scenario':
        rates = self.rates.copy()
        rates[k, i] = rate
        return self.with_rates(rates)

    def with_uniform_rate(self, rate: int) -> 'Scenario':
        rates = np.zeros((self.K, self.K), dtype=int)
        for k, i in self.links():
            rates[k, i] = rate
        return self.with_rates(rates)

    def _copy(self) -> 'Scenario':
        new = object.__new__(Scenario)
        new.__dict__.update(self.__dict__)
        new.meta = dict(self.meta)
        return new

    def to_dict(self) -> dict:
        return {
            'K': self.K, 'L': self.L, 'M': self.M, 'N': self.N,
            'q_h': utils.to_pairs(self.q_h),
            'q_errors': [utils.to_pairs(qi) for qi in self.q],
            'coop': self.coop,
            'rates': self.rates.tolist(),
            'm2n': {str(k): v for k, v in self.m2n.items()},
        }

    @property
    def digest(self) -> str:
        return utils.digest(self.to_dict())


def sample_cn(factor: np.ndarray, rng: np.random.Generator, size: Optional[int] = None) -> np.ndarray:
    """Rows F w with w ~ CN(0, I); F is any factor with F F^H = cov."""
    n = factor.shape[0]
    shape = (n,) if size is None else (size, n)
    w = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)
    return w @ factor.T


def sample_complex_gaussian(cov, rng: np.random.Generator, size: Optional[int] = None) -> np.ndarray:
    return sample_cn(covmat.cn_factor(covmat.check_cov(cov)), rng, size)


def sample_local_estimates(s: Scenario, h: np.ndarray, rng: np.random.Generator) -> list[np.ndarray]:
    h = np.asarray(h)
    if h.shape[-1] != s.n:
        raise ValueError(f'channel has length {h.shape[-1]}, scenario expects {s.n}')
    size = None if h.ndim == 1 else h.shape[0]
    return [h + sample_complex_gaussian(qi, rng, size) for qi in s.q]


def ula_correlation(M: int, d_as: float, wavelength: float, theta_min: float, theta_max: float) -> np.ndarray:
    """Unit-power ULA correlation for a uniform azimuth window."""
    a = 2 * np.pi / wavelength * d_as
    width = theta_max - theta_min
    row = np.empty(M, dtype=complex)
    for m in range(M):
        re, _ = integrate.quad(lambda t: np.cos(a * m * np.cos(t)), theta_min, theta_max, epsabs=1e-10, limit=200)
        im, _ = integrate.quad(lambda t: np.sin(a * m * np.cos(t)), theta_min, theta_max, epsabs=1e-10, limit=200)
        row[m] = (re + 1j * im) / width
    return toeplitz(row.conj(), row)


def vec_order(p: CellularParams) -> np.ndarray:
    """Permutation taking RX-major block order to column-major vec(H), H being (N*L) x (M*K)."""
    return np.arange(p.n).reshape(p.N * p.L, p.M * p.K).T.ravel()


def build_cellular_qh(p: CellularParams, geometry: Geometry) -> np.ndarray:
    d = geometry.distances
    for l, k in zip(*np.nonzero(d < p.d_0)):
        raise InvalidGeometryError(cs_text.bad_geometry.format(l, d[l, k], k, p.d_0))
    blocks = []
    for l in range(p.L):
        corr = ula_correlation(p.M, p.d_as, p.wavelength, *geometry.windows[l])
        theta_l = block_diag(*[p.pathloss(d[l, k]) * corr for k in range(p.K)])
        blocks.append(np.kron(np.eye(p.N), theta_l))
    order = vec_order(p)
    return covmat.check_cov(block_diag(*blocks)[np.ix_(order, order)], 'Q_h')


def build_feedback_error_cov(sigma_e2: float, r_fb, dims: int, order=None) -> list[np.ndarray]:
    """Q_k = blockdiag over RX l of 2^-r_fb[k, l] * sigma_e2 * I_dims, optionally permuted by ``order``."""
    r_fb = np.atleast_2d(np.asarray(r_fb, dtype=float))
    if sigma_e2 <= 0:
        raise ConfigError('sigma_e2 must be positive')
    if np.any(r_fb < 0):
        raise ConfigError('feedback rates must be nonnegative')
    diags = [np.repeat(sigma_e2 * 2.0 ** -r_k, dims) for r_k in r_fb]
    if order is not None:
        diags = [dg[order] for dg in diags]
    return [np.diag(dg).astype(complex) for dg in diags]


def build_scenario_isotropic(diags: Sequence[Sequence[float]], K: int, L: int, M: int = 1, N: int = 1,
                             coop=None, rates=None, m2n=None) -> Scenario:
    n = N * M * K * L
    for i, dg in enumerate(diags):
        if len(dg) != n:
            raise ConfigError(f'Q_{i} diagonal has {len(dg)} entries, expected {n}')
    return Scenario(K, L, M, N, np.eye(n), [np.diag(np.asarray(dg, dtype=float)) for dg in diags],
                    coop=coop, rates=rates, m2n=m2n)


def build_cellular_scenario(p: CellularParams, rng: np.random.Generator, geometry: Optional[Geometry] = None,
                            coop=None, rates=None, m2n=None) -> tuple[Scenario, Geometry]:
    if geometry is None:
        geometry = Geometry.random(p, rng)
    q_h = build_cellular_qh(p, geometry)
    q = build_feedback_error_cov(p.sigma_e2, p.r_fb, p.N * p.M * p.K, vec_order(p))
    meta = {'geometry': geometry.to_dict(), 'cellular': p.to_dict()}
    return Scenario(p.K, p.L, p.M, p.N, q_h, q, coop=coop, rates=rates, m2n=m2n, meta=meta), geometry

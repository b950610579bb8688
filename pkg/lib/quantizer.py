"""Shaped vector quantizers.

Two views of the same k -> i quantizer: ``QuantizerModel`` is the
high-resolution gain-plus-noise surrogate used for design and analytic
simulation, ``Codebook`` is an actual Lloyd-trained codebook.
"""
import logging
from typing import Optional

import numpy as np
from scipy.cluster.vq import vq

from lib import covmat, cs_text, utils
from lib.model import sample_cn
from lib.utils import ConfigError, NumericalError

report = logging.getLogger('cc.quant')

E8_M2N = 929 / 12960
# D4 lattice, the best known quantizer in four real dimensions; opt in via m2n overrides
D4_M2N = 0.0766032
ASYMPTOTIC_M2N = 1 / (2 * np.pi * np.e)
CLAMP_CAP = 1 - 1e-6


class InvalidModelError(NumericalError):
    pass


class TrainingError(ConfigError):
    pass


def m2n_constant(two_n: int, overrides: Optional[dict] = None) -> float:
    if int(two_n) != two_n or two_n < 2 or two_n % 2:
        raise ConfigError(f'2n must be a positive even integer, got {two_n}')
    if overrides and int(two_n) in overrides:
        return float(overrides[int(two_n)])
    return E8_M2N if two_n == 8 else ASYMPTOTIC_M2N


def q0_coefficient(gamma: np.ndarray, rate: float, m2n: float) -> float:
    """Scalar c with Q_0 = c I for S = 2^rate levels."""
    n = gamma.shape[0]
    sign, logdet = np.linalg.slogdet(gamma)
    if sign.real <= 0:
        raise InvalidModelError(cs_text.bad_cov.format('source covariance', 'singular'))
    log_c = -rate / n * np.log(2) + np.log(m2n * 2 * np.pi) + (n + 1) * np.log((n + 1) / n) + logdet / n
    return float(np.exp(log_c))


def unclamped_error_cov(gamma: np.ndarray, b: np.ndarray, rate: float, m2n: float) -> np.ndarray:
    n = gamma.shape[0]
    w, v = np.linalg.eigh(covmat.herm(b))
    if w[0] <= 0:
        raise InvalidModelError(cs_text.singular_b)
    det_root = np.exp(np.sum(np.log(w)) / n)
    return covmat.herm(q0_coefficient(gamma, rate, m2n) * det_root * (v / w) @ v.conj().T)


def clamp_to_source(q: np.ndarray, gamma: np.ndarray, cap: float = CLAMP_CAP) -> tuple[np.ndarray, bool]:
    """Shrink q so that q <= cap * gamma in the Loewner order."""
    w, v, g_half = covmat.relative_eigs(q, gamma)
    clamped = bool(w[-1] > cap)
    if not clamped and w[0] >= 0:
        return q, False
    w = np.clip(w, 0, cap)
    t = (v * w) @ v.conj().T
    return covmat.herm(g_half @ t @ g_half), clamped


def highres_error_cov(gamma: np.ndarray, b: np.ndarray, rate: float, m2n: float) -> tuple[np.ndarray, bool]:
    return clamp_to_source(unclamped_error_cov(gamma, b, rate, m2n), gamma)


class QuantizerModel:
    def __init__(self, gamma: np.ndarray, q_q: np.ndarray, rate: float, b: Optional[np.ndarray] = None,
                 m2n: Optional[float] = None, clamped: bool = False):
        self.n = gamma.shape[0]
        self.rate = rate
        self.gamma = gamma
        self.b = np.eye(self.n) if b is None else b
        self.m2n = m2n
        self.q_q = q_q
        self.clamped = clamped
        check_below_source(q_q, gamma)
        self.gain = np.eye(self.n) - q_q @ covmat.inv_her(gamma, 'Gamma')
        self.noise_cov = covmat.herm(self.gain @ q_q)
        self._noise_factor = covmat.cn_factor(self.noise_cov)

    @classmethod
    def highres(cls, gamma: np.ndarray, b: np.ndarray, rate: float, m2n: float) -> 'QuantizerModel':
        q_q, clamped = highres_error_cov(gamma, b, rate, m2n)
        if clamped:
            report.debug(f'rate {rate}: {cs_text.clamped}')
        return cls(gamma, q_q, rate, b=b, m2n=m2n, clamped=clamped)

    def quantize(self, x: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        size = None if x.ndim == 1 else x.shape[0]
        return x @ self.gain.T + sample_cn(self._noise_factor, rng, size)


def check_below_source(q_q: np.ndarray, gamma: np.ndarray):
    tol = 1e-9 * max(np.linalg.norm(gamma, 2), 1e-300)
    if covmat.min_eig(gamma - q_q) < -tol:
        raise InvalidModelError(cs_text.qq_not_below)


def analytic_quantize(x: np.ndarray, gamma: np.ndarray, q_q: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    return QuantizerModel(gamma, q_q, rate=np.nan).quantize(np.asarray(x, dtype=complex), rng)


def _real(x: np.ndarray) -> np.ndarray:
    return np.concatenate([x.real, x.imag], axis=-1)


def _complex(y: np.ndarray) -> np.ndarray:
    n = y.shape[-1] // 2
    return y[..., :n] + 1j * y[..., n:]


class Codebook:
    def __init__(self, b: np.ndarray, codewords: np.ndarray, rate: int, training_distortion: float = np.nan):
        if not len(codewords):
            raise InvalidModelError('empty codebook')
        self.codewords = np.atleast_2d(np.asarray(codewords, dtype=complex))
        self.n = self.codewords.shape[1]
        self.rate = int(rate)
        self.b = np.asarray(b, dtype=complex)
        self.training_distortion = float(training_distortion)
        self._b_half = covmat.sqrtm_psd(self.b)
        self._shaped_codes = _real(self.codewords @ self._b_half.T)

    def __len__(self):
        return len(self.codewords)

    def encode_index(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(x)
        if x.shape[1] != self.n:
            raise ValueError(f'codebook dimension {self.n}, input {x.shape[1]}')
        idx, _ = vq(_real(x @ self._b_half.T), self._shaped_codes, check_finite=False)
        return idx

    def encode(self, x: np.ndarray) -> np.ndarray:
        out = self.codewords[self.encode_index(x)]
        return out[0] if np.ndim(x) == 1 else out

    def to_json(self) -> dict:
        return {
            'n': self.n,
            'R': self.rate,
            'B': utils.to_pairs(self.b),
            'codewords': utils.to_pairs(self.codewords),
            'training_distortion': self.training_distortion,
        }

    @classmethod
    def from_json(cls, d: dict) -> 'Codebook':
        cb = cls(utils.from_pairs(d['B']), utils.from_pairs(d['codewords']), d['R'],
                 d.get('training_distortion', np.nan))
        if cb.n != d['n']:
            raise ConfigError('codebook dimension does not match its codewords')
        return cb


class TrainingOptions:
    def __init__(self, tol=1e-6, max_iters=200, samples_per_level=50, rate_cap=12, seed=0, workers=1):
        self.tol = tol
        self.max_iters = max_iters
        self.samples_per_level = samples_per_level
        self.rate_cap = rate_cap
        self.seed = seed
        self.workers = workers


def _kmeanspp(y: np.ndarray, count: int, rng: np.random.Generator) -> np.ndarray:
    centers = np.empty((count, y.shape[1]))
    centers[0] = y[rng.integers(len(y))]
    d2 = np.sum((y - centers[0]) ** 2, axis=1)
    for j in range(1, count):
        total = d2.sum()
        pick = rng.choice(len(y), p=d2 / total) if total > 0 else rng.integers(len(y))
        centers[j] = y[pick]
        d2 = np.minimum(d2, np.sum((y - centers[j]) ** 2, axis=1))
    return centers


def _assign(y: np.ndarray, codes: np.ndarray, workers: int) -> tuple[np.ndarray, np.ndarray]:
    if workers <= 1:
        return vq(y, codes, check_finite=False)
    parts = np.array_split(y, workers)
    results = list(utils.ordered_map(lambda part: vq(part, codes, check_finite=False), parts, workers))
    return np.concatenate([r[0] for r in results]), np.concatenate([r[1] for r in results])


def train_lloyd_shaped(samples: np.ndarray, b: np.ndarray, rate: int,
                       opts: Optional[TrainingOptions] = None) -> Codebook:
    """Lloyd codebook for the weighted distortion (x - c)^H B (x - c).

    Training runs on y = B^{1/2} x with plain Euclidean distortion and maps the
    codewords back with B^{-1/2}.
    """
    opts = opts or TrainingOptions()
    samples = np.atleast_2d(np.asarray(samples, dtype=complex))
    if rate > opts.rate_cap:
        raise TrainingError(cs_text.rate_cap.format(rate, opts.rate_cap))
    levels = 2 ** rate
    need = opts.samples_per_level * levels
    if len(samples) < need:
        raise TrainingError(cs_text.too_few_samples.format(len(samples), need))
    report.info(cs_text.training.format(levels, len(samples)))

    b = covmat.check_cov(b, 'B')
    y = _real(samples @ covmat.sqrtm_psd(b).T)
    rng = np.random.default_rng(opts.seed)
    codes = _kmeanspp(y, levels, rng)

    prev = np.inf
    distortion = np.inf
    for it in range(1, opts.max_iters + 1):
        idx, dist = _assign(y, codes, opts.workers)
        distortion = float(np.mean(dist ** 2))
        report.debug(cs_text.lloyd_iter.format(it, distortion))
        if distortion > prev * (1 + 1e-9):
            raise TrainingError(f'Lloyd distortion increased: {prev:.6g} -> {distortion:.6g}')
        if prev < np.inf and (prev - distortion) <= opts.tol * prev:
            break
        prev = distortion

        counts = np.bincount(idx, minlength=levels)
        sums = np.stack([np.bincount(idx, weights=col, minlength=levels) for col in y.T], axis=1)
        filled = counts > 0
        codes[filled] = sums[filled] / counts[filled, None]
        empty = np.flatnonzero(~filled)
        if empty.size:
            report.debug(cs_text.empty_cells.format(empty.size))
            far = np.argsort(dist)[::-1][:empty.size]
            codes[empty] = y[far]

    codewords = _complex(codes) @ covmat.inv_sqrtm(b).T
    return Codebook(b, codewords, rate, distortion)


def empirical_error_cov(cb: Codebook, samples: np.ndarray) -> np.ndarray:
    samples = np.atleast_2d(samples)
    if len(samples) < 10_000:
        report.log(32, cs_text.few_samples.format(len(samples)))
    e = samples - cb.encode(samples)
    return covmat.herm(e.T @ e.conj() / len(samples))

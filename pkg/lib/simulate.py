"""Monte Carlo sweeps over the coordination rate.

Every point draws its channels from generators keyed by (tx, rate, chunk), so all
algorithms at a point see the same channels and noise, and results do not depend
on the worker count.
"""
import csv
import json
import logging
import time
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from lib import covmat, cs_text, utils
from lib.allocation import ShapingCache
from lib.fusion import FusionRule, fusion_weights, wyner_ziv_bound
from lib.model import Scenario, sample_cn
from lib.quantizer import (QuantizerModel, TrainingOptions, clamp_to_source, empirical_error_cov,
                           train_lloyd_shaped)
from lib.shaping import ShapingOptions, ShapingProblem
from lib.utils import ConfigError
from network.params import MSE_ALGORITHMS, RATE_ALGORITHMS, Algorithm, Mode, PowerMode
from network.precoding import sum_rates

report = logging.getLogger('cc.sim')

CSV_HEADER = ['rate', 'algorithm', 'tx', 'mse', 'mse_ci95', 'sum_rate', 'clamped']
CHUNK = 1000
Z95 = 1.96
EVAL_SAMPLES = 10_000


class SweepConfig:
    FIELD_MAP = {
        'rates': 'rates',
        'algorithms': 'algorithms',
        'trials': 'trials',
        'seed': 'seed',
        'mode': 'mode',
        'tx': 'tx',
        'power_db': 'power_db',
        'power_mode': 'power_mode',
        'workers': 'workers',
        'chunk': 'chunk',
        'train_samples_per_level': 'train_samples_per_level',
        'train_rate_cap': 'train_rate_cap',
    }

    def __init__(self, rates: Sequence[int] = tuple(range(0, 31, 2)), algorithms=None, trials: int = 100_000,
                 seed: int = 7, mode='analytic', tx: Sequence[int] = (0,), power_db: float = 20.0,
                 power_mode='per_tx', workers: int = 1, chunk: int = CHUNK, train_samples_per_level: int = 50,
                 train_rate_cap: int = 12, shaping: Optional[ShapingOptions] = None):
        if isinstance(rates, str):
            rates = utils.parse_rates(rates)
        self.rates = [int(r) for r in rates]
        self.algorithms = [a if isinstance(a, Algorithm) else Algorithm[a] for a in algorithms] if algorithms else None
        self.trials = int(trials)
        self.seed = int(seed)
        self.mode = mode if isinstance(mode, Mode) else Mode[mode]
        self.tx = [int(t) for t in tx]
        self.power_db = float(power_db)
        self.power_mode = power_mode if isinstance(power_mode, PowerMode) else PowerMode[power_mode]
        self.workers = int(workers)
        self.chunk = int(chunk)
        self.train_samples_per_level = int(train_samples_per_level)
        self.train_rate_cap = int(train_rate_cap)
        self.shaping = shaping or ShapingOptions()
        if not self.rates or any(r < 0 for r in self.rates):
            raise ConfigError('rate grid must be a nonempty list of nonnegative integers')
        if self.trials < 1 or self.chunk < 1:
            raise ConfigError('trials and chunk size must be positive')
        if self.seed < 0:
            raise ConfigError('seed must be nonnegative')

    @property
    def power(self) -> float:
        return 10 ** (self.power_db / 10)

    def training(self) -> TrainingOptions:
        return TrainingOptions(samples_per_level=self.train_samples_per_level, rate_cap=self.train_rate_cap,
                               seed=self.seed)

    @classmethod
    def from_dict(cls, d: dict, shaping: Optional[ShapingOptions] = None) -> 'SweepConfig':
        kwargs = {}
        for key, val in d.items():
            try:
                kwargs[cls.FIELD_MAP[key]] = val
            except KeyError:
                raise ConfigError(f'unknown sweep key {key!r}')
        return cls(shaping=shaping, **kwargs)

    def to_dict(self) -> dict:
        d = {attr: getattr(self, attr) for attr in self.FIELD_MAP.values()}
        d['algorithms'] = [a.value for a in self.algorithms] if self.algorithms else None
        d['mode'] = self.mode.value
        d['power_mode'] = self.power_mode.value
        d['shaping'] = self.shaping.to_dict()
        return d


class SweepRecord:
    def __init__(self, rate: int, algorithm: Algorithm, tx: int, mse: float, mse_ci95: float,
                 sum_rate: Optional[float] = None, clamped: bool = False, predicted: Optional[float] = None,
                 sum_rate_ci95: Optional[float] = None):
        self.rate = rate
        self.algorithm = algorithm
        self.tx = tx
        self.mse = mse
        self.mse_ci95 = mse_ci95
        self.sum_rate = sum_rate
        self.clamped = clamped
        self.predicted = predicted
        self.sum_rate_ci95 = sum_rate_ci95

    @property
    def sort_key(self):
        return self.algorithm.value, self.rate, self.tx

    def row(self) -> list[str]:
        return [
            str(self.rate),
            self.algorithm.value,
            str(self.tx),
            f'{self.mse:.12g}',
            f'{self.mse_ci95:.12g}',
            '' if self.sum_rate is None else f'{self.sum_rate:.12g}',
            'true' if self.clamped else 'false',
        ]


class SweepResult:
    def __init__(self, records: list[SweepRecord], meta: dict):
        self.records = sorted(records, key=lambda r: r.sort_key)
        self.meta = meta

    def select(self, algorithm: Algorithm, tx: Optional[int] = None) -> list[SweepRecord]:
        return [r for r in self.records if r.algorithm is algorithm and (tx is None or r.tx == tx)]

    def get(self, algorithm: Algorithm, rate: int, tx: int = 0) -> SweepRecord:
        for r in self.records:
            if r.algorithm is algorithm and r.rate == rate and r.tx == tx:
                return r
        raise KeyError((algorithm, rate, tx))

    def write_csv(self, path: Path):
        with open(path, 'w', newline='') as f:
            writer = csv.writer(f, lineterminator='\n')
            writer.writerow(CSV_HEADER)
            for rec in self.records:
                writer.writerow(rec.row())

    def write_meta(self, path: Path, **extra):
        meta = dict(self.meta, **extra)
        meta['points'] = [
            {'rate': r.rate, 'algorithm': r.algorithm.value, 'tx': r.tx, 'predicted_mse': r.predicted,
             'sum_rate_ci95': r.sum_rate_ci95}
            for r in self.records
        ]
        path.write_text(json.dumps(meta, indent=2, sort_keys=True))


class PointDesign:
    """Everything TX i needs at one (algorithm, rate): quantizers for its links and the fusion rule."""

    def __init__(self, rule: FusionRule, quantizers: list, clamped: bool):
        self.rule = rule
        self.quantizers = quantizers
        self.clamped = clamped

    def estimate(self, local: list[np.ndarray], rng: np.random.Generator) -> np.ndarray:
        z = [q(local[k], rng) for k, q in zip(self.rule.coop, self.quantizers)]
        return self.rule(local[self.rule.tx], z)


class Designer:
    def __init__(self, s: Scenario, cfg: SweepConfig):
        self.s = s
        self.cfg = cfg
        self.cache = ShapingCache(cfg.shaping)
        self.no_coop = Scenario(s.K, s.L, s.M, s.N, s.q_h, s.q, coop=[[] for _ in range(s.K)], m2n=s.m2n)
        self._warned = set()

    def design(self, alg: Algorithm, rate: int, i: int) -> PointDesign:
        s = self.s.with_uniform_rate(rate)
        if alg is Algorithm.no_coop:
            return PointDesign(fusion_weights(self.no_coop, i, []), [], False)
        if alg is Algorithm.infinite:
            qq = [np.zeros((s.n, s.n), dtype=complex) for _ in s.coop[i]]
            bs = [None] * len(qq)
            clamped = False
        elif alg is Algorithm.shaped:
            sol = self.cache.get(s, i, s.link_rates(i))
            qq = [sol.q_q[k] for k in s.coop[i]]
            bs = [sol.b[k] for k in s.coop[i]]
            clamped = sol.clamped
        elif alg is Algorithm.unshaped:
            problem = ShapingProblem(s, i)
            qq, clamped = problem.error_covs(problem.identity())
            bs = problem.identity()
        else:
            raise ConfigError(f'{alg.value} has no Monte Carlo design')

        if self.cfg.mode is Mode.trained_vq and alg.quantized:
            if rate <= self.cfg.train_rate_cap:
                return self._trained(s, alg, rate, i, bs, clamped)
            if rate not in self._warned:
                self._warned.add(rate)
                report.log(32, cs_text.trained_fallback.format(rate, self.cfg.train_rate_cap))
        models = [QuantizerModel(s.gamma(k), q, rate) for k, q in zip(s.coop[i], qq)]
        return PointDesign(fusion_weights(s, i, qq), [m.quantize for m in models], clamped)

    def _trained(self, s: Scenario, alg: Algorithm, rate: int, i: int, bs, clamped: bool) -> PointDesign:
        opts = self.cfg.training()
        qq, quantizers = [], []
        for k, b in zip(s.coop[i], bs):
            if rate == 0:
                qq.append(s.gamma(k))
                quantizers.append(lambda x, _rng: np.zeros_like(x))
                continue
            rng = utils.chunk_rng(self.cfg.seed, 0, rate, k, i, list(Algorithm).index(alg))
            gamma = s.gamma(k)
            train = sample_cn(covmat.cn_factor(gamma), rng, opts.samples_per_level * 2 ** rate)
            opts.seed = int(rng.integers(2 ** 32))
            cb = train_lloyd_shaped(train, b, rate, opts)
            held_out = sample_cn(covmat.cn_factor(gamma), rng, EVAL_SAMPLES)
            q, hit = clamp_to_source(empirical_error_cov(cb, held_out), gamma)
            clamped |= hit
            qq.append(q)
            quantizers.append(lambda x, _rng, cb=cb: cb.encode(x))
        return PointDesign(fusion_weights(s, i, qq), quantizers, clamped)


def _factors(s: Scenario):
    return covmat.cn_factor(s.q_h), [covmat.cn_factor(q) for q in s.q]


def _draw(factors, m: int, rng: np.random.Generator) -> tuple[np.ndarray, list[np.ndarray]]:
    f_h, f_q = factors
    h = sample_cn(f_h, rng, m)
    return h, [h + sample_cn(f, rng, m) for f in f_q]


def _mean_ci(sums: np.ndarray, sq_sums: np.ndarray, total: int) -> tuple[np.ndarray, np.ndarray]:
    mean = sums / total
    var = np.maximum(sq_sums / total - mean ** 2, 0) * total / max(total - 1, 1)
    return mean, Z95 * np.sqrt(var / total)


def _wz_record(s: Scenario, rate: int, i: int) -> SweepRecord:
    bound = wyner_ziv_bound(s.q_h, s.q_reg(i), *(s.q_reg(k) for k in s.coop[i]))
    return SweepRecord(rate, Algorithm.wz_bound, i, bound, 0.0, predicted=bound)


def _base_meta(s: Scenario, cfg: SweepConfig, kind: str) -> dict:
    return {
        'kind': kind,
        'seed': cfg.seed,
        'trials': cfg.trials,
        'mode': cfg.mode.value,
        'scenario_digest': s.digest,
        'version': utils.version_string(cs_text.version),
        'config': cfg.to_dict(),
        'scenario_meta': s.meta,
    }


def run_mse_sweep(s: Scenario, cfg: SweepConfig) -> SweepResult:
    start = time.perf_counter()
    algorithms = cfg.algorithms or list(MSE_ALGORITHMS)
    for i in cfg.tx:
        if not 0 <= i < s.K:
            raise ConfigError(f'TX {i} not in scenario')
    designer = Designer(s, cfg)
    factors = _factors(s)
    mc_algs = [a for a in algorithms if a is not Algorithm.wz_bound]
    points = [(rate, i) for i in cfg.tx for rate in cfg.rates]

    def run_point(point):
        rate, i = point
        designs = [designer.design(alg, rate, i) for alg in mc_algs]
        sums = np.zeros(len(designs))
        sq_sums = np.zeros(len(designs))
        for c, m in enumerate(utils.chunk_sizes(cfg.trials, cfg.chunk)):
            rng = utils.chunk_rng(cfg.seed, i + 1, rate, c)
            h, local = _draw(factors, m, rng)
            state = rng.bit_generator.state
            for j, d in enumerate(designs):
                rng.bit_generator.state = state
                err = np.sum(np.abs(h - d.estimate(local, rng)) ** 2, axis=1) / s.n
                sums[j] += err.sum()
                sq_sums[j] += (err ** 2).sum()
        mean, ci = _mean_ci(sums, sq_sums, cfg.trials)
        out = [SweepRecord(rate, alg, i, float(mu), float(hw), clamped=d.clamped, predicted=d.rule.predicted_mse)
               for alg, d, mu, hw in zip(mc_algs, designs, mean, ci)]
        if Algorithm.wz_bound in algorithms:
            out.append(_wz_record(s, rate, i))
        for rec in out:
            report.debug(cs_text.sweep_point.format(rate, rec.algorithm.value, i) + f' mse {rec.mse:.6g}')
        return out

    records = [rec for out in utils.ordered_map(run_point, points, cfg.workers) for rec in out]
    report.info(cs_text.sweep_done.format(len(records), time.perf_counter() - start))
    return SweepResult(records, _base_meta(s, cfg, 'mse'))


def run_sumrate_sweep(s: Scenario, cfg: SweepConfig) -> SweepResult:
    """ZF sum rate with every TX precoding on its own fused estimate, links at R_ki = R."""
    start = time.perf_counter()
    if s.M != 1 or s.N != 1:
        raise ConfigError('sum rate sweeps need single-antenna TXs and RXs (M = N = 1)')
    algorithms = cfg.algorithms or list(RATE_ALGORITHMS)
    if Algorithm.wz_bound in algorithms:
        report.log(32, cs_text.wz_skipped)
        algorithms = [a for a in algorithms if a is not Algorithm.wz_bound]
    if Algorithm.infinite not in algorithms:
        algorithms = algorithms + [Algorithm.infinite]
    designer = Designer(s, cfg)
    factors = _factors(s)

    def run_point(rate):
        designs = [[designer.design(alg, rate, i) for i in range(s.K)] for alg in algorithms]
        acc = np.zeros((len(algorithms), 4))
        for c, m in enumerate(utils.chunk_sizes(cfg.trials, cfg.chunk)):
            rng = utils.chunk_rng(cfg.seed, 0, rate, c)
            h, local = _draw(factors, m, rng)
            state = rng.bit_generator.state
            for j, per_tx in enumerate(designs):
                rng.bit_generator.state = state
                est = [d.estimate(local, rng) for d in per_tx]
                err = np.mean([np.sum(np.abs(h - e) ** 2, axis=1) for e in est], axis=0) / s.n
                sr = sum_rates(h, est, s.K, s.L, cfg.power, cfg.power_mode)
                acc[j] += [err.sum(), (err ** 2).sum(), sr.sum(), (sr ** 2).sum()]
        mse, mse_ci = _mean_ci(acc[:, 0], acc[:, 1], cfg.trials)
        rate_mean, rate_ci = _mean_ci(acc[:, 2], acc[:, 3], cfg.trials)
        out = []
        for j, alg in enumerate(algorithms):
            predicted = float(np.mean([d.rule.predicted_mse for d in designs[j]]))
            clamped = any(d.clamped for d in designs[j])
            out.append(SweepRecord(rate, alg, -1, float(mse[j]), float(mse_ci[j]), float(rate_mean[j]), clamped,
                                   predicted, float(rate_ci[j])))
            report.debug(cs_text.sweep_point.format(rate, alg.value, -1) + f' sum rate {rate_mean[j]:.6g}')
        return out

    records = [rec for out in utils.ordered_map(run_point, cfg.rates, cfg.workers) for rec in out]
    report.info(cs_text.sweep_done.format(len(records), time.perf_counter() - start))
    meta = _base_meta(s, cfg, 'sumrate')
    meta['power_db'] = cfg.power_db
    meta['power_mode'] = cfg.power_mode.value
    return SweepResult(records, meta)

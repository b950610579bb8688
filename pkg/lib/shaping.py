"""Shaping matrix design for the quantizers feeding one TX.

Each link k -> i quantizes with error covariance c_k det(B)^{1/n} B^{-1}; the
solver searches the unit-determinant Hermitian positive definite matrices B_k
for the smallest final MSE at TX i.
"""
import logging
from typing import Mapping, Optional, Sequence

import numpy as np
import scipy.linalg as sla

from lib import covmat, cs_text
from lib.fusion import closed_form_mse
from lib.model import Scenario, sample_complex_gaussian
from lib.quantizer import (Codebook, TrainingOptions, clamp_to_source, m2n_constant, q0_coefficient,
                           train_lloyd_shaped)
from lib.utils import ConfigError, NumericalError

report = logging.getLogger('cc.shaping')

FD_STEP = 1e-5
MAX_COND = 1e8


class ApproxOutOfRangeError(NumericalError):
    pass


class ConditionCapError(NumericalError):
    pass


class ShapingOptions:
    FIELD_MAP = {
        'max_iters': 'max_iters',
        'tol': 'tol',
        'patience': 'patience',
        'armijo_c': 'armijo_c',
        'backtrack': 'backtrack',
        'init': 'init',
        'grad': 'grad',
        'objective': 'objective',
        'seed': 'seed',
    }

    def __init__(self, max_iters=2000, tol=1e-9, patience=5, armijo_c=1e-4, backtrack=0.5, init='identity',
                 grad='analytic', objective='exact', seed=0):
        self.max_iters = int(max_iters)
        self.tol = float(tol)
        self.patience = int(patience)
        self.armijo_c = float(armijo_c)
        self.backtrack = float(backtrack)
        self.init = init
        self.grad = grad
        self.objective = objective
        self.seed = seed
        if init not in ('identity', 'random'):
            raise ConfigError(f'unknown solver init {init!r}')
        if grad not in ('analytic', 'numeric'):
            raise ConfigError(f'unknown gradient mode {grad!r}')
        if objective not in ('exact', 'approx'):
            raise ConfigError(f'unknown objective {objective!r}')
        if not 0 < self.backtrack < 1 or self.max_iters < 0 or self.patience < 1:
            raise ConfigError('bad line search settings')

    @classmethod
    def from_dict(cls, d: dict) -> 'ShapingOptions':
        try:
            return cls(**{cls.FIELD_MAP[k]: v for k, v in d.items()})
        except KeyError as e:
            raise ConfigError(f'unknown solver option {e.args[0]!r}')

    def to_dict(self) -> dict:
        return {attr: getattr(self, attr) for attr in self.FIELD_MAP.values()}


class ShapingSolution:
    def __init__(self, tx: int, b: dict, q_q: dict, objective_exact: float, objective_approx: float,
                 iterations: int, converged: bool, kkt_residual: float, clamped: bool):
        self.tx = tx
        self.b = b
        self.q_q = q_q
        self.objective_exact = objective_exact
        self.objective_approx = objective_approx
        self.iterations = iterations
        self.converged = converged
        self.kkt_residual = kkt_residual
        self.clamped = clamped


def normalize_det(b: np.ndarray) -> np.ndarray:
    w = sla.eigvalsh(covmat.herm(b))
    if w[0] <= 0:
        raise covmat.InvalidCovarianceError(cs_text.singular_b)
    return covmat.herm(b) / np.exp(np.mean(np.log(w)))


def hermitian_basis(n: int) -> list[np.ndarray]:
    """Orthonormal basis of the n x n Hermitian matrices under Re tr(A^H B)."""
    basis = []
    for j in range(n):
        e = np.zeros((n, n), dtype=complex)
        e[j, j] = 1
        basis.append(e)
        for l in range(j + 1, n):
            e = np.zeros((n, n), dtype=complex)
            e[j, l] = e[l, j] = 1 / np.sqrt(2)
            basis.append(e)
            e = np.zeros((n, n), dtype=complex)
            e[j, l] = 1j / np.sqrt(2)
            e[l, j] = -1j / np.sqrt(2)
            basis.append(e)
    return basis


class ShapingProblem:
    """Objectives and gradients for the links into TX i at fixed rates."""

    def __init__(self, s: Scenario, i: int, rates=None):
        self.s = s
        self.i = i
        self.coop = s.coop[i]
        self.rates = self._rates(rates)
        self.m2n = m2n_constant(2 * s.n, s.m2n)
        self.gammas = [s.gamma(k) for k in self.coop]
        self.coefs = [q0_coefficient(g, r, self.m2n) for g, r in zip(self.gammas, self.rates)]
        # zero-rate links send nothing: Q_Q = Gamma
        self.silent = [r == 0 for r in self.rates]
        self.base_info = covmat.inv_her(s.q_h, 'Q_h') + covmat.inv_her(s.q_reg(i), f'Q_{i}')

    def _rates(self, rates) -> tuple[int, ...]:
        if rates is None:
            return self.s.link_rates(self.i)
        if isinstance(rates, Mapping):
            return tuple(int(rates[k]) for k in self.coop)
        rates = tuple(int(r) for r in rates)
        if len(rates) != len(self.coop):
            raise ValueError(f'{len(rates)} rates for {len(self.coop)} links into TX {self.i}')
        return rates

    def as_list(self, b_table) -> list[np.ndarray]:
        if isinstance(b_table, Mapping):
            return [np.asarray(b_table[k], dtype=complex) for k in self.coop]
        b_list = [np.asarray(b, dtype=complex) for b in b_table]
        if len(b_list) != len(self.coop):
            raise ValueError(f'{len(b_list)} shaping matrices for {len(self.coop)} links')
        return b_list

    def identity(self) -> list[np.ndarray]:
        return [np.eye(self.s.n, dtype=complex) for _ in self.coop]

    def raw_error_covs(self, b_list: Sequence[np.ndarray], normalize=True) -> list[np.ndarray]:
        out = []
        for c, b, g, mute in zip(self.coefs, b_list, self.gammas, self.silent):
            if mute:
                out.append(g)
                continue
            if normalize:
                b = normalize_det(b)
            out.append(c * covmat.inv_her(b, 'B'))
        return out

    def error_covs(self, b_list, normalize=True) -> tuple[list[np.ndarray], bool]:
        clamped = False
        qq = []
        for q, g, mute in zip(self.raw_error_covs(self.as_list(b_list), normalize), self.gammas, self.silent):
            if mute:
                qq.append(q)
                continue
            q, hit = clamp_to_source(q, g)
            qq.append(q)
            clamped |= hit
        return qq, clamped

    def exact(self, b_table) -> float:
        qq, _ = self.error_covs(b_table)
        return closed_form_mse(self.s, self.i, qq)

    def relaxed(self, b_table) -> float:
        qq, _ = self.error_covs(b_table, normalize=False)
        return closed_form_mse(self.s, self.i, qq)

    def approx(self, b_table) -> float:
        info = self.base_info.copy()
        for k, q_q, mute in zip(self.coop, self.raw_error_covs(self.as_list(b_table)), self.silent):
            if mute:
                continue
            qk_inv = covmat.inv_her(self.s.q_reg(k), f'Q_{k}')
            info = info + covmat.herm(qk_inv - qk_inv @ q_q @ qk_inv)
        if not covmat.is_pd(info):
            raise ApproxOutOfRangeError(cs_text.approx_range)
        return covmat.tr_inv(info) / self.s.n

    def with_fallback(self, b_table) -> tuple[float, str]:
        try:
            return self.approx(b_table), 'approx'
        except ApproxOutOfRangeError:
            report.debug(cs_text.approx_fallback)
            return self.exact(b_table), 'exact'

    def analytic_gradient(self, b_list: Sequence[np.ndarray]) -> list[np.ndarray]:
        """Euclidean gradient of the exact objective, valid where no link is clamped."""
        n = self.s.n
        lam, p_inv = [], []
        info = self.base_info.copy()
        for g, q, mute in zip(self.gammas, self.raw_error_covs(b_list), self.silent):
            if mute:
                lam.append(None)
                p_inv.append(None)
                continue
            pi = covmat.inv_her(g - q, 'P')
            l_k = covmat.inv_her(g @ pi @ g - self.s.q_h, 'link term')
            lam.append(l_k)
            p_inv.append(pi)
            info = info + l_k
        f_inv = covmat.inv_her(info, 'information')
        f_inv2 = f_inv @ f_inv
        grads = []
        for b, g, l_k, pi, c in zip(b_list, self.gammas, lam, p_inv, self.coefs):
            if l_k is None:
                grads.append(np.zeros_like(b))
                continue
            y = pi @ g @ l_k @ f_inv2 @ l_k @ g @ pi
            b_inv = covmat.inv_her(b, 'B')
            # Q_Q = c det(B)^{1/n} B^{-1}
            c_eff = c * np.exp(np.mean(np.log(sla.eigvalsh(covmat.herm(b)))))
            grads.append(covmat.herm(c_eff / n * (np.real(np.trace(y @ b_inv)) / n * b_inv - b_inv @ y @ b_inv)))
        return grads

    def numeric_gradient(self, b_list: Sequence[np.ndarray], func=None) -> list[np.ndarray]:
        """Euclidean gradient from central differences taken along B^{1/2} E B^{1/2}.

        The perturbed points B^{1/2} (I +- eps E) B^{1/2} stay positive definite
        however ill-conditioned B is.
        """
        func = func or self.exact
        basis = hermitian_basis(self.s.n)
        grads = []
        for j, b in enumerate(b_list):
            b_half = covmat.sqrtm_psd(b)
            d = np.zeros_like(b)
            for e in basis:
                tangent = b_half @ e @ b_half
                plus = list(b_list)
                minus = list(b_list)
                plus[j] = b + FD_STEP * tangent
                minus[j] = b - FD_STEP * tangent
                d = d + (func(plus) - func(minus)) / (2 * FD_STEP) * e
            b_ihalf = covmat.inv_sqrtm(b)
            grads.append(covmat.herm(b_ihalf @ d @ b_ihalf))
        return grads


def objective_exact(b_table, s: Scenario, i: int, rates=None) -> float:
    p = ShapingProblem(s, i, rates)
    return p.exact(p.as_list(b_table))


def objective_approx(b_table, s: Scenario, i: int, rates=None) -> float:
    p = ShapingProblem(s, i, rates)
    return p.approx(p.as_list(b_table))


def objective_relaxed(b_table, s: Scenario, i: int, rates=None) -> float:
    """Exact objective with Q_Q = c B^{-1}, no determinant normalization (meant for det(B) >= 1)."""
    p = ShapingProblem(s, i, rates)
    return p.relaxed(p.as_list(b_table))


def objective_with_fallback(b_table, s: Scenario, i: int, rates=None) -> tuple[float, str]:
    p = ShapingProblem(s, i, rates)
    return p.with_fallback(p.as_list(b_table))


def objective_gradient(b_table, s: Scenario, i: int, rates=None, mode='analytic') -> list[np.ndarray]:
    p = ShapingProblem(s, i, rates)
    b_list = p.as_list(b_table)
    if mode == 'analytic':
        return p.analytic_gradient(b_list)
    return p.numeric_gradient(b_list)


def unshaped_model(s: Scenario, i: int, rates=None) -> dict:
    p = ShapingProblem(s, i, rates)
    qq, _ = p.error_covs(p.identity())
    return dict(zip(p.coop, qq))


def random_feasible(n: int, rng: np.random.Generator, spread: float = 1.0) -> np.ndarray:
    return normalize_det(covmat.random_cov(n, rng, scale=spread, floor=0.2))


def _retract(b: np.ndarray, d: np.ndarray, t: float) -> np.ndarray:
    """B^{1/2} expm(-t D) B^{1/2} projected back onto det(B) = 1."""
    b_half = covmat.sqrtm_psd(b)
    w, v = sla.eigh(covmat.herm(d))
    e = (v * np.exp(-t * w)) @ v.conj().T
    out = normalize_det(b_half @ e @ b_half)
    w = sla.eigvalsh(out)
    if w[-1] > MAX_COND * w[0]:
        raise ConditionCapError(cs_text.cond_cap.format(MAX_COND))
    return out


def _directions(problem: ShapingProblem, b_list, opts: ShapingOptions, func) -> tuple[list[np.ndarray], bool]:
    _, clamped = problem.error_covs(b_list)
    if opts.objective == 'exact' and opts.grad == 'analytic' and not clamped:
        grads = problem.analytic_gradient(b_list)
    else:
        grads = problem.numeric_gradient(b_list, func)
    dirs = []
    n = problem.s.n
    for b, g in zip(b_list, grads):
        b_half = covmat.sqrtm_psd(b)
        d = covmat.herm(b_half @ g @ b_half)
        dirs.append(d - np.real(np.trace(d)) / n * np.eye(n))
    return dirs, clamped


def optimize_shaping(s: Scenario, i: int, rates=None, opts: Optional[ShapingOptions] = None) -> ShapingSolution:
    opts = opts or ShapingOptions()
    problem = ShapingProblem(s, i, rates)
    report.debug(cs_text.shaping.format(i, problem.rates))

    if opts.objective == 'approx':
        def func(b_list):
            return problem.with_fallback(b_list)[0]
    else:
        func = problem.exact

    identity = problem.identity()
    f_identity = func(identity)
    if not problem.coop:
        return _solution(problem, identity, 0, True, 0.0)

    if opts.init == 'random':
        rng = np.random.default_rng(opts.seed)
        b_list = [random_feasible(s.n, rng) for _ in problem.coop]
    else:
        b_list = identity
    f = func(b_list)
    best, f_best = b_list, f

    t = None
    stall = 0
    converged = False
    failed = False
    residual = np.inf
    it = 0
    for it in range(1, opts.max_iters + 1):
        try:
            dirs, _ = _directions(problem, b_list, opts, func)
        except (NumericalError, sla.LinAlgError) as e:
            report.log(32, cs_text.gradient_failed.format(e))
            failed = True
            break
        sq_norm = float(sum(np.real(np.vdot(d, d)) for d in dirs))
        residual = np.sqrt(sq_norm)
        if residual < 1e-14 * max(1.0, abs(f)):
            converged = True
            break
        t = 1 / residual if t is None else 2 * t
        capped = False
        while True:
            try:
                cand = [_retract(b, d, t) for b, d in zip(b_list, dirs)]
                f_new = func(cand)
            except ConditionCapError:
                capped = True
                f_new = np.inf
            except (NumericalError, sla.LinAlgError) as e:
                report.debug(cs_text.step_rejected.format(e))
                f_new = np.inf
            if f_new <= f - opts.armijo_c * t * sq_norm:
                break
            t *= opts.backtrack
            if t * residual < 1e-16:
                cand = None
                break
        if cand is None:
            # no admissible step left: stationary, or pinned at the condition cap
            if capped:
                report.debug(cs_text.cond_cap.format(MAX_COND))
            converged = True
            break
        if f_new > f:
            raise NumericalError(f'objective increased on an accepted step: {f:.12g} -> {f_new:.12g}')
        decrease = (f - f_new) / max(abs(f), 1e-300)
        b_list, f = cand, f_new
        if f < f_best:
            best, f_best = b_list, f
        stall = stall + 1 if decrease < opts.tol else 0
        if stall >= opts.patience:
            converged = True
            break

    if converged:
        report.debug(cs_text.converged.format(it))
    elif not failed:
        report.log(32, cs_text.not_converged.format(opts.max_iters))
    if f_best > f_identity:
        best = identity
    return _solution(problem, best, it, converged, residual)


def _solution(problem: ShapingProblem, b_list, iterations: int, converged: bool, residual: float) -> ShapingSolution:
    qq, clamped = problem.error_covs(b_list)
    exact = closed_form_mse(problem.s, problem.i, qq)
    try:
        approx = problem.approx(b_list)
    except ApproxOutOfRangeError:
        approx = np.nan
    b_table = {k: normalize_det(b) for k, b in zip(problem.coop, b_list)}
    if clamped:
        report.debug(cs_text.clamped)
    return ShapingSolution(problem.i, b_table, dict(zip(problem.coop, qq)), exact, approx, iterations,
                           converged, float(residual), clamped)


def design_link(s: Scenario, k: int, i: int, rate: int, opts: Optional[ShapingOptions] = None,
                train_opts: Optional[TrainingOptions] = None, samples: Optional[np.ndarray] = None,
                rng: Optional[np.random.Generator] = None) -> tuple[ShapingSolution, Codebook]:
    """Optimize the shaping for link k -> i at the given rate, then train its codebook."""
    if k not in s.coop[i]:
        raise ConfigError(f'TX {k} does not cooperate with TX {i}')
    train_opts = train_opts or TrainingOptions()
    solution = optimize_shaping(s.with_link_rate(k, i, rate), i, opts=opts)
    if samples is None:
        rng = rng or np.random.default_rng(train_opts.seed)
        samples = sample_complex_gaussian(s.gamma(k), rng, train_opts.samples_per_level * 2 ** rate)
    return solution, train_lloyd_shaped(samples, solution.b[k], rate, train_opts)

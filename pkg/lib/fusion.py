import logging
from typing import Mapping, Sequence

import numpy as np
import scipy.linalg as sla

from lib import covmat, cs_text, utils
from lib.model import Scenario, sample_complex_gaussian
from lib.utils import NumericalError

report = logging.getLogger('cc.fusion')

COND_LIMIT = 1e15
SILENT_TOL = 1e-12


class IllConditionedError(NumericalError):
    def __init__(self, cond: float):
        super().__init__(cs_text.ill_cond.format(cond))
        self.cond = cond


class FusionRule:
    """Linear MMSE combiner at TX ``tx``: h~ = W_ii h^(i) + sum_k W_ki z_ki, k in coop order."""

    def __init__(self, tx: int, coop: Sequence[int], w_ii: np.ndarray, w: Sequence[np.ndarray],
                 predicted_mse: float, inputs_digest: str, cond: float = 1.0):
        self.tx = tx
        self.coop = list(coop)
        self.w_ii = w_ii
        self.w = list(w)
        self.predicted_mse = predicted_mse
        self.inputs_digest = inputs_digest
        self.cond = cond

    @property
    def stacked(self) -> np.ndarray:
        return np.hstack([self.w_ii, *self.w])

    def __call__(self, local: np.ndarray, z: Sequence[np.ndarray]) -> np.ndarray:
        return fuse(self, local, z)


def _ordered(s: Scenario, i: int, qq) -> list[np.ndarray]:
    if isinstance(qq, Mapping):
        try:
            return [qq[k] for k in s.coop[i]]
        except KeyError as e:
            raise ValueError(f'no quantization error covariance for link {e.args[0]} -> {i}')
    qq = list(qq)
    if len(qq) != len(s.coop[i]):
        raise ValueError(f'{len(qq)} error covariances for {len(s.coop[i])} cooperating TXs')
    return qq


def silent(q_q: np.ndarray, gamma: np.ndarray) -> bool:
    """A link whose error covariance equals its source carries nothing (zero rate)."""
    return bool(np.linalg.norm(gamma - q_q) <= SILENT_TOL * np.linalg.norm(gamma))


def _gains(s: Scenario, i: int, qq: Sequence[np.ndarray]) -> tuple[list, list]:
    p_list, a_list = [], []
    for k, q_q in zip(s.coop[i], qq):
        gamma = s.gamma(k)
        p = covmat.herm(gamma - q_q)
        p_list.append(p)
        a_list.append(sla.solve(gamma, p, assume_a='pos').conj().T)
    return p_list, a_list


def second_moments(s: Scenario, i: int, qq) -> tuple[np.ndarray, np.ndarray]:
    """Cross covariance E[h y^H] and covariance E[y y^H] of y = (h^(i), z_k1, ...)."""
    qq = _ordered(s, i, qq)
    p_list, a_list = _gains(s, i, qq)
    q_h = s.q_h
    c = len(qq)
    n = s.n
    cross = np.hstack([q_h] + [q_h @ a.conj().T for a in a_list])
    omega = np.empty((n * (c + 1), n * (c + 1)), dtype=complex)
    omega[:n, :n] = q_h + s.q_reg(i)
    for j in range(c):
        sj = slice(n * (j + 1), n * (j + 2))
        omega[:n, sj] = q_h @ a_list[j].conj().T
        omega[sj, :n] = a_list[j] @ q_h
        for l in range(c):
            sl = slice(n * (l + 1), n * (l + 2))
            omega[sj, sl] = p_list[j] if j == l else a_list[j] @ q_h @ a_list[l].conj().T
    return cross, covmat.herm(omega)


def closed_form_mse(s: Scenario, i: int, qq) -> float:
    qq = _ordered(s, i, qq)
    info = covmat.inv_her(s.q_h, 'Q_h') + covmat.inv_her(s.q_reg(i), f'Q_{i}')
    p_list, _ = _gains(s, i, qq)
    for k, p, q_q in zip(s.coop[i], p_list, qq):
        gamma = s.gamma(k)
        if silent(q_q, gamma):
            continue
        outer = covmat.herm(gamma @ sla.solve(p, gamma, assume_a='her') - s.q_h)
        info = info + covmat.inv_her(outer, f'link {k}->{i} term')
    return covmat.tr_inv(info) / s.n


def fusion_weights(s: Scenario, i: int, qq) -> FusionRule:
    qq = _ordered(s, i, qq)
    cross, omega = second_moments(s, i, qq)
    n = s.n
    # silent links keep zero weight
    keep = [0] + [j + 1 for j, (k, q_q) in enumerate(zip(s.coop[i], qq)) if not silent(q_q, s.gamma(k))]
    idx = np.concatenate([np.arange(n * b, n * (b + 1)) for b in keep])
    try:
        w_h, cond = covmat.solve_her(omega[np.ix_(idx, idx)], cross[:, idx].conj().T)
    except (sla.LinAlgError, ValueError):
        raise IllConditionedError(np.inf)
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise IllConditionedError(cond)
    w = np.zeros_like(cross)
    w[:, idx] = w_h.conj().T
    blocks = [w[:, n * j:n * (j + 1)] for j in range(len(qq) + 1)]
    digest = utils.array_digest(s.q_h, s.q[i], *(s.q[k] for k in s.coop[i]), *qq)
    return FusionRule(i, s.coop[i], blocks[0], blocks[1:], closed_form_mse(s, i, qq), digest, cond)


def linear_mse(s: Scenario, i: int, qq, w_ii: np.ndarray, w: Sequence[np.ndarray]) -> float:
    """Per-dimension MSE of arbitrary linear weights under the gain-plus-noise model."""
    cross, omega = second_moments(s, i, qq)
    ws = np.hstack([w_ii, *w])
    err = s.q_h - ws @ cross.conj().T - cross @ ws.conj().T + ws @ omega @ ws.conj().T
    return float(np.real(np.trace(err))) / s.n


def fuse(rule: FusionRule, local: np.ndarray, z: Sequence[np.ndarray]) -> np.ndarray:
    if len(z) != len(rule.w):
        raise ValueError(f'{len(z)} received estimates, rule expects {len(rule.w)}')
    local = np.asarray(local)
    if local.shape[-1] != rule.w_ii.shape[1]:
        raise ValueError('local estimate dimension mismatch')
    out = local @ rule.w_ii.T
    for w_k, z_k in zip(rule.w, z):
        if np.shape(z_k) != local.shape:
            raise ValueError('received estimate shape does not match the local estimate')
        out = out + z_k @ w_k.T
    return out


def wyner_ziv_bound(q_h: np.ndarray, *q_errors: np.ndarray) -> float:
    """(1/n) tr(Q_h^-1 + sum_j Q_j^-1)^-1, the MSE with every local estimate unquantized."""
    info = covmat.inv_her(q_h, 'Q_h')
    for j, qj in enumerate(q_errors):
        info = info + covmat.inv_her(qj, f'Q_{j}')
    return covmat.tr_inv(info) / q_h.shape[0]


def brute_force_joint_mmse(q_h: np.ndarray, q_errors: Sequence[np.ndarray], trials: int,
                           rng: np.random.Generator) -> float:
    """Monte Carlo MSE of E[h | all local estimates] built from the joint Gaussian law."""
    n = q_h.shape[0]
    c = len(q_errors)
    c_yy = np.kron(np.ones((c, c)), q_h) + sla.block_diag(*q_errors)
    c_hy = np.hstack([q_h] * c)
    w = sla.solve(c_yy, c_hy.conj().T, assume_a='her').conj().T
    h = sample_complex_gaussian(q_h, rng, trials)
    y = np.hstack([h + sample_complex_gaussian(qj, rng, trials) for qj in q_errors])
    err = h - y @ w.T
    return float(np.mean(np.sum(np.abs(err) ** 2, axis=1))) / n

import logging
from typing import Sequence

import numpy as np

from lib import cs_text
from network.params import PowerMode

report = logging.getLogger('cc.net')

COND_LIMIT = 1e12


def channel_matrix(h: np.ndarray, K: int, L: int) -> np.ndarray:
    """L x K channel(s) from column-major vec(H); works on stacked rows."""
    h = np.asarray(h)
    if h.shape[-1] != K * L:
        raise ValueError(f'channel vector of length {h.shape[-1]} does not fit {L}x{K}')
    return np.swapaxes(h.reshape(*h.shape[:-1], K, L), -1, -2)


def zf_rows(h_est: np.ndarray, tx: int, power: float, power_mode: PowerMode = PowerMode.per_tx) -> tuple[np.ndarray, np.ndarray]:
    """Row ``tx`` of the scaled ZF precoder each estimate implies, plus the mask of muted trials.

    h_est is (T, L, K); rows come back as (T, L).
    """
    L, K = h_est.shape[-2:]
    gram = h_est @ np.conj(np.swapaxes(h_est, -1, -2))
    cond = np.linalg.cond(gram)
    muted = ~np.isfinite(cond) | (cond > COND_LIMIT)
    gram = np.where(muted[:, None, None], np.eye(L), gram)
    t = np.conj(np.swapaxes(np.linalg.solve(gram, h_est), -1, -2))
    col = np.linalg.norm(t, axis=1, keepdims=True)
    t = t / np.where(col > 0, col, 1)
    if power_mode is PowerMode.per_tx:
        peak = np.max(np.linalg.norm(t, axis=2), axis=1)
        scale = np.sqrt(power) / np.where(peak > 0, peak, 1)
    else:
        frob = np.linalg.norm(t, axis=(1, 2))
        scale = np.sqrt(K * power) / np.where(frob > 0, frob, 1)
    rows = scale[:, None] * t[:, tx, :]
    rows[muted] = 0
    return rows, muted


def sum_rates(h: np.ndarray, estimates: Sequence[np.ndarray], K: int, L: int, power: float,
              power_mode: PowerMode = PowerMode.per_tx) -> np.ndarray:
    """Per-trial ZF sum rate: TX i precodes with its own estimate, receivers see the true channel."""
    h = np.atleast_2d(h)
    if len(estimates) != K:
        raise ValueError(f'{len(estimates)} estimates for {K} TXs')
    rows = []
    for i, est in enumerate(estimates):
        r, muted = zf_rows(channel_matrix(np.atleast_2d(est), K, L), i, power, power_mode)
        if muted.any():
            report.debug(cs_text.zf_singular.format(i, int(muted.sum())))
        rows.append(r)
    v = np.stack(rows, axis=1)
    gains = np.abs(channel_matrix(h, K, L) @ v) ** 2
    signal = np.diagonal(gains, axis1=1, axis2=2)
    interference = gains.sum(axis=2) - signal
    return np.sum(np.log2(1 + signal / (interference + 1)), axis=1)


def zf_sum_rate(h: np.ndarray, estimates: Sequence[np.ndarray], K: int, L: int, power: float,
                power_mode: PowerMode = PowerMode.per_tx) -> float:
    return float(sum_rates(h, estimates, K, L, power, power_mode)[0])

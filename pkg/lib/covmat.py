"""Hermitian positive semidefinite matrices and the linear algebra built on them.

Covariances are plain complex ``numpy`` arrays; ``check_cov`` is the gate every
constructor passes them through.
"""
import logging

import numpy as np
import scipy.linalg as sla

from lib import cs_text
from lib.utils import NumericalError

report = logging.getLogger('cc.model')

HERM_TOL = 1e-10
PSD_TOL = 1e-9
COND_WARN = 1e12


class InvalidCovarianceError(NumericalError):
    pass


def herm(a: np.ndarray) -> np.ndarray:
    return (a + a.conj().T) / 2


def _scale(a: np.ndarray) -> float:
    return max(1.0, float(np.max(np.abs(a)))) if a.size else 1.0


def is_hermitian(a: np.ndarray, tol: float = HERM_TOL) -> bool:
    return bool(np.all(np.abs(a - a.conj().T) <= tol * _scale(a)))


def check_cov(a, name: str = 'cov') -> np.ndarray:
    a = np.atleast_2d(np.asarray(a, dtype=complex))
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f'{name} must be square, got shape {a.shape}')
    if not is_hermitian(a):
        raise InvalidCovarianceError(cs_text.bad_cov.format(name, cs_text.not_hermitian))
    a = herm(a)
    w = sla.eigvalsh(a)
    if w.size and w[0] < -PSD_TOL * max(abs(w[-1]), 1e-300):
        raise InvalidCovarianceError(cs_text.bad_cov.format(name, cs_text.not_psd))
    return a


def eigh_psd(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    w, v = sla.eigh(herm(a))
    return np.clip(w, 0, None), v


def cn_factor(cov: np.ndarray) -> np.ndarray:
    """F with F F^H = cov. Cholesky when positive definite, clamped eigendecomposition otherwise."""
    try:
        return sla.cholesky(cov, lower=True)
    except (sla.LinAlgError, ValueError):
        w, v = eigh_psd(cov)
        return v * np.sqrt(w)


def sqrtm_psd(a: np.ndarray) -> np.ndarray:
    w, v = eigh_psd(a)
    return herm((v * np.sqrt(w)) @ v.conj().T)


def inv_sqrtm(a: np.ndarray) -> np.ndarray:
    w, v = sla.eigh(herm(a))
    if w[0] <= 0:
        raise InvalidCovarianceError(cs_text.bad_cov.format('matrix', 'not positive definite'))
    return herm((v / np.sqrt(w)) @ v.conj().T)


def inv_her(a: np.ndarray, name: str = 'matrix') -> np.ndarray:
    try:
        return herm(sla.inv(a))
    except (sla.LinAlgError, ValueError) as e:
        raise InvalidCovarianceError(cs_text.bad_cov.format(name, e))


def tr_inv(a: np.ndarray) -> float:
    return float(np.real(np.trace(inv_her(a))))


def min_eig(a: np.ndarray) -> float:
    return float(sla.eigvalsh(herm(a))[0])


def is_pd(a: np.ndarray) -> bool:
    try:
        sla.cholesky(herm(a), lower=True)
    except sla.LinAlgError:
        return False
    return True


def solve_her(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, float]:
    """Solve a x = b for Hermitian, possibly indefinite a. Returns x and cond(a)."""
    cond = float(np.linalg.cond(a))
    if cond > COND_WARN:
        report.warning(cs_text.ill_cond.format(cond))
    x = sla.solve(a, b, assume_a='her')
    return x, cond


def relative_eigs(q: np.ndarray, gamma: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Eigenpairs of T = Γ^{-1/2} q Γ^{-1/2}, plus Γ^{1/2}."""
    g_half = sqrtm_psd(gamma)
    g_ihalf = inv_sqrtm(gamma)
    w, v = sla.eigh(herm(g_ihalf @ q @ g_ihalf))
    return w, v, g_half


def random_cov(n: int, rng: np.random.Generator, scale: float = 1.0, floor: float = 0.1) -> np.ndarray:
    a = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return herm(scale * (a @ a.conj().T) / n + floor * np.eye(n))

import logging

import numpy as np
import pytest

from lib import covmat
from lib.model import Scenario, build_scenario_isotropic

TWOTX_Q1 = [0.1, 0.9, 0.1, 0.9]
TWOTX_Q2 = [0.9, 0.1, 0.9, 0.1]
# per coordinate: 1 / (1 + 1/0.1 + 1/0.9)
TWOTX_WZ = 1 / (1 + 10 + 10 / 9)


@pytest.fixture
def twotx():
    return build_scenario_isotropic([TWOTX_Q1, TWOTX_Q2], K=2, L=2)


@pytest.fixture
def threetx():
    return build_scenario_isotropic([
        [0.1, 0.5, 0.5, 1, 1, 1, 1, 1, 1],
        [1, 1, 1, 0.5, 0.1, 0.5, 1, 1, 1],
        [1, 1, 1, 1, 1, 1, 0.5, 0.5, 0.1],
    ], K=3, L=3)


@pytest.fixture
def case2():
    return build_scenario_isotropic([[0.4, 0.2, 0.3, 0.1], [0.7, 0.8, 0.6, 0.9]], K=2, L=2)


@pytest.fixture
def case3():
    return build_scenario_isotropic([[0.5] * 4, [0.5] * 4], K=2, L=2)


def random_scenario(seed: int, K: int = 2, L: int = 1, M: int = 1, N: int = 1) -> Scenario:
    """Correlated complex covariances, n = K * L (kept small for Monte Carlo checks)."""
    rng = np.random.default_rng(seed)
    n = N * M * K * L
    q_h = covmat.random_cov(n, rng, floor=0.2)
    q = [covmat.random_cov(n, rng, scale=0.4, floor=0.05) for _ in range(K)]
    return Scenario(K, L, M, N, q_h, q)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(autouse=True)
def plain_cc_logger():
    """The CLI installs its own handler on 'cc' and stops propagation; undo that so caplog sees records."""
    yield
    cc = logging.getLogger('cc')
    for h in list(cc.handlers):
        cc.removeHandler(h)
    cc.propagate = True
    cc.setLevel(logging.NOTSET)

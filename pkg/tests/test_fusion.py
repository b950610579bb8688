import numpy as np
import pytest

from lib import covmat, fusion
from lib.fusion import (FusionRule, IllConditionedError, brute_force_joint_mmse, closed_form_mse, fuse,
                        fusion_weights, linear_mse, wyner_ziv_bound)
from lib.model import Scenario, sample_complex_gaussian, sample_local_estimates
from lib.quantizer import analytic_quantize
from tests.conftest import TWOTX_Q1, TWOTX_Q2, TWOTX_WZ, random_scenario


def below_sources(s, i, rng, frac=(0.1, 0.6)):
    """Random error covariances strictly below each source covariance."""
    out = []
    for k in s.coop[i]:
        g = s.gamma(k)
        g_half = covmat.sqrtm_psd(g)
        t = covmat.random_cov(s.n, rng)
        w, v = np.linalg.eigh(t)
        t = (v * np.linspace(*frac, s.n)) @ v.conj().T
        out.append(covmat.herm(g_half @ t @ g_half))
    return out


def test_no_cooperation_is_local_mmse():
    q_h = np.diag([1.0, 2.0])
    q0 = np.diag([0.5, 0.25])
    s = Scenario(2, 1, 1, 1, q_h, [q0, np.eye(2)], coop=[[], []])
    rule = fusion_weights(s, 0, [])
    assert np.allclose(rule.w_ii, q_h @ np.linalg.inv(q_h + q0))
    expected = np.trace(np.linalg.inv(np.linalg.inv(q_h) + np.linalg.inv(q0))).real / 2
    assert rule.predicted_mse == pytest.approx(expected)
    assert rule.w == []


def test_unquantized_exchange_reaches_wyner_ziv(twotx):
    zeros = [np.zeros((4, 4))]
    bound = wyner_ziv_bound(twotx.q_h, twotx.q[0], twotx.q[1])
    assert bound == pytest.approx(TWOTX_WZ)
    assert closed_form_mse(twotx, 0, zeros) == pytest.approx(bound, rel=1e-12)
    assert fusion_weights(twotx, 0, zeros).predicted_mse == pytest.approx(bound, rel=1e-12)


def test_wyner_ziv_examples():
    assert wyner_ziv_bound(np.eye(2), np.eye(2), np.eye(2)) == pytest.approx(1 / 3)
    assert wyner_ziv_bound(np.eye(2), 1e-9 * np.eye(2), np.eye(2)) < 1e-8


def test_isotropic_closed_form_per_coordinate(twotx):
    c = 0.4
    mse = closed_form_mse(twotx, 0, [c * np.eye(4)])
    q1, q2 = np.array(TWOTX_Q1), np.array(TWOTX_Q2)
    gamma = 1 + q2
    outer = gamma ** 2 / (gamma - c) - 1
    expected = np.mean(1 / (1 + 1 / q1 + 1 / outer))
    assert mse == pytest.approx(expected, rel=1e-12)


def test_weights_are_optimal_against_perturbation():
    s = random_scenario(3, K=3, L=1)
    rng = np.random.default_rng(3)
    qq = below_sources(s, 0, rng)
    rule = fusion_weights(s, 0, qq)
    best = linear_mse(s, 0, qq, rule.w_ii, rule.w)
    assert best == pytest.approx(rule.predicted_mse, rel=1e-9)
    for _ in range(20):
        d = [1e-3 * (rng.standard_normal((s.n, s.n)) + 1j * rng.standard_normal((s.n, s.n))) for _ in range(3)]
        d = [x / np.linalg.norm(x) * 1e-3 for x in d]
        mse = linear_mse(s, 0, qq, rule.w_ii + d[0], [w + dk for w, dk in zip(rule.w, d[1:])])
        assert mse >= best - 1e-12


@pytest.mark.parametrize('seed', [1, 2, 3, 4])
def test_closed_form_matches_weighted_evaluation(seed):
    s = random_scenario(seed, K=3, L=1)
    qq = below_sources(s, 1, np.random.default_rng(seed))
    rule = fusion_weights(s, 1, qq)
    assert closed_form_mse(s, 1, qq) == pytest.approx(linear_mse(s, 1, qq, rule.w_ii, rule.w), rel=1e-9)


def test_smaller_quantization_error_never_hurts():
    rng = np.random.default_rng(5)
    for seed in range(5):
        s = random_scenario(seed, K=2, L=2)
        qq = below_sources(s, 0, rng)
        smaller = []
        for q in qq:
            q_half = covmat.sqrtm_psd(q)
            w, v = np.linalg.eigh(covmat.random_cov(s.n, rng))
            t = (v * rng.uniform(0.1, 0.9, s.n)) @ v.conj().T
            smaller.append(covmat.herm(q_half @ t @ q_half))
        assert covmat.min_eig(qq[0] - smaller[0]) >= -1e-12
        assert closed_form_mse(s, 0, smaller) <= closed_form_mse(s, 0, qq) + 1e-12


def test_qq_accepted_as_mapping(twotx):
    qq = {1: 0.3 * np.eye(4)}
    assert closed_form_mse(twotx, 0, qq) == closed_form_mse(twotx, 0, [0.3 * np.eye(4)])
    with pytest.raises(ValueError):
        closed_form_mse(twotx, 0, {0: np.eye(4)})
    with pytest.raises(ValueError):
        closed_form_mse(twotx, 0, [])


def test_fuse_identity_rule_returns_local():
    rule = FusionRule(0, [1], np.eye(2), [np.zeros((2, 2))], 0.0, '')
    local = np.array([1 + 1j, 2.0])
    assert np.allclose(fuse(rule, local, [np.ones(2)]), local)
    zero = FusionRule(0, [1], np.zeros((2, 2)), [np.zeros((2, 2))], 0.0, '')
    assert np.allclose(zero(local, [np.ones(2)]), 0)


def test_fuse_rejects_mismatch():
    rule = FusionRule(0, [1], np.eye(2), [np.eye(2)], 0.0, '')
    with pytest.raises(ValueError):
        fuse(rule, np.zeros(2), [])
    with pytest.raises(ValueError):
        fuse(rule, np.zeros(3), [np.zeros(3)])
    with pytest.raises(ValueError):
        fuse(rule, np.zeros(2), [np.zeros(3)])


def test_silent_link_gets_zero_weight(twotx):
    rule = fusion_weights(twotx, 0, [twotx.gamma(1)])
    assert np.all(rule.w[0] == 0)
    local = fusion_weights(Scenario(2, 2, 1, 1, twotx.q_h, twotx.q, coop=[[], []]), 0, [])
    assert np.allclose(rule.w_ii, local.w_ii)
    assert rule.predicted_mse == pytest.approx(local.predicted_mse, rel=1e-12)


def test_ill_conditioned_system_raises(twotx, monkeypatch):
    monkeypatch.setattr(fusion, 'COND_LIMIT', 1.0)
    with pytest.raises(IllConditionedError) as err:
        fusion_weights(twotx, 0, [0.3 * np.eye(4)])
    assert err.value.cond > 1.0


def test_fusion_digest_changes_with_inputs(twotx):
    a = fusion_weights(twotx, 0, [0.2 * np.eye(4)])
    b = fusion_weights(twotx, 0, [0.3 * np.eye(4)])
    assert a.inputs_digest != b.inputs_digest
    assert a.inputs_digest == fusion_weights(twotx, 0, [0.2 * np.eye(4)]).inputs_digest


def test_brute_force_single_and_triple():
    rng = np.random.default_rng(12)
    one = brute_force_joint_mmse(np.eye(2), [np.eye(2)], 100_000, rng)
    assert one == pytest.approx(0.5, rel=0.02)
    three = brute_force_joint_mmse(np.eye(2), [np.eye(2)] * 3, 100_000, rng)
    assert three == pytest.approx(0.25, rel=0.02)


@pytest.mark.parametrize('seed', [7, 8, 9])
def test_brute_force_matches_wyner_ziv(seed):
    s = random_scenario(seed, K=2, L=2)
    mc = brute_force_joint_mmse(s.q_h, s.q, 100_000, np.random.default_rng(seed))
    assert mc == pytest.approx(wyner_ziv_bound(s.q_h, *s.q), rel=0.02)


@pytest.mark.parametrize('seed', [1, 2, 3, 4, 5])
def test_monte_carlo_matches_prediction(seed):
    s = random_scenario(seed, K=2, L=2)
    rng = np.random.default_rng(100 + seed)
    qq = below_sources(s, 0, rng)
    rule = fusion_weights(s, 0, qq)
    h = sample_complex_gaussian(s.q_h, rng, 100_000)
    local = sample_local_estimates(s, h, rng)
    z = [analytic_quantize(local[1], s.gamma(1), qq[0], rng)]
    est = rule(local[0], z)
    mse = np.mean(np.sum(np.abs(h - est) ** 2, axis=1)) / s.n
    assert mse == pytest.approx(rule.predicted_mse, rel=0.01)

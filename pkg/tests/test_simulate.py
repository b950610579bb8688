import csv
import json
import logging

import numpy as np
import pytest

from lib.model import build_scenario_isotropic
from lib.simulate import CSV_HEADER, SweepConfig, run_mse_sweep, run_sumrate_sweep
from lib.utils import ConfigError
from network.params import Algorithm
from tests.conftest import TWOTX_WZ

ORDER = [Algorithm.no_coop, Algorithm.unshaped, Algorithm.shaped, Algorithm.wz_bound]


def read_rows(path):
    with open(path, newline='') as f:
        return list(csv.reader(f))


def small(**kw):
    base = dict(rates=[0, 4, 8], trials=2000, chunk=500, seed=3)
    base.update(kw)
    return SweepConfig(**base)


def test_mse_sweep_layout(twotx, tmp_path):
    result = run_mse_sweep(twotx, small())
    out = tmp_path / 'sweep.csv'
    result.write_csv(out)
    rows = read_rows(out)
    assert rows[0] == CSV_HEADER
    assert len(rows) == 1 + 3 * 4
    keys = [(r[1], int(r[0]), int(r[2])) for r in rows[1:]]
    assert keys == sorted(keys)
    for r in rows[1:]:
        assert r[5] == ''
        assert r[6] in ('true', 'false')
        assert float(r[3]) > 0


def test_wyner_ziv_rows_are_exact(twotx):
    result = run_mse_sweep(twotx, small())
    for rec in result.select(Algorithm.wz_bound):
        assert rec.mse == pytest.approx(TWOTX_WZ, rel=1e-12)
        assert rec.mse_ci95 == 0


def test_zero_rate_equals_no_cooperation(twotx):
    result = run_mse_sweep(twotx, small(rates=[0]))
    local = result.get(Algorithm.no_coop, 0).mse
    assert result.get(Algorithm.unshaped, 0).mse == pytest.approx(local, rel=1e-12)
    assert result.get(Algorithm.shaped, 0).mse == pytest.approx(local, rel=1e-12)


def test_algorithm_ordering(twotx):
    result = run_mse_sweep(twotx, small(trials=5000))
    for rate in (4, 8):
        recs = [result.get(a, rate) for a in ORDER]
        for hi, lo in zip(recs, recs[1:]):
            assert hi.mse + hi.mse_ci95 >= lo.mse - lo.mse_ci95
        assert recs[2].predicted <= recs[1].predicted


def test_same_csv_for_any_worker_count(twotx, tmp_path):
    a, b = tmp_path / 'a.csv', tmp_path / 'b.csv'
    run_mse_sweep(twotx, small(workers=1)).write_csv(a)
    run_mse_sweep(twotx, small(workers=3)).write_csv(b)
    assert a.read_bytes() == b.read_bytes()


def test_seed_changes_results(twotx):
    one = run_mse_sweep(twotx, small(rates=[4], seed=1)).get(Algorithm.shaped, 4).mse
    two = run_mse_sweep(twotx, small(rates=[4], seed=2)).get(Algorithm.shaped, 4).mse
    assert one != two


def test_meta_sidecar(twotx, tmp_path):
    result = run_mse_sweep(twotx, small(rates=[4]))
    path = tmp_path / 'meta.json'
    result.write_meta(path, wall_time_s=1.0)
    meta = json.loads(path.read_text())
    assert meta['scenario_digest'] == twotx.digest
    assert meta['seed'] == 3
    assert meta['mode'] == 'analytic'
    assert {p['algorithm'] for p in meta['points']} == {a.value for a in ORDER}


def test_three_tx_shaping_helps(threetx):
    result = run_mse_sweep(threetx, small(rates=[6], tx=[0, 1, 2], trials=500))
    for i in range(3):
        assert result.get(Algorithm.shaped, 6, i).predicted <= result.get(Algorithm.unshaped, 6, i).predicted + 1e-12


def test_trained_mode_runs(twotx):
    cfg = small(rates=[0, 2], mode='trained', trials=1000, train_samples_per_level=20,
                algorithms=['no_coop', 'unshaped', 'shaped'])
    result = run_mse_sweep(twotx, cfg)
    assert len(result.records) == 6
    for rec in result.records:
        assert np.isfinite(rec.mse)
    assert result.get(Algorithm.shaped, 0).mse == pytest.approx(result.get(Algorithm.no_coop, 0).mse, rel=1e-12)


def test_trained_mode_falls_back_above_cap(twotx, caplog):
    cfg = small(rates=[4], mode='trained', trials=500, train_rate_cap=2, algorithms=['unshaped'])
    with caplog.at_level(32, logger='cc.sim'):
        result = run_mse_sweep(twotx, cfg)
    assert any(r.levelno == 32 and 'training cap' in r.getMessage() for r in caplog.records)
    assert len(result.records) == 1


def test_sweep_config_errors(twotx):
    with pytest.raises(ConfigError):
        SweepConfig(rates='a,b')
    with pytest.raises(ConfigError):
        SweepConfig(algorithms=['magic'])
    with pytest.raises(ConfigError):
        SweepConfig.from_dict({'rate': [1]})
    with pytest.raises(ConfigError):
        run_mse_sweep(twotx, small(tx=[5]))
    assert SweepConfig(rates='0:6:2').rates == [0, 2, 4, 6]


def test_sum_rate_sweep_layout(twotx, caplog):
    cfg = small(rates=[0, 10], trials=1000, algorithms=['no_coop', 'shaped', 'wz_bound'])
    with caplog.at_level(32, logger='cc.sim'):
        result = run_sumrate_sweep(twotx, cfg)
    assert any('wz_bound' in r.getMessage() for r in caplog.records)
    algs = {r.algorithm for r in result.records}
    assert algs == {Algorithm.no_coop, Algorithm.shaped, Algorithm.infinite}
    assert len(result.records) == 6
    for rec in result.records:
        assert rec.tx == -1
        assert rec.sum_rate > 0
        assert rec.row()[5] != ''


def test_sum_rate_needs_single_antennas():
    s = build_scenario_isotropic([[0.5] * 8, [0.5] * 8], K=2, L=2, M=2)
    with pytest.raises(ConfigError):
        run_sumrate_sweep(s, small())


@pytest.mark.slow
def test_monte_carlo_matches_predictions(twotx):
    result = run_mse_sweep(twotx, SweepConfig(rates=[4, 12, 24], trials=100_000, seed=11))
    for rec in result.records:
        assert rec.mse == pytest.approx(rec.predicted, rel=0.01)


@pytest.mark.slow
def test_full_twotx_sweep(twotx):
    result = run_mse_sweep(twotx, SweepConfig(trials=100_000))
    for rate in range(0, 31, 2):
        recs = [result.get(a, rate) for a in ORDER]
        for hi, lo in zip(recs, recs[1:]):
            assert hi.mse + hi.mse_ci95 >= lo.mse - lo.mse_ci95
    assert result.get(Algorithm.shaped, 30).mse == pytest.approx(TWOTX_WZ, rel=0.05)
    assert result.get(Algorithm.unshaped, 30).mse == pytest.approx(TWOTX_WZ, rel=0.06)


@pytest.mark.slow
def test_sum_rate_ordering_and_convergence(twotx):
    result = run_sumrate_sweep(twotx, SweepConfig(rates=[4, 10, 30], trials=100_000))
    for rate in (4, 10, 30):
        no, un, sh = (result.get(a, rate, -1) for a in (Algorithm.no_coop, Algorithm.unshaped, Algorithm.shaped))
        assert sh.sum_rate + sh.sum_rate_ci95 >= un.sum_rate - un.sum_rate_ci95
        assert un.sum_rate + un.sum_rate_ci95 >= no.sum_rate - no.sum_rate_ci95
    best = result.get(Algorithm.infinite, 30, -1).sum_rate
    for alg in (Algorithm.shaped, Algorithm.unshaped):
        assert result.get(alg, 30, -1).sum_rate == pytest.approx(best, rel=0.03)

import csv
import io
import json
import logging
from pathlib import Path

import pytest

import cli_config
from coop_cli import ColourProgressHandler, cli_main, setup_logging
from lib.config import load_experiment
from lib.simulate import CSV_HEADER

CONFIGS = Path(__file__).parent.parent / 'configs'


@pytest.fixture(autouse=True)
def plain_output(monkeypatch):
    monkeypatch.setattr(cli_config, 'coloured_output', False)
    monkeypatch.setattr(cli_config, 'verbosity', 2)


def run(*argv) -> int:
    return cli_main([str(a) for a in argv])


def test_mse_sweep_writes_csv_and_meta(tmp_path, capsys):
    out = tmp_path / 'sweep.csv'
    code = run('mse-sweep', '--config', CONFIGS / 'twotx.json', '--trials', 300, '--rates', '0,4',
               '--seed', 5, '--out', out)
    assert code == 0
    with open(out, newline='') as f:
        rows = list(csv.reader(f))
    assert rows[0] == CSV_HEADER
    assert len(rows) == 1 + 2 * 4
    meta = json.loads((tmp_path / 'sweep.csv.meta.json').read_text())
    assert meta['seed'] == 5
    assert meta['trials'] == 300
    assert meta['scenario_digest'] == load_experiment(CONFIGS / 'twotx.json').scenario.digest
    assert 'Written:' in capsys.readouterr().out


def test_mse_sweep_is_reproducible(tmp_path):
    a, b = tmp_path / 'a.csv', tmp_path / 'b.csv'
    for out, workers in ((a, 1), (b, 2)):
        assert run('mse-sweep', '--config', CONFIGS / 'twotx.json', '--trials', 400, '--rates', '2:6:2',
                   '--workers', workers, '--out', out) == 0
    assert a.read_bytes() == b.read_bytes()


def test_sumrate_sweep(tmp_path):
    out = tmp_path / 'rates.csv'
    assert run('sumrate-sweep', '--config', CONFIGS / 'sumrate.json', '--trials', 200, '--rates', '0,8',
               '--power-mode', 'sum_power', '--out', out) == 0
    with open(out, newline='') as f:
        rows = list(csv.DictReader(f))
    assert len(rows) == 2 * 4
    assert all(r['sum_rate'] != '' and r['tx'] == '-1' for r in rows)


@pytest.mark.parametrize('argv', [
    ['mse-sweep', '--config', 'x.json', '--bogus'],
    ['mse-sweep'],
    ['launch', '--config', 'x.json'],
    ['mse-sweep', '--config', 'x.json', '--rates', 'a:b'],
])
def test_usage_errors(argv):
    assert cli_main(argv) == 2


def test_missing_config(tmp_path):
    assert run('mse-sweep', '--config', tmp_path / 'nope.json') == 2


def test_invalid_json(tmp_path):
    cfg = tmp_path / 'bad.json'
    cfg.write_text('{"scenario": {')
    assert run('mse-sweep', '--config', cfg, '--out', tmp_path / 'o.csv') == 2
    assert not (tmp_path / 'o.csv').exists()


def test_non_hermitian_covariance_is_numerical(tmp_path, capsys):
    cfg = tmp_path / 'skew.json'
    cfg.write_text(json.dumps({'scenario': {'K': 2, 'L': 1, 'q_h': [[1, 1], [0, 1]], 'q_errors': [[1, 1], [1, 1]]}}))
    assert run('mse-sweep', '--config', cfg, '--trials', 10, '--out', tmp_path / 'o.csv') == 3
    assert 'InvalidCovarianceError' in capsys.readouterr().out


def test_allocate_small_budget(tmp_path):
    out = tmp_path / 'alloc.csv'
    assert run('allocate', '--config', CONFIGS / 'case3.json', '--budget', 2, '--out', out) == 0
    with open(out, newline='') as f:
        rows = list(csv.DictReader(f))
    assert [(r['r_10'], r['r_01']) for r in rows] == [('0', '2'), ('1', '1'), ('2', '0')]
    assert sum(r['winner'] == 'true' for r in rows) == 1
    meta = json.loads((tmp_path / 'alloc.csv.meta.json').read_text())
    assert meta['budget'] == 2
    assert meta['method'] == 'exhaustive'
    assert sum(meta['winner']) == 2


def test_allocate_without_budget(tmp_path):
    assert run('allocate', '--config', CONFIGS / 'twotx.json', '--out', tmp_path / 'a.csv') == 2


def test_cellular_scenario_output_is_a_config(tmp_path):
    out = tmp_path / 'cell.json'
    assert run('cellular-scenario', '--config', CONFIGS / 'cellular.json', '--seed', 11, '--out', out) == 0
    exp = load_experiment(out)
    assert exp.scenario.n == 8
    meta = json.loads((tmp_path / 'cell.json.meta.json').read_text())
    assert meta['scenario_digest'] == exp.scenario.digest
    assert len(meta['geometry']['rx_positions_km']) == 2
    assert exp.sweep_config().tx == [0]


def test_cellular_scenario_needs_cellular_block(tmp_path):
    assert run('cellular-scenario', '--config', CONFIGS / 'twotx.json', '--out', tmp_path / 'c.json') == 2


def test_train_vq_writes_codebook(tmp_path):
    out = tmp_path / 'cb.json'
    assert run('train-vq', '--config', CONFIGS / 'twotx.json', '--link', '1,0', '--rate', 3, '--out', out) == 0
    doc = json.loads(out.read_text())
    assert doc['R'] == 3
    assert len(doc['codewords']) == 8
    meta = json.loads((tmp_path / 'cb.json.meta.json').read_text())
    assert meta['link'] == [1, 0]


def test_train_vq_rejects_unknown_link(tmp_path):
    assert run('train-vq', '--config', CONFIGS / 'twotx.json', '--link', '0,0', '--rate', 2,
               '--out', tmp_path / 'cb.json') == 2


def test_solver_warning_continues_the_progress_line():
    out = io.StringIO()
    setup_logging(2, out)
    logging.getLogger('cc').info('Shaping TX 0:')
    logging.getLogger('cc.shaping').log(32, 'iteration cap reached')
    logging.getLogger('cc.cli').log(25, 'Written: x.csv')
    assert out.getvalue() == '\nShaping TX 0: [shaping] iteration cap reached\nWritten: x.csv'


def test_debug_records_are_filtered_at_normal_verbosity():
    out = io.StringIO()
    setup_logging(2, out)
    logging.getLogger('cc.quant').debug('lloyd iteration')
    assert out.getvalue() == ''


def test_colours_follow_the_level():
    assert ColourProgressHandler.make_msg('abort', 42).startswith('\x1b[1;31m')
    assert ColourProgressHandler.make_msg('capped', 32).endswith('\x1b[0m')
    assert ColourProgressHandler.make_msg('plain', logging.INFO) == 'plain'

import sys
import json
import time
import logging
import argparse
from pathlib import Path
from typing import Optional

import numpy as np

import cli_config
from lib import cs_text, utils
from lib.allocation import ShapingCache, allocate_alternating, allocate_exhaustive
from lib.config import Experiment, load_experiment, scenario_to_dict
from lib.model import build_cellular_scenario, sample_complex_gaussian
from lib.quantizer import TrainingOptions
from lib.shaping import design_link
from lib.simulate import SweepResult, run_mse_sweep, run_sumrate_sweep
from lib.utils import ConfigError, NumericalError, tb_line_gen
from network.params import CellularParams


class ProgressHandler(logging.StreamHandler):
    """Console output for sweeps.

    Levels that are not a multiple of 5 (22, 32, 42) continue the current line.
    Warnings and failures are tagged with the subsystem that raised them.
    """

    @staticmethod
    def make_msg(msg: str, levelno: int = logging.INFO) -> str:
        return msg

    @staticmethod
    def tag(record: logging.LogRecord) -> str:
        if record.levelno < logging.WARNING or record.name == report.name:
            return ''
        return f'[{record.name.rpartition(".")[2]}] '

    def emit(self, record: logging.LogRecord):
        prefix = ' ' if record.levelno % 5 else '\n'
        text = self.tag(record) + record.getMessage() if record.msg else ''
        self.stream.write(prefix + self.make_msg(text, record.levelno) if text else prefix)

        if record.exc_info and None not in record.exc_info:
            cls, ex, tb = record.exc_info
            if self.level < logging.INFO:
                self.stream.write('\nTraceback (most recent call last):')
                self.stream.write('\n' + '\n'.join(tb_line_gen(tb)))
            self.stream.write('\n' + self.make_msg(f'{cls.__name__}: {ex}', record.levelno))
        self.stream.flush()


class ColourProgressHandler(ProgressHandler):
    LEVEL_COLOURS = {
        42: '\x1b[1;31m',  # run aborted
        40: '\x1b[0;31m',
        32: '\x1b[0;35m',  # solver or trainer fell back
        30: '\x1b[0;33m',
        25: '\x1b[0;32m',  # output written
        22: '\x1b[0;36m',  # allocation summary
    }

    @classmethod
    def make_msg(cls, msg: str, levelno: int = logging.INFO) -> str:
        colour = cls.LEVEL_COLOURS.get(levelno)
        return colour + msg + '\x1b[0m' if colour else msg


verb_map = {
    0: logging.CRITICAL,
    1: logging.ERROR,
    2: logging.INFO,
    3: logging.DEBUG
}

report = logging.getLogger('cc')
cli_report = logging.getLogger('cc.cli')


def setup_logging(verbosity: int, stream=None):
    level = verb_map[max(0, min(verbosity, 3))]
    for h in list(report.handlers):
        report.removeHandler(h)
    handler = ColourProgressHandler() if cli_config.coloured_output else ProgressHandler()
    handler.setStream(stream or sys.stdout)
    handler.setLevel(level)
    report.addHandler(handler)
    report.setLevel(level)
    report.propagate = False


def rate_list(txt: str) -> list[int]:
    try:
        return utils.parse_rates(txt)
    except ConfigError as e:
        raise argparse.ArgumentTypeError(str(e))


def int_pair(txt: str) -> tuple[int, int]:
    try:
        k, i = (int(x) for x in txt.split(','))
    except ValueError:
        raise argparse.ArgumentTypeError(f'expected K,I got {txt!r}')
    return k, i


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='coop_cli.py', description='Cooperative channel estimation simulator')
    parser.add_argument('--version', action='version', version=utils.version_string(cs_text.version))
    sub = parser.add_subparsers(dest='command', required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', required=True, type=Path, help='experiment JSON')
    common.add_argument('--out', type=Path, help='output file')
    common.add_argument('--seed', type=int)
    common.add_argument('--workers', type=int)
    common.add_argument('-v', '--verbose', action='count', default=0)

    sweep = argparse.ArgumentParser(add_help=False)
    sweep.add_argument('--trials', type=int)
    sweep.add_argument('--mode', choices=['analytic', 'trained', 'trained_vq'])
    sweep.add_argument('--rates', type=rate_list, help='"0,2,4" or inclusive range "0:30:2"')
    sweep.add_argument('--tx', type=rate_list, help='TX indices to report (mse-sweep)')

    sub.add_parser('mse-sweep', parents=[common, sweep], help='final MSE vs coordination rate')
    rate_p = sub.add_parser('sumrate-sweep', parents=[common, sweep], help='ZF sum rate vs coordination rate')
    rate_p.add_argument('--power-mode', choices=['per_tx', 'sum_power'])

    alloc = sub.add_parser('allocate', parents=[common], help='split a bit budget over the links')
    alloc.add_argument('--budget', type=int)
    alloc.add_argument('--method', choices=['exhaustive', 'alternating'])

    train = sub.add_parser('train-vq', parents=[common], help='shape and train one link codebook')
    train.add_argument('--link', type=int_pair, help='K,I for the link K -> I')
    train.add_argument('--rate', type=int)
    train.add_argument('--samples', type=int)

    sub.add_parser('cellular-scenario', parents=[common], help='draw a cellular layout and write its scenario')
    return parser


def default_out(args, suffix: str) -> Path:
    return args.out or Path(cli_config.out_dir) / f'{args.command}{suffix}'


def meta_path(out: Path) -> Path:
    return out.with_name(out.name + '.meta.json')


def write_meta(out: Path, exp: Experiment, args, started: float, argv, **extra):
    meta = {
        'seed': extra.pop('seed', args.seed),
        'version': utils.version_string(cs_text.version),
        'scenario_digest': exp.scenario.digest,
        'wall_time_s': round(time.perf_counter() - started, 3),
        'command': ['coop_cli.py', *argv],
    }
    meta.update(extra)
    meta_path(out).write_text(json.dumps(meta, indent=2, sort_keys=True, default=str))


def sweep_defaults() -> dict:
    return {
        'trials': cli_config.trials,
        'seed': cli_config.seed,
        'mode': cli_config.mode,
        'workers': cli_config.workers,
        'rates': list(range(cli_config.rate_start, cli_config.rate_stop + 1, cli_config.rate_step)),
        'train_samples_per_level': cli_config.train_samples_per_level,
        'train_rate_cap': cli_config.train_rate_cap,
    }


def cmd_sweep(args, argv) -> Path:
    started = time.perf_counter()
    exp = load_experiment(args.config)
    overrides = dict(trials=args.trials, seed=args.seed, mode=args.mode, rates=args.rates, workers=args.workers)
    if args.command == 'mse-sweep':
        overrides['tx'] = args.tx
        cfg = exp.sweep_config(sweep_defaults(), **overrides)
        result: SweepResult = run_mse_sweep(exp.scenario, cfg)
    else:
        overrides['power_mode'] = args.power_mode
        cfg = exp.sweep_config(sweep_defaults(), **overrides)
        result = run_sumrate_sweep(exp.scenario, cfg)
    out = default_out(args, '.csv')
    result.write_csv(out)
    result.write_meta(meta_path(out), wall_time_s=round(time.perf_counter() - started, 3),
                      command=['coop_cli.py', *argv])
    return out


def cmd_allocate(args, argv) -> Path:
    started = time.perf_counter()
    exp = load_experiment(args.config)
    s = exp.scenario
    budget = args.budget if args.budget is not None else exp.allocation.get('budget')
    if budget is None:
        raise ConfigError('no bit budget given (--budget or allocation.budget)')
    method = args.method or exp.allocation.get('method', 'exhaustive')
    workers = args.workers or cli_config.workers
    cache = ShapingCache(exp.solver)
    if method == 'exhaustive':
        alloc = allocate_exhaustive(s, budget, workers=workers, cache=cache)
    else:
        alloc = allocate_alternating(s, budget, init=exp.allocation.get('init'), cache=cache)

    cli_report.info(cs_text.winner)
    for (k, i), r in zip(alloc.links, alloc.vector):
        cli_report.log(22, f'R_{k}{i}={r}')
    cli_report.log(22, f'avg MSE {alloc.avg_mse:.6g}')

    out = default_out(args, '.csv')
    header = [f'r_{k}{i}' for k, i in alloc.links] + ['avg_mse', 'winner']
    lines = [','.join(header)]
    for vector, avg in alloc.candidates:
        row = [str(r) for r in vector] + [f'{avg:.12g}', 'true' if tuple(vector) == alloc.vector else 'false']
        lines.append(','.join(row))
    out.write_text('\n'.join(lines) + '\n')
    write_meta(out, exp, args, started, argv, method=method, budget=budget, winner=list(alloc.vector),
               links=[list(link) for link in alloc.links], avg_mse=alloc.avg_mse, per_tx_mse=alloc.per_tx_mse,
               solver=exp.solver.to_dict())
    return out


def cmd_train(args, argv) -> Path:
    started = time.perf_counter()
    exp = load_experiment(args.config)
    link = args.link or tuple(exp.training.get('link', (1, 0)))
    rate = args.rate if args.rate is not None else exp.training.get('rate')
    if rate is None:
        raise ConfigError('no rate given (--rate or training.rate)')
    k, i = link
    seed = args.seed if args.seed is not None else exp.training.get('seed', cli_config.seed)
    opts = TrainingOptions(samples_per_level=exp.training.get('samples_per_level', cli_config.train_samples_per_level),
                           rate_cap=exp.training.get('rate_cap', cli_config.train_rate_cap), seed=seed,
                           workers=args.workers or cli_config.workers)
    samples = None
    rng = np.random.default_rng(seed)
    if args.samples:
        samples = sample_complex_gaussian(exp.scenario.gamma(k), rng, args.samples)
    solution, codebook = design_link(exp.scenario, k, i, rate, exp.solver, opts, samples, rng)
    out = default_out(args, '.json')
    out.write_text(json.dumps(codebook.to_json()))
    write_meta(out, exp, args, started, argv, seed=seed, link=[k, i], rate=rate,
               objective_exact=solution.objective_exact, converged=solution.converged,
               training_distortion=codebook.training_distortion)
    return out


def cmd_cellular(args, argv) -> Path:
    started = time.perf_counter()
    exp = load_experiment(args.config)
    block = exp.raw['scenario']
    if 'cellular' not in block:
        raise ConfigError('config has no scenario.cellular block')
    seed = args.seed if args.seed is not None else block.get('geometry_seed', 0)
    p = CellularParams.from_dict(block['cellular'])
    s, geometry = build_cellular_scenario(p, np.random.default_rng(seed), coop=block.get('coop'),
                                          rates=block.get('rates'), m2n=block.get('m2n'))
    doc = {'description': f'cellular layout, geometry seed {seed}', 'scenario': scenario_to_dict(s)}
    if 'sweep' in exp.raw:
        doc['sweep'] = exp.raw['sweep']
    if 'solver' in exp.raw:
        doc['solver'] = exp.raw['solver']
    out = default_out(args, '.json')
    out.write_text(json.dumps(doc, indent=1))
    write_meta(out, exp, args, started, argv, seed=seed, scenario_digest=s.digest, cellular=p.to_dict(),
               geometry=geometry.to_dict(), window_centres='uniform in [0, 2pi) per RX')
    return out


COMMANDS = {
    'mse-sweep': cmd_sweep,
    'sumrate-sweep': cmd_sweep,
    'allocate': cmd_allocate,
    'train-vq': cmd_train,
    'cellular-scenario': cmd_cellular,
}


def cli_main(argv: Optional[list[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else 2

    setup_logging(cli_config.verbosity + args.verbose)
    cli_report.info(f'{cs_text.start} {args.command}')
    try:
        out = COMMANDS[args.command](args, argv)
    except ConfigError:
        cli_report.log(42, cs_text.config_error, exc_info=True)
        return 2
    except (NumericalError, np.linalg.LinAlgError):
        cli_report.log(42, cs_text.numerical_error, exc_info=True)
        return 3
    cli_report.log(25, f'{cs_text.written} {out}')
    cli_report.info('')
    return 0


if __name__ == "__main__":
    sys.exit(cli_main())

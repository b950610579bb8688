import re
import json
import hashlib
import traceback
from multiprocessing import pool
from typing import Callable, Iterable, Iterator

import numpy as np


class ConfigError(Exception):
    pass


class NumericalError(ArithmeticError):
    pass


STUPID_3_11_TB = re.compile(r'[\s^~]+')


def tb_line_gen(tb):
    for line in traceback.format_tb(tb):
        for sub_line in line.splitlines():
            if STUPID_3_11_TB.fullmatch(sub_line):
                continue
            yield sub_line


def ordered_map(func: Callable, items: Iterable, workers: int = 1) -> Iterator:
    """imap over a thread pool; results come back in submission order."""
    if workers <= 1:
        yield from map(func, items)
        return
    with pool.ThreadPool(workers) as p:
        yield from p.imap(func, items)


def chunk_rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=tuple(int(k) for k in key)))


def chunk_sizes(total: int, chunk: int) -> list[int]:
    full, rest = divmod(total, chunk)
    return [chunk] * full + ([rest] if rest else [])


def to_pairs(a: np.ndarray) -> list:
    a = np.asarray(a, dtype=complex)
    return np.stack([a.real, a.imag], axis=-1).tolist()


def from_pairs(obj) -> np.ndarray:
    arr = np.asarray(obj, dtype=float)
    if arr.shape[-1] != 2:
        raise ValueError('expected [re, im] pairs')
    return arr[..., 0] + 1j * arr[..., 1]


def digest(obj) -> str:
    canon = json.dumps(obj, sort_keys=True, separators=(',', ':'))
    return hashlib.sha256(canon.encode()).hexdigest()


def array_digest(*arrays: np.ndarray) -> str:
    h = hashlib.sha256()
    for a in arrays:
        h.update(np.ascontiguousarray(a, dtype=complex).tobytes())
    return h.hexdigest()


RANGE_REX = re.compile(r'(\d+):(\d+)(?::(\d+))?')


def parse_rates(txt: str) -> list[int]:
    txt = txt.strip()
    if m := RANGE_REX.fullmatch(txt):
        start, stop, step = int(m.group(1)), int(m.group(2)), int(m.group(3) or 1)
        if step <= 0:
            raise ConfigError(f'bad rate step in {txt!r}')
        return list(range(start, stop + 1, step))
    try:
        rates = [int(x) for x in txt.split(',') if x.strip()]
    except ValueError:
        raise ConfigError(f'bad rate list {txt!r}')
    if not rates or any(r < 0 for r in rates):
        raise ConfigError(f'bad rate list {txt!r}')
    return rates


def version_string(version: tuple) -> str:
    return 'v' + '.'.join(map(str, version))

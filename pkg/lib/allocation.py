import logging
import math
from typing import Iterator, Optional

import numpy as np

from lib import cs_text, utils
from lib.model import Scenario
from lib.shaping import ShapingOptions, ShapingSolution, optimize_shaping
from lib.utils import ConfigError

report = logging.getLogger('cc.alloc')

CANDIDATE_LIMIT = 100_000
TIE_TOL = 1e-12


class TooManyCandidatesError(ConfigError):
    pass


class Allocation:
    def __init__(self, rates: np.ndarray, avg_mse: float, per_tx_mse: list[float], method: str,
                 links: list[tuple[int, int]], candidates: Optional[list] = None):
        self.rates = rates
        self.avg_mse = avg_mse
        self.per_tx_mse = per_tx_mse
        self.method = method
        self.links = links
        self.candidates = candidates or []

    @property
    def vector(self) -> tuple[int, ...]:
        return tuple(int(self.rates[k, i]) for k, i in self.links)

    @property
    def total(self) -> int:
        return sum(self.vector)


class ShapingCache:
    """Shaping solutions keyed by (TX, rates of the links into it). Values are deterministic."""

    def __init__(self, opts: Optional[ShapingOptions] = None):
        self.opts = opts or ShapingOptions()
        self._table: dict[tuple[int, tuple], ShapingSolution] = {}
        self.hits = 0

    def get(self, s: Scenario, i: int, rates: tuple[int, ...]) -> ShapingSolution:
        key = (i, rates)
        if key in self._table:
            self.hits += 1
            return self._table[key]
        sol = optimize_shaping(s, i, rates, self.opts)
        self._table[key] = sol
        return sol

    def __len__(self):
        return len(self._table)


def compositions(total: int, parts: int) -> Iterator[tuple[int, ...]]:
    """Nonnegative integer vectors of length parts summing to total, in lexicographic order."""
    if parts == 0:
        if total == 0:
            yield ()
        return
    if parts == 1:
        yield (total,)
        return
    for first in range(total + 1):
        for rest in compositions(total - first, parts - 1):
            yield (first, *rest)


def count_compositions(total: int, parts: int) -> int:
    if parts == 0:
        return int(total == 0)
    return math.comb(total + parts - 1, parts - 1)


def rate_table(s: Scenario, vector) -> np.ndarray:
    rates = np.zeros((s.K, s.K), dtype=int)
    for (k, i), r in zip(s.links(), vector):
        rates[k, i] = r
    return rates


def evaluate(s: Scenario, vector, cache: ShapingCache) -> tuple[float, list[float]]:
    rates = rate_table(s, vector)
    per_tx = []
    for i in range(s.K):
        into_i = tuple(int(rates[k, i]) for k in s.coop[i])
        per_tx.append(cache.get(s, i, into_i).objective_exact)
    return float(np.mean(per_tx)), per_tx


def _spread(vector) -> int:
    return max(vector) - min(vector) if vector else 0


def pick_best(results: list[tuple[tuple, float, list]]) -> tuple[tuple, float, list]:
    """Lowest MSE; near ties go to the more balanced split, then the lexicographically smaller one."""
    best = min(r[1] for r in results)
    tied = [r for r in results if r[1] <= best + TIE_TOL * abs(best)]
    return min(tied, key=lambda r: (_spread(r[0]), r[0]))


def allocate_exhaustive(s: Scenario, r_tot: int, opts: Optional[ShapingOptions] = None, workers: int = 1,
                        limit: int = CANDIDATE_LIMIT, cache: Optional[ShapingCache] = None) -> Allocation:
    if r_tot < 0:
        raise ConfigError('rate budget must be nonnegative')
    links = s.links()
    count = count_compositions(r_tot, len(links))
    if count > limit:
        raise TooManyCandidatesError(cs_text.too_many.format(count, limit))
    report.info(cs_text.candidates.format(count, r_tot))
    if cache is None:
        cache = ShapingCache(opts)

    def job(vector):
        avg, per_tx = evaluate(s, vector, cache)
        return vector, avg, per_tx

    results = list(utils.ordered_map(job, compositions(r_tot, len(links)), workers))
    vector, avg, per_tx = pick_best(results)
    candidates = [(v, a) for v, a, _ in results]
    return Allocation(rate_table(s, vector), avg, per_tx, 'exhaustive', links, candidates)


def balanced(r_tot: int, parts: int) -> tuple[int, ...]:
    base, rest = divmod(r_tot, parts)
    return tuple(base + (j < rest) for j in range(parts))


def allocate_alternating(s: Scenario, r_tot: int, init=None, opts: Optional[ShapingOptions] = None,
                         cache: Optional[ShapingCache] = None) -> Allocation:
    """Greedy single-bit moves between links, reshaping at every candidate rate vector.

    Stops at the first vector no single move improves, which need not be the global optimum.
    """
    links = s.links()
    if init is None:
        vector = balanced(r_tot, len(links)) if links else ()
    elif isinstance(init, Allocation):
        vector = init.vector
    else:
        vector = tuple(int(r) for r in init)
    if len(vector) != len(links) or sum(vector) != r_tot or any(r < 0 for r in vector):
        raise ConfigError(f'initial allocation {vector} does not split {r_tot} bits over {len(links)} links')
    if cache is None:
        cache = ShapingCache(opts)

    avg, per_tx = evaluate(s, vector, cache)
    history = [(vector, avg)]
    while True:
        moves = []
        for a in range(len(links)):
            if vector[a] == 0:
                continue
            for b in range(len(links)):
                if a == b:
                    continue
                cand = list(vector)
                cand[a] -= 1
                cand[b] += 1
                cand = tuple(cand)
                cand_avg, cand_per_tx = evaluate(s, cand, cache)
                moves.append((cand, cand_avg, cand_per_tx))
        if not moves:
            break
        best = pick_best(moves)
        if best[1] >= avg - TIE_TOL * abs(avg):
            break
        report.debug(cs_text.alloc_move.format(vector, best[0], best[1]))
        vector, avg, per_tx = best
        history.append((vector, avg))
    return Allocation(rate_table(s, vector), avg, per_tx, 'alternating', links, history)

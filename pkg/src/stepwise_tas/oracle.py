"""Reference engines: exhaustive joint search, random selection, naive evaluation.

Nothing here uses incremental precoder state; every subset is precoded from
scratch. The power search is the same routine the stepwise algorithm uses,
so comparisons measure subset quality only.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from . import metrics
from .channel import ChannelMatrix
from .errors import BudgetExceededError, InvalidArgumentError
from .metrics import Measure
from .precoders import PrecoderKind, PrecoderSpec, precode_direct
from .stepwise import AlgoConfig, optimize_power

__all__ = [
    "ExhaustiveResult",
    "BaselineResult",
    "subset_count",
    "exhaustive_search",
    "naive_evaluate",
    "naive_link_stats",
    "random_tas",
    "DEFAULT_BUDGET",
]

DEFAULT_BUDGET = 10**6


@dataclass
class ExhaustiveResult:
    subset: List[int]
    l_best: int
    p_best: float
    value: float
    n_subsets: int


@dataclass
class BaselineResult:
    subset: List[int]
    power: float
    value: float


def _check_subset(channel: ChannelMatrix, subset: Sequence[int]) -> List[int]:
    subset = [int(n) for n in subset]
    if not subset:
        raise InvalidArgumentError("subset must be non-empty")
    if len(set(subset)) != len(subset):
        raise InvalidArgumentError(f"subset has repeated antennas: {subset}")
    for n in subset:
        if not 1 <= n <= channel.n_antennas:
            raise InvalidArgumentError(f"antenna index {n} outside [1, {channel.n_antennas}]")
    return subset


def naive_link_stats(channel: ChannelMatrix, subset: Sequence[int], spec: PrecoderSpec) -> metrics.LinkStats:
    """Link statistics of the sub-channel ``subset`` (1-based), precoded from scratch."""
    h = channel.gains[np.asarray(_check_subset(channel, subset)) - 1]
    a = precode_direct(h, spec).a_matrix
    return metrics.link_stats(h, a)


def naive_evaluate(channel: ChannelMatrix, subset: Sequence[int], spec: PrecoderSpec, measure: Measure, p) -> float:
    """Measure of ``subset`` at power ``p`` without any incremental state."""
    stats = naive_link_stats(channel, subset, spec)
    return metrics.evaluate(measure, stats, len(subset), p)


def subset_count(n: int, l_max: int, l_min: int = 1) -> int:
    return sum(math.comb(n, size) for size in range(l_min, l_max + 1))


def exhaustive_search(channel: ChannelMatrix, config: AlgoConfig, budget: int = DEFAULT_BUDGET) -> ExhaustiveResult:
    """Jointly optimal subset and power over all subsets of size <= ``l_max``.

    Subsets are visited by size, then lexicographically. ZF skips sizes
    below K where it is undefined. Ties resolve to the lexicographically
    smallest subset, then the smallest power.

    Raises
    ------
    BudgetExceededError
        If more than ``budget`` subsets would be enumerated.
    """
    config.check_channel(channel)
    n, k = channel.n_antennas, channel.n_users
    l_min = k if config.precoder.kind is PrecoderKind.ZF else 1
    required = subset_count(n, config.l_max, l_min)
    if required > budget:
        raise BudgetExceededError(required, budget)

    best_key = None
    best: Optional[ExhaustiveResult] = None
    for size in range(l_min, config.l_max + 1):
        for combo in itertools.combinations(range(1, n + 1), size):
            h = channel.gains[np.asarray(combo) - 1]
            if not np.any(h):
                continue
            a = precode_direct(h, config.precoder).a_matrix
            stats = metrics.link_stats(h, a)
            p = optimize_power(config.measure, stats, size, config.p_max, config.power_grid, config.refine_iters)
            value = metrics.evaluate(config.measure, stats, size, p)
            key = (-value, combo, p)
            if best_key is None or key < best_key:
                best_key = key
                best = ExhaustiveResult(list(combo), size, p, value, required)
    if best is None:
        raise InvalidArgumentError("no feasible subset: the channel is identically zero")
    return best


def random_tas(
    channel: ChannelMatrix,
    l: int,
    spec: PrecoderSpec,
    measure: Measure,
    p_max: float,
    rng: np.random.Generator,
    grid: int = 256,
    refine_iters: int = 40,
) -> BaselineResult:
    """Uniformly random ``l``-subset with the shared power search.

    An all-zero draw yields value 0 at power 0.
    """
    n = channel.n_antennas
    if not 1 <= l <= n:
        raise InvalidArgumentError(f"subset size must be in [1, {n}], got {l}")
    if l == n:
        subset = list(range(1, n + 1))
    else:
        subset = sorted(int(i) + 1 for i in rng.choice(n, size=l, replace=False))
    h = channel.gains[np.asarray(subset) - 1]
    if not np.any(h):
        return BaselineResult(subset, 0.0, 0.0)
    stats = metrics.link_stats(h, precode_direct(h, spec).a_matrix)
    p = optimize_power(measure, stats, l, p_max, grid, refine_iters)
    return BaselineResult(subset, p, metrics.evaluate(measure, stats, l, p))

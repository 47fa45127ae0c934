import logging
import math
from typing import Iterable, Iterator, List, Tuple

import numpy as np

logger = logging.getLogger(__name__)


def trial_rng(master_seed: int, trial: int) -> np.random.Generator:
    """
    Counter-based random stream of one trial, independent of the execution order.
    """

    return np.random.Generator(np.random.Philox(np.random.SeedSequence(master_seed, spawn_key=(trial,))))


def stream_rng(master_seed: int, *key: int) -> np.random.Generator:
    """
    Random stream keyed by an arbitrary integer path (e.g. grid point, repetition).
    """

    return np.random.Generator(np.random.Philox(np.random.SeedSequence(master_seed, spawn_key=key)))


def chunked(start: int, stop: int, size: int) -> Iterator[Tuple[int, int]]:
    """
    Splits `[start, stop)` into consecutive ranges of at most `size` items.
    """

    for lo in range(start, stop, size):
        yield lo, min(lo + size, stop)


def mean_and_stderr(values: Iterable[float]) -> Tuple[float, float]:
    """
    Order-independent sample mean and standard error.
    """

    data: List[float] = sorted(values)
    n = len(data)
    if n == 0:
        return math.nan, math.nan

    mean = math.fsum(data) / n
    if n == 1:
        return mean, 0.0

    variance = math.fsum((x - mean) ** 2 for x in data) / (n - 1)
    return mean, math.sqrt(variance / n)


def parse_float_list(text: str) -> List[float]:
    """
    Parses `1,2,3` or a `start:stop:count` range (inclusive, linear) or `start:stop:count:log`.
    """

    text = text.strip()
    if not text:
        return []

    if ':' in text:
        parts = text.split(':')
        if len(parts) not in (3, 4) or (len(parts) == 4 and parts[3] != 'log'):
            raise ValueError(f"invalid range {text!r}, expected start:stop:count[:log]")

        start, stop, count = float(parts[0]), float(parts[1]), int(parts[2])
        if count < 1:
            raise ValueError(f"range count must be positive, got {count}")
        if len(parts) == 4:
            return [float(x) for x in np.geomspace(start, stop, count)]
        return [float(x) for x in np.linspace(start, stop, count)]

    return [float(item) for item in text.split(',')]


def parse_int_list(text: str) -> List[int]:
    """
    Parses `1,2,3` or an inclusive `start:stop[:step]` range.
    """

    text = text.strip()
    if not text:
        return []

    if ':' in text:
        parts = [int(part) for part in text.split(':')]
        if len(parts) not in (2, 3):
            raise ValueError(f"invalid range {text!r}, expected start:stop[:step]")
        step = parts[2] if len(parts) == 3 else 1
        return list(range(parts[0], parts[1] + 1, step))

    return [int(item) for item in text.split(',')]

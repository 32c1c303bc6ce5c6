# perc_lab/stats.py

"""Binomial confidence intervals and replica fan-out."""

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Callable, List, Sequence, Tuple, TypeVar

from .constants import WILSON_Z

R = TypeVar("R")


def wilson_interval(successes: int, samples: int, z: float = WILSON_Z) -> Tuple[float, float]:
    """Wilson score interval for a binomial proportion."""
    if samples <= 0:
        return 0.0, 1.0
    phat = successes / samples
    denom = 1.0 + z * z / samples
    centre = (phat + z * z / (2 * samples)) / denom
    half = z * math.sqrt(phat * (1 - phat) / samples + z * z / (4 * samples * samples)) / denom
    return max(0.0, centre - half), min(1.0, centre + half)


@dataclass(frozen=True)
class Estimate:
    """A Monte Carlo frequency with its Wilson interval."""

    successes: int
    samples: int

    @property
    def value(self) -> float:
        return self.successes / self.samples if self.samples else 0.0

    @property
    def interval(self) -> Tuple[float, float]:
        return wilson_interval(self.successes, self.samples)

    @property
    def halfwidth(self) -> float:
        lo, hi = self.interval
        return (hi - lo) / 2.0

    @property
    def sigma(self) -> float:
        v = self.value
        return math.sqrt(v * (1 - v) / self.samples) if self.samples else 0.0

    def to_dict(self) -> dict:
        lo, hi = self.interval
        return {"estimate": self.value, "halfwidth": self.halfwidth, "lo": lo, "hi": hi,
                "successes": self.successes, "samples": self.samples}


def _run_chunk(fn: Callable[[int], R], indices: Sequence[int]) -> List[R]:
    return [fn(i) for i in indices]


def replicate(fn: Callable[[int], R], samples: int, workers: int = 1) -> List[R]:
    """
    Evaluate ``fn(i)`` for every replica index ``i`` and return the results in
    index order, whatever the worker count. ``fn`` must be picklable when
    ``workers > 1`` (a module-level function or a ``functools.partial`` of one).
    """
    if workers <= 1 or samples < 2:
        return [fn(i) for i in range(samples)]
    workers = min(workers, samples)
    bounds = [round(k * samples / workers) for k in range(workers + 1)]
    chunks = [range(bounds[k], bounds[k + 1]) for k in range(workers)]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        parts = list(pool.map(_run_chunk, [fn] * len(chunks), chunks))
    return [r for part in parts for r in part]

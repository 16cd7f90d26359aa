"""Seeded RNG streams and the block-partitioned Monte Carlo driver.

Samples are generated in fixed-size blocks; block ``i`` of a stream always
draws from ``SeedSequence(seed, spawn_key=path + (i,))``.  Workers only decide
which thread runs a block, so results are bit-identical for any worker count.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable

import numpy as np

BLOCK_SIZE = 10_000
WORKERS_ENV = "GRFTAILS_WORKERS"


def default_workers() -> int:
    raw = os.environ.get(WORKERS_ENV)
    if not raw:
        return 1
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


@dataclass(frozen=True)
class Stream:
    seed: int
    path: tuple[int, ...] = ()

    def child(self, *keys: int) -> "Stream":
        return Stream(self.seed, self.path + tuple(int(k) for k in keys))

    def generator(self) -> np.random.Generator:
        return np.random.default_rng(np.random.SeedSequence(self.seed, spawn_key=self.path))

    @property
    def id(self) -> str:
        return "/".join(str(p) for p in (self.seed, *self.path))


def as_stream(stream: "Stream | int") -> Stream:
    return stream if isinstance(stream, Stream) else Stream(int(stream))


def block_sizes(n: int, block_size: int = BLOCK_SIZE) -> list[int]:
    full, rest = divmod(n, block_size)
    return [block_size] * full + ([rest] if rest else [])


def map_blocks(
    fn: Callable[[np.random.Generator, int], np.ndarray],
    n: int,
    stream: Stream,
    workers: int | None = None,
    block_size: int = BLOCK_SIZE,
) -> list[np.ndarray]:
    """Run ``fn(rng, k)`` over the blocks of ``n`` samples; outputs in block order."""
    sizes = block_sizes(n, block_size)
    jobs = [(stream.child(i), k) for i, k in enumerate(sizes)]
    workers = default_workers() if workers is None else max(1, int(workers))

    def run(job):
        s, k = job
        return fn(s.generator(), k)

    if workers == 1 or len(jobs) <= 1:
        return [run(j) for j in jobs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(run, jobs))


@dataclass(frozen=True)
class EstimateWithError:
    estimate: float
    std_error: float
    n_samples: int
    ess: float
    warnings: tuple[str, ...] = ()

    def __post_init__(self):
        if self.std_error < 0:
            raise ValueError("std_error must be non-negative")

    @property
    def relative_error(self) -> float:
        return self.std_error / self.estimate if self.estimate > 0 else math.inf

    @property
    def log10_estimate(self) -> float:
        return math.log10(self.estimate) if self.estimate > 0 else -math.inf

    def as_dict(self) -> dict:
        return {
            "estimate": self.estimate,
            "log10_estimate": self.log10_estimate,
            "std_error": self.std_error,
            "n_samples": self.n_samples,
            "ess": self.ess,
            "warnings": list(self.warnings),
        }


MIN_ESS = 10.0


def summarize_weighted(blocks: list[np.ndarray]) -> EstimateWithError:
    """Merge per-sample contributions (likelihood ratio times indicator)."""
    n = 0
    s1 = 0.0
    s2 = 0.0
    for c in blocks:
        n += c.size
        s1 += float(c.sum())
        s2 += float(np.dot(c, c))
    mean = s1 / n
    var = max(s2 / n - mean * mean, 0.0) * n / (n - 1) if n > 1 else 0.0
    ess = s1 * s1 / s2 if s2 > 0 else 0.0
    warnings = ()
    if ess < MIN_ESS:
        warnings = (f"effective sample size {ess:.1f} < {MIN_ESS:g}: importance sampler is degenerate",)
    return EstimateWithError(mean, math.sqrt(var / n), n, ess, warnings)


def summarize_indicator(blocks: list[np.ndarray]) -> EstimateWithError:
    n = sum(c.size for c in blocks)
    hits = sum(int(np.count_nonzero(c)) for c in blocks)
    p = hits / n
    return EstimateWithError(p, math.sqrt(p * (1.0 - p) / n), n, float(n))


def combine_sum(parts: list[EstimateWithError]) -> EstimateWithError:
    """Sum of independent estimates."""
    est = sum(p.estimate for p in parts)
    se = math.sqrt(sum(p.std_error**2 for p in parts))
    warnings = tuple(w for p in parts for w in p.warnings)
    return EstimateWithError(est, se, sum(p.n_samples for p in parts), sum(p.ess for p in parts), warnings)

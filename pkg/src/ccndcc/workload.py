"""Poisson request generation."""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .core import PopularityLevel, file_ranges


@dataclass(frozen=True)
class WorkloadSpec:
    """Mean number of requesting users per sink and slice, one per level."""

    lambdas: tuple[float, ...]
    seed: int = 0

    def __post_init__(self):
        if any(lam < 0 for lam in self.lambdas):
            raise ValueError("Poisson means must be >= 0")


class Request(NamedTuple):
    sink: int
    level: int
    file: int
    caches: tuple[int, ...]


def user_caches(cache: int, degree: int, K: int) -> tuple[int, ...]:
    """Caches a user below ``cache`` reaches: the aligned block of ``degree``."""
    start = cache - cache % degree
    return tuple((start + i) % K for i in range(degree))


def generate_requests(workload: WorkloadSpec, sinks: Sequence[tuple[int, int]],
                      levels: Sequence[PopularityLevel], K: int, slice_: int) -> list[Request]:
    """Draw this slice's requests.

    ``sinks`` pairs each sink with its edge-cache index.  For every sink and
    level, a Poisson number of users arrive, each asking for a file drawn
    uniformly from the level.
    """
    if len(workload.lambdas) != len(levels):
        raise ValueError("one Poisson mean per popularity level is required")
    rng = np.random.default_rng([workload.seed, 3, slice_])
    ranges = file_ranges(levels)
    out = []
    for sink, cache in sinks:
        for lvl, lam, files in zip(levels, workload.lambdas, ranges):
            n = int(rng.poisson(lam)) if lam > 0 else 0
            for _ in range(n):
                f = files.start + int(rng.integers(lvl.files))
                out.append(Request(sink, lvl.index, f, user_caches(cache, lvl.degree, K)))
    return out

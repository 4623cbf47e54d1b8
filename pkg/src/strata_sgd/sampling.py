"""Minibatch draws, uniform and stratified, with importance weights.

Both samplers draw with replacement and attach to every drawn index the
weight that makes the weighted gradient sum an unbiased estimate of the
full-data average gradient: ``1/b`` under uniform sampling and
``n_i / (b_i * n)`` for a draw from cluster ``i`` under stratified
sampling.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .strata import Allocation, Stratification


def make_rng(seed: int) -> np.random.Generator:
    """The one random stream a run consumes, PCG64 under the hood."""
    return np.random.Generator(np.random.PCG64(seed))


@dataclass(frozen=True)
class Minibatch:
    """Drawn instance indices and their unbiasedness weights."""

    indices: np.ndarray
    weights: np.ndarray

    @property
    def draws(self) -> int:
        return len(self.indices)


def draw_uniform(n: int, b: int, rng: np.random.Generator) -> Minibatch:
    """``b`` independent uniform draws from ``range(n)``, weight ``1/b``."""
    if n < 1:
        raise ValueError("cannot sample from an empty set")
    if b < 1:
        raise ValueError("batch size must be >= 1")
    indices = rng.integers(0, n, size=b)
    return Minibatch(indices, np.full(b, 1.0 / b))


def draw_stratified(
    strat: Stratification, alloc: Allocation, rng: np.random.Generator
) -> Minibatch:
    """Per-cluster uniform draws: ``b_i`` from cluster ``i``.

    Clusters are visited in ascending index order, each consuming its draws
    from the shared stream; with a single cluster this replays the uniform
    sampler's stream exactly.
    """
    if len(alloc.quotas) != strat.k:
        raise ValueError(
            f"allocation has {len(alloc.quotas)} quotas for {strat.k} clusters"
        )
    n = strat.n
    parts = []
    wparts = []
    for members, b_i in zip(strat.clusters, alloc.quotas):
        n_i = len(members)
        pos = rng.integers(0, n_i, size=b_i)
        parts.append(members[pos])
        wparts.append(np.full(b_i, n_i / (b_i * n)))
    return Minibatch(np.concatenate(parts), np.concatenate(wparts))

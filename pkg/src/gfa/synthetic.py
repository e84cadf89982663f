"""Synthetic ground-truth structures and sampled data collections.

Benchmarks draw a binary factor-to-view activity pattern from one of
several cardinality distributions, fill the active loading blocks with
standard normal weights and sample observations as Y = Z W^T + noise.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources

import numpy as np

from .data import DataCollection, ViewPartition

UNIFORM_CARDINALITY = "uniform_cardinality"
POWER_LAW = "power_law"
UNIFORM_SUBSETS = "uniform_subsets"
SEC4_PRESET = "sec4_preset"

DISTRIBUTIONS = (UNIFORM_CARDINALITY, POWER_LAW, UNIFORM_SUBSETS, SEC4_PRESET)


@dataclass(frozen=True)
class GroundTruth:
    partition: ViewPartition
    F_true: np.ndarray
    W_true: np.ndarray
    noise_variance: np.ndarray

    @property
    def K_true(self) -> int:
        return self.F_true.shape[0]

    def view_block(self, m: int) -> np.ndarray:
        return self.W_true[self.partition.slices()[m], :]


def _rng(seed) -> np.random.Generator:
    if not isinstance(seed, np.random.SeedSequence):
        seed = np.random.SeedSequence(seed)
    return np.random.Generator(np.random.Philox(seed))


def load_sec4_patterns() -> tuple[list[int], list[list[int]]]:
    with resources.files("gfa.presets").joinpath("sec4_activity.json").open() as fh:
        preset = json.load(fh)
    return preset["dims"], preset["patterns"]


def _draw_patterns(m: int, k: int, distribution: str, rng) -> np.ndarray:
    f = np.zeros((k, m), dtype=int)
    if distribution == UNIFORM_CARDINALITY:
        if k != m:
            raise ValueError("uniform_cardinality requires K == M")
        for i in range(k):
            f[i, rng.choice(m, size=i + 1, replace=False)] = 1
    elif distribution == POWER_LAW:
        cards = np.arange(1, m + 1)
        probs = 1.0 / cards
        probs = probs / probs.sum()
        for i in range(k):
            c = int(rng.choice(cards, p=probs))
            f[i, rng.choice(m, size=c, replace=False)] = 1
    elif distribution == UNIFORM_SUBSETS:
        # Uniform over the 2^M - 1 nonempty subsets: rejection-sample the
        # independent-bit draw, which is uniform conditioned on nonempty.
        for i in range(k):
            while True:
                bits = rng.integers(0, 2, size=m)
                if bits.any():
                    f[i] = bits
                    break
    else:
        raise ValueError(f"unknown distribution: {distribution}")
    return f


def generate_truth(
    M: int,
    dims,
    K: int,
    distribution: str,
    seed: int = 0,
    noise_variance: float = 1.0,
) -> GroundTruth:
    """Draw a ground-truth structure with the given activity distribution.

    For the fixed preset reproducing the 10-view benchmark, M, dims and K
    are taken from the checked-in pattern file and the arguments are
    ignored apart from the seed.
    """
    rng = _rng(seed)
    if distribution == SEC4_PRESET:
        dims, patterns = load_sec4_patterns()
        M, K = len(dims), len(patterns)
        f = np.zeros((K, M), dtype=int)
        for i, views in enumerate(patterns):
            f[i, views] = 1
    else:
        if M < 1 or K < 1:
            raise ValueError("M and K must be at least 1")
        dims = list(dims)
        if len(dims) != M:
            raise ValueError("need one width per view")
        f = _draw_patterns(M, K, distribution, rng)
    partition = ViewPartition.of(dims)
    d_total = partition.total_dim
    w = np.zeros((d_total, K))
    for m, sl in enumerate(partition.slices()):
        active = np.flatnonzero(f[:, m])
        w[sl, active] = rng.standard_normal((sl.stop - sl.start, active.size))
    return GroundTruth(
        partition=partition,
        F_true=f,
        W_true=w,
        noise_variance=np.full(partition.n_views, float(noise_variance)),
    )


def sample_collection(truth: GroundTruth, N: int, seed: int = 0) -> DataCollection:
    """Sample N observations from the truth: Y = Z W^T + per-view noise."""
    if N < 2:
        raise ValueError("need at least two samples")
    rng = _rng(seed)
    z = rng.standard_normal((N, truth.K_true))
    y = z @ truth.W_true.T
    sd = np.repeat(np.sqrt(truth.noise_variance), truth.partition.dims)
    y += rng.standard_normal(y.shape) * sd
    return DataCollection(truth.partition, y)

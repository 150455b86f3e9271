"""
Seeded randomness for privquery.

A ``RandomSource`` wraps a numpy PCG64 generator derived from a base seed and
a spawn key. Children are derived from ``(trial, stage)`` pairs, so any trial
or pipeline stage can be replayed without running the ones before it.
"""

import hashlib
from typing import Tuple

import numpy as np

from privquery.utils.exceptions import raise_invalid_argument


def stage_key(stage: str) -> int:
    """Stable 32-bit integer for a stage name."""
    return int.from_bytes(hashlib.sha256(stage.encode("utf-8")).digest()[:4], "big")


class RandomSource:
    """A reproducible stream of random draws.

    Two sources built from the same seed and spawn key produce identical
    draws. ``child`` and ``fork`` never consume draws from the parent.
    """

    def __init__(self, seed: int, spawn_key: Tuple[int, ...] = (), stage: str = "root"):
        if seed < 0:
            raise_invalid_argument("seed must be non-negative", "seed", seed)
        self.seed = int(seed)
        self.spawn_key = tuple(int(k) for k in spawn_key)
        self.stage = stage
        sequence = np.random.SeedSequence(entropy=self.seed, spawn_key=self.spawn_key)
        self.generator = np.random.Generator(np.random.PCG64(sequence))

    def __repr__(self) -> str:
        return f"RandomSource(seed={self.seed}, spawn_key={self.spawn_key}, stage={self.stage!r})"

    def child(self, trial: int, stage: str) -> "RandomSource":
        """Independent source for ``stage`` of ``trial``."""
        if trial < 0:
            raise_invalid_argument("trial must be non-negative", "trial", trial)
        return RandomSource(
            self.seed,
            spawn_key=(*self.spawn_key, int(trial), stage_key(stage)),
            stage=stage,
        )

    def fork(self, stage: str) -> "RandomSource":
        return self.child(0, stage)

    def uniform(self, size: int | None = None) -> float | np.ndarray:
        """Uniform draws on [0, 1)."""
        return self.generator.random(size)

    def uniform_open(self) -> float:
        """A single uniform draw on the open interval (0, 1)."""
        while True:
            u = float(self.generator.random())
            if u > 0.0:
                return u

    def uniform_open_array(self, size: int) -> np.ndarray:
        out = self.generator.random(size)
        zeros = out == 0.0
        while zeros.any():
            out[zeros] = self.generator.random(int(zeros.sum()))
            zeros = out == 0.0
        return out

    def integers(self, low: int | np.ndarray, high: int | np.ndarray, size: int | None = None) -> np.ndarray:
        """Integers on ``[low, high)``."""
        return self.generator.integers(low, high, size=size)

    def bit(self) -> int:
        """A fair coin in {0, 1}."""
        return int(self.generator.integers(0, 2))

    def gumbel(self, size: int | Tuple[int, ...]) -> np.ndarray:
        return self.generator.gumbel(size=size)

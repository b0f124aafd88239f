"""Counter-based random number streams that split reproducibly."""

from __future__ import annotations

import numpy as np
import numpy.typing as npt

Shape = int | tuple[int, ...] | None


class Rng:
    """Seeded Philox stream addressed by ``(seed, stream key)``.

    Two instances built from the same seed and key yield bit-identical
    draws. ``split`` derives an independent child stream, so parallel
    workers can each own one without sharing state.
    """

    def __init__(self, seed: int, stream: tuple[int, ...] = ()) -> None:
        if seed < 0 or seed >= 2**64:
            raise ValueError(f"Seed must be a 64-bit unsigned integer, got {seed}")
        self._seed = int(seed)
        self._stream = tuple(int(s) for s in stream)
        sequence = np.random.SeedSequence(entropy=self._seed, spawn_key=self._stream)
        self._generator = np.random.Generator(np.random.Philox(sequence))

    @property
    def seed(self) -> int:
        """Root seed of this stream family."""
        return self._seed

    @property
    def stream(self) -> tuple[int, ...]:
        """Key identifying this stream below the root seed."""
        return self._stream

    @property
    def generator(self) -> np.random.Generator:
        """Underlying numpy generator, for scipy ``random_state`` arguments."""
        return self._generator

    def split(self, *index: int) -> Rng:
        """Return the child stream addressed by ``index``."""
        return Rng(self._seed, self._stream + tuple(index))

    def uniform(
        self, low: float = 0.0, high: float = 1.0, size: Shape = None
    ) -> npt.NDArray[np.float64]:
        return np.asarray(self._generator.uniform(low, high, size), dtype=np.float64)

    def normal(
        self, loc: float = 0.0, scale: float = 1.0, size: Shape = None
    ) -> npt.NDArray[np.float64]:
        return np.asarray(self._generator.normal(loc, scale, size), dtype=np.float64)

    def exponential(
        self, rate: float = 1.0, size: Shape = None
    ) -> npt.NDArray[np.float64]:
        """Exponential draws parameterized by rate (not scale)."""
        return np.asarray(
            self._generator.exponential(1.0 / rate, size), dtype=np.float64
        )

    def gumbel(self, size: Shape = None) -> npt.NDArray[np.float64]:
        return np.asarray(self._generator.gumbel(0.0, 1.0, size), dtype=np.float64)

    def integers(
        self, low: int, high: int, size: Shape = None
    ) -> npt.NDArray[np.int64]:
        return np.asarray(self._generator.integers(low, high, size), dtype=np.int64)

    def permutation(self, n: int) -> npt.NDArray[np.int64]:
        return np.asarray(self._generator.permutation(n), dtype=np.int64)

    def __repr__(self) -> str:
        return f"Rng(seed={self._seed}, stream={self._stream})"

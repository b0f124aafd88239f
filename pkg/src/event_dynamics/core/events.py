"""Latent event realizations shared by the prior, the unroller and the graph."""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass, field
from typing import Any

import numpy as np
import numpy.typing as npt

Array = npt.NDArray[np.float64]


@dataclass(frozen=True)
class EventRealization:
    """Per-channel event times on ``[0, window]``.

    Attributes:
        times: One strictly increasing array per channel.
        window: Length of the observation window in seconds.
        seed: Root seed of the stream that produced the times, if sampled.
        stream: Stream key below ``seed``.
        traces: Optional per-channel lists of the per-step mixtures that
            generated each interval.
    """

    times: tuple[Array, ...]
    window: float
    seed: int | None = None
    stream: tuple[int, ...] = ()
    traces: tuple[list[Any], ...] = field(default=(), compare=False)

    def __post_init__(self) -> None:
        if not self.window > 0:
            raise ValueError(f"window must be positive, got {self.window}")
        frozen: list[Array] = []
        for c, channel in enumerate(self.times):
            arr = np.asarray(channel, dtype=np.float64).reshape(-1)
            if arr.size and (arr[0] < 0 or arr[-1] > self.window):
                raise ValueError(
                    f"Channel {c} has events outside [0, {self.window}]"
                )
            if np.any(np.diff(arr) <= 0):
                raise ValueError(f"Channel {c} event times are not strictly increasing")
            arr.setflags(write=False)
            frozen.append(arr)
        object.__setattr__(self, "times", tuple(frozen))

    @classmethod
    def single(
        cls, times: Sequence[float] | Array, window: float, **kwargs: Any
    ) -> EventRealization:
        """Build a one-channel realization."""
        channel = np.asarray(times, dtype=np.float64)
        return cls(times=(channel,), window=window, **kwargs)

    @property
    def n_channels(self) -> int:
        return len(self.times)

    @property
    def counts(self) -> list[int]:
        return [int(t.size) for t in self.times]

    def intervals(self, channel: int = 0) -> Array:
        """Inter-event intervals of one channel, the first measured from zero."""
        t = self.times[channel]
        return np.diff(np.concatenate([[0.0], t]))

"""Event-relational graphs from cross-channel last-event lags."""

from __future__ import annotations

import json
import logging
from collections.abc import Sequence
from dataclasses import dataclass
from pathlib import Path
from typing import Literal

import numpy as np
import numpy.typing as npt

from event_dynamics.core.dlif_prior import RateFunction, sample_renewal
from event_dynamics.core.events import EventRealization
from event_dynamics.core.exceptions import DatasetError, DegenerateChannel, ShapeError
from event_dynamics.core.models import (
    AdjacencyProvenance,
    AdjacencyRecord,
    EventSamples,
    GraphSummary,
)
from event_dynamics.core.parallel import ordered_map
from event_dynamics.numerics import autodiff as ad
from event_dynamics.numerics.rng import Rng

logger = logging.getLogger(__name__)

Array = npt.NDArray[np.float64]
TrajectoryKernel = Literal["exp", "gauss", "inv1"]

DEFAULT_CLAMP = 1e-7


@dataclass(frozen=True)
class Adjacency:
    """A ``C x C`` graph with entries in ``[0, 1]`` and a zero diagonal.

    ``per_grid`` keeps the per-time-point matrices the average was taken
    over, when they were computed.
    """

    matrix: Array
    symmetrized: bool
    diagonal_zeroed: bool
    provenance: AdjacencyProvenance
    per_grid: Array | None = None

    @property
    def n_channels(self) -> int:
        return int(self.matrix.shape[0])

    def to_record(self) -> AdjacencyRecord:
        return AdjacencyRecord(
            matrix=self.matrix.tolist(),
            symmetrized=self.symmetrized,
            diagonal_zeroed=self.diagonal_zeroed,
            provenance=self.provenance,
        )

    def write_json(self, path: Path) -> None:
        path.write_text(
            json.dumps(self.to_record().model_dump(mode="json"), indent=2) + "\n",
            encoding="utf-8",
        )

    def write_csv(self, path: Path) -> None:
        np.savetxt(path, self.matrix, delimiter=",", fmt="%.17g")


def last_event_before(times: Array | Sequence[float], t: Array | float) -> Array:
    """Most recent event time ``<= t``, or zero when there is none."""
    events = np.asarray(times, dtype=np.float64)
    x = np.asarray(t, dtype=np.float64)
    idx = np.searchsorted(events, x, side="right") - 1
    if events.size == 0:
        return np.zeros_like(x)
    return np.asarray(np.where(idx >= 0, events[np.maximum(idx, 0)], 0.0))


def edge_score(lag: ad.Tensor, alpha: ad.Tensor) -> ad.Tensor:
    """Even, alpha-Lipschitz edge map ``exp(-alpha |lag|)``."""
    return ad.exp(ad.neg(ad.mul(alpha, ad.abs_(lag))))


def last_event_matrix(
    times: ad.Tensor, counts: Sequence[int], grid: Array
) -> ad.Tensor:
    """Last-event times of every channel on every grid point, ``(C, M)``.

    Args:
        times: Event times ``(C, n)``; row ``c`` holds its first
            ``counts[c]`` entries as real events.
        counts: Number of valid events per channel.
        grid: Time points ``(M,)``.
    """
    v = ad.value_of(times)
    n_channels = v.shape[0]
    padded = ad.concat([np.zeros((n_channels, 1)), times], axis=1)
    index = np.zeros((n_channels, grid.size), dtype=np.int64)
    for c in range(n_channels):
        valid = v[c, : counts[c]]
        index[c] = np.searchsorted(valid, grid, side="right")
    return ad.gather(padded, index)


def adjacency_from_lags(
    lags: ad.Tensor,
    alpha: ad.Tensor,
    sample_axes: tuple[int, ...] = (0,),
    symmetrize: bool = False,
) -> ad.Tensor:
    """Average edge scores of lag samples into adjacencies with zero diagonal.

    Args:
        lags: Lag samples whose trailing two axes index channel pairs.
        alpha: Edge decay rate.
        sample_axes: Axes averaged over, none of the trailing two.
        symmetrize: Replace ``A`` by ``(A + A^T) / 2``; 2-D results only.
    """
    scores = edge_score(lags, alpha)
    count = 1
    for axis in sorted(sample_axes, reverse=True):
        count *= ad.value_of(scores).shape[axis]
        scores = ad.sum_(scores, axis=axis)
    c = ad.value_of(scores).shape[-1]
    matrix = ad.mul(scores, (1.0 - np.eye(c)) / count)
    if symmetrize:
        if ad.value_of(matrix).ndim != 2:
            raise ShapeError("Only a single adjacency can be symmetrized")
        matrix = ad.mul(ad.add(matrix, ad.transpose(matrix)), 0.5)
    return matrix


def adjacency_from_last_events(
    last: ad.Tensor, alpha: ad.Tensor, symmetrize: bool = True
) -> ad.Tensor:
    """Average edge scores of last-event lags over samples and grid points.

    Args:
        last: Last-event times ``(S, C, M)`` or ``(C, M)``.
        alpha: Edge decay rate.
        symmetrize: Replace ``A`` by ``(A + A^T) / 2``.

    Returns:
        ``(C, C)`` matrix with zero diagonal.
    """
    v = ad.value_of(last)
    if v.ndim == 2:
        last = ad.reshape(last, (1, *v.shape))
        v = ad.value_of(last)
    s, c, m = v.shape
    lags = ad.sub(ad.reshape(last, (s, c, 1, m)), ad.reshape(last, (s, 1, c, m)))
    return adjacency_from_lags(lags, alpha, sample_axes=(0, 3), symmetrize=symmetrize)


def build_adjacency(
    samples: Sequence[EventRealization],
    grid: Array,
    alpha: float,
    symmetrize: bool = True,
    *,
    seed: int | None = None,
) -> Adjacency:
    """Event-lag adjacency averaged over realizations and a time grid.

    Raises:
        ShapeError: If realizations disagree on the channel count.
    """
    if not samples:
        raise ValueError("build_adjacency needs at least one realization")
    if len(grid) < 1:
        raise ValueError("build_adjacency needs at least one grid point")
    channels = {r.n_channels for r in samples}
    if len(channels) != 1:
        raise ShapeError(
            f"Realizations disagree on channel count: {sorted(channels)}",
            details={"channels": sorted(channels)},
        )
    g = np.asarray(grid, dtype=np.float64)
    last = np.stack(
        [np.stack([last_event_before(ch, g) for ch in r.times]) for r in samples]
    )
    lags = last[:, :, None, :] - last[:, None, :, :]
    scores = np.exp(-alpha * np.abs(lags))
    per_grid = scores.mean(axis=0).transpose(2, 0, 1)
    matrix = np.asarray(adjacency_from_last_events(last, alpha, symmetrize))
    per_grid = per_grid * (1.0 - np.eye(matrix.shape[0]))
    return Adjacency(
        matrix=matrix,
        symmetrized=symmetrize,
        diagonal_zeroed=True,
        provenance=AdjacencyProvenance(
            kind="event_lag",
            alpha=alpha,
            grid_points=int(g.size),
            mc_samples=len(samples),
            seed=seed,
        ),
        per_grid=per_grid,
    )


def trajectory_adjacency_values(
    trajectories: ad.Tensor, gamma: float, mode: TrajectoryKernel = "exp"
) -> ad.Tensor:
    """Adjacency from channel-mean trajectory summaries ``s_c``.

    With ``d = |s_i - s_j|`` the kernels are ``exp(-gamma d)``,
    ``exp(-gamma d^2)`` and ``1 / (1 + gamma d)``.
    """
    v = ad.value_of(trajectories)
    if v.ndim != 2 or v.shape[1] < 1:
        raise ShapeError(f"Trajectories must be (C, L) with L >= 1, got {v.shape}")
    c = v.shape[0]
    summary = ad.mean(trajectories, axis=1)
    diff = ad.sub(ad.reshape(summary, (c, 1)), ad.reshape(summary, (1, c)))
    if mode == "exp":
        kernel = ad.exp(ad.neg(ad.mul(gamma, ad.abs_(diff))))
    elif mode == "gauss":
        kernel = ad.exp(ad.neg(ad.mul(gamma, ad.square(diff))))
    elif mode == "inv1":
        kernel = ad.div(1.0, ad.add(1.0, ad.mul(gamma, ad.abs_(diff))))
    else:
        raise ValueError(f"Unknown trajectory kernel '{mode}'")
    matrix = ad.mul(kernel, 1.0 - np.eye(c))
    return ad.mul(ad.add(matrix, ad.transpose(matrix)), 0.5)


def build_adjacency_from_trajectory(
    trajectories: Array, gamma: float, mode: TrajectoryKernel = "exp"
) -> Adjacency:
    if gamma <= 0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    matrix = np.asarray(trajectory_adjacency_values(trajectories, gamma, mode))
    return Adjacency(
        matrix=matrix,
        symmetrized=True,
        diagonal_zeroed=True,
        provenance=AdjacencyProvenance(kind="trajectory", gamma=gamma, kernel=mode),
    )


def pearson_corr(observations: Array, clamp: float = DEFAULT_CLAMP) -> Array:
    """Channel correlations of a ``(C, T)`` array, clamped inside ``(-1, 1)``.

    Raises:
        DegenerateChannel: If a channel has zero variance.
    """
    x = np.asarray(observations, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] < 2:
        raise ShapeError(f"Observations must be (C, T) with T >= 2, got {x.shape}")
    spread = x.std(axis=1)
    flat = np.flatnonzero(spread == 0)
    if flat.size:
        raise DegenerateChannel(int(flat[0]))
    return np.clip(np.corrcoef(x), -1.0 + clamp, 1.0 - clamp)


def fisher_z_terms(
    adjacency: ad.Tensor,
    observed: Array,
    sigma: ad.Tensor,
    clamp: float = DEFAULT_CLAMP,
) -> ad.Tensor:
    """Per-pair Gaussian negative log-likelihood on the Fisher-z scale, ``(C, C)``.

    Entries on and below the diagonal are zero.
    """
    c = ad.value_of(adjacency).shape[0]
    upper = np.triu(np.ones((c, c)), k=1)
    z_obs = np.arctanh(np.clip(observed, -1.0 + clamp, 1.0 - clamp))
    centered = ad.sub(ad.mul(2.0, adjacency), 1.0)
    z_pred = ad.atanh(ad.clip(centered, -1.0 + clamp, 1.0 - clamp))
    variance = ad.square(sigma)
    nll = ad.add(
        ad.div(ad.square(ad.sub(z_obs, z_pred)), ad.mul(2.0, variance)),
        ad.mul(0.5, ad.log(variance)),
    )
    return ad.mul(nll, upper)


def fisher_z_reg(
    adjacency: Adjacency | ad.Tensor,
    observed: Array,
    sigma: ad.Tensor = 1.0,
    clamp: float = DEFAULT_CLAMP,
) -> ad.Tensor:
    """Sum of :func:`fisher_z_terms` over channel pairs ``i < j``."""
    matrix = adjacency.matrix if isinstance(adjacency, Adjacency) else adjacency
    return ad.sum_(fisher_z_terms(matrix, observed, sigma, clamp))


def realizations_from_samples(samples: EventSamples) -> list[EventRealization]:
    """Event realizations from their JSON form.

    Raises:
        DatasetError: If a channel's times are unordered or leave the window.
    """
    realizations = []
    for s, sample in enumerate(samples.samples):
        try:
            realizations.append(
                EventRealization(
                    times=tuple(np.asarray(ch, dtype=np.float64) for ch in sample),
                    window=samples.window,
                )
            )
        except ValueError as e:
            raise DatasetError(f"Sample {s}: {e}", details={"sample": s}) from e
    return realizations


def sample_prior_realizations(
    rate: float,
    channels: int,
    window: float,
    mc_samples: int,
    rng: Rng,
    *,
    workers: int = 1,
) -> list[EventRealization]:
    """Independent constant-rate renewal channels, one stream per sample and channel."""

    def draw(s: int) -> EventRealization:
        parts = [
            sample_renewal(RateFunction.constant(rate), window, rng.split(s, c))
            for c in range(channels)
        ]
        return EventRealization(
            times=tuple(p.times[0] for p in parts),
            window=window,
            seed=rng.seed,
            stream=(*rng.stream, s),
        )

    return ordered_map(draw, range(mc_samples), workers)


def summarize_graphs(
    observations: Array,
    samples: Sequence[EventRealization],
    *,
    alpha: float,
    grid_points: int,
    gamma: float,
    kernel: TrajectoryKernel = "exp",
    sigma: float = 1.0,
    symmetrize: bool = True,
    clamp: float = DEFAULT_CLAMP,
    seed: int | None = None,
) -> tuple[GraphSummary, Adjacency, Adjacency]:
    """Pearson, event-lag and trajectory graphs of one ``(C, T)`` recording.

    The trajectory graph treats each observation row as a channel
    trajectory. Both model graphs are scored against the Pearson matrix with
    :func:`fisher_z_reg`.

    Raises:
        ShapeError: If the realizations' channel count differs from ``C``.
        DegenerateChannel: If an observation row is constant.
    """
    x = np.asarray(observations, dtype=np.float64)
    observed = pearson_corr(x, clamp)
    window = samples[0].window if samples else 1.0
    grid = np.linspace(0.0, window, grid_points)
    event_lag = build_adjacency(samples, grid, alpha, symmetrize, seed=seed)
    if event_lag.n_channels != x.shape[0]:
        raise ShapeError(
            f"Events have {event_lag.n_channels} channels, observations {x.shape[0]}",
            details={"events": event_lag.n_channels, "observations": x.shape[0]},
        )
    trajectory = build_adjacency_from_trajectory(x, gamma, kernel)
    summary = GraphSummary(
        channels=int(x.shape[0]),
        pearson=observed.tolist(),
        event_lag=event_lag.to_record(),
        trajectory=trajectory.to_record(),
        fisher_z={
            "event_lag": float(fisher_z_reg(event_lag, observed, sigma, clamp)),
            "trajectory": float(fisher_z_reg(trajectory, observed, sigma, clamp)),
        },
    )
    return summary, event_lag, trajectory

"""Negative-ELBO style training objective over a batch of toy records."""

from __future__ import annotations

import logging
import math
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field

import numpy as np
import numpy.typing as npt

from event_dynamics.core.config import GraphConfig, ObjectiveWeights
from event_dynamics.core.dlif_prior import lif_consistency_values, refractory_gate
from event_dynamics.core.epde import rate_proxy_values
from event_dynamics.core.erg import (
    adjacency_from_last_events,
    fisher_z_reg,
    last_event_before,
    last_event_matrix,
    pearson_corr,
    trajectory_adjacency_values,
)
from event_dynamics.core.exceptions import NonFiniteLoss
from event_dynamics.core.ivp_kl import mixture_kl_bound
from event_dynamics.core.melp import (
    LognormalMixture,
    SampleMode,
    mean_match_mu,
    mixture_kl_to_prior,
)
from event_dynamics.core.models import ToyRecord
from event_dynamics.numerics import autodiff as ad
from event_dynamics.numerics.rng import Rng
from event_dynamics.pipeline.model import EventModel, ForwardPass, labels, observations

logger = logging.getLogger(__name__)

Array = npt.NDArray[np.float64]

COMPONENTS = ("ce", "reconstruction", "kl_time", "kl_interval", "lif", "graph")


@dataclass
class ObjectiveResult:
    """Total loss, on the tape when the parameters are, and its unweighted parts."""

    total: ad.Tensor
    components: dict[str, float]
    weights: dict[str, float]
    forward: ForwardPass | None = field(default=None, repr=False)

    @property
    def value(self) -> float:
        return float(ad.value_of(self.total))


def component_weights(weights: ObjectiveWeights) -> dict[str, float]:
    """Multiplier of every logged component in the total."""
    return {
        "ce": 1.0,
        "reconstruction": weights.lambda_aux,
        "kl_time": 1.0,
        "kl_interval": 1.0,
        "lif": weights.lambda_lif,
        "graph": weights.beta,
    }


def cross_entropy(logits: ad.Tensor, targets: npt.NDArray[np.int64]) -> ad.Tensor:
    log_norm = ad.logsumexp(logits, axis=1, keepdims=True)
    picked = ad.gather(logits, targets[:, None])
    return ad.mean(ad.sub(log_norm, picked))


def kl_steps(n_steps: int, count: int) -> npt.NDArray[np.int64]:
    """Evenly spaced step indices, first and last included."""
    steps = np.linspace(0, n_steps - 1, min(count, n_steps)).round()
    return np.unique(steps.astype(np.int64))


def interval_time_kl(
    out: ForwardPass, horizon: float, epsilon: float, ode_steps: int, count: int
) -> ad.Tensor:
    """Mean bounded KL of selected step densities from the renewal prior."""
    mixtures = out.unrolled.mixtures
    picked = [mixtures[i] for i in kl_steps(len(mixtures), count)]
    rows = LognormalMixture(
        ad.concat([m.weights for m in picked], axis=0),
        ad.concat([m.mean_intervals for m in picked], axis=0),
        ad.concat([m.scales for m in picked], axis=0),
    )
    rates = ad.concat([out.prior_rate] * len(picked), axis=0)
    return ad.mean(mixture_kl_bound(rows, rates, horizon, epsilon, ode_steps))


def interval_prior_kl(
    mixtures: LognormalMixture, prior_interval: float, prior_scale: float
) -> ad.Tensor:
    """Mean mixture KL from the configured lognormal prior over intervals.

    The prior has mean ``prior_interval`` and log-scale ``prior_scale`` and is
    shared by every record and step.
    """
    prior_mu = float(mean_match_mu(prior_interval, prior_scale))
    return ad.mean(mixture_kl_to_prior(mixtures, prior_mu, prior_scale))


def gate_profile(event_times: Array, grid: Array, rho: float, floor: float) -> Array:
    """Refractory gate of every row on the grid; one before a row's first event."""
    gates = np.ones((event_times.shape[0], grid.size))
    for r, times in enumerate(event_times):
        last = last_event_before(times, grid)
        has_prev = grid >= times[0]
        if np.any(has_prev):
            gates[r, has_prev] = refractory_gate(
                grid[has_prev], last[has_prev], rho, floor
            )
    return gates


def rate_consistency(
    out: ForwardPass, grid_points: int, rho: float, floor: float
) -> ad.Tensor:
    """Mean squared gap between the rate proxy and the gated prior rate."""
    boundaries = np.asarray(ad.value_of(out.times))
    horizon = float(boundaries[:, -1].max())
    grid = np.linspace(0.0, horizon, grid_points)
    step = float(grid[1] - grid[0])
    proxy = rate_proxy_values(out.step_means, boundaries, grid, step)
    r = boundaries.shape[0]
    gates = gate_profile(boundaries, grid, rho, floor)
    gated = ad.mul(ad.reshape(out.prior_rate, (r, 1)), gates)
    return ad.div(lif_consistency_values(proxy, gated, horizon), r)


def group_adjacency(
    out: ForwardPass, rows: slice, graph: GraphConfig, grid: Array
) -> ad.Tensor:
    """Model adjacency of one channel group, built as ``graph.mode`` says."""
    if graph.mode == "trajectory":
        trajectories = ad.getitem(out.reconstruction, rows)
        return trajectory_adjacency_values(
            trajectories, graph.gamma, graph.trajectory_kernel
        )
    times = ad.getitem(out.times, rows)
    counts = (np.asarray(ad.value_of(times)) <= graph.window).sum(axis=1).tolist()
    last = last_event_matrix(times, counts, grid)
    return adjacency_from_last_events(last, graph.alpha, graph.symmetrize)


def graph_regularizer(
    out: ForwardPass,
    y: Array,
    channels: int,
    graph: GraphConfig,
    sigma: ad.Tensor,
) -> ad.Tensor:
    """Fisher-z mismatch of model graphs over groups of ``channels`` records."""
    groups = y.shape[0] // channels
    grid = np.linspace(0.0, graph.window, graph.grid_points)
    total: ad.Tensor = 0.0
    for g in range(groups):
        rows = slice(g * channels, (g + 1) * channels)
        adjacency = group_adjacency(out, rows, graph, grid)
        observed = pearson_corr(y[rows], graph.clamp)
        total = ad.add(total, fisher_z_reg(adjacency, observed, sigma, graph.clamp))
    return ad.div(total, max(groups, 1))


def objective(
    batch: Sequence[ToyRecord],
    model: EventModel,
    params: Mapping[str, ad.Tensor],
    weights: ObjectiveWeights,
    rng: Rng,
    *,
    mode: SampleMode = SampleMode.RELAXED,
    temperature: float = 0.5,
) -> ObjectiveResult:
    """Weighted sum of the classifier, reconstruction, KL, rate and graph terms.

    The graph term needs at least ``channels_per_group`` records and is only
    built in multichannel mode.

    Raises:
        ValueError: If the batch is empty.
        NonFiniteLoss: If any component is NaN or infinite.
    """
    if not batch:
        raise ValueError("objective needs a nonempty batch")
    config = model.config
    y = observations(batch)
    out = model.forward(batch, params, rng, mode, temperature)

    terms: dict[str, ad.Tensor] = {
        "ce": cross_entropy(out.logits, labels(batch)),
        "reconstruction": ad.mean(ad.square(ad.sub(out.reconstruction, y))),
        "kl_time": interval_time_kl(
            out,
            config.kl.horizon,
            config.kl.epsilon,
            config.kl.train_ode_steps,
            config.train.kl_steps,
        ),
        "kl_interval": interval_prior_kl(
            out.mixtures, config.mixture.prior_interval, config.mixture.prior_scale
        ),
        "lif": rate_consistency(
            out,
            config.train.rate_grid,
            config.prior.refractory_tau,
            config.prior.gate_floor,
        ),
        "graph": 0.0,
    }
    channels = config.train.channels_per_group
    sigma = model.graph_sigma(params)
    if config.train.multichannel and len(batch) >= channels:
        terms["graph"] = graph_regularizer(out, y, channels, config.graph, sigma)

    multipliers = component_weights(weights)
    components = {}
    total: ad.Tensor = 0.0
    for name in COMPONENTS:
        value = float(ad.value_of(terms[name]))
        if not math.isfinite(value):
            raise NonFiniteLoss(name)
        components[name] = value
        if multipliers[name] != 0.0:
            total = ad.add(total, ad.mul(multipliers[name], terms[name]))
    return ObjectiveResult(
        total=total, components=components, weights=multipliers, forward=out
    )

"""Next-event surrogate, event unrolling and the Euler trajectory head."""

from __future__ import annotations

import logging
import math
from collections.abc import Callable, Mapping
from dataclasses import dataclass, field, replace

import numpy as np
import numpy.typing as npt

from event_dynamics.core.dlif_prior import RateFunction
from event_dynamics.core.events import EventRealization
from event_dynamics.core.exceptions import (
    DegenerateRate,
    DomainError,
    NonFiniteState,
    ShapeError,
)
from event_dynamics.core.melp import (
    IntervalTrace,
    LognormalMixture,
    SampleMode,
    mixture_mean,
    sample_interval,
)
from event_dynamics.numerics import autodiff as ad
from event_dynamics.numerics.quadrature import quad_adaptive
from event_dynamics.numerics.rng import Rng

logger = logging.getLogger(__name__)

Array = npt.NDArray[np.float64]

DEGENERATE_MEAN_INTERVAL = 1e-4

_ARRAY_FIELDS = (
    "surrogate_w1",
    "surrogate_b1",
    "surrogate_w2",
    "surrogate_b2",
    "proj_w",
    "proj_b",
    "field_w",
    "field_b",
    "decode_w",
    "decode_b",
)


def inverse_softplus(y: float) -> float:
    """``x`` with ``softplus(x) = y`` for ``y > 0``."""
    if y <= 0:
        raise DomainError(f"inverse_softplus needs y > 0, got {y}")
    return y + math.log(-math.expm1(-y))


@dataclass(frozen=True)
class EpdeParams:
    """Weights of the next-event surrogate and of the Euler trajectory head.

    The surrogate maps ``[prev_t, features]`` through one tanh layer to
    ``3K`` outputs: interval pre-activations, weight logits and scale
    pre-activations. The head projects features to a state, integrates
    ``y' = tanh(y W_f + b_f) + alpha_ode * y`` by explicit Euler and decodes
    the final state linearly. Array fields hold plain arrays or tape nodes.
    """

    surrogate_w1: ad.Tensor
    surrogate_b1: ad.Tensor
    surrogate_w2: ad.Tensor
    surrogate_b2: ad.Tensor
    proj_w: ad.Tensor
    proj_b: ad.Tensor
    field_w: ad.Tensor
    field_b: ad.Tensor
    decode_w: ad.Tensor
    decode_b: ad.Tensor
    alpha_ode: float = 0.1
    substeps: int = 8
    interval_floor: float = 1e-4
    scale_floor: float = 0.01

    def __post_init__(self) -> None:
        if self.substeps < 1:
            raise ValueError(f"substeps must be >= 1, got {self.substeps}")
        w2 = ad.value_of(self.surrogate_w2)
        if w2.ndim != 2 or w2.shape[1] % 3:
            raise ShapeError(f"surrogate_w2 must be (hidden, 3K), got {w2.shape}")

    @classmethod
    def init(
        cls,
        rng: Rng,
        *,
        feature_dim: int,
        n_components: int,
        hidden: int,
        state_dim: int,
        output_dim: int,
        init_scale: float = 0.1,
        prior_interval: float = 0.08,
        prior_scale: float = 0.5,
        **settings: float | int,
    ) -> EpdeParams:
        """Random weights with interval outputs centred on ``prior_interval``."""
        k = n_components
        floor = float(settings.get("interval_floor", 1e-4))
        scale_floor = float(settings.get("scale_floor", 0.01))
        b2 = np.zeros(3 * k)
        b2[:k] = inverse_softplus(prior_interval - floor)
        b2[2 * k :] = inverse_softplus(prior_scale - scale_floor)
        # Spread the components so they do not stay interchangeable.
        b2[:k] += np.linspace(-0.5, 0.5, k) if k > 1 else 0.0
        return cls(
            surrogate_w1=init_scale * rng.normal(size=(feature_dim + 1, hidden)),
            surrogate_b1=np.zeros(hidden),
            surrogate_w2=init_scale * rng.normal(size=(hidden, 3 * k)),
            surrogate_b2=b2,
            proj_w=init_scale * rng.normal(size=(feature_dim, state_dim)),
            proj_b=np.zeros(state_dim),
            field_w=init_scale * rng.normal(size=(state_dim, state_dim)),
            field_b=np.zeros(state_dim),
            decode_w=init_scale * rng.normal(size=(state_dim, output_dim)),
            decode_b=np.zeros(output_dim),
            **settings,  # type: ignore[arg-type]
        )

    @classmethod
    def zeros(
        cls,
        *,
        feature_dim: int,
        n_components: int,
        hidden: int,
        state_dim: int,
        output_dim: int,
        **settings: float | int,
    ) -> EpdeParams:
        return cls(
            surrogate_w1=np.zeros((feature_dim + 1, hidden)),
            surrogate_b1=np.zeros(hidden),
            surrogate_w2=np.zeros((hidden, 3 * n_components)),
            surrogate_b2=np.zeros(3 * n_components),
            proj_w=np.zeros((feature_dim, state_dim)),
            proj_b=np.zeros(state_dim),
            field_w=np.zeros((state_dim, state_dim)),
            field_b=np.zeros(state_dim),
            decode_w=np.zeros((state_dim, output_dim)),
            decode_b=np.zeros(output_dim),
            **settings,  # type: ignore[arg-type]
        )

    @property
    def feature_dim(self) -> int:
        return int(ad.value_of(self.surrogate_w1).shape[0]) - 1

    @property
    def n_components(self) -> int:
        return int(ad.value_of(self.surrogate_w2).shape[1]) // 3

    def arrays(self) -> dict[str, ad.Tensor]:
        return {name: getattr(self, name) for name in _ARRAY_FIELDS}

    def with_arrays(self, arrays: Mapping[str, ad.Tensor]) -> EpdeParams:
        return replace(self, **{k: v for k, v in arrays.items() if k in _ARRAY_FIELDS})


def _as_rows(x: ad.Tensor, width: int) -> tuple[ad.Tensor, bool]:
    v = ad.value_of(x)
    if v.shape[-1] != width:
        raise ShapeError(
            f"Feature dimension {v.shape[-1]} does not match expected {width}",
            details={"expected": width, "got": v.shape[-1]},
        )
    if v.ndim == 1:
        return ad.reshape(x, (1, width)), True
    return x, False


def next_event_params(
    prev_t: ad.Tensor, features: ad.Tensor, params: EpdeParams
) -> LognormalMixture:
    """Mixture over the next interval given the previous event time.

    ``features`` is ``(F,)`` or a batch ``(R, F)`` with ``prev_t`` of shape
    ``()`` or ``(R,)`` to match.

    Raises:
        ShapeError: If the feature width does not match the surrogate.
    """
    rows, single = _as_rows(features, params.feature_dim)
    n = ad.value_of(rows).shape[0]
    prev_col = ad.reshape(ad.mul(prev_t, np.ones(n)), (n, 1))
    x = ad.concat([prev_col, rows], axis=1)
    hidden = ad.tanh(ad.add(ad.matmul(x, params.surrogate_w1), params.surrogate_b1))
    raw = ad.add(ad.matmul(hidden, params.surrogate_w2), params.surrogate_b2)
    k = params.n_components
    intervals = ad.add(
        ad.softplus(ad.getitem(raw, (slice(None), slice(0, k)))),
        params.interval_floor,
    )
    weights = ad.softmax(ad.getitem(raw, (slice(None), slice(k, 2 * k))), axis=1)
    scales = ad.add(
        ad.softplus(ad.getitem(raw, (slice(None), slice(2 * k, 3 * k)))),
        params.scale_floor,
    )
    if single:
        return LognormalMixture(
            ad.reshape(weights, (k,)),
            ad.reshape(intervals, (k,)),
            ad.reshape(scales, (k,)),
        )
    return LognormalMixture(weights, intervals, scales)


@dataclass
class UnrolledEvents:
    """Result of :func:`unroll_events`.

    Attributes:
        realization: Event times inside the window, one channel per row.
        mixtures: Per-step mixtures, batched over channels.
        times: Per-step event times as tensors of shape ``(C,)``.
        traces: Per-step sampling traces.
    """

    realization: EventRealization
    mixtures: list[LognormalMixture] = field(default_factory=list)
    times: list[ad.Tensor] = field(default_factory=list)
    traces: list[IntervalTrace] = field(default_factory=list)

    def stacked_times(self) -> ad.Tensor:
        """Event times as a ``(C, steps)`` tensor."""
        return ad.concat([ad.reshape(t, (-1, 1)) for t in self.times], axis=1)

    def stacked_means(self) -> ad.Tensor:
        """Mixture means as a ``(C, steps)`` tensor."""
        return ad.concat(
            [ad.reshape(mixture_mean(m), (-1, 1)) for m in self.mixtures], axis=1
        )


def _step_features(features: ad.Tensor, step: int) -> ad.Tensor:
    v = ad.value_of(features)
    if v.ndim == 3:
        return ad.getitem(features, min(step, v.shape[0] - 1))
    return features


def unroll_events(
    features: ad.Tensor,
    window: float,
    params: EpdeParams,
    rng: Rng,
    mode: SampleMode = SampleMode.HARD,
    *,
    temperature: float = 0.5,
    max_events: int = 256,
) -> UnrolledEvents:
    """Advance ``t_i = t_{i-1} + tau_i`` from zero until the window is left.

    ``features`` is ``(C, F)`` shared by every step, or ``(steps, C, F)``
    with step ``i`` reading row ``min(i, steps - 1)``. A single channel may
    also pass ``(F,)``. Channels stop contributing events once they leave the
    window; unrolling ends when all have left or ``max_events`` is reached.

    Raises:
        DegenerateRate: If the cap is reached inside the window while the
            predicted mean interval has collapsed to the floor.
    """
    if not window > 0:
        raise ValueError(f"window must be positive, got {window}")
    v = ad.value_of(features)
    if v.ndim == 1:
        features = ad.reshape(features, (1, v.shape[0]))
    n_channels = ad.value_of(_step_features(features, 0)).shape[0]

    t: ad.Tensor = np.zeros(n_channels)
    active = np.ones(n_channels, dtype=bool)
    kept: list[list[float]] = [[] for _ in range(n_channels)]
    traces: list[list[LognormalMixture]] = [[] for _ in range(n_channels)]
    result = UnrolledEvents(realization=EventRealization(times=(), window=window))

    for step in range(max_events):
        mix = next_event_params(t, _step_features(features, step), params)
        tau, trace = sample_interval(mix, rng.split(step), mode, temperature)
        t = ad.add(t, tau)
        result.mixtures.append(mix)
        result.times.append(t)
        result.traces.append(trace)
        values = ad.value_of(t)
        detached = mix.detach()
        active &= values <= window
        if not np.any(active):
            break
        for c in np.flatnonzero(active):
            kept[c].append(float(values[c]))
            traces[c].append(detached.row(int(c)))
    else:
        means = ad.value_of(mixture_mean(result.mixtures[-1]))
        collapsed = active & (means <= DEGENERATE_MEAN_INTERVAL)
        if np.any(collapsed):
            raise DegenerateRate(
                f"Reached {max_events} events with mean interval "
                f"{float(means[collapsed].min()):.2e} s",
                details={"max_events": max_events},
            )
        logger.debug(f"unroll_events stopped at the cap of {max_events} events")

    result.realization = EventRealization(
        times=tuple(np.asarray(k, dtype=np.float64) for k in kept),
        window=window,
        seed=rng.seed,
        stream=rng.stream,
        traces=tuple(traces),
    )
    return result


def evolve_ode(
    features: ad.Tensor,
    t_start: ad.Tensor,
    t_end: ad.Tensor,
    params: EpdeParams,
) -> ad.Tensor:
    """Explicit-Euler evolution of the projected features, then decode.

    ``y_{m+1} = y_m + dt * (tanh(y_m W_f + b_f) + alpha_ode * y_m)`` with
    ``dt = (t_end - t_start) / substeps``. Batched over leading feature rows.

    Raises:
        DomainError: If ``t_end <= t_start`` for any row.
        NonFiniteState: If the state becomes NaN or infinite.
    """
    rows, single = _as_rows(features, ad.value_of(params.proj_w).shape[0])
    span = ad.sub(t_end, t_start)
    if np.any(ad.value_of(span) <= 0):
        raise DomainError(
            "evolve_ode needs t_end > t_start", details={"op": "evolve_ode"}
        )
    n = ad.value_of(rows).shape[0]
    dt = ad.reshape(ad.mul(ad.div(span, params.substeps), np.ones(n)), (n, 1))

    y = ad.add(ad.matmul(rows, params.proj_w), params.proj_b)
    for step in range(params.substeps):
        drift = ad.add(
            ad.tanh(ad.add(ad.matmul(y, params.field_w), params.field_b)),
            ad.mul(params.alpha_ode, y),
        )
        y = ad.add(y, ad.mul(dt, drift))
        if not np.all(np.isfinite(ad.value_of(y))):
            raise NonFiniteState(
                f"Euler state is not finite after substep {step + 1}",
                details={"substep": step + 1},
            )
    out = ad.add(ad.matmul(y, params.decode_w), params.decode_b)
    if single:
        return ad.reshape(out, (ad.value_of(out).shape[1],))
    return out


def _ramp_indices(
    boundaries: Array, grid: Array, half_width: float
) -> tuple[npt.NDArray[np.int64], npt.NDArray[np.int64], Array]:
    """Step indices and blend fractions for a piecewise-constant profile.

    ``boundaries[r, i]`` is where step ``i`` of row ``r`` ends. Within
    ``half_width`` of an interior boundary the value ramps linearly between
    the neighbouring steps.
    """
    n_rows, n_steps = boundaries.shape
    inner = boundaries[:, :-1]
    t = np.broadcast_to(grid, (n_rows, grid.size))
    step = np.minimum((t[:, :, None] >= inner[:, None, :]).sum(axis=2), n_steps - 1)
    lo = step.copy()
    hi = step.copy()
    frac = np.zeros_like(t)
    if n_steps > 1 and half_width > 0:
        rows = np.arange(n_rows)[:, None]
        left = np.where(step >= 1, inner[rows, np.maximum(step - 1, 0)], -np.inf)
        right = np.where(
            step < n_steps - 1, inner[rows, np.minimum(step, n_steps - 2)], np.inf
        )
        near_left = t - left < half_width
        near_right = (right - t < half_width) & ~near_left
        lo = np.where(near_left, step - 1, lo)
        frac = np.where(near_left, 0.5 + (t - left) / (2 * half_width), frac)
        hi = np.where(near_right, step + 1, hi)
        frac = np.where(near_right, 0.5 - (right - t) / (2 * half_width), frac)
    return lo.astype(np.int64), hi.astype(np.int64), frac


def rate_proxy_values(
    step_means: ad.Tensor, boundaries: Array, grid: Array, ramp: float
) -> ad.Tensor:
    """Reciprocal step means read off a time grid, shape ``(R, G)``.

    Args:
        step_means: Mixture means per step, ``(R, steps)``, positive.
        boundaries: Cumulative step ends per row, ``(R, steps)``, treated
            as constants.
        grid: Evaluation times ``(G,)``.
        ramp: Width of the linear blend centred on each interior boundary.
    """
    rates = ad.div(1.0, step_means)
    b = np.asarray(boundaries, dtype=np.float64)
    if b.ndim != 2 or b.shape != ad.value_of(step_means).shape:
        raise ShapeError(f"boundaries {b.shape} must match step means")
    gaps = np.diff(np.concatenate([np.zeros((b.shape[0], 1)), b], axis=1), axis=1)
    half = min(0.5 * ramp, 0.5 * float(gaps.min())) if gaps.size else 0.0
    lo, hi, frac = _ramp_indices(b, np.asarray(grid, dtype=np.float64), half)
    return ad.add(
        ad.mul(ad.gather(rates, lo), 1.0 - frac), ad.mul(ad.gather(rates, hi), frac)
    )


def rate_proxy(mixtures: list[LognormalMixture], grid: Array) -> RateFunction:
    """Rate ``1 / E[tau]`` of whichever step is active, ramped at boundaries.

    Step ``i`` is active between the cumulative sums of the preceding
    mixture means. The ramp width is the grid spacing.
    """
    if not mixtures:
        raise ValueError("rate_proxy needs at least one step")
    means = np.array([float(ad.value_of(mixture_mean(m.detach()))) for m in mixtures])
    bounds = np.cumsum(means)
    g = np.asarray(grid, dtype=np.float64)
    ramp = float(g[1] - g[0]) if g.size > 1 else 0.0
    rates = 1.0 / means

    def evaluate(t: Array) -> Array:
        flat = np.atleast_1d(t).reshape(-1)
        out = rate_proxy_values(means[None, :], bounds[None, :], flat, ramp)
        return np.asarray(out, dtype=np.float64).reshape(np.shape(t))

    return RateFunction(evaluate, float(rates.min()), float(rates.max()), kind="proxy")


def soft_event_count(
    times: ad.Tensor, window: float, sharpness: float = 0.05
) -> ad.Tensor:
    """Smooth in-window count ``sum_i sigmoid((window - t_i) / sharpness)``."""
    return ad.sum_(ad.sigmoid(ad.div(ad.sub(window, times), sharpness)))


def expected_event_functional(
    q: Callable[[Array], Array], t: float, upper: float, tol: float = 1e-10
) -> float:
    """``Phi(t) = int_t^upper u q(u) du``, the expectation carried from ``t`` on."""
    return quad_adaptive(lambda u: u * q(u), t, upper, tol, vectorized=True)


def phi_ode_residual(
    q: Callable[[Array], Array], t: float, upper: float, h: float = 1e-4
) -> float:
    """Central-difference residual of ``Phi'(t) = -t q(t)``."""
    slope = (
        expected_event_functional(q, t + h, upper)
        - expected_event_functional(q, t - h, upper)
    ) / (2 * h)
    return slope + t * float(q(np.asarray(t)))


def phi_boundary_value(q: Callable[[Array], Array], upper: float) -> float:
    """``Phi(0)``, which equals the mean of ``q`` on ``[0, upper]``."""
    return expected_event_functional(q, 0.0, upper)

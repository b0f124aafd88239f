"""Adam with global gradient-norm clipping and a plateau learning-rate schedule."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
import numpy.typing as npt

from event_dynamics.core.exceptions import NonFiniteGradient, ShapeError

Array = npt.NDArray[np.float64]
Params = dict[str, Array]


@dataclass(frozen=True)
class AdamState:
    """Moment buffers and hyperparameters for :func:`adam_step`."""

    learning_rate: float = 5e-4
    weight_decay: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    first_moment: Params = field(default_factory=dict)
    second_moment: Params = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.learning_rate <= 0:
            raise ValueError(
                f"learning_rate must be positive, got {self.learning_rate}"
            )
        if self.weight_decay < 0:
            raise ValueError(f"weight_decay must be >= 0, got {self.weight_decay}")
        if self.step < 0:
            raise ValueError(f"step must be >= 0, got {self.step}")

    @classmethod
    def for_params(
        cls, params: Params, learning_rate: float = 5e-4, weight_decay: float = 1e-4
    ) -> AdamState:
        """Fresh state with zeroed buffers shaped like ``params``."""
        return cls(
            learning_rate=learning_rate,
            weight_decay=weight_decay,
            first_moment={k: np.zeros_like(v) for k, v in params.items()},
            second_moment={k: np.zeros_like(v) for k, v in params.items()},
        )

    def with_learning_rate(self, learning_rate: float) -> AdamState:
        return replace(self, learning_rate=learning_rate)


def global_norm(grads: Params) -> float:
    return math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))


def clip_by_global_norm(grads: Params, clip_norm: float) -> tuple[Params, float]:
    """Rescale ``grads`` so their joint L2 norm is at most ``clip_norm``.

    Returns:
        Tuple of (clipped gradients, norm before clipping).
    """
    if clip_norm <= 0:
        raise ValueError(f"clip_norm must be positive, got {clip_norm}")
    norm = global_norm(grads)
    if norm <= clip_norm:
        return grads, norm
    scale = clip_norm / norm
    return {k: g * scale for k, g in grads.items()}, norm


def adam_step(
    params: Params, grads: Params, state: AdamState, clip_norm: float
) -> tuple[Params, AdamState]:
    """One bias-corrected Adam update after global-norm clipping.

    Weight decay is applied as an L2 term added to the clipped gradient.

    Raises:
        ShapeError: If a gradient is missing or shaped unlike its parameter.
        NonFiniteGradient: If any gradient entry is NaN or infinite.
    """
    for name, value in params.items():
        if name not in grads or grads[name].shape != value.shape:
            raise ShapeError(
                f"Gradient for '{name}' is missing or misshapen",
                details={"parameter": name},
            )
        if not np.all(np.isfinite(grads[name])):
            raise NonFiniteGradient(name)

    clipped, _ = clip_by_global_norm({k: grads[k] for k in params}, clip_norm)
    step = state.step + 1
    b1, b2 = state.beta1, state.beta2

    new_params: Params = {}
    first: Params = {}
    second: Params = {}
    for name, value in params.items():
        g = clipped[name] + state.weight_decay * value
        m = b1 * state.first_moment.get(name, np.zeros_like(value)) + (1 - b1) * g
        v = b2 * state.second_moment.get(name, np.zeros_like(value)) + (1 - b2) * g * g
        m_hat = m / (1 - b1**step)
        v_hat = v / (1 - b2**step)
        update = m_hat / (np.sqrt(v_hat) + state.eps)
        new_params[name] = value - state.learning_rate * update
        first[name] = m
        second[name] = v

    return new_params, replace(
        state, step=step, first_moment=first, second_moment=second
    )


class PlateauScheduler:
    """Multiply the learning rate by ``factor`` after ``patience`` flat epochs."""

    def __init__(self, patience: int = 15, factor: float = 0.5) -> None:
        self.patience = patience
        self.factor = factor
        self.best: float | None = None
        self.stale_epochs = 0

    def step(self, metric: float, learning_rate: float) -> float:
        """Record a validation metric (higher is better); return the next rate."""
        if self.best is None or metric > self.best:
            self.best = metric
            self.stale_epochs = 0
            return learning_rate
        self.stale_epochs += 1
        if self.stale_epochs >= self.patience:
            self.stale_epochs = 0
            return learning_rate * self.factor
        return learning_rate

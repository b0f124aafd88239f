"""Fixed-step Runge-Kutta integration."""

from __future__ import annotations

import math
from collections.abc import Callable

import numpy as np
import numpy.typing as npt

from event_dynamics.core.exceptions import NonFiniteVectorField

Array = npt.NDArray[np.float64]


def _checked(value: float, t: float) -> float:
    if not math.isfinite(value):
        raise NonFiniteVectorField(
            f"Vector field is not finite at t={t!r}", details={"t": t}
        )
    return value


def rk4_integrate(
    field: Callable[[float, float], float],
    y0: float,
    t0: float,
    t1: float,
    steps: int,
) -> float:
    """Integrate ``y' = field(t, y)`` from ``t0`` to ``t1`` with classic RK4.

    Raises:
        NonFiniteVectorField: If any stage evaluation is not finite.
    """
    if steps < 1:
        raise ValueError(f"steps must be >= 1, got {steps}")
    if not t0 < t1:
        raise ValueError(f"Expected t0 < t1, got t0={t0}, t1={t1}")

    h = (t1 - t0) / steps
    y = y0
    for k in range(steps):
        t = t0 + k * h
        k1 = _checked(field(t, y), t)
        k2 = _checked(field(t + 0.5 * h, y + 0.5 * h * k1), t + 0.5 * h)
        k3 = _checked(field(t + 0.5 * h, y + 0.5 * h * k2), t + 0.5 * h)
        k4 = _checked(field(t + h, y + h * k3), t + h)
        y = y + h * (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0
    return y


def ode_solve_scalar(
    g: Callable[[float], float], m0: float, m1: float, steps: int
) -> float:
    """Return G(m1) for G' = g(m), G(m0) = 0, by fixed-step RK4."""
    return rk4_integrate(lambda m, _: g(m), 0.0, m0, m1, steps)


def rk4_quadrature_rule(m0: float, m1: float, steps: int) -> tuple[Array, Array]:
    """Nodes and weights reproducing RK4 for a state-independent field.

    When the right-hand side depends on ``m`` only, the two midpoint stages
    coincide and each RK4 step reduces to Simpson's rule, so
    ``sum(weights * g(nodes))`` equals ``ode_solve_scalar(g, m0, m1, steps)``
    while letting ``g`` be evaluated on all nodes at once.
    """
    if steps < 1:
        raise ValueError(f"steps must be >= 1, got {steps}")
    h = (m1 - m0) / steps
    nodes = m0 + 0.5 * h * np.arange(2 * steps + 1, dtype=np.float64)
    nodes[-1] = m1
    weights = np.empty(2 * steps + 1, dtype=np.float64)
    weights[0::2] = h / 3.0
    weights[1::2] = 2.0 * h / 3.0
    weights[0] = weights[-1] = h / 6.0
    return nodes, weights

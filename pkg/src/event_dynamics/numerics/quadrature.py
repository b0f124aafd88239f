"""Adaptive Gauss-Kronrod quadrature."""

from __future__ import annotations

import heapq
import logging
import math
from collections.abc import Callable

import numpy as np
import numpy.typing as npt

from event_dynamics.core.exceptions import NonFiniteIntegrand, ToleranceNotMet

logger = logging.getLogger(__name__)

MAX_INTERVALS = 2**16

# Positive half of the 15-point Kronrod rule, outermost node first.
_KRONROD_NODES = np.array(
    [
        0.991455371120812639206854697526329,
        0.949107912342758524526189684047851,
        0.864864423359769072789712788640926,
        0.741531185599394439863864773280788,
        0.586087235467691130294144845693013,
        0.405845151377397166906606412076961,
        0.207784955007898467600689403773245,
    ]
)
_KRONROD_WEIGHTS = np.array(
    [
        0.022935322010529224963732008058970,
        0.063092092629978553290700663189204,
        0.104790010322250183839876322541518,
        0.140653259715525918745189590510238,
        0.169004726639267902826583426598550,
        0.190350578064785409913256402421014,
        0.204432940075298892414161999234649,
    ]
)
_KRONROD_CENTER_WEIGHT = 0.209482141084727828012999174891714
# The embedded 7-point Gauss rule lives on every other Kronrod node.
_GAUSS_WEIGHTS = np.array(
    [
        0.0,
        0.129484966168869693270611432679082,
        0.0,
        0.279705391489276667901467771423780,
        0.0,
        0.381830050505118944950369775488975,
        0.0,
    ]
)
_GAUSS_CENTER_WEIGHT = 0.417959183673469387755102040816327

NODES = np.concatenate([-_KRONROD_NODES, [0.0], _KRONROD_NODES[::-1]])
KRONROD_WEIGHTS = np.concatenate(
    [_KRONROD_WEIGHTS, [_KRONROD_CENTER_WEIGHT], _KRONROD_WEIGHTS[::-1]]
)
GAUSS_WEIGHTS = np.concatenate(
    [_GAUSS_WEIGHTS, [_GAUSS_CENTER_WEIGHT], _GAUSS_WEIGHTS[::-1]]
)

Integrand = Callable[..., object]


def _evaluate(
    f: Integrand, x: npt.NDArray[np.float64], vectorized: bool
) -> npt.NDArray[np.float64]:
    if vectorized:
        values = np.asarray(f(x), dtype=np.float64)
    else:
        values = np.array([float(f(float(xi))) for xi in x])  # type: ignore[arg-type]
    if not np.all(np.isfinite(values)):
        bad = float(x[~np.isfinite(values)][0])
        raise NonFiniteIntegrand(
            f"Integrand is not finite at x={bad!r}", details={"x": bad}
        )
    return values


def gauss_kronrod_15(
    f: Integrand, a: float, b: float, *, vectorized: bool = False
) -> tuple[float, float]:
    """Apply the G7-K15 pair on ``[a, b]``.

    Returns:
        Tuple of (Kronrod estimate, absolute Gauss-Kronrod difference).
    """
    center = 0.5 * (a + b)
    half = 0.5 * (b - a)
    values = _evaluate(f, center + half * NODES, vectorized)
    kronrod = half * float(KRONROD_WEIGHTS @ values)
    gauss = half * float(GAUSS_WEIGHTS @ values)
    return kronrod, abs(kronrod - gauss)


def quad_adaptive(
    f: Integrand,
    a: float,
    b: float,
    tol: float,
    *,
    max_intervals: int = MAX_INTERVALS,
    vectorized: bool = False,
) -> float:
    """Integrate ``f`` over ``[a, b]`` to an absolute error estimate of ``tol``.

    The interval with the largest error estimate is halved until the summed
    estimate falls below ``tol``.

    Args:
        f: Integrand. Scalar in, scalar out unless ``vectorized``.
        a: Lower limit.
        b: Upper limit, ``b >= a``.
        tol: Absolute tolerance, positive.
        max_intervals: Subdivision cap.
        vectorized: Evaluate ``f`` on whole node arrays at once.

    Returns:
        The integral estimate.

    Raises:
        NonFiniteIntegrand: If ``f`` returns NaN or infinity.
        ToleranceNotMet: If the cap is reached before ``tol``.
    """
    if tol <= 0:
        raise ValueError(f"Tolerance must be positive, got {tol}")
    if b < a:
        raise ValueError(f"Expected a <= b, got a={a}, b={b}")
    if a == b:
        return 0.0

    value, error = gauss_kronrod_15(f, a, b, vectorized=vectorized)
    heap: list[tuple[float, float, float, float]] = [(-error, a, b, value)]
    total_error = error
    n_intervals = 1

    while total_error > tol:
        if n_intervals >= max_intervals:
            raise ToleranceNotMet(
                f"Quadrature on [{a}, {b}] stopped at {n_intervals} intervals "
                f"with error estimate {total_error:.3e} > {tol:.3e}",
                details={"intervals": n_intervals, "error": total_error},
            )
        neg_err, lo, hi, _ = heapq.heappop(heap)
        mid = 0.5 * (lo + hi)
        if not lo < mid < hi:
            raise ToleranceNotMet(
                f"Interval [{lo}, {hi}] cannot be split further",
                details={"intervals": n_intervals, "error": total_error},
            )
        left, left_err = gauss_kronrod_15(f, lo, mid, vectorized=vectorized)
        right, right_err = gauss_kronrod_15(f, mid, hi, vectorized=vectorized)
        heapq.heappush(heap, (-left_err, lo, mid, left))
        heapq.heappush(heap, (-right_err, mid, hi, right))
        total_error += left_err + right_err + neg_err
        n_intervals += 1
        if total_error <= tol:
            # Incremental sums drift; confirm against a fresh total.
            total_error = math.fsum(-item[0] for item in heap)

    logger.debug(f"quad_adaptive on [{a}, {b}] used {n_intervals} intervals")
    return math.fsum(item[3] for item in heap)

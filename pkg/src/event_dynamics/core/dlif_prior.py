"""Differentiable leaky integrate-and-fire renewal prior.

A membrane drive ``b > 1`` implies the firing rate ``r = 1 / -log(1 - 1/b)``.
The rate acts as the hazard of a renewal process whose clock restarts at
every event, optionally damped by a refractory gate right after an event.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Callable
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import numpy.typing as npt
from scipy import integrate

from event_dynamics.core.events import EventRealization
from event_dynamics.core.exceptions import DomainError, InvalidDrive, UnboundedRate
from event_dynamics.numerics import autodiff as ad
from event_dynamics.numerics.quadrature import quad_adaptive
from event_dynamics.numerics.rng import Rng

logger = logging.getLogger(__name__)

Array = npt.NDArray[np.float64]
Evaluator = Callable[[Array], Array]

DEFAULT_GATE_FLOOR = 1e-6
_THINNING_BLOCK = 4096


def drive_to_rate(b: ad.Tensor) -> ad.Tensor:
    """Firing rate implied by a drive, ``[-log(1 - 1/b)]^-1``.

    Works on floats, arrays and tape nodes.

    Raises:
        InvalidDrive: If any drive is not strictly greater than one.
    """
    vb = ad.value_of(b)
    bad = ~(vb > 1.0)
    if np.any(bad):
        raise InvalidDrive(float(vb[bad].reshape(-1)[0]))
    if ad.is_node(b):
        return ad.div(1.0, ad.log(ad.div(b, ad.sub(b, 1.0))))
    return 1.0 / -np.log1p(-1.0 / vb)


def rate_to_drive(r: ad.Tensor) -> ad.Tensor:
    """Inverse of :func:`drive_to_rate`, ``1 / (1 - exp(-1/r))``."""
    vr = ad.value_of(r)
    if np.any(~(vr > 0.0)):
        raise DomainError(
            "rate_to_drive requires positive rates", details={"op": "rate_to_drive"}
        )
    if ad.is_node(r):
        return ad.div(1.0, ad.sub(1.0, ad.exp(ad.div(-1.0, r))))
    return 1.0 / -np.expm1(-1.0 / vr)


def bounded_drive(x: ad.Tensor, rate_lo: float, rate_hi: float) -> ad.Tensor:
    """Drive ``b_lo + (b_hi - b_lo) * sigmoid(x)`` whose rate lies in the bounds."""
    b_lo = float(rate_to_drive(rate_lo))  # type: ignore[arg-type]
    b_hi = float(rate_to_drive(rate_hi))  # type: ignore[arg-type]
    return ad.add(b_lo, ad.mul(b_hi - b_lo, ad.sigmoid(x)))


def refractory_gate(
    t: ad.Tensor,
    t_last: ad.Tensor,
    rho: float,
    gate_floor: float = DEFAULT_GATE_FLOOR,
) -> ad.Tensor:
    """Recovery factor ``1 - exp(-(t - t_last)/rho)`` floored at ``gate_floor``.

    Raises:
        DomainError: If ``t < t_last`` anywhere or ``rho`` is not positive.
    """
    if rho <= 0:
        raise DomainError(
            f"rho must be positive, got {rho}", details={"op": "refractory_gate"}
        )
    delta = ad.sub(t, t_last)
    if np.any(ad.value_of(delta) < 0):
        raise DomainError(
            "refractory_gate requires t >= t_last", details={"op": "refractory_gate"}
        )
    recovered = ad.sub(1.0, ad.exp(ad.div(ad.neg(delta), rho)))
    return ad.clip(recovered, gate_floor, 1.0)


class RateFunction:
    """Positive hazard ``r(t)`` with bounds ``lo <= r(t) <= hi``.

    Use :meth:`constant`, :meth:`tabulated` or the constructor with an
    arbitrary vectorized evaluator. Evaluators must be pure so a rate can be
    shared between workers.
    """

    def __init__(
        self,
        evaluator: Evaluator,
        lo: float,
        hi: float = math.inf,
        *,
        kind: str = "callable",
        constant: float | None = None,
        table: tuple[Array, Array] | None = None,
    ) -> None:
        if not 0 < lo <= hi:
            raise ValueError(
                f"Rate bounds must satisfy 0 < lo <= hi, got [{lo}, {hi}]"
            )
        self._evaluator = evaluator
        self.lo = float(lo)
        self.hi = float(hi)
        self.kind = kind
        self._constant = constant
        self._table = table

    @classmethod
    def constant(cls, value: float) -> RateFunction:
        if not value > 0:
            raise ValueError(f"Constant rate must be positive, got {value}")
        return cls(
            lambda t: np.full(np.shape(t), value, dtype=np.float64),
            value,
            value,
            kind="constant",
            constant=value,
        )

    @classmethod
    def tabulated(
        cls, times: Array | list[float], rates: Array | list[float]
    ) -> RateFunction:
        """Piecewise-linear rate through ``(times, rates)``, flat outside."""
        t = np.asarray(times, dtype=np.float64)
        r = np.asarray(rates, dtype=np.float64)
        if t.ndim != 1 or t.shape != r.shape or t.size < 2:
            raise ValueError(
                "A rate table needs matching 1-D times and rates, length >= 2"
            )
        if t[0] < 0 or np.any(np.diff(t) <= 0):
            raise ValueError("Table times must be nonnegative and strictly increasing")
        if np.any(r <= 0) or not np.all(np.isfinite(r)):
            raise ValueError("Table rates must be positive and finite")
        return cls(
            lambda x: np.interp(x, t, r),
            float(r.min()),
            float(r.max()),
            kind="tabulated",
            table=(t, r),
        )

    @classmethod
    def from_csv(cls, path: Path) -> RateFunction:
        """Load a tabulated rate from a ``t,r`` CSV file."""
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return cls.tabulated(data[:, 0], data[:, 1])

    def to_csv(self, path: Path) -> None:
        if self._table is None:
            raise ValueError(
                f"Only tabulated rates serialize to CSV, this one is {self.kind}"
            )
        t, r = self._table
        np.savetxt(
            path,
            np.column_stack([t, r]),
            delimiter=",",
            header="t,r",
            comments="",
            fmt="%.17g",
        )

    @property
    def table(self) -> tuple[Array, Array] | None:
        return self._table

    def __call__(self, t: Array | float) -> Array:
        values = self._evaluator(np.asarray(t, dtype=np.float64))
        return np.asarray(values, dtype=np.float64)

    def within_bounds(self, t: Array) -> bool:
        values = self(t)
        return bool(np.all((values >= self.lo) & (values <= self.hi)))

    def cumulative(self, t: Array | float, tol: float = 1e-10) -> Array:
        """Integrated hazard ``int_0^t r(u) du``.

        Exact for constant and tabulated rates, adaptive quadrature otherwise.
        """
        x = np.asarray(t, dtype=np.float64)
        if self._constant is not None:
            return self._constant * x
        if self._table is not None:
            return _piecewise_linear_integral(self._table, x)
        flat = [
            quad_adaptive(self._evaluator, 0.0, float(v), tol, vectorized=True)
            for v in x.reshape(-1)
        ]
        return np.asarray(flat, dtype=np.float64).reshape(x.shape)

    def gated(
        self, events: Array, rho: float, gate_floor: float = DEFAULT_GATE_FLOOR
    ) -> RateFunction:
        """Rate damped by the refractory gate of the most recent event."""
        gate = RefractoryGate(
            rho=rho,
            event_times=np.asarray(events, dtype=np.float64),
            gate_floor=gate_floor,
        )
        return RateFunction(
            lambda t: gate(t) * self._evaluator(t),
            self.lo * gate_floor,
            self.hi,
            kind="gated",
        )

    def __repr__(self) -> str:
        return f"RateFunction(kind={self.kind}, lo={self.lo}, hi={self.hi})"


def _piecewise_linear_integral(table: tuple[Array, Array], x: Array) -> Array:
    t, r = table
    if t[0] > 0:
        t = np.concatenate([[0.0], t])
        r = np.concatenate([[r[0]], r])
    knots = integrate.cumulative_trapezoid(r, t, initial=0.0)
    k = np.clip(np.searchsorted(t, x, side="right") - 1, 0, t.size - 1)
    dt = x - t[k]
    slope = np.zeros_like(r)
    slope[:-1] = np.diff(r) / np.diff(t)
    inside = x < t[-1]
    value = knots[k] + r[k] * dt + np.where(inside, 0.5 * slope[k] * dt * dt, 0.0)
    return np.asarray(np.where(x <= 0, 0.0, value), dtype=np.float64)


@dataclass(frozen=True)
class RefractoryGate:
    """Gate driven by the most recent event before ``t``.

    Before the first event there is nothing to recover from and the gate
    is one.
    """

    rho: float
    event_times: Array
    gate_floor: float = DEFAULT_GATE_FLOOR

    def __post_init__(self) -> None:
        if self.rho <= 0:
            raise ValueError(f"rho must be positive, got {self.rho}")

    def __call__(self, t: Array | float) -> Array:
        x = np.asarray(t, dtype=np.float64)
        idx = np.searchsorted(self.event_times, x, side="right") - 1
        has_prev = idx >= 0
        last = np.where(has_prev, self.event_times[np.maximum(idx, 0)], x)
        gate = np.clip(-np.expm1(-(x - last) / self.rho), self.gate_floor, 1.0)
        return np.asarray(np.where(has_prev, gate, 1.0), dtype=np.float64)


@dataclass(frozen=True)
class DriveFunction:
    """Membrane drive ``b(t) > 1`` and the rate it implies.

    Attributes:
        evaluator: Vectorized map from time to drive.
        kind: One of ``constant``, ``tabulated``, ``learned`` or ``bounded``.
        rate_lo: Lower rate bound reported by :meth:`to_rate`.
        rate_hi: Upper rate bound reported by :meth:`to_rate`.
    """

    evaluator: Evaluator
    kind: str
    rate_lo: float
    rate_hi: float = math.inf

    @classmethod
    def constant(cls, b: float) -> DriveFunction:
        r = float(drive_to_rate(b))  # type: ignore[arg-type]
        return cls(
            lambda t: np.full(np.shape(t), b, dtype=np.float64), "constant", r, r
        )

    @classmethod
    def tabulated(
        cls, times: Array | list[float], drives: Array | list[float]
    ) -> DriveFunction:
        t = np.asarray(times, dtype=np.float64)
        b = np.asarray(drives, dtype=np.float64)
        rates = np.asarray(drive_to_rate(b))
        return cls(
            lambda x: np.interp(x, t, b),
            "tabulated",
            float(rates.min()),
            float(rates.max()),
        )

    @classmethod
    def learned(cls, mapping: Evaluator, rate_lo: float = 1e-12) -> DriveFunction:
        """Drive ``1 + softplus(mapping(t))``, unbounded above."""
        return cls(lambda t: 1.0 + np.logaddexp(0.0, mapping(t)), "learned", rate_lo)

    @classmethod
    def bounded(
        cls, mapping: Evaluator, rate_lo: float, rate_hi: float
    ) -> DriveFunction:
        """Drive squashed so the implied rate stays in ``[rate_lo, rate_hi]``."""
        return cls(
            lambda t: np.asarray(bounded_drive(mapping(t), rate_lo, rate_hi)),
            "bounded",
            rate_lo,
            rate_hi,
        )

    def __call__(self, t: Array | float) -> Array:
        raw = self.evaluator(np.asarray(t, dtype=np.float64))
        values = np.asarray(raw, dtype=np.float64)
        bad = ~(values > 1.0)
        if np.any(bad):
            raise InvalidDrive(float(values[bad].reshape(-1)[0]))
        return values

    def to_rate(self) -> RateFunction:
        if self.kind == "constant":
            return RateFunction.constant(self.rate_lo)
        return RateFunction(
            lambda t: np.asarray(drive_to_rate(self(t)), dtype=np.float64),
            self.rate_lo,
            self.rate_hi,
            kind=f"drive:{self.kind}",
        )


def dlif_density(rate: RateFunction, t: float, tol: float = 1e-10) -> float:
    """Renewal density ``r(t) exp(-int_0^t r)``, the integral by adaptive quadrature."""
    if t < 0:
        raise DomainError(
            f"t must be nonnegative, got {t}", details={"op": "dlif_density"}
        )
    hazard = quad_adaptive(rate, 0.0, t, tol, vectorized=True)
    return float(rate(t)) * math.exp(-hazard)


def dlif_density_values(rate: RateFunction, t: Array) -> Array:
    """Vectorized renewal density using :meth:`RateFunction.cumulative`."""
    x = np.asarray(t, dtype=np.float64)
    return rate(x) * np.exp(-rate.cumulative(x))


def sample_renewal(
    rate: RateFunction,
    horizon: float,
    rng: Rng,
    *,
    refractory_tau: float | None = None,
    gate_floor: float = DEFAULT_GATE_FLOOR,
) -> EventRealization:
    """Sample one renewal realization on ``[0, horizon]`` by thinning.

    Candidates come from a Poisson process at the majorant ``rate.hi``. A
    candidate at age ``a`` since the last accepted event (or since zero) is
    kept with probability ``gate(a) * r(a) / hi``, so the hazard clock
    restarts at every event.

    Raises:
        UnboundedRate: If the rate has no finite upper bound.
    """
    if not horizon > 0:
        raise ValueError(f"horizon must be positive, got {horizon}")
    majorant = rate.hi
    if not math.isfinite(majorant):
        raise UnboundedRate(
            "Thinning needs a finite upper rate bound", details={"kind": rate.kind}
        )

    accepted: list[float] = []
    last = 0.0
    clock = 0.0
    always_accept = rate.kind == "constant" and refractory_tau is None
    while clock <= horizon:
        candidates = clock + np.cumsum(rng.exponential(majorant, _THINNING_BLOCK))
        uniforms = rng.uniform(size=_THINNING_BLOCK)
        clock = float(candidates[-1])
        candidates = candidates[candidates <= horizon]
        if always_accept:
            accepted.extend(candidates.tolist())
            continue
        for t, u in zip(candidates.tolist(), uniforms.tolist(), strict=False):
            age = t - last
            hazard = float(rate(age))
            if refractory_tau is not None:
                hazard *= max(-math.expm1(-age / refractory_tau), gate_floor)
            if u * majorant <= hazard:
                accepted.append(t)
                last = t

    times = np.asarray(accepted, dtype=np.float64)
    # Equal doubles from the cumulative sum would break strict ordering.
    if times.size > 1:
        times = times[np.concatenate([[True], np.diff(times) > 0])]
    logger.debug(f"sample_renewal drew {times.size} events on [0, {horizon}]")
    return EventRealization.single(times, horizon, seed=rng.seed, stream=rng.stream)


def lif_consistency_values(
    r_hat: ad.Tensor, r_tilde: ad.Tensor, horizon: float
) -> ad.Tensor:
    """Trapezoid estimate of ``int_0^S (r_hat - r_tilde)^2`` on a uniform grid.

    The last axis of both inputs holds the grid values; any leading axes are
    summed.
    """
    n = ad.value_of(r_hat).shape[-1]
    if n < 2:
        raise ValueError(f"grid must have at least 2 points, got {n}")
    weights = np.full(n, horizon / (n - 1))
    weights[0] = weights[-1] = 0.5 * horizon / (n - 1)
    return ad.sum_(ad.mul(ad.square(ad.sub(r_hat, r_tilde)), weights))


def lif_consistency(
    r_hat: Evaluator, r_tilde: Evaluator, horizon: float, grid: int
) -> float:
    """Rate-consistency penalty between two rate evaluators over ``[0, horizon]``."""
    if grid < 2:
        raise ValueError(f"grid must be >= 2, got {grid}")
    t = np.linspace(0.0, horizon, grid)
    a = np.broadcast_to(np.asarray(r_hat(t), dtype=np.float64), t.shape)
    b = np.broadcast_to(np.asarray(r_tilde(t), dtype=np.float64), t.shape)
    return float(lif_consistency_values(a, b, horizon))  # type: ignore[arg-type]

"""Computable upper bound on the KL between an interval density and a renewal prior.

Substituting ``m = -exp(-t)`` maps the interval ``t in [0, S]`` onto
``m in [-1, -exp(-S)]`` and turns the KL integral into the initial value
problem ``G'(m) = g(m), G(-1) = 0``. Past ``-exp(-S)`` the truncated density
vanishes, so ``G`` is flat up to ``-eps``. The bound adds the tail
``|G(-2 eps) - G(-eps)|``, which is nonzero only when ``2 eps > exp(-S)``.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Callable
from dataclasses import dataclass

import numpy as np
import numpy.typing as npt
from scipy import stats

from event_dynamics.core.dlif_prior import RateFunction, dlif_density_values
from event_dynamics.core.exceptions import KlBoundError, OutOfDomain
from event_dynamics.core.melp import (
    LognormalMixture,
    mixture_cdf,
    mixture_log_density,
)
from event_dynamics.core.models import (
    DensitySpec,
    KlBoundReport,
    KlProblemSpec,
    RateSpec,
)
from event_dynamics.numerics import autodiff as ad
from event_dynamics.numerics.ode import rk4_quadrature_rule
from event_dynamics.numerics.quadrature import quad_adaptive

logger = logging.getLogger(__name__)

Array = npt.NDArray[np.float64]
Density = Callable[[Array], Array]

_MIN_INTERVAL = 1e-12


@dataclass(frozen=True)
class KlProblem:
    """A density ``q`` on ``[0, S]``, a prior rate and the tail parameter.

    Attributes:
        q: Vectorized density, normalized on ``[0, horizon]``.
        rate: Prior hazard.
        horizon: Support length ``S`` in seconds.
        epsilon: Tail parameter in ``(0, exp(-S))``.
    """

    q: Density
    rate: RateFunction
    horizon: float
    epsilon: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.horizon) and self.horizon > 0):
            raise KlBoundError(
                f"horizon must be finite and positive, got {self.horizon}"
            )
        if not 0 < self.epsilon < math.exp(-self.horizon):
            raise KlBoundError(
                f"epsilon must lie in (0, exp(-S)) = "
                f"(0, {math.exp(-self.horizon):.3e}), "
                f"got {self.epsilon}",
                details={"epsilon": self.epsilon, "horizon": self.horizon},
            )
        grid = np.linspace(0.0, self.horizon, 257)[1:]
        if not np.all(self.q(grid) > 0):
            raise KlBoundError("q must be strictly positive on (0, S]")

    @property
    def lower(self) -> float:
        return -1.0

    @property
    def support_end(self) -> float:
        """``-exp(-S)``, the image of the horizon."""
        return -math.exp(-self.horizon)

    @classmethod
    def from_spec(cls, spec: KlProblemSpec) -> KlProblem:
        return cls(
            q=truncated_density(spec.q, spec.horizon),
            rate=rate_from_spec(spec.r),
            horizon=spec.horizon,
            epsilon=spec.epsilon,
        )


@dataclass(frozen=True)
class KlBound:
    """``u_eps = g_eps + tail``."""

    u_eps: float
    g_eps: float
    tail: float


def truncated_exponential(rate: float, horizon: float) -> Density:
    dist = stats.expon(scale=1.0 / rate)
    z = float(dist.cdf(horizon))
    return lambda t: np.where(t <= horizon, dist.pdf(t) / z, 0.0)


def truncated_lognormal(mu: float, s: float, horizon: float) -> Density:
    dist = stats.lognorm(s, scale=math.exp(mu))
    z = float(dist.cdf(horizon))
    return lambda t: np.where(t <= horizon, dist.pdf(t) / z, 0.0)


def truncated_mixture(mix: LognormalMixture, horizon: float) -> Density:
    """Lognormal mixture renormalized on ``[0, horizon]``."""
    w = ad.value_of(mix.weights)
    mu = ad.value_of(mix.log_means)
    s = ad.value_of(mix.scales)
    dists = [
        stats.lognorm(s_j, scale=math.exp(mu_j))
        for mu_j, s_j in zip(mu, s, strict=True)
    ]
    z = sum(w_j * float(d.cdf(horizon)) for w_j, d in zip(w, dists, strict=True))

    def pdf(t: Array) -> Array:
        total = sum(w_j * d.pdf(t) for w_j, d in zip(w, dists, strict=True))
        return np.where(t <= horizon, np.asarray(total) / z, 0.0)

    return pdf


def truncated_renewal(rate: RateFunction, horizon: float) -> Density:
    """The renewal density of ``rate`` renormalized on ``[0, horizon]``."""
    z = 1.0 - math.exp(-float(rate.cumulative(horizon)))
    return lambda t: np.where(t <= horizon, dlif_density_values(rate, t) / z, 0.0)


def truncated_density(spec: DensitySpec, horizon: float) -> Density:
    if spec.family == "exponential":
        assert spec.rate is not None
        return truncated_exponential(spec.rate, horizon)
    if spec.family == "lognormal":
        assert spec.mu is not None and spec.s is not None
        return truncated_lognormal(spec.mu, spec.s, horizon)
    assert spec.mixture is not None
    return truncated_mixture(LognormalMixture.from_spec(spec.mixture), horizon)


def rate_from_spec(spec: RateSpec) -> RateFunction:
    if spec.constant is not None:
        return RateFunction.constant(spec.constant)
    assert spec.table is not None
    table = np.asarray(spec.table, dtype=np.float64)
    return RateFunction.tabulated(table[:, 0], table[:, 1])


def _log_ratio_term(q: Array, log_p: Array) -> Array:
    """``q * log(q / p)`` with the convention ``0 log 0 = 0``."""
    safe = np.where(q > 0, q, 1.0)
    return np.where(q > 0, q * (np.log(safe) - log_p), 0.0)


def _log_prior_density(rate: RateFunction, t: Array) -> Array:
    return np.log(rate(t)) - rate.cumulative(t)


def kl_integrand_g(m: Array | float, problem: KlProblem) -> Array:
    """Right-hand side ``g(m)`` of the KL initial value problem.

    With ``M = -log(-m)``, ``g(m) = -(q(M)/m) log[q(M) / (r(M) exp(-R(M)))]``
    where ``R`` is the integrated hazard. Zero beyond ``-exp(-S)``.

    Raises:
        OutOfDomain: If any ``m`` lies outside ``[-1, 0)``.
    """
    x = np.asarray(m, dtype=np.float64)
    bad = (x < problem.lower) | (x >= 0)
    if np.any(bad):
        raise OutOfDomain(float(x[bad].reshape(-1)[0]), problem.lower)
    inside = x <= problem.support_end
    # -log(exp(-S)) can round one ulp past S
    t = np.where(inside, np.minimum(-np.log(-x), problem.horizon), problem.horizon)
    q = np.where(inside, problem.q(t), 0.0)
    term = _log_ratio_term(q, _log_prior_density(problem.rate, t))
    return np.asarray(np.where(inside, term / -x, 0.0), dtype=np.float64)


def _integrate_g(problem: KlProblem, m0: float, m1: float, steps: int) -> float:
    if m1 <= m0:
        return 0.0
    nodes, weights = rk4_quadrature_rule(m0, m1, steps)
    return math.fsum(weights * kl_integrand_g(nodes, problem))


def kl_bound(problem: KlProblem, ode_steps: int = 1024) -> KlBound:
    """Evaluate ``U_eps = G(-eps) + |G(-2 eps) - G(-eps)|``.

    ``G`` is integrated by fixed-step RK4 from ``-1``. When ``-2 eps`` falls
    inside the support the integration is split there and the tail is the
    part beyond it; otherwise ``G(-2 eps) = G(-eps)`` and the tail is zero.
    """
    end = problem.support_end
    split = max(-2.0 * problem.epsilon, problem.lower)
    if split < end:
        g_split = _integrate_g(problem, problem.lower, split, ode_steps)
        g_eps = g_split + _integrate_g(problem, split, end, ode_steps)
        tail = abs(g_eps - g_split)
    else:
        g_eps = _integrate_g(problem, problem.lower, end, ode_steps)
        tail = 0.0
    logger.debug(f"kl_bound: G(-eps)={g_eps:.6e}, tail={tail:.3e}")
    return KlBound(u_eps=g_eps + tail, g_eps=g_eps, tail=tail)


def kl_oracle(problem: KlProblem, tol: float = 1e-10) -> float:
    """KL integral evaluated directly in ``t`` by adaptive quadrature.

    Test oracle only; training uses :func:`mixture_kl_bound`.
    """

    def integrand(t: Array) -> Array:
        return _log_ratio_term(problem.q(t), _log_prior_density(problem.rate, t))

    return quad_adaptive(integrand, 0.0, problem.horizon, tol, vectorized=True)


def bound_report(
    spec: KlProblemSpec, ode_steps: int = 1024, *, with_oracle: bool = True
) -> KlBoundReport:
    """Bound, its parts and optionally the oracle with the gap ``U_eps - KL``."""
    problem = KlProblem.from_spec(spec)
    bound = kl_bound(problem, ode_steps)
    oracle = kl_oracle(problem) if with_oracle else None
    return KlBoundReport(
        u_eps=bound.u_eps,
        g_eps=bound.g_eps,
        tail=bound.tail,
        oracle=oracle,
        gap=None if oracle is None else bound.u_eps - oracle,
        epsilon=spec.epsilon,
        horizon=spec.horizon,
        ode_steps=ode_steps,
    )


def _quadrature_plan(
    horizon: float, epsilon: float, ode_steps: int
) -> tuple[Array, Array, Array | None, Array | None]:
    end = -math.exp(-horizon)
    split = max(-2.0 * epsilon, -1.0)
    if split < end:
        main_nodes, main_weights = rk4_quadrature_rule(-1.0, split, ode_steps)
        tail_nodes, tail_weights = rk4_quadrature_rule(split, end, ode_steps)
        return main_nodes, main_weights, tail_nodes, tail_weights
    nodes, weights = rk4_quadrature_rule(-1.0, end, ode_steps)
    return nodes, weights, None, None


def _mixture_g(
    mix: LognormalMixture,
    log_rate: ad.Tensor,
    rate: ad.Tensor,
    log_z: ad.Tensor,
    nodes: Array,
) -> ad.Tensor:
    """``g`` on ``nodes`` for every mixture row; shape ``(R, N)``."""
    t = np.maximum(-np.log(-nodes), _MIN_INTERVAL)
    k = mix.n_components
    expanded = LognormalMixture(
        ad.reshape(mix.weights, (-1, 1, k)),
        ad.reshape(mix.mean_intervals, (-1, 1, k)),
        ad.reshape(mix.scales, (-1, 1, k)),
    )
    log_q = ad.sub(mixture_log_density(t[None, :], expanded), log_z)
    log_p = ad.sub(log_rate, ad.mul(rate, t[None, :]))
    q = ad.exp(log_q)
    return ad.div(ad.mul(q, ad.sub(log_q, log_p)), -nodes[None, :])


def mixture_kl_bound(
    mix: LognormalMixture,
    rate: ad.Tensor,
    horizon: float,
    epsilon: float,
    ode_steps: int,
) -> ad.Tensor:
    """Differentiable ``U_eps`` for a batch of mixtures against constant hazards.

    Each row of ``mix`` (flattened over its batch axes) is truncated to
    ``[0, horizon]`` and compared with the renewal density of the matching
    entry of ``rate``, a positive per-row hazard of shape ``(R,)`` or a
    scalar. Every step is built from tape primitives, so gradients flow
    into the mixture parameters and the rate, tail term included.

    Returns:
        Per-row bounds of shape ``(R,)``.
    """
    if not 0 < epsilon < math.exp(-horizon):
        raise KlBoundError(
            f"epsilon must lie in (0, exp(-S)), got {epsilon}",
            details={"epsilon": epsilon, "horizon": horizon},
        )
    k = mix.n_components
    rows = LognormalMixture(
        ad.reshape(mix.weights, (-1, k)),
        ad.reshape(mix.mean_intervals, (-1, k)),
        ad.reshape(mix.scales, (-1, k)),
    )
    n_rows = ad.value_of(rows.weights).shape[0]
    rate_col = ad.reshape(ad.mul(rate, np.ones(n_rows)), (n_rows, 1))
    log_rate = ad.log(rate_col)
    log_z = ad.reshape(
        ad.log(mixture_cdf(np.full(n_rows, horizon), rows)), (n_rows, 1)
    )

    main_nodes, main_weights, tail_nodes, tail_weights = _quadrature_plan(
        horizon, epsilon, ode_steps
    )
    g_main = _mixture_g(rows, log_rate, rate_col, log_z, main_nodes)
    g_split = ad.sum_(ad.mul(g_main, main_weights[None, :]), axis=1)
    if tail_nodes is None or tail_weights is None:
        return g_split
    g_tail = _mixture_g(rows, log_rate, rate_col, log_z, tail_nodes)
    tail = ad.sum_(ad.mul(g_tail, tail_weights[None, :]), axis=1)
    return ad.add(ad.add(g_split, tail), ad.abs_(tail))

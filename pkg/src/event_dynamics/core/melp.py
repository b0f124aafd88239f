"""Mean-evolving lognormal mixture over inter-event intervals.

Each component's log-mean is chosen from its candidate mean interval and
log-scale so that the component mean equals the candidate exactly. Every
function accepts plain arrays or tape nodes, with the components on the last
axis and any leading axes treated as a batch.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
import numpy.typing as npt

from event_dynamics.core.exceptions import DomainError, InvalidTemperature
from event_dynamics.core.models import MixtureSpec
from event_dynamics.numerics import autodiff as ad
from event_dynamics.numerics.rng import Rng

Array = npt.NDArray[np.float64]

_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)
_WEIGHT_FLOOR = 1e-300


class SampleMode(str, Enum):
    """How an interval is drawn from a mixture."""

    HARD = "hard"
    RELAXED = "relaxed"
    MEAN = "mean"


def mean_match_mu(mean_interval: ad.Tensor, scale: ad.Tensor) -> ad.Tensor:
    """Log-mean giving a lognormal with mean ``mean_interval``.

    Raises:
        DomainError: If either input is not positive.
    """
    if np.any(ad.value_of(mean_interval) <= 0) or np.any(ad.value_of(scale) <= 0):
        raise DomainError(
            "mean_match_mu requires positive mean intervals and scales",
            details={"op": "mean_match_mu"},
        )
    return ad.sub(ad.log(mean_interval), ad.mul(0.5, ad.square(scale)))


@dataclass(frozen=True)
class LognormalMixture:
    """Weights, candidate mean intervals and log-scales of a K-component mixture."""

    weights: ad.Tensor
    mean_intervals: ad.Tensor
    scales: ad.Tensor

    def __post_init__(self) -> None:
        shapes = {
            ad.value_of(x).shape
            for x in (self.weights, self.mean_intervals, self.scales)
        }
        if len(shapes) != 1 or ad.value_of(self.weights).ndim == 0:
            raise DomainError(
                f"Mixture arrays must share a shape with components last, got {shapes}",
                details={"op": "LognormalMixture"},
            )

    @classmethod
    def from_log_means(
        cls, weights: ad.Tensor, log_means: ad.Tensor, scales: ad.Tensor
    ) -> LognormalMixture:
        """Build from log-means, deriving the matched mean intervals."""
        mean_intervals = ad.exp(ad.add(log_means, ad.mul(0.5, ad.square(scales))))
        return cls(weights, mean_intervals, scales)

    @classmethod
    def from_spec(cls, spec: MixtureSpec) -> LognormalMixture:
        return cls(
            np.asarray(spec.weights, dtype=np.float64),
            np.asarray(spec.mean_intervals, dtype=np.float64),
            np.asarray(spec.scales, dtype=np.float64),
        )

    @property
    def n_components(self) -> int:
        return int(ad.value_of(self.weights).shape[-1])

    @property
    def batch_shape(self) -> tuple[int, ...]:
        return tuple(ad.value_of(self.weights).shape[:-1])

    @property
    def log_means(self) -> ad.Tensor:
        return mean_match_mu(self.mean_intervals, self.scales)

    def detach(self) -> LognormalMixture:
        """Plain-array copy with no tape attached."""
        return LognormalMixture(
            ad.value_of(self.weights).copy(),
            ad.value_of(self.mean_intervals).copy(),
            ad.value_of(self.scales).copy(),
        )

    def row(self, index: int) -> LognormalMixture:
        """The mixture at one position of a 1-D batch."""
        return LognormalMixture(
            ad.getitem(self.weights, index),
            ad.getitem(self.mean_intervals, index),
            ad.getitem(self.scales, index),
        )

    def validate(self, atol: float = 1e-9) -> None:
        """Check simplex weights, positive parameters and exact mean matching.

        Raises:
            DomainError: If any invariant fails.
        """
        w = ad.value_of(self.weights)
        tau = ad.value_of(self.mean_intervals)
        s = ad.value_of(self.scales)
        if np.any(w < 0) or not np.allclose(w.sum(axis=-1), 1.0, rtol=0, atol=atol):
            raise DomainError("Mixture weights are not on the simplex")
        if np.any(tau <= 0) or np.any(s <= 0):
            raise DomainError("Mixture mean intervals and scales must be positive")
        mu = np.log(tau) - 0.5 * s * s
        if not np.allclose(np.exp(mu + 0.5 * s * s), tau, rtol=atol, atol=0):
            raise DomainError("Mean matching does not hold")


@dataclass(frozen=True)
class IntervalTrace:
    """Randomness and selection behind one sampled interval."""

    mode: SampleMode
    noise: Array
    component: npt.NDArray[np.int64] | None = None
    soft_assignment: ad.Tensor | None = None


def _rows(x: ad.Tensor, k: int) -> ad.Tensor:
    return ad.reshape(x, (-1, k))


def sample_interval(
    mix: LognormalMixture,
    rng: Rng,
    mode: SampleMode = SampleMode.HARD,
    temperature: float = 0.5,
) -> tuple[ad.Tensor, IntervalTrace]:
    """Draw one interval per batch position, pathwise in the mixture parameters.

    Hard mode picks a component ``k ~ Cat(w)`` and returns
    ``exp(mu_k + s_k * z)``. Relaxed mode replaces the one-hot selection by a
    Gumbel-softmax assignment ``y`` and returns
    ``exp(sum(y * mu) + sum(y * s) * z)``. Mean mode returns the closed-form
    mixture mean and draws nothing.

    Returns:
        Tuple of (intervals shaped like the batch, trace of the draw).

    Raises:
        InvalidTemperature: If relaxed mode gets a nonpositive temperature.
    """
    if mode is SampleMode.MEAN:
        return mixture_mean(mix), IntervalTrace(mode=mode, noise=np.zeros(0))

    k = mix.n_components
    batch = mix.batch_shape
    n = int(np.prod(batch)) if batch else 1
    mu = _rows(mix.log_means, k)
    s = _rows(mix.scales, k)
    z = rng.normal(size=n)

    if mode is SampleMode.HARD:
        w = ad.value_of(mix.weights).reshape(n, k)
        cumulative = np.cumsum(w, axis=1)
        u = rng.uniform(size=n)[:, None] * cumulative[:, -1:]
        component = np.minimum((u > cumulative).sum(axis=1), k - 1).astype(np.int64)
        picked = component[:, None]
        exponent = ad.add(
            ad.gather(mu, picked), ad.mul(ad.gather(s, picked), z[:, None])
        )
        tau = ad.reshape(ad.exp(exponent), batch)
        return tau, IntervalTrace(mode=mode, noise=z, component=component)

    if temperature <= 0:
        raise InvalidTemperature(temperature)
    gumbel = rng.gumbel(size=(n, k))
    log_w = ad.log(ad.clip(_rows(mix.weights, k), _WEIGHT_FLOOR, 1.0))
    y = ad.softmax(ad.div(ad.add(log_w, gumbel), temperature), axis=1)
    mixed_mu = ad.sum_(ad.mul(y, mu), axis=1)
    mixed_s = ad.sum_(ad.mul(y, s), axis=1)
    tau = ad.reshape(ad.exp(ad.add(mixed_mu, ad.mul(mixed_s, z))), batch)
    return tau, IntervalTrace(mode=mode, noise=z, soft_assignment=y)


def mixture_mean(mix: LognormalMixture) -> ad.Tensor:
    """Closed-form mean ``sum_j w_j * tau_j`` over the last axis."""
    return ad.sum_(ad.mul(mix.weights, mix.mean_intervals), axis=-1)


def _component_log_density(tau: ad.Tensor, mix: LognormalMixture) -> ad.Tensor:
    """Log-density of every component at ``tau``; ``tau`` gains a component axis."""
    if np.any(ad.value_of(tau) <= 0):
        raise DomainError(
            "Mixture density needs positive intervals", details={"op": "density"}
        )
    vt = ad.value_of(tau)
    log_tau = ad.reshape(ad.log(tau), (*vt.shape, 1))
    mu = mix.log_means
    s = mix.scales
    standardized = ad.div(ad.sub(log_tau, mu), s)
    return ad.sub(
        ad.neg(ad.mul(0.5, ad.square(standardized))),
        ad.add(ad.add(log_tau, ad.log(s)), _LOG_SQRT_2PI),
    )


def mixture_log_density(tau: ad.Tensor, mix: LognormalMixture) -> ad.Tensor:
    """Log of :func:`mixture_density`, stable for tiny densities.

    ``tau`` must broadcast against the mixture batch shape.

    Raises:
        DomainError: If any ``tau`` is not positive.
    """
    log_w = ad.log(ad.clip(mix.weights, _WEIGHT_FLOOR, 1.0))
    return ad.logsumexp(
        ad.add(log_w, _component_log_density(tau, mix)), axis=-1, keepdims=False
    )


def mixture_density(tau: ad.Tensor, mix: LognormalMixture) -> ad.Tensor:
    """Mixture density ``sum_j w_j LogNormal(tau; mu_j, s_j)``.

    Raises:
        DomainError: If any ``tau`` is not positive.
    """
    return ad.exp(mixture_log_density(tau, mix))


def mixture_cdf(tau: ad.Tensor, mix: LognormalMixture) -> ad.Tensor:
    """Mixture distribution function at ``tau > 0``."""
    if np.any(ad.value_of(tau) <= 0):
        raise DomainError("Mixture CDF needs positive intervals", details={"op": "cdf"})
    vt = ad.value_of(tau)
    log_tau = ad.reshape(ad.log(tau), (*vt.shape, 1))
    standardized = ad.div(ad.sub(log_tau, mix.log_means), mix.scales)
    return ad.sum_(ad.mul(mix.weights, ad.normal_cdf(standardized)), axis=-1)


def kl_lognormal(
    mu_q: ad.Tensor, s_q: ad.Tensor, mu_p: ad.Tensor, s_p: ad.Tensor
) -> ad.Tensor:
    """Closed-form ``KL(LogNormal(mu_q, s_q) || LogNormal(mu_p, s_p))``."""
    return ad.sub(
        ad.add(
            ad.log(ad.div(s_p, s_q)),
            ad.div(
                ad.add(ad.square(s_q), ad.square(ad.sub(mu_q, mu_p))),
                ad.mul(2.0, ad.square(s_p)),
            ),
        ),
        0.5,
    )


def categorical_kl_uniform(weights: ad.Tensor) -> ad.Tensor:
    """``sum_j w_j log(w_j K)``, the KL from a uniform categorical prior."""
    k = ad.value_of(weights).shape[-1]
    safe = ad.clip(weights, _WEIGHT_FLOOR, 1.0)
    return ad.sum_(ad.mul(weights, ad.log(ad.mul(safe, float(k)))), axis=-1)


def mixture_kl_to_prior(
    mix: LognormalMixture, prior_mu: ad.Tensor, prior_scale: ad.Tensor
) -> ad.Tensor:
    """Component-wise upper bound on the KL from a lognormal interval prior.

    ``prior_mu`` and ``prior_scale`` broadcast against the component axis.

    Sums the weighted component KLs and the weight KL against a uniform
    categorical prior over the components.
    """
    components = kl_lognormal(mix.log_means, mix.scales, prior_mu, prior_scale)
    weighted = ad.sum_(ad.mul(mix.weights, components), axis=-1)
    return ad.add(weighted, categorical_kl_uniform(mix.weights))


def annealed_temperature(
    initial: float, decay: float, floor: float, epoch: int
) -> float:
    """Relaxation temperature after ``epoch`` multiplicative decays."""
    return max(initial * decay**epoch, floor)

"""Toy sequence model: encoder, event unroller, observation head and classifier."""

from __future__ import annotations

import logging
import math
from collections.abc import Mapping, Sequence
from dataclasses import dataclass

import numpy as np
import numpy.typing as npt

from event_dynamics.core.config import AppConfig
from event_dynamics.core.dlif_prior import bounded_drive, drive_to_rate, rate_to_drive
from event_dynamics.core.epde import (
    EpdeParams,
    UnrolledEvents,
    evolve_ode,
    rate_proxy_values,
    unroll_events,
)
from event_dynamics.core.exceptions import ShapeError
from event_dynamics.core.melp import LognormalMixture, SampleMode
from event_dynamics.core.models import BandName, ToyRecord
from event_dynamics.numerics import autodiff as ad
from event_dynamics.numerics.rng import Rng

logger = logging.getLogger(__name__)

Array = npt.NDArray[np.float64]
Params = dict[str, Array]

CLASSES: tuple[BandName, ...] = (BandName.LOW, BandName.MID, BandName.HIGH)
INITIAL_PRIOR_RATE = 12.5
_OBSERVATION_FEATURES = 2


def observations(records: Sequence[ToyRecord]) -> Array:
    """Stack observations into ``(R, n_obs)``.

    Raises:
        ShapeError: If records differ in length.
    """
    lengths = {r.n_obs for r in records}
    if len(lengths) != 1:
        raise ShapeError(
            f"Records in a batch must share a length, got {sorted(lengths)}"
        )
    return np.array([r.observations for r in records], dtype=np.float64)


def labels(records: Sequence[ToyRecord]) -> npt.NDArray[np.int64]:
    return np.array([CLASSES.index(r.band) for r in records], dtype=np.int64)


def stack_mixtures(mixtures: Sequence[LognormalMixture]) -> LognormalMixture:
    """Per-step ``(R, K)`` mixtures as one ``(R, steps, K)`` mixture."""
    r, k = ad.value_of(mixtures[0].weights).shape

    def stack(name: str) -> ad.Tensor:
        return ad.concat(
            [ad.reshape(getattr(m, name), (r, 1, k)) for m in mixtures], axis=1
        )

    return LognormalMixture(stack("weights"), stack("mean_intervals"), stack("scales"))


@dataclass
class ForwardPass:
    """Everything the objective and the evaluator read from one batch."""

    encoding: ad.Tensor
    unrolled: UnrolledEvents
    times: ad.Tensor
    step_means: ad.Tensor
    mixtures: LognormalMixture
    reconstruction: ad.Tensor
    prior_rate: ad.Tensor
    logits: ad.Tensor


@dataclass(frozen=True)
class Predictions:
    """Deterministic model outputs for a list of records, as plain arrays."""

    times: Array
    reconstruction: Array
    inferred_rates: Array
    prior_rates: Array
    probabilities: Array

    @property
    def predicted_classes(self) -> npt.NDArray[np.int64]:
        return np.asarray(self.probabilities.argmax(axis=1), dtype=np.int64)


class EventModel:
    """Maps observation sequences to latent events, a prior rate and a band.

    An MLP encodes the observations. Step ``i`` of the unroller reads the
    encoding together with ``y_i`` and ``y_i - y_{i-1}``. The observation
    head is ``sin(t_i) + residual_scale * tanh(decode(y_S))`` with ``y_S``
    the Euler state at the last inferred event. The prior rate comes from a
    bounded drive, and a linear classifier reads the encoding, the log prior
    rate and the log mean interval.
    """

    def __init__(self, config: AppConfig, n_obs: int | None = None) -> None:
        self._config = config
        self.n_obs = n_obs or config.toy.n_obs

    @property
    def config(self) -> AppConfig:
        return self._config

    @property
    def step_feature_dim(self) -> int:
        return self._config.model.feature_dim + _OBSERVATION_FEATURES

    def init_params(self, rng: Rng) -> Params:
        """Fresh parameters.

        The classifier starts at zero so every class is equally likely.
        """
        m = self._config.model
        mix = self._config.mixture
        prior = self._config.prior
        enc = rng.split(0)
        scale = m.init_scale
        params: Params = {
            "encoder_w1": scale * enc.normal(size=(self.n_obs, m.encoder_hidden)),
            "encoder_b1": np.zeros(m.encoder_hidden),
            "encoder_w2": scale * enc.normal(size=(m.encoder_hidden, m.feature_dim)),
            "encoder_b2": np.zeros(m.feature_dim),
        }
        epde = EpdeParams.init(
            rng.split(1),
            feature_dim=self.step_feature_dim,
            n_components=mix.n_components,
            hidden=m.surrogate_hidden,
            state_dim=m.state_dim,
            output_dim=self.n_obs,
            init_scale=m.init_scale,
            prior_interval=mix.prior_interval,
            prior_scale=mix.prior_scale,
            interval_floor=mix.interval_floor,
            scale_floor=mix.scale_floor,
        )
        params.update({k: np.asarray(v) for k, v in epde.arrays().items()})
        b_lo = float(rate_to_drive(prior.rate_lo))  # type: ignore[arg-type]
        b_hi = float(rate_to_drive(prior.rate_hi))  # type: ignore[arg-type]
        b_0 = float(rate_to_drive(INITIAL_PRIOR_RATE))  # type: ignore[arg-type]
        share = (b_0 - b_lo) / (b_hi - b_lo)
        params["drive_w"] = m.init_scale * rng.split(2).normal(size=(m.feature_dim, 1))
        params["drive_b"] = np.array([math.log(share / (1.0 - share))])
        fused = m.feature_dim + 2
        params["classifier_w"] = np.zeros((fused, len(CLASSES)))
        params["classifier_b"] = np.zeros(len(CLASSES))
        if self._config.graph.learn_sigma:
            params["graph_log_sigma"] = np.array(math.log(self._config.graph.sigma))
        return params

    def epde_params(self, params: Mapping[str, ad.Tensor]) -> EpdeParams:
        m = self._config.model
        mix = self._config.mixture
        return EpdeParams(
            surrogate_w1=params["surrogate_w1"],
            surrogate_b1=params["surrogate_b1"],
            surrogate_w2=params["surrogate_w2"],
            surrogate_b2=params["surrogate_b2"],
            proj_w=params["proj_w"],
            proj_b=params["proj_b"],
            field_w=params["field_w"],
            field_b=params["field_b"],
            decode_w=params["decode_w"],
            decode_b=params["decode_b"],
            alpha_ode=m.alpha_ode,
            substeps=m.substeps,
            interval_floor=mix.interval_floor,
            scale_floor=mix.scale_floor,
        )

    def graph_sigma(self, params: Mapping[str, ad.Tensor]) -> ad.Tensor:
        if "graph_log_sigma" in params:
            return ad.exp(params["graph_log_sigma"])
        return self._config.graph.sigma

    def encode(self, y: Array, params: Mapping[str, ad.Tensor]) -> ad.Tensor:
        if y.shape[1] != self.n_obs:
            raise ShapeError(
                f"Model expects {self.n_obs} observations, got {y.shape[1]}",
                details={"expected": self.n_obs, "got": y.shape[1]},
            )
        hidden = ad.tanh(
            ad.add(ad.matmul(y, params["encoder_w1"]), params["encoder_b1"])
        )
        return ad.tanh(
            ad.add(ad.matmul(hidden, params["encoder_w2"]), params["encoder_b2"])
        )

    def step_features(self, encoding: ad.Tensor, y: Array) -> ad.Tensor:
        """``(steps, R, F)`` features ``[encoding, y_i, y_i - y_{i-1}]``."""
        r, n = y.shape
        f = ad.value_of(encoding).shape[1]
        shared = ad.mul(ad.reshape(encoding, (1, r, f)), np.ones((n, 1, 1)))
        previous = np.concatenate([np.zeros((r, 1)), y[:, :-1]], axis=1)
        local = np.stack([y.T, (y - previous).T], axis=2)
        return ad.concat([shared, local], axis=2)

    def forward(
        self,
        records: Sequence[ToyRecord],
        params: Mapping[str, ad.Tensor],
        rng: Rng,
        mode: SampleMode = SampleMode.MEAN,
        temperature: float = 0.5,
    ) -> ForwardPass:
        """Run the whole model on a batch; parameters may be tape nodes."""
        y = observations(records)
        r = y.shape[0]
        epde = self.epde_params(params)
        encoding = self.encode(y, params)
        features = self.step_features(encoding, y)
        unrolled = unroll_events(
            features,
            math.inf,
            epde,
            rng,
            mode,
            temperature=temperature,
            max_events=self.n_obs,
        )
        times = unrolled.stacked_times()
        step_means = unrolled.stacked_means()

        last_features = ad.getitem(features, self.n_obs - 1)
        t_end = ad.getitem(times, (slice(None), self.n_obs - 1))
        decoded = evolve_ode(last_features, 0.0, t_end, epde)
        reconstruction = ad.add(
            ad.sin(times),
            ad.mul(self._config.model.residual_scale, ad.tanh(decoded)),
        )

        prior = self._config.prior
        drive_x = ad.add(ad.matmul(encoding, params["drive_w"]), params["drive_b"])
        drive = bounded_drive(ad.reshape(drive_x, (r,)), prior.rate_lo, prior.rate_hi)
        prior_rate = drive_to_rate(drive)

        mean_interval = ad.mean(step_means, axis=1)
        fused = ad.concat(
            [
                encoding,
                ad.reshape(ad.log(prior_rate), (r, 1)),
                ad.reshape(ad.log(mean_interval), (r, 1)),
            ],
            axis=1,
        )
        logits = ad.add(
            ad.matmul(fused, params["classifier_w"]), params["classifier_b"]
        )
        return ForwardPass(
            encoding=encoding,
            unrolled=unrolled,
            times=times,
            step_means=step_means,
            mixtures=stack_mixtures(unrolled.mixtures),
            reconstruction=reconstruction,
            prior_rate=prior_rate,
            logits=logits,
        )

    def predict(
        self, records: Sequence[ToyRecord], params: Params, rng: Rng
    ) -> Predictions:
        """Mixture-mean predictions.

        The inferred rate is the mean rate proxy over each record's span.
        """
        out = self.forward(records, params, rng, SampleMode.MEAN)
        times = np.asarray(ad.value_of(out.times))
        means = np.asarray(ad.value_of(out.step_means))
        grid_points = self._config.eval.rate_grid
        inferred = np.empty(times.shape[0])
        for i in range(times.shape[0]):
            bounds = np.cumsum(means[i])
            grid = np.linspace(0.0, bounds[-1], grid_points)
            proxy = rate_proxy_values(
                means[i : i + 1], bounds[None, :], grid, float(grid[1] - grid[0])
            )
            inferred[i] = float(np.mean(ad.value_of(proxy)))
        logits = np.asarray(ad.value_of(out.logits))
        shifted = np.exp(logits - logits.max(axis=1, keepdims=True))
        return Predictions(
            times=times,
            reconstruction=np.asarray(ad.value_of(out.reconstruction)),
            inferred_rates=inferred,
            prior_rates=np.asarray(ad.value_of(out.prior_rate)),
            probabilities=shifted / shifted.sum(axis=1, keepdims=True),
        )

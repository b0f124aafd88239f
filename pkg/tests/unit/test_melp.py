"""Tests for the lognormal interval mixture."""

from __future__ import annotations

import math

import numpy as np
import pytest

from event_dynamics.core.exceptions import DomainError, InvalidTemperature
from event_dynamics.core.melp import (
    LognormalMixture,
    SampleMode,
    annealed_temperature,
    categorical_kl_uniform,
    kl_lognormal,
    mean_match_mu,
    mixture_cdf,
    mixture_density,
    mixture_kl_to_prior,
    mixture_mean,
    sample_interval,
)
from event_dynamics.core.models import MixtureSpec
from event_dynamics.numerics import autodiff as ad
from event_dynamics.numerics.quadrature import quad_adaptive
from event_dynamics.numerics.rng import Rng

WEIGHTS = np.array([0.2, 0.5, 0.3])
MEANS = np.array([0.05, 0.1, 0.3])
SCALES = np.array([0.3, 0.5, 0.4])


@pytest.fixture
def mixture() -> LognormalMixture:
    """Three-component mixture."""
    return LognormalMixture(WEIGHTS, MEANS, SCALES)


class TestMeanMatching:
    """Tests for mean matching."""

    def test_component_means(self) -> None:
        """exp(mu + s^2 / 2) recovers the candidate mean."""
        mu = np.asarray(mean_match_mu(MEANS, SCALES))

        np.testing.assert_allclose(np.exp(mu + 0.5 * SCALES**2), MEANS)

    def test_rejects_nonpositive(self) -> None:
        """Mean intervals and scales must be positive."""
        with pytest.raises(DomainError):
            mean_match_mu(np.array([0.0]), np.array([0.5]))

    def test_validate(self, mixture: LognormalMixture) -> None:
        """A well-formed mixture validates; bad weights do not."""
        mixture.validate()
        with pytest.raises(DomainError):
            LognormalMixture(np.array([0.5, 0.6]), MEANS[:2], SCALES[:2]).validate()

    def test_shape_mismatch(self) -> None:
        """Component arrays must share a shape."""
        with pytest.raises(DomainError):
            LognormalMixture(WEIGHTS, MEANS[:2], SCALES)

    def test_from_spec_and_log_means(self) -> None:
        """Specs and log-means build the same mixture."""
        spec = MixtureSpec(
            weights=WEIGHTS.tolist(),
            mean_intervals=MEANS.tolist(),
            scales=SCALES.tolist(),
        )
        from_spec = LognormalMixture.from_spec(spec)
        from_log = LognormalMixture.from_log_means(
            WEIGHTS, np.asarray(from_spec.log_means), SCALES
        )

        np.testing.assert_allclose(np.asarray(from_log.mean_intervals), MEANS)
        assert from_spec.n_components == 3
        assert from_spec.batch_shape == ()


class TestDensity:
    """Tests for the mixture density and distribution function."""

    def test_density_normalizes(self, mixture: LognormalMixture) -> None:
        """The density integrates to one."""
        mass = quad_adaptive(
            lambda t: np.asarray(mixture_density(t, mixture)),
            0.0,
            10.0,
            1e-10,
            vectorized=True,
        )

        assert mass == pytest.approx(1.0, abs=1e-8)

    def test_cdf_integrates_density(self, mixture: LognormalMixture) -> None:
        """The distribution function is the integral of the density."""
        partial = quad_adaptive(
            lambda t: np.asarray(mixture_density(t, mixture)),
            0.0,
            0.12,
            1e-12,
            vectorized=True,
        )

        assert float(mixture_cdf(0.12, mixture)) == pytest.approx(partial, abs=1e-9)

    def test_mean(self, mixture: LognormalMixture) -> None:
        """The closed-form mean is the weighted candidate mean."""
        assert float(mixture_mean(mixture)) == pytest.approx(float(WEIGHTS @ MEANS))

    def test_rejects_nonpositive_interval(self, mixture: LognormalMixture) -> None:
        """Densities need positive intervals."""
        with pytest.raises(DomainError):
            mixture_density(np.array([0.1, 0.0]), mixture)


def _batched(rows: int) -> LognormalMixture:
    return LognormalMixture(
        np.tile(WEIGHTS, (rows, 1)),
        np.tile(MEANS, (rows, 1)),
        np.tile(SCALES, (rows, 1)),
    )


class TestSampleInterval:
    """Tests for sample_interval."""

    def test_hard_samples_match_mean(self) -> None:
        """Hard draws average to the mixture mean."""
        tau, trace = sample_interval(_batched(20_000), Rng(0), SampleMode.HARD)
        draws = np.asarray(tau)

        assert draws.shape == (20_000,)
        assert np.all(draws > 0)
        assert draws.mean() == pytest.approx(float(WEIGHTS @ MEANS), rel=0.03)
        assert trace.component is not None
        assert np.bincount(trace.component, minlength=3) / 20_000 == pytest.approx(
            WEIGHTS, abs=0.02
        )

    def test_mean_mode_is_deterministic(self, mixture: LognormalMixture) -> None:
        """Mean mode draws nothing."""
        tau, trace = sample_interval(mixture, Rng(0), SampleMode.MEAN)

        assert float(tau) == pytest.approx(float(WEIGHTS @ MEANS))
        assert trace.noise.size == 0

    def test_same_stream_same_draw(self, mixture: LognormalMixture) -> None:
        """Sampling is a pure function of the stream."""
        a, _ = sample_interval(_batched(5), Rng(3).split(1), SampleMode.RELAXED)
        b, _ = sample_interval(_batched(5), Rng(3).split(1), SampleMode.RELAXED)

        np.testing.assert_array_equal(np.asarray(a), np.asarray(b))

    def test_relaxed_needs_positive_temperature(
        self, mixture: LognormalMixture
    ) -> None:
        """A zero temperature is invalid."""
        with pytest.raises(InvalidTemperature):
            sample_interval(mixture, Rng(0), SampleMode.RELAXED, temperature=0.0)

    def test_relaxed_is_differentiable(self) -> None:
        """Relaxed draws carry gradients to every mixture parameter."""
        tape = ad.Tape()
        weights = tape.parameter("w", np.tile(WEIGHTS, (4, 1)))
        means = tape.parameter("tau", np.tile(MEANS, (4, 1)))
        scales = tape.parameter("s", np.tile(SCALES, (4, 1)))
        tau, trace = sample_interval(
            LognormalMixture(weights, means, scales), Rng(5), SampleMode.RELAXED
        )
        grads = ad.tape_grad(ad.sum_(tau), tape)  # type: ignore[arg-type]

        assert trace.soft_assignment is not None
        for name in ("w", "tau", "s"):
            assert np.all(np.isfinite(grads[name]))
            assert np.any(grads[name] != 0.0)

    def test_relaxed_gradient_matches_finite_difference(self) -> None:
        """Pathwise gradients of relaxed draws agree with central differences."""
        h = 1e-6
        for i in range(5):
            draw = Rng(11).split(i)
            arrays = {
                "w": draw.generator.dirichlet(np.ones(3), size=4),
                "tau": draw.uniform(0.05, 0.5, size=(4, 3)),
                "s": draw.uniform(0.2, 0.8, size=(4, 3)),
            }

            def total(values: dict[str, np.ndarray], i: int = i) -> float:
                mix = LognormalMixture(values["w"], values["tau"], values["s"])
                tau, _ = sample_interval(mix, Rng(12).split(i), SampleMode.RELAXED)
                return float(np.sum(ad.value_of(tau)))

            tape = ad.Tape()
            nodes = {k: tape.parameter(k, v) for k, v in arrays.items()}
            tau, _ = sample_interval(
                LognormalMixture(nodes["w"], nodes["tau"], nodes["s"]),
                Rng(12).split(i),
                SampleMode.RELAXED,
            )
            grads = ad.tape_grad(ad.sum_(tau), tape)  # type: ignore[arg-type]

            for name, value in arrays.items():
                numeric = np.zeros_like(value)
                for idx in np.ndindex(value.shape):
                    up = {k: v.copy() for k, v in arrays.items()}
                    down = {k: v.copy() for k, v in arrays.items()}
                    up[name][idx] += h
                    down[name][idx] -= h
                    numeric[idx] = (total(up) - total(down)) / (2 * h)
                np.testing.assert_allclose(grads[name], numeric, rtol=0.05, atol=1e-4)

    @pytest.mark.slow
    def test_hard_means_on_random_mixtures(self) -> None:
        """A million hard draws per random mixture average within 1% of its mean."""
        n = 1_000_000
        for i in range(50):
            draw = Rng(13).split(i)
            w = draw.generator.dirichlet(np.ones(3))
            means = draw.uniform(0.05, 0.5, size=3)
            scales = draw.uniform(0.2, 0.6, size=3)
            mix = LognormalMixture(
                np.tile(w, (n, 1)), np.tile(means, (n, 1)), np.tile(scales, (n, 1))
            )
            tau, _ = sample_interval(mix, Rng(14).split(i), SampleMode.HARD)
            draws = np.asarray(tau)

            assert np.all(draws > 0)
            assert draws.mean() == pytest.approx(float(w @ means), rel=0.01)


class TestKl:
    """Tests for the closed-form KL terms."""

    def test_kl_lognormal_known_value(self) -> None:
        """Matches the Gaussian KL of the log-intervals."""
        value = float(kl_lognormal(0.0, 0.5, 0.3, 0.8))
        expected = math.log(0.8 / 0.5) + (0.25 + 0.09) / (2 * 0.64) - 0.5

        assert value == pytest.approx(expected)

    def test_kl_lognormal_zero_for_equal(self) -> None:
        """Equal distributions have zero KL."""
        assert float(kl_lognormal(-1.0, 0.4, -1.0, 0.4)) == pytest.approx(0.0)

    def test_categorical_kl(self) -> None:
        """Uniform weights cost nothing; a one-hot costs log K."""
        assert float(categorical_kl_uniform(np.full(3, 1 / 3))) == pytest.approx(
            0.0, abs=1e-12
        )
        assert float(categorical_kl_uniform(np.array([1.0, 0.0, 0.0]))) == (
            pytest.approx(math.log(3.0))
        )

    def test_mixture_matching_prior(self) -> None:
        """Uniform components equal to the prior give zero KL."""
        mix = LognormalMixture.from_log_means(
            np.full(3, 1 / 3), np.full(3, -2.5), np.full(3, 0.5)
        )

        assert float(mixture_kl_to_prior(mix, -2.5, 0.5)) == pytest.approx(
            0.0, abs=1e-12
        )

    def test_annealed_temperature(self) -> None:
        """Temperature decays to its floor."""
        assert annealed_temperature(0.5, 0.95, 0.1, 0) == 0.5
        assert annealed_temperature(0.5, 0.95, 0.1, 2) == pytest.approx(0.45125)
        assert annealed_temperature(0.5, 0.95, 0.1, 100) == 0.1

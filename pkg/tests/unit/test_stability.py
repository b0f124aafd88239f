"""Tests for the stability verification harness."""

from __future__ import annotations

import csv
import math
from pathlib import Path

import numpy as np
import pytest

from event_dynamics.core import stability
from event_dynamics.core.config import StabilityConfig
from event_dynamics.core.exceptions import TheoremViolation
from event_dynamics.core.stability import (
    folded_edge_expectation,
    run_deterministic_check,
    run_gaussian_expectation_check,
    run_stability,
    run_subgaussian_check,
    subgaussian_tail_bound,
    write_stability_csv,
)
from event_dynamics.numerics.rng import Rng


class TestClosedForms:
    """Tests for the closed-form helpers."""

    def test_folded_expectation_matches_monte_carlo(self) -> None:
        """The closed form agrees with a large sample average."""
        xi = Rng(0).normal(0.0, 0.1, size=200_000)
        empirical = float(np.exp(-2.0 * np.abs(0.3 + xi)).mean())

        assert float(folded_edge_expectation(np.array(0.3), 2.0, 0.1)) == (
            pytest.approx(empirical, abs=2e-3)
        )

    def test_folded_expectation_small_noise(self) -> None:
        """Vanishing noise recovers the clean edge score."""
        value = float(folded_edge_expectation(np.array(0.3), 2.0, 1e-4))

        assert value == pytest.approx(math.exp(-0.6), rel=1e-6)

    def test_tail_bound(self) -> None:
        """2 exp(-MS tau^2 / (2 alpha^2 sigma^2))."""
        assert subgaussian_tail_bound(0.1, 2.0, 0.1, 128) == pytest.approx(
            2.0 * math.exp(-16.0)
        )


class TestDeterministicCheck:
    """Tests for the bounded-noise check."""

    def test_bounds_hold(self) -> None:
        """Every trial stays inside every bound."""
        report = run_deterministic_check(4, 2.0, 0.1, 128, 50, Rng(0))

        assert report.check == "deterministic"
        assert len(report.trials) == 50
        assert report.violations == 0
        assert all(t.max_deviation <= t.entry_bound for t in report.trials)
        assert [t.trial for t in report.trials] == list(range(50))

    def test_independent_of_workers(self) -> None:
        """Chunked trials give the same report for any worker count."""
        one = run_deterministic_check(4, 2.0, 0.1, 8192, 40, Rng(1), workers=1)
        three = run_deterministic_check(4, 2.0, 0.1, 8192, 40, Rng(1), workers=3)

        assert one == three

    def test_violation_raises_when_strict(
        self, monkeypatch: pytest.MonkeyPatch
    ) -> None:
        """A broken bound raises under strict mode and is counted otherwise."""
        monkeypatch.setattr(
            stability,
            "_exceeds",
            lambda value, bound: np.ones(np.shape(value), dtype=bool),
        )

        with pytest.raises(TheoremViolation):
            run_deterministic_check(3, 1.0, 0.1, 16, 5, Rng(0))
        report = run_deterministic_check(3, 1.0, 0.1, 16, 5, Rng(0), strict=False)

        assert report.violations == 5

    def test_rejects_single_channel(self) -> None:
        """A graph needs two channels."""
        with pytest.raises(ValueError):
            run_deterministic_check(1, 2.0, 0.1, 16, 5, Rng(0))


class TestGaussianChecks:
    """Tests for the sub-Gaussian tail and expectation checks."""

    def test_tail_frequencies_below_bound(self) -> None:
        """Centered deviations respect the tail bound."""
        taus = [0.0, 0.01, 0.02, 0.05]
        report = run_subgaussian_check(4, 2.0, 0.1, 128, 200, taus, Rng(2))

        assert [t.tau for t in report.tail] == taus
        assert report.tail[0].frequency == 1.0
        assert report.tail[0].samples == 200 * 6
        assert report.violations == 0

    def test_expectation_below_bound(self) -> None:
        """Mean deviations stay under alpha sigma sqrt(2 / pi)."""
        report = run_gaussian_expectation_check(4, 2.0, 0.1, 200, Rng(3))
        entry, frobenius = report.expectation

        assert entry.quantity == "entry"
        assert entry.bound == pytest.approx(0.2 * math.sqrt(2.0 / math.pi))
        assert frobenius.bound == pytest.approx(entry.bound * math.sqrt(12.0))
        assert report.violations == 0

    def test_rejects_bad_tau_grid(self) -> None:
        """Thresholds must be nonnegative."""
        with pytest.raises(ValueError):
            run_subgaussian_check(3, 2.0, 0.1, 16, 5, [-0.1], Rng(0))


class TestRunStability:
    """Tests for run_stability and its CSV."""

    def test_uniform_runs_deterministic_check(self) -> None:
        """Uniform noise gets one report."""
        config = StabilityConfig(channels=3, grid_points=4, samples=2, trials=5)
        reports = run_stability(config, Rng(0))

        assert [r.check for r in reports] == ["deterministic"]
        assert reports[0].parameters["ms"] == 8

    def test_gaussian_runs_both_checks(self) -> None:
        """Gaussian noise gets the tail and expectation reports."""
        config = StabilityConfig(
            noise="gaussian", channels=3, grid_points=4, samples=2, trials=5
        )
        reports = run_stability(config, Rng(0))

        assert [r.check for r in reports] == ["subgaussian", "gaussian_expectation"]

    def test_csv(self, temp_dir: Path) -> None:
        """One row per trial under a shared header."""
        config = StabilityConfig(channels=3, grid_points=4, samples=2, trials=5)
        path = temp_dir / "out" / "stability.csv"
        write_stability_csv(path, run_stability(config, Rng(0)))

        with path.open(encoding="utf-8") as f:
            rows = list(csv.DictReader(f))

        assert len(rows) == 5
        assert rows[0]["check"] == "deterministic"
        assert rows[0]["section"] == "trial"
        assert rows[0]["entry_violation"] == "False"

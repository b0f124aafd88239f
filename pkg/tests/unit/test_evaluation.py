"""Tests for evaluation metrics."""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np
import pytest

from event_dynamics.core.config import AppConfig, EvalConfig
from event_dynamics.core.exceptions import EmptyBand
from event_dynamics.core.models import Split
from event_dynamics.core.toygen import band_by_name
from event_dynamics.numerics.rng import Rng
from event_dynamics.pipeline.checkpoint import make_checkpoint
from event_dynamics.pipeline.evaluation import (
    ConstantRatePredictor,
    ModelPredictor,
    band_metrics,
    bootstrap_median_ci,
    cosine_similarity,
    evaluate_split,
    interval_iou,
    write_rates_csv,
    write_scatter_csv,
)
from event_dynamics.pipeline.model import EventModel


class TestMetrics:
    """Tests for the scalar metrics."""

    def test_cosine_similarity(self) -> None:
        """Test orthogonal, parallel and zero vectors."""
        assert cosine_similarity(np.array([1.0, 0.0]), np.array([0.0, 1.0])) == 0.0
        assert cosine_similarity(np.array([1.0, 2.0]), np.array([2.0, 4.0])) == (
            pytest.approx(1.0)
        )
        assert cosine_similarity(np.zeros(2), np.array([1.0, 1.0])) == 0.0

    def test_interval_iou(self) -> None:
        """Test overlap, disjoint and degenerate intervals."""
        assert interval_iou((0.0, 2.0), (1.0, 3.0)) == pytest.approx(1.0 / 3.0)
        assert interval_iou((5.0, 10.0), (1.0, 1.0)) == 0.0
        assert interval_iou((1.0, 1.0), (1.0, 1.0)) == 1.0

    def test_bootstrap_brackets_median(self) -> None:
        """Test the interval contains the median."""
        median, lo, hi = bootstrap_median_ci(np.arange(1.0, 21.0), 500, 0.95, Rng(0))

        assert median == 10.5
        assert lo <= median <= hi
        assert lo < hi

    def test_bootstrap_constant(self) -> None:
        """Test constant values collapse the interval."""
        assert bootstrap_median_ci(np.full(5, 2.0), 100, 0.95, Rng(0)) == (
            2.0,
            2.0,
            2.0,
        )

    def test_band_metrics(self) -> None:
        """Test rates inside the band overlap it."""
        rates = np.linspace(6.0, 9.0, 31)
        metrics = band_metrics(
            band_by_name("low"), rates, EvalConfig(bootstrap_resamples=200), Rng(1)
        )

        assert metrics.n_records == 31
        assert metrics.median_rate == pytest.approx(7.5)
        assert 0.0 < metrics.iou < 1.0

    def test_empty_band(self) -> None:
        """Test a band without records is an error."""
        with pytest.raises(EmptyBand):
            band_metrics(band_by_name("mid"), np.array([]), EvalConfig(), Rng(0))


class TestEvaluate:
    """Tests for evaluating predictors on a split."""

    def test_collapsed_control(
        self, small_config: AppConfig, data_dir: Path, temp_dir: Path
    ) -> None:
        """Test a constant 1 Hz predictor misses every band."""
        report, records = evaluate_split(
            ConstantRatePredictor(rate=1.0),
            data_dir,
            Split.TEST,
            small_config.eval,
            Rng(0),
        )

        assert len(records) == 6
        assert [m.iou for m in report.bands] == [0.0, 0.0, 0.0]
        assert report.accuracy is None
        assert len(report.scatter) == 6 * 8
        assert -1.0 <= report.mean_cosine_similarity <= 1.0

        scatter = temp_dir / "out" / "scatter.csv"
        rates = temp_dir / "out" / "rates.csv"
        write_scatter_csv(scatter, report)
        write_rates_csv(rates, report, records)
        with rates.open(encoding="utf-8") as f:
            rows = list(csv.DictReader(f))

        assert len(scatter.read_text().splitlines()) == 1 + 6 * 8
        assert len(rows) == 6
        assert float(rows[0]["inferred_rate"]) == 1.0

    def test_model_predictor(self, small_config: AppConfig, data_dir: Path) -> None:
        """Test a checkpointed model is scored with accuracy."""
        model = EventModel(small_config)
        checkpoint = make_checkpoint(
            model.init_params(Rng(0)), small_config, epoch=0, n_obs=8
        )
        predictor = ModelPredictor.from_checkpoint(checkpoint)
        report, _ = evaluate_split(
            predictor, data_dir, Split.VAL, small_config.eval, Rng(0)
        )

        assert report.accuracy is not None
        assert report.macro_f1 is not None
        assert len(report.inferred_rates) == 6
        assert all(r > 0 for r in report.inferred_rates.values())

"""Evaluation: reconstruction similarity, rate recovery and band classification."""

from __future__ import annotations

import csv
import logging
from collections.abc import Sequence
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol

import numpy as np
import numpy.typing as npt
from scipy.stats import bootstrap
from sklearn.metrics import accuracy_score, f1_score

from event_dynamics.core.config import EvalConfig
from event_dynamics.core.exceptions import EmptyBand
from event_dynamics.core.models import (
    BandMetrics,
    BandSpec,
    EvalReport,
    ScatterPair,
    Split,
    ToyRecord,
)
from event_dynamics.core.toygen import DEFAULT_BANDS
from event_dynamics.numerics.rng import Rng
from event_dynamics.pipeline.checkpoint import Checkpoint
from event_dynamics.pipeline.io import load_split
from event_dynamics.pipeline.model import CLASSES, EventModel, Predictions, labels

logger = logging.getLogger(__name__)

Array = npt.NDArray[np.float64]


class Predictor(Protocol):
    """Anything that maps records to :class:`Predictions`."""

    has_classifier: bool

    def __call__(self, records: Sequence[ToyRecord], rng: Rng) -> Predictions: ...


@dataclass(frozen=True)
class ModelPredictor:
    """A trained :class:`EventModel` with fixed parameters."""

    model: EventModel
    params: dict[str, Array]
    has_classifier: bool = True

    @classmethod
    def from_checkpoint(cls, checkpoint: Checkpoint) -> ModelPredictor:
        model = EventModel(checkpoint.app_config(), checkpoint.n_obs)
        return cls(model=model, params=checkpoint.arrays())

    def __call__(self, records: Sequence[ToyRecord], rng: Rng) -> Predictions:
        return self.model.predict(records, self.params, rng)


@dataclass(frozen=True)
class ConstantRatePredictor:
    """Collapsed control that places events every ``1 / rate`` seconds."""

    rate: float = 1.0
    has_classifier: bool = False

    def __call__(self, records: Sequence[ToyRecord], rng: Rng) -> Predictions:
        n = len(records)
        steps = np.array([r.n_obs for r in records])
        if np.unique(steps).size > 1:
            raise ValueError("ConstantRatePredictor needs records of equal length")
        times = np.tile(np.arange(1, steps[0] + 1) / self.rate, (n, 1))
        return Predictions(
            times=times,
            reconstruction=np.sin(times),
            inferred_rates=np.full(n, self.rate),
            prior_rates=np.full(n, self.rate),
            probabilities=np.full((n, len(CLASSES)), 1.0 / len(CLASSES)),
        )


def cosine_similarity(a: Array, b: Array) -> float:
    """Cosine of the angle between two vectors; zero if either vanishes."""
    x = np.asarray(a, dtype=np.float64).reshape(-1)
    y = np.asarray(b, dtype=np.float64).reshape(-1)
    denom = float(np.linalg.norm(x) * np.linalg.norm(y))
    if denom == 0.0:
        return 0.0
    return float(np.clip(np.dot(x, y) / denom, -1.0, 1.0))


def interval_iou(a: tuple[float, float], b: tuple[float, float]) -> float:
    """Intersection over union of two closed intervals."""
    lo = max(a[0], b[0])
    hi = min(a[1], b[1])
    union = max(a[1], b[1]) - min(a[0], b[0])
    if union <= 0.0:
        return 1.0 if a == b else 0.0
    return max(hi - lo, 0.0) / union


def bootstrap_median_ci(
    values: Array, resamples: int, confidence: float, rng: Rng
) -> tuple[float, float, float]:
    """Median with a percentile-bootstrap confidence interval."""
    x = np.asarray(values, dtype=np.float64)
    median = float(np.median(x))
    if x.size < 2 or np.all(x == x[0]):
        return median, median, median
    result = bootstrap(
        (x,),
        np.median,
        n_resamples=resamples,
        confidence_level=confidence,
        method="percentile",
        random_state=rng.generator,
    )
    lo = float(result.confidence_interval.low)
    hi = float(result.confidence_interval.high)
    return median, min(lo, median), max(hi, median)


def band_metrics(
    band: BandSpec, rates: Array, config: EvalConfig, rng: Rng
) -> BandMetrics:
    """Median inferred rate, its bootstrap interval and the IoU with the band range.

    Raises:
        EmptyBand: If ``rates`` is empty.
    """
    if rates.size == 0:
        raise EmptyBand(band.name.value)
    median, ci_lo, ci_hi = bootstrap_median_ci(
        rates, config.bootstrap_resamples, config.confidence, rng
    )
    tail = 50.0 * (1.0 - config.confidence)
    lo_hi = np.percentile(rates, [tail, 100.0 - tail])
    interval_lo, interval_hi = float(lo_hi[0]), float(lo_hi[1])
    return BandMetrics(
        band=band.name,
        n_records=int(rates.size),
        median_rate=median,
        ci_lo=ci_lo,
        ci_hi=ci_hi,
        interval_lo=interval_lo,
        interval_hi=interval_hi,
        iou=interval_iou((band.lo, band.hi), (interval_lo, interval_hi)),
    )


def evaluate(
    predictor: Predictor,
    records: Sequence[ToyRecord],
    config: EvalConfig,
    rng: Rng,
    *,
    bands: Sequence[BandSpec] = DEFAULT_BANDS,
) -> EvalReport:
    """Score a predictor on a split.

    Raises:
        EmptyBand: If a requested band has no records.
    """
    if not records:
        raise EmptyBand(bands[0].name.value if bands else "any")
    predictions = predictor(records, rng.split(0))
    y = np.array([r.observations for r in records], dtype=np.float64)
    cs = {
        r.record_id: cosine_similarity(predictions.reconstruction[i], y[i])
        for i, r in enumerate(records)
    }
    inferred = {
        r.record_id: float(predictions.inferred_rates[i])
        for i, r in enumerate(records)
    }
    record_bands = np.array([r.band.value for r in records])

    metrics = []
    for b, band in enumerate(bands):
        rates = predictions.inferred_rates[record_bands == band.name.value]
        metrics.append(band_metrics(band, rates, config, rng.split(1, b)))

    scatter = [
        ScatterPair(
            record_id=r.record_id,
            band=r.band,
            index=k,
            predicted=float(predictions.times[i, k]),
            true=float(r.event_times[k]),
        )
        for i, r in enumerate(records)
        for k in range(min(len(r.event_times), predictions.times.shape[1]))
    ]

    accuracy = macro_f1 = None
    if predictor.has_classifier:
        truth = labels(records)
        predicted = predictions.predicted_classes
        accuracy = float(accuracy_score(truth, predicted))
        macro_f1 = float(
            f1_score(
                truth,
                predicted,
                labels=list(range(len(CLASSES))),
                average="macro",
                zero_division=0,
            )
        )

    mean_cs = float(np.mean(list(cs.values())))
    logger.info(f"Mean cosine similarity {mean_cs:.4f} over {len(records)} records")
    return EvalReport(
        cosine_similarity=cs,
        mean_cosine_similarity=mean_cs,
        inferred_rates=inferred,
        bands=metrics,
        scatter=scatter,
        accuracy=accuracy,
        macro_f1=macro_f1,
    )


def bands_present(
    records: Sequence[ToyRecord], bands: Sequence[BandSpec] = DEFAULT_BANDS
) -> list[BandSpec]:
    names = {r.band for r in records}
    return [b for b in bands if b.name in names]


def write_scatter_csv(path: Path, report: EvalReport) -> None:
    """Boundary-time pairs, one row per matched event."""
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["record_id", "band", "index", "predicted", "true"])
        for p in report.scatter:
            writer.writerow(
                [p.record_id, p.band.value, p.index, repr(p.predicted), repr(p.true)]
            )


def write_rates_csv(
    path: Path, report: EvalReport, records: Sequence[ToyRecord]
) -> None:
    """Inferred against true rate per record, the input of a rate density plot."""
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["record_id", "band", "true_rate", "inferred_rate"])
        for r in records:
            writer.writerow(
                [
                    r.record_id,
                    r.band.value,
                    repr(r.rate),
                    repr(report.inferred_rates[r.record_id]),
                ]
            )


def evaluate_split(
    predictor: Predictor,
    data_dir: Path,
    split: Split,
    config: EvalConfig,
    rng: Rng,
) -> tuple[EvalReport, list[ToyRecord]]:
    """Load one split and score it on the bands it contains.

    Raises:
        DatasetError: If the split is missing or fails its digest check.
        EmptyBand: If the split holds no records.
    """
    records = load_split(data_dir, split)
    report = evaluate(predictor, records, config, rng, bands=bands_present(records))
    return report, records

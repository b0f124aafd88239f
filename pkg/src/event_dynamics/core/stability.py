"""Monte-Carlo verification of the event-lag graph stability bounds.

Every check draws base lags ``U(-1, 1)`` for ``MS`` samples of each channel
pair, perturbs them with antisymmetric lag noise, builds both adjacencies
through :func:`~event_dynamics.core.erg.adjacency_from_lags` and compares
the deviation ``Delta = A_noisy - A_clean`` with its bound.

Trials run in fixed-size chunks, each on its own child stream, so reports
are identical for any worker count.
"""

from __future__ import annotations

import csv
import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass
from pathlib import Path
from typing import Literal

import numpy as np
import numpy.typing as npt
from pydantic import BaseModel
from scipy.special import log_ndtr

from event_dynamics.core.config import StabilityConfig
from event_dynamics.core.erg import adjacency_from_lags
from event_dynamics.core.exceptions import TheoremViolation
from event_dynamics.core.models import (
    ExpectationRecord,
    StabilityReport,
    TailRecord,
    TrialRecord,
)
from event_dynamics.core.parallel import ordered_map
from event_dynamics.numerics.rng import Rng

logger = logging.getLogger(__name__)

Array = npt.NDArray[np.float64]
NoiseModel = Literal["uniform", "gaussian"]

RELATIVE_SLACK = 1e-12
ABSOLUTE_SLACK = 4 * float(np.finfo(np.float64).eps)
STANDARD_ERRORS = 3.0
_CHUNK_ENTRIES = 2**21


@dataclass(frozen=True)
class _Chunk:
    index: int
    start: int
    size: int


@dataclass(frozen=True)
class _Ensemble:
    """Lags, noise and deviations of one chunk of trials."""

    base: Array
    noise: Array
    delta: Array


def _antisymmetric(pairs: Array, channels: int) -> Array:
    """Fill ``(..., P)`` upper-triangle values into ``(..., C, C)``, ``X^T = -X``."""
    upper, lower = np.triu_indices(channels, k=1)
    out = np.zeros((*pairs.shape[:-1], channels, channels))
    out[..., upper, lower] = pairs
    out[..., lower, upper] = -pairs
    return out


def _upper(matrices: Array) -> Array:
    c = matrices.shape[-1]
    upper, lower = np.triu_indices(c, k=1)
    return matrices[..., upper, lower]


def _chunks(trials: int, channels: int, ms: int) -> list[_Chunk]:
    size = max(1, _CHUNK_ENTRIES // (ms * channels * channels))
    return [
        _Chunk(index=i, start=start, size=min(size, trials - start))
        for i, start in enumerate(range(0, trials, size))
    ]


def _ensemble(
    rng: Rng,
    chunk: _Chunk,
    channels: int,
    alpha: float,
    ms: int,
    noise: NoiseModel,
    level: float,
) -> _Ensemble:
    stream = rng.split(chunk.index)
    pairs = channels * (channels - 1) // 2
    shape = (chunk.size, ms, pairs)
    base = stream.uniform(-1.0, 1.0, size=shape)
    if noise == "uniform":
        xi = stream.uniform(-level, level, size=shape)
    else:
        xi = stream.normal(0.0, level, size=shape)
    clean_lags = _antisymmetric(base, channels)
    noisy_lags = _antisymmetric(base + xi, channels)
    clean = np.asarray(adjacency_from_lags(clean_lags, alpha, sample_axes=(1,)))
    noisy = np.asarray(adjacency_from_lags(noisy_lags, alpha, sample_axes=(1,)))
    return _Ensemble(base=base, noise=xi, delta=noisy - clean)


def _exceeds(value: Array, bound: Array | float) -> Array:
    return np.asarray(value > bound * (1.0 + RELATIVE_SLACK) + ABSOLUTE_SLACK)


def folded_edge_expectation(lag: Array, alpha: float, sigma: float) -> Array:
    """``E exp(-alpha |lag + xi|)`` for ``xi ~ N(0, sigma^2)``, in closed form."""
    x = np.asarray(lag, dtype=np.float64)
    shift = 0.5 * (alpha * sigma) ** 2
    right = shift - alpha * x + log_ndtr(x / sigma - alpha * sigma)
    left = shift + alpha * x + log_ndtr(-x / sigma - alpha * sigma)
    return np.asarray(np.exp(right) + np.exp(left))


def subgaussian_tail_bound(tau: float, alpha: float, sigma: float, ms: int) -> float:
    """``2 exp(-MS tau^2 / (2 alpha^2 sigma^2))``."""
    return 2.0 * math.exp(-ms * tau * tau / (2.0 * alpha * alpha * sigma * sigma))


def _validate(channels: int, alpha: float, ms: int, trials: int) -> None:
    if channels < 2:
        raise ValueError(f"Need at least two channels, got {channels}")
    if alpha <= 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    if ms < 1:
        raise ValueError(f"MS must be at least 1, got {ms}")
    if trials < 1:
        raise ValueError(f"Need at least one trial, got {trials}")


def _finish(report: StabilityReport, strict: bool) -> StabilityReport:
    violations = report.violations
    if violations:
        logger.warning(f"{report.check} check: {violations} bound violations")
        if strict:
            raise TheoremViolation(
                f"{violations} violations in the {report.check} check",
                details={"check": report.check, "parameters": report.parameters},
            )
    else:
        logger.info(f"{report.check} check passed")
    return report


def run_deterministic_check(
    channels: int,
    alpha: float,
    eps_inf: float,
    ms: int,
    trials: int,
    rng: Rng,
    *,
    workers: int = 1,
    strict: bool = True,
) -> StabilityReport:
    """Check the bounded-noise deviation bounds on every trial.

    Per trial this asserts ``max |Delta_ij| <= alpha eps``, the entry-wise
    ``|Delta_ij| <= alpha mean|xi_ij|``, ``||Delta||_F <= alpha eps
    sqrt(C(C-1))`` and ``||Delta||_F <= (alpha / MS) sum ||Xi||_F``.

    Raises:
        TheoremViolation: If ``strict`` and any trial breaks a bound.
    """
    _validate(channels, alpha, ms, trials)
    if eps_inf < 0:
        raise ValueError(f"eps_inf must be nonnegative, got {eps_inf}")
    entry_bound = alpha * eps_inf
    frobenius_bound = entry_bound * math.sqrt(channels * (channels - 1))

    def run(chunk: _Chunk) -> list[TrialRecord]:
        ens = _ensemble(rng, chunk, channels, alpha, ms, "uniform", eps_inf)
        magnitude = np.abs(ens.delta)
        max_dev = magnitude.max(axis=(1, 2))
        fro = np.sqrt((ens.delta**2).sum(axis=(1, 2)))
        entry_avg = alpha * np.abs(ens.noise).mean(axis=1)
        # each pair appears twice in a C x C matrix
        noise_fro = np.sqrt(2.0 * (ens.noise**2).sum(axis=2))
        avg_fro = alpha * noise_fro.mean(axis=1)
        entry_bad = _exceeds(max_dev, entry_bound) | _exceeds(
            _upper(magnitude), entry_avg
        ).any(axis=1)
        fro_bad = _exceeds(fro, frobenius_bound) | _exceeds(fro, avg_fro)
        return [
            TrialRecord(
                trial=chunk.start + i,
                alpha=alpha,
                noise="uniform",
                noise_level=eps_inf,
                channels=channels,
                ms=ms,
                max_deviation=float(max_dev[i]),
                frobenius_deviation=float(fro[i]),
                entry_bound=entry_bound,
                frobenius_bound=frobenius_bound,
                averaged_frobenius_bound=float(avg_fro[i]),
                entry_violation=bool(entry_bad[i]),
                frobenius_violation=bool(fro_bad[i]),
            )
            for i in range(chunk.size)
        ]

    chunks = _chunks(trials, channels, ms)
    records = [r for part in ordered_map(run, chunks, workers) for r in part]
    report = StabilityReport(
        check="deterministic",
        parameters={
            "channels": channels,
            "alpha": alpha,
            "noise": "uniform",
            "eps_inf": eps_inf,
            "ms": ms,
            "trials": trials,
            "seed": rng.seed,
            "stream": list(rng.stream),
        },
        trials=records,
    )
    return _finish(report, strict)


def run_subgaussian_check(
    channels: int,
    alpha: float,
    sigma: float,
    ms: int,
    trials: int,
    tau_grid: Sequence[float],
    rng: Rng,
    *,
    workers: int = 1,
    strict: bool = True,
) -> StabilityReport:
    """Compare tail frequencies of the centered deviation with the Gaussian bound.

    The centering uses the closed-form expectation of the noisy edge score,
    so the frequency of ``|Delta_ij - E Delta_ij| >= tau`` over all trials
    and pairs ``i < j`` must stay below ``2 exp(-MS tau^2 / (2 alpha^2
    sigma^2))`` plus three binomial standard errors.

    Raises:
        TheoremViolation: If ``strict`` and a tail frequency exceeds its bound.
    """
    _validate(channels, alpha, ms, trials)
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    taus = np.asarray(tau_grid, dtype=np.float64)
    if taus.size == 0 or np.any(taus < 0):
        raise ValueError("tau_grid must hold nonnegative thresholds")

    def run(chunk: _Chunk) -> npt.NDArray[np.int64]:
        ens = _ensemble(rng, chunk, channels, alpha, ms, "gaussian", sigma)
        clean = np.exp(-alpha * np.abs(ens.base)).mean(axis=1)
        expected = folded_edge_expectation(ens.base, alpha, sigma).mean(axis=1)
        centered = np.abs(_upper(ens.delta) - (expected - clean)).reshape(-1)
        return np.asarray(
            (centered[None, :] >= taus[:, None]).sum(axis=1), dtype=np.int64
        )

    chunks = _chunks(trials, channels, ms)
    exceedances = np.sum(ordered_map(run, chunks, workers), axis=0)
    samples = trials * channels * (channels - 1) // 2
    tail = []
    for tau, count in zip(taus, exceedances, strict=True):
        bound = subgaussian_tail_bound(float(tau), alpha, sigma, ms)
        p = min(bound, 1.0)
        se = math.sqrt(p * (1.0 - p) / samples)
        frequency = int(count) / samples
        tail.append(
            TailRecord(
                tau=float(tau),
                bound=bound,
                frequency=frequency,
                standard_error=se,
                exceedances=int(count),
                samples=samples,
                violated=frequency > bound + STANDARD_ERRORS * se,
            )
        )
    report = StabilityReport(
        check="subgaussian",
        parameters={
            "channels": channels,
            "alpha": alpha,
            "noise": "gaussian",
            "sigma": sigma,
            "ms": ms,
            "trials": trials,
            "seed": rng.seed,
            "stream": list(rng.stream),
        },
        tail=tail,
    )
    return _finish(report, strict)


def run_gaussian_expectation_check(
    channels: int,
    alpha: float,
    sigma: float,
    trials: int,
    rng: Rng,
    ms: int = 128,
    *,
    workers: int = 1,
    strict: bool = True,
) -> StabilityReport:
    """Compare mean entry and Frobenius deviations with their Gaussian bounds.

    The entry bound is ``alpha sigma sqrt(2/pi)`` and the Frobenius bound
    multiplies it by ``sqrt(C(C-1))``; the empirical side gets three
    standard errors of slack, taken across trials.

    Raises:
        TheoremViolation: If ``strict`` and an empirical mean exceeds its bound.
    """
    _validate(channels, alpha, ms, trials)
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")

    def run(chunk: _Chunk) -> tuple[Array, Array]:
        ens = _ensemble(rng, chunk, channels, alpha, ms, "gaussian", sigma)
        entry = np.abs(_upper(ens.delta)).mean(axis=1)
        fro = np.sqrt((ens.delta**2).sum(axis=(1, 2)))
        return entry, fro

    parts = ordered_map(run, _chunks(trials, channels, ms), workers)
    entry = np.concatenate([p[0] for p in parts])
    fro = np.concatenate([p[1] for p in parts])
    entry_bound = alpha * sigma * math.sqrt(2.0 / math.pi)
    bounds = {
        "entry": (entry, entry_bound),
        "frobenius": (fro, entry_bound * math.sqrt(channels * (channels - 1))),
    }
    expectation = []
    for quantity, (values, bound) in bounds.items():
        mean = float(values.mean())
        se = float(values.std(ddof=1) / math.sqrt(trials)) if trials > 1 else 0.0
        expectation.append(
            ExpectationRecord(
                quantity=quantity,  # type: ignore[arg-type]
                mean=mean,
                standard_error=se,
                bound=bound,
                violated=mean > bound + STANDARD_ERRORS * se,
            )
        )
    report = StabilityReport(
        check="gaussian_expectation",
        parameters={
            "channels": channels,
            "alpha": alpha,
            "noise": "gaussian",
            "sigma": sigma,
            "ms": ms,
            "trials": trials,
            "seed": rng.seed,
            "stream": list(rng.stream),
        },
        expectation=expectation,
    )
    return _finish(report, strict)


def run_stability(
    config: StabilityConfig, rng: Rng, *, workers: int = 1, strict: bool = False
) -> list[StabilityReport]:
    """Run the checks that apply to ``config.noise``.

    Uniform noise gets the deterministic bounds. Gaussian noise gets the
    tail check followed by the expectation check.
    """
    ms = config.samples * config.grid_points
    if config.noise == "uniform":
        return [
            run_deterministic_check(
                config.channels,
                config.alpha,
                config.eps,
                ms,
                config.trials,
                rng.split(0),
                workers=workers,
                strict=strict,
            )
        ]
    return [
        run_subgaussian_check(
            config.channels,
            config.alpha,
            config.sigma,
            ms,
            config.trials,
            config.tau_grid,
            rng.split(1),
            workers=workers,
            strict=strict,
        ),
        run_gaussian_expectation_check(
            config.channels,
            config.alpha,
            config.sigma,
            config.trials,
            rng.split(2),
            ms,
            workers=workers,
            strict=strict,
        ),
    ]


def write_stability_csv(path: Path, reports: Sequence[StabilityReport]) -> None:
    """One flat row per trial, tail threshold or expectation quantity."""
    columns = ["check", "section", *TrialRecord.model_fields, *TailRecord.model_fields]
    columns += [c for c in ExpectationRecord.model_fields if c not in columns]
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=columns, lineterminator="\n")
        writer.writeheader()
        for report in reports:
            sections: list[tuple[str, Sequence[BaseModel]]] = [
                ("trial", report.trials),
                ("tail", report.tail),
                ("expectation", report.expectation),
            ]
            for section, rows in sections:
                for row in rows:
                    values = {
                        k: repr(v) if isinstance(v, float) else v
                        for k, v in row.model_dump(mode="json").items()
                    }
                    writer.writerow(
                        {"check": report.check, "section": section, **values}
                    )

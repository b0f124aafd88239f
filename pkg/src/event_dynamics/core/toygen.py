"""Synthetic band-labelled event sequences.

Each band draws latent rates from a truncated normal. A sequence takes
exponential inter-event intervals at its rate and observes
``y_i = sin(t_i) + eta_i`` at every event. Rates come from one stream per
band across all splits and are kept pairwise distinct, so no rate is shared
between train, validation and test.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Mapping, Sequence

import numpy as np
import numpy.typing as npt
from scipy.stats import norm

from event_dynamics.core.exceptions import CollisionError, DegenerateBand
from event_dynamics.core.models import BandName, BandSpec, Split, ToyRecord
from event_dynamics.core.parallel import ordered_map
from event_dynamics.numerics.rng import Rng

logger = logging.getLogger(__name__)

Array = npt.NDArray[np.float64]

MIN_ACCEPTANCE = 1e-6
MAX_REDRAWS = 100

DEFAULT_BANDS: tuple[BandSpec, ...] = (
    BandSpec(name=BandName.LOW, mu=7.5, sigma=1.0, lo=5.0, hi=10.0),
    BandSpec(name=BandName.MID, mu=12.5, sigma=1.0, lo=10.0, hi=15.0),
    BandSpec(name=BandName.HIGH, mu=17.5, sigma=1.0, lo=15.0, hi=20.0),
)

SPLIT_ORDER: tuple[Split, ...] = (Split.TRAIN, Split.VAL, Split.TEST)

# stream keys below the root seed
_RATE_STREAM = 0
_SEQUENCE_STREAM = 1


def band_by_name(
    name: BandName | str, bands: Sequence[BandSpec] = DEFAULT_BANDS
) -> BandSpec:
    key = BandName(name)
    for band in bands:
        if band.name is key:
            return band
    raise KeyError(f"No band named '{key.value}'")


def acceptance_probability(band: BandSpec) -> float:
    """Mass of ``Normal(mu, sigma^2)`` inside ``[lo, hi]``."""
    upper = norm.cdf((band.hi - band.mu) / band.sigma)
    lower = norm.cdf((band.lo - band.mu) / band.sigma)
    return float(upper - lower)


def sample_rate(band: BandSpec, rng: Rng, size: int | None = None) -> float | Array:
    """Rejection-sample rates from the band's truncated normal.

    Raises:
        DegenerateBand: If the band keeps less than ``1e-6`` of the mass.
    """
    acceptance = acceptance_probability(band)
    if acceptance < MIN_ACCEPTANCE:
        raise DegenerateBand(
            f"Band {band.name.value} accepts only {acceptance:.3g} of its mass",
            details={"band": band.name.value, "acceptance": acceptance},
        )
    wanted = 1 if size is None else size
    accepted: list[Array] = []
    have = 0
    while have < wanted:
        batch = math.ceil(1.2 * (wanted - have) / acceptance) + 8
        draws = rng.normal(band.mu, band.sigma, size=batch)
        keep = draws[(draws >= band.lo) & (draws <= band.hi)]
        accepted.append(keep)
        have += keep.size
    rates = np.concatenate(accepted)[:wanted]
    return float(rates[0]) if size is None else rates


def draw_distinct_rates(
    band: BandSpec, counts: Sequence[int], rng: Rng
) -> list[list[float]]:
    """Draw ``counts[i]`` rates per split, all pairwise distinct.

    Raises:
        CollisionError: If a rate still collides after 100 redraws.
    """
    seen: set[float] = set()
    groups: list[list[float]] = []
    for count in counts:
        group = []
        for _ in range(count):
            for _attempt in range(MAX_REDRAWS):
                rate = float(sample_rate(band, rng))
                if rate not in seen:
                    break
            else:
                raise CollisionError(
                    f"Rate {rate} in band {band.name.value} kept colliding",
                    details={"band": band.name.value, "redraws": MAX_REDRAWS},
                )
            seen.add(rate)
            group.append(rate)
        groups.append(group)
    return groups


def gen_sequence(
    rate: float,
    n: int,
    noise: float,
    rng: Rng,
    *,
    band: BandName = BandName.LOW,
    split: Split = Split.TRAIN,
    record_id: str = "seq",
) -> ToyRecord:
    """One sequence of ``n`` exponential intervals at ``rate`` and its observations."""
    if rate <= 0:
        raise ValueError(f"Rate must be positive, got {rate}")
    if n < 1:
        raise ValueError(f"Need at least one observation, got {n}")
    if noise < 0:
        raise ValueError(f"Noise level must be nonnegative, got {noise}")
    times = np.cumsum(rng.exponential(rate, size=n))
    observations = np.sin(times)
    if noise > 0:
        observations = observations + rng.normal(0.0, noise, size=n)
    return ToyRecord(
        record_id=record_id,
        rate=rate,
        event_times=times.tolist(),
        observations=observations.tolist(),
        band=band,
        split=split,
        seed=rng.seed,
        stream=list(rng.stream),
    )


def _record_id(split: Split, band: BandSpec, rate_index: int, seq: int) -> str:
    return f"{split.value}-{band.name.value}-r{rate_index:03d}-s{seq:03d}"


def _sequences(
    band: BandSpec,
    band_index: int,
    split: Split,
    rates: Sequence[float],
    seqs_per_rate: int,
    n_obs: int,
    noise: float,
    rng: Rng,
    workers: int,
) -> list[ToyRecord]:
    split_index = SPLIT_ORDER.index(split)

    def for_rate(item: tuple[int, float]) -> list[ToyRecord]:
        rate_index, rate = item
        return [
            gen_sequence(
                rate,
                n_obs,
                noise,
                rng.split(_SEQUENCE_STREAM, band_index, split_index, rate_index, seq),
                band=band.name,
                split=split,
                record_id=_record_id(split, band, rate_index, seq),
            )
            for seq in range(seqs_per_rate)
        ]

    parts = ordered_map(for_rate, list(enumerate(rates)), workers)
    return [record for part in parts for record in part]


def gen_split(
    band: BandSpec,
    n_rates: int,
    seqs_per_rate: int,
    split: Split,
    rng: Rng,
    *,
    n_obs: int = 20,
    noise: float = 0.07,
    workers: int = 1,
) -> list[ToyRecord]:
    """Records for one band and split, with ``n_rates`` distinct rates.

    Use :func:`gen_dataset` when several splits must avoid sharing rates.
    """
    if n_rates < 1 or seqs_per_rate < 1:
        raise ValueError("gen_split needs positive rate and sequence counts")
    band_index = _band_index(band)
    (rates,) = draw_distinct_rates(band, [n_rates], rng.split(_RATE_STREAM, band_index))
    return _sequences(
        band, band_index, split, rates, seqs_per_rate, n_obs, noise, rng, workers
    )


def _band_index(band: BandSpec) -> int:
    return [b.value for b in BandName].index(band.name.value)


def gen_dataset(
    rates_per_split: Mapping[Split, int],
    seqs_per_rate: int,
    rng: Rng,
    *,
    bands: Sequence[BandSpec] = DEFAULT_BANDS,
    n_obs: int = 20,
    noise: float = 0.07,
    workers: int = 1,
) -> dict[Split, list[ToyRecord]]:
    """All splits for all bands, rates distinct across splits within a band.

    Records are ordered by band, then rate, then sequence.
    """
    if seqs_per_rate < 1:
        raise ValueError("seqs_per_rate must be positive")
    dataset: dict[Split, list[ToyRecord]] = {split: [] for split in SPLIT_ORDER}
    counts = [rates_per_split.get(split, 0) for split in SPLIT_ORDER]
    for band in bands:
        band_index = _band_index(band)
        groups = draw_distinct_rates(
            band, counts, rng.split(_RATE_STREAM, band_index)
        )
        for split, rates in zip(SPLIT_ORDER, groups, strict=True):
            dataset[split].extend(
                _sequences(
                    band,
                    band_index,
                    split,
                    rates,
                    seqs_per_rate,
                    n_obs,
                    noise,
                    rng,
                    workers,
                )
            )
        summary = ", ".join(
            f"{s.value}={n} rates" for s, n in zip(SPLIT_ORDER, counts, strict=True)
        )
        logger.info(f"Band {band.name.value}: {summary}")
    return dataset

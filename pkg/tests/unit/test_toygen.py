"""Tests for synthetic data generation."""

from __future__ import annotations

import numpy as np
import pytest

from event_dynamics.core.exceptions import DegenerateBand
from event_dynamics.core.models import BandName, BandSpec, Split
from event_dynamics.core.toygen import (
    DEFAULT_BANDS,
    acceptance_probability,
    band_by_name,
    draw_distinct_rates,
    gen_dataset,
    gen_sequence,
    gen_split,
    sample_rate,
)
from event_dynamics.numerics.rng import Rng

RATES_PER_SPLIT = {Split.TRAIN: 2, Split.VAL: 1, Split.TEST: 1}


class TestBands:
    """Tests for band lookup and rate sampling."""

    def test_default_bands(self) -> None:
        """Three unit-width bands tile 5 to 20 Hz."""
        assert [b.name for b in DEFAULT_BANDS] == [
            BandName.LOW,
            BandName.MID,
            BandName.HIGH,
        ]
        assert band_by_name("mid").mu == 12.5

    def test_acceptance(self) -> None:
        """Plus or minus 2.5 sigma holds about 98.76% of the mass."""
        assert acceptance_probability(band_by_name("low")) == pytest.approx(
            0.98758, abs=1e-5
        )

    def test_degenerate_band(self) -> None:
        """A band with almost no mass is refused."""
        band = BandSpec(name=BandName.LOW, mu=7.5, sigma=1e7, lo=5.0, hi=10.0)
        with pytest.raises(DegenerateBand):
            sample_rate(band, Rng(0))

    def test_rates_within_bounds(self) -> None:
        """Rejection sampling respects the band edges."""
        band = band_by_name("high")
        rates = np.asarray(sample_rate(band, Rng(0), size=500))

        assert rates.shape == (500,)
        assert np.all((rates >= band.lo) & (rates <= band.hi))

    def test_distinct_rates(self) -> None:
        """Drawn rates are pairwise distinct across groups."""
        groups = draw_distinct_rates(band_by_name("low"), [5, 3, 2], Rng(1))
        flat = [r for g in groups for r in g]

        assert [len(g) for g in groups] == [5, 3, 2]
        assert len(set(flat)) == len(flat)


class TestGenSequence:
    """Tests for gen_sequence."""

    def test_noiseless_observations(self) -> None:
        """Without noise the observation is sin of the event time."""
        record = gen_sequence(10.0, 20, 0.0, Rng(0))

        np.testing.assert_allclose(record.observations, np.sin(record.event_times))
        assert record.n_obs == 20
        assert record.rate == 10.0

    def test_records_stream(self) -> None:
        """The record carries its seed and stream."""
        record = gen_sequence(10.0, 5, 0.07, Rng(4).split(1, 2), record_id="x")

        assert record.seed == 4
        assert record.stream == [1, 2]
        assert record.record_id == "x"

    def test_rejects_bad_arguments(self) -> None:
        """Rate, length and noise are validated."""
        with pytest.raises(ValueError):
            gen_sequence(0.0, 5, 0.1, Rng(0))
        with pytest.raises(ValueError):
            gen_sequence(1.0, 0, 0.1, Rng(0))
        with pytest.raises(ValueError):
            gen_sequence(1.0, 5, -0.1, Rng(0))


class TestGenDataset:
    """Tests for gen_split and gen_dataset."""

    def test_split_counts(self) -> None:
        """n_rates times seqs_per_rate records with stable ids."""
        records = gen_split(
            band_by_name("mid"), 3, 2, Split.VAL, Rng(0), n_obs=6
        )

        assert len(records) == 6
        assert records[0].record_id == "val-mid-r000-s000"
        assert records[-1].record_id == "val-mid-r002-s001"
        assert len({r.rate for r in records}) == 3

    def test_dataset_counts(self) -> None:
        """Every band contributes to every split."""
        dataset = gen_dataset(RATES_PER_SPLIT, 2, Rng(0), n_obs=5)

        assert len(dataset[Split.TRAIN]) == 12
        assert len(dataset[Split.VAL]) == 6
        assert len(dataset[Split.TEST]) == 6
        assert {r.band for r in dataset[Split.TEST]} == set(BandName)

    def test_rates_disjoint_across_splits(self) -> None:
        """No latent rate is shared between splits."""
        dataset = gen_dataset(RATES_PER_SPLIT, 2, Rng(3), n_obs=5)
        rates = {split: {r.rate for r in recs} for split, recs in dataset.items()}

        assert not rates[Split.TRAIN] & rates[Split.VAL]
        assert not rates[Split.TRAIN] & rates[Split.TEST]
        assert not rates[Split.VAL] & rates[Split.TEST]

    def test_independent_of_workers(self) -> None:
        """Worker count does not change the dataset."""
        one = gen_dataset(RATES_PER_SPLIT, 2, Rng(5), n_obs=5, workers=1)
        four = gen_dataset(RATES_PER_SPLIT, 2, Rng(5), n_obs=5, workers=4)

        assert one == four

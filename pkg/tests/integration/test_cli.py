"""Integration tests for CLI."""

from __future__ import annotations

import json
import math
from pathlib import Path

import pytest
from typer.testing import CliRunner

from event_dynamics import __version__
from event_dynamics.cli.app import app, dispatch
from event_dynamics.core.config import AppConfig
from event_dynamics.pipeline.io import generate_dataset

runner = CliRunner()

pytestmark = pytest.mark.integration


@pytest.fixture
def config_file(temp_dir: Path, small_config: AppConfig) -> Path:
    """The small test configuration written as JSON."""
    path = temp_dir / "config.json"
    path.write_text(json.dumps(small_config.model_dump(mode="json")))
    return path


@pytest.fixture
def trained(temp_dir: Path, data_dir: Path, config_file: Path) -> Path:
    """Checkpoint of a short training run."""
    out = temp_dir / "run"
    result = runner.invoke(
        app,
        ["train", "--data", str(data_dir), "--config", str(config_file),
         "--out", str(out)],
    )  # fmt: skip
    assert result.exit_code == 0, result.output
    return out / "checkpoint.json"


@pytest.fixture
def observations_csv(temp_dir: Path) -> Path:
    """Two correlated channels and one independent channel."""
    path = temp_dir / "obs.csv"
    path.write_text(
        "0.1,0.5,0.2,0.9,0.4,0.7\n"
        "0.2,0.6,0.1,1.0,0.5,0.6\n"
        "0.9,0.1,0.4,0.3,0.8,0.2\n"
    )
    return path


class TestVersionCommand:
    """Tests for version command."""

    def test_version_command(self) -> None:
        """Test version command."""
        result = runner.invoke(app, ["version"])

        assert result.exit_code == 0
        assert "event-dynamics version" in result.output
        assert __version__ in result.output


class TestGenCommand:
    """Tests for gen command."""

    def test_gen(self, temp_dir: Path) -> None:
        """Test a small dataset is written with a completed manifest."""
        out = temp_dir / "data"
        result = runner.invoke(
            app,
            [
                "gen",
                "--rates", "2",
                "--val-rates", "1",
                "--test-rates", "1",
                "--seqs", "2",
                "--n-obs", "8",
                "--seed", "7",
                "--workers", "1",
                "--out", str(out),
            ],
        )  # fmt: skip
        manifest = json.loads((out / "manifest.json").read_text())
        dataset = json.loads((out / "dataset.json").read_text())

        assert result.exit_code == 0, result.output
        assert manifest["status"] == "complete"
        assert dataset["counts"] == {"train": 12, "val": 6, "test": 6}

    def test_gen_single_band(self, temp_dir: Path) -> None:
        """Test a band selection limits the records."""
        out = temp_dir / "data"
        result = runner.invoke(
            app,
            ["gen", "-b", "mid", "--rates", "1", "--val-rates", "1",
             "--test-rates", "1", "--seqs", "1", "--n-obs", "4", "--out", str(out)],
        )  # fmt: skip
        dataset = json.loads((out / "dataset.json").read_text())

        assert result.exit_code == 0, result.output
        assert dataset["counts"] == {"train": 1, "val": 1, "test": 1}

    def test_gen_unknown_band(self, temp_dir: Path) -> None:
        """Test an unknown band is a usage error."""
        result = runner.invoke(
            app, ["gen", "--band", "ultra", "--out", str(temp_dir / "data")]
        )

        assert result.exit_code == 2


class TestTrainCommand:
    """Tests for train command."""

    @pytest.mark.slow
    def test_train(self, trained: Path) -> None:
        """Test a checkpoint, a log and a manifest are written."""
        run = trained.parent
        log = json.loads((run / "training_log.json").read_text())
        manifest = json.loads((run / "manifest.json").read_text())

        assert trained.is_file()
        assert len(log["epochs"]) == 2
        assert manifest["status"] == "complete"
        assert "checkpoint.json" in manifest["artifacts"]

    def test_train_missing_data(self, temp_dir: Path) -> None:
        """Test a missing dataset directory is rejected."""
        result = runner.invoke(app, ["train", "--data", str(temp_dir / "none")])

        assert result.exit_code != 0


class TestEvalCommand:
    """Tests for eval command."""

    @pytest.mark.slow
    def test_eval_checkpoint(
        self, trained: Path, data_dir: Path, temp_dir: Path
    ) -> None:
        """Test a trained checkpoint is scored."""
        out = temp_dir / "eval"
        result = runner.invoke(
            app,
            ["eval", "--data", str(data_dir), "--ckpt", str(trained),
             "--resamples", "200", "--out", str(out)],
        )  # fmt: skip
        report = json.loads((out / "report.json").read_text())

        assert result.exit_code == 0, result.output
        assert len(report["bands"]) == 3
        assert report["accuracy"] is not None
        assert (out / "boundary_scatter.csv").is_file()

    def test_eval_collapse_control(self, data_dir: Path, temp_dir: Path) -> None:
        """Test the constant-rate control misses every band."""
        out = temp_dir / "eval"
        report_path = temp_dir / "control.json"
        result = runner.invoke(
            app,
            ["eval", "--data", str(data_dir), "--collapse-control",
             "--report", str(report_path), "--out", str(out)],
        )  # fmt: skip
        report = json.loads(report_path.read_text())

        assert result.exit_code == 0, result.output
        assert [band["iou"] for band in report["bands"]] == [0.0, 0.0, 0.0]
        assert report["accuracy"] is None

    def test_eval_needs_one_predictor(self, data_dir: Path) -> None:
        """Test neither a checkpoint nor the control is a usage error."""
        result = runner.invoke(app, ["eval", "--data", str(data_dir)])

        assert result.exit_code == 2

    def test_eval_unknown_split(self, data_dir: Path) -> None:
        """Test an unknown split is a usage error."""
        result = runner.invoke(
            app,
            ["eval", "--data", str(data_dir), "--collapse-control", "--split", "dev"],
        )

        assert result.exit_code == 2


class TestKlboundCommand:
    """Tests for klbound command."""

    def test_exponential(self, temp_dir: Path) -> None:
        """Test the bound matches the exponential closed form."""
        spec = temp_dir / "problem.json"
        spec.write_text(
            json.dumps(
                {
                    "q": {"family": "exponential", "rate": 2.0},
                    "r": {"constant": 1.0},
                    "horizon": 10.0,
                    "epsilon": 1e-5,
                }
            )
        )
        out = temp_dir / "kl"
        result = runner.invoke(
            app, ["klbound", "--spec", str(spec), "--oracle", "--out", str(out)]
        )
        report = json.loads((out / "klbound.json").read_text())

        assert result.exit_code == 0, result.output
        assert report["u_eps"] == pytest.approx(math.log(2.0) - 0.5, abs=1e-3)
        assert report["oracle"] is not None

    def test_missing_spec(self, temp_dir: Path) -> None:
        """Test a missing problem file fails cleanly."""
        result = runner.invoke(
            app, ["klbound", "--spec", str(temp_dir / "missing.json")]
        )

        assert result.exit_code == 1


class TestGraphCommand:
    """Tests for graph command."""

    def test_prior_samples(self, observations_csv: Path, temp_dir: Path) -> None:
        """Test graphs from prior-sampled events."""
        out = temp_dir / "graph"
        result = runner.invoke(
            app,
            ["graph", "-x", str(observations_csv), "--mc-samples", "4",
             "--grid-points", "8", "--workers", "1", "--out", str(out)],
        )  # fmt: skip
        summary = json.loads((out / "graph.json").read_text())

        assert result.exit_code == 0, result.output
        assert summary["channels"] == 3
        assert set(summary["fisher_z"]) == {"event_lag", "trajectory"}
        for name in ("pearson.csv", "event_lag.csv", "trajectory.csv"):
            assert (out / name).is_file()

    def test_event_samples(self, observations_csv: Path, temp_dir: Path) -> None:
        """Test graphs from given event samples."""
        events = temp_dir / "events.json"
        events.write_text(
            json.dumps(
                {
                    "window": 1.0,
                    "samples": [
                        [[0.1, 0.5], [0.12, 0.52], [0.8]],
                        [[0.3], [0.31, 0.9], [0.6]],
                    ],
                }
            )
        )
        out = temp_dir / "graph"
        result = runner.invoke(
            app,
            ["graph", "-x", str(observations_csv), "-e", str(events),
             "--grid-points", "8", "--out", str(out)],
        )  # fmt: skip
        summary = json.loads((out / "graph.json").read_text())

        assert result.exit_code == 0, result.output
        assert summary["event_lag"]["matrix"][0][0] == 0.0

    def test_channel_mismatch(self, observations_csv: Path, temp_dir: Path) -> None:
        """Test events with the wrong channel count fail cleanly."""
        events = temp_dir / "events.json"
        events.write_text(json.dumps({"window": 1.0, "samples": [[[0.1], [0.2]]]}))
        result = runner.invoke(
            app,
            ["graph", "-x", str(observations_csv), "-e", str(events),
             "--out", str(temp_dir / "graph")],
        )  # fmt: skip

        assert result.exit_code == 1

    def test_negative_rate(self, observations_csv: Path) -> None:
        """Test the prior rate must be positive."""
        result = runner.invoke(
            app, ["graph", "-x", str(observations_csv), "--rate", "-1"]
        )

        assert result.exit_code == 2


class TestStabilityCommand:
    """Tests for stability command."""

    def test_uniform(self, temp_dir: Path) -> None:
        """Test the deterministic bound holds."""
        out = temp_dir / "stability"
        result = runner.invoke(
            app,
            ["stability", "--channels", "3", "--samples", "2", "--grid-points", "4",
             "--trials", "5", "--workers", "1", "--out", str(out)],
        )  # fmt: skip
        reports = json.loads((out / "stability.json").read_text())["reports"]

        assert result.exit_code == 0, result.output
        assert [r["check"] for r in reports] == ["deterministic"]
        assert (out / "stability.csv").is_file()

    def test_gaussian(self, temp_dir: Path) -> None:
        """Test gaussian noise runs the tail and expectation checks."""
        out = temp_dir / "stability"
        result = runner.invoke(
            app,
            ["stability", "--noise", "gaussian", "--channels", "3", "--samples", "2",
             "--grid-points", "4", "--trials", "20", "--tau", "0.0", "--tau", "0.05",
             "--out", str(out)],
        )  # fmt: skip
        reports = json.loads((out / "stability.json").read_text())["reports"]

        assert result.exit_code in (0, 1)
        assert [r["check"] for r in reports] == ["subgaussian", "gaussian_expectation"]


class TestPlotDataCommand:
    """Tests for plot-data command."""

    def test_collapse_control(
        self, temp_dir: Path, small_config: AppConfig
    ) -> None:
        """Test the scatter and rate tables are written."""
        data = temp_dir / "data"
        generate_dataset(small_config, data)
        out = temp_dir / "plots"
        result = runner.invoke(
            app,
            ["plot-data", "--data", str(data), "--collapse-control",
             "--out", str(out)],
        )  # fmt: skip
        rows = (out / "rate_density.csv").read_text().splitlines()

        assert result.exit_code == 0, result.output
        assert len(rows) == 1 + 6
        assert (out / "boundary_scatter.csv").is_file()


def _snapshot(directory: Path) -> dict[str, bytes]:
    return {
        p.relative_to(directory).as_posix(): p.read_bytes()
        for p in sorted(directory.rglob("*"))
        if p.is_file()
    }


class TestDeterminism:
    """Tests for repeated runs with the same seed."""

    @pytest.mark.parametrize(
        "args",
        [
            ["gen", "--rates", "1", "--val-rates", "1", "--test-rates", "1",
             "--seqs", "2", "--n-obs", "6", "--seed", "3"],
            ["stability", "--channels", "3", "--samples", "2", "--grid-points", "4",
             "--trials", "5", "--seed", "3"],
        ],
    )  # fmt: skip
    def test_rerun_is_byte_identical(self, temp_dir: Path, args: list[str]) -> None:
        """Test a second run rewrites the same bytes."""
        out = temp_dir / "run"
        first = runner.invoke(app, [*args, "--out", str(out)])
        before = _snapshot(out)
        second = runner.invoke(app, [*args, "--out", str(out)])

        assert first.exit_code == 0, first.output
        assert second.exit_code == 0, second.output
        assert _snapshot(out) == before


class TestDispatch:
    """Tests for dispatch exit codes."""

    def test_usage_error(self) -> None:
        """Test a missing required option exits with 2."""
        assert dispatch(["klbound"]) == 2

    def test_unknown_command(self) -> None:
        """Test an unknown command exits with 2."""
        assert dispatch(["frobnicate"]) == 2

    def test_runtime_error(
        self, temp_dir: Path, monkeypatch: pytest.MonkeyPatch
    ) -> None:
        """Test a failing command exits with 1."""
        monkeypatch.chdir(temp_dir)

        assert dispatch(["klbound", "--spec", "missing.json"]) == 1

    def test_success(self) -> None:
        """Test a successful command exits with 0."""
        assert dispatch(["version"]) == 0

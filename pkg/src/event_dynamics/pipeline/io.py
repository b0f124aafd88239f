"""Dataset files, JSON reports and run manifests."""

from __future__ import annotations

import hashlib
import json
import logging
from collections.abc import Iterable, Sequence
from pathlib import Path
from typing import Any, TypeVar

import numpy as np
import numpy.typing as npt
from pydantic import BaseModel, ValidationError

from event_dynamics.core.config import AppConfig
from event_dynamics.core.exceptions import ConfigurationError, DatasetError
from event_dynamics.core.models import (
    BandSpec,
    DatasetManifest,
    RunManifest,
    Split,
    ToyRecord,
)
from event_dynamics.core.toygen import DEFAULT_BANDS, gen_dataset
from event_dynamics.numerics.rng import Rng

logger = logging.getLogger(__name__)

DATASET_MANIFEST_NAME = "dataset.json"
RUN_MANIFEST_NAME = "manifest.json"

ModelT = TypeVar("ModelT", bound=BaseModel)


def split_file(split: Split) -> str:
    return f"{split.value}.jsonl"


def sha256_file(path: Path) -> str:
    digest = hashlib.sha256()
    with path.open("rb") as f:
        for block in iter(lambda: f.read(1 << 16), b""):
            digest.update(block)
    return digest.hexdigest()


def write_json(path: Path, payload: BaseModel | dict[str, Any]) -> None:
    """Write indented, key-sorted JSON with a trailing newline."""
    data = (
        payload.model_dump(mode="json") if isinstance(payload, BaseModel) else payload
    )
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def write_records(path: Path, records: Iterable[ToyRecord]) -> int:
    """Write one record per line in the given order; returns the count."""
    path.parent.mkdir(parents=True, exist_ok=True)
    count = 0
    with path.open("w", encoding="utf-8") as f:
        for record in records:
            f.write(json.dumps(record.model_dump(mode="json"), sort_keys=True) + "\n")
            count += 1
    return count


def read_records(path: Path) -> list[ToyRecord]:
    """Load a JSON-lines split file.

    Raises:
        DatasetError: If the file is missing or a line is not a valid record.
    """
    if not path.is_file():
        raise DatasetError(
            f"Dataset file not found: {path}", details={"path": str(path)}
        )
    records = []
    with path.open(encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                records.append(ToyRecord.model_validate_json(line))
            except ValidationError as e:
                raise DatasetError(
                    f"Invalid record on line {line_no} of {path.name}: {e}",
                    details={"path": str(path), "line": line_no},
                ) from e
    return records


def write_dataset(
    out_dir: Path,
    splits: dict[Split, list[ToyRecord]],
    *,
    bands: Sequence[BandSpec],
    rates_per_split: dict[Split, int],
    seqs_per_rate: int,
    seed: int,
    noise: float,
    n_obs: int,
) -> DatasetManifest:
    """Write every split and a manifest holding their SHA-256 digests."""
    out_dir.mkdir(parents=True, exist_ok=True)
    files = {}
    counts = {}
    for split, records in splits.items():
        path = out_dir / split_file(split)
        counts[split.value] = write_records(path, records)
        files[path.name] = sha256_file(path)
        logger.info(f"Wrote {counts[split.value]} records to {path}")
    manifest = DatasetManifest(
        bands=list(bands),
        counts=counts,
        rates_per_split={s.value: n for s, n in rates_per_split.items()},
        seqs_per_rate=seqs_per_rate,
        seed=seed,
        noise=noise,
        n_obs=n_obs,
        files=files,
    )
    write_json(out_dir / DATASET_MANIFEST_NAME, manifest)
    return manifest


def read_manifest(data_dir: Path) -> DatasetManifest:
    path = data_dir / DATASET_MANIFEST_NAME
    if not path.is_file():
        raise DatasetError(
            f"No {DATASET_MANIFEST_NAME} in {data_dir}", details={"path": str(data_dir)}
        )
    try:
        return DatasetManifest.model_validate_json(path.read_text(encoding="utf-8"))
    except ValidationError as e:
        raise DatasetError(f"Invalid dataset manifest {path}: {e}") from e


def load_split(data_dir: Path, split: Split, *, verify: bool = True) -> list[ToyRecord]:
    """Read one split, checking its digest against the manifest when present.

    Raises:
        DatasetError: If the file is missing, invalid, or its digest differs.
    """
    path = data_dir / split_file(split)
    manifest_path = data_dir / DATASET_MANIFEST_NAME
    if verify and manifest_path.is_file():
        expected = read_manifest(data_dir).files.get(path.name)
        if expected is not None and path.is_file() and sha256_file(path) != expected:
            raise DatasetError(
                f"{path.name} does not match its manifest digest",
                details={"path": str(path)},
            )
    return read_records(path)


def _artifact_key(path: Path, root: Path) -> str:
    try:
        return path.relative_to(root).as_posix()
    except ValueError:
        return path.as_posix()


class RunRecorder:
    """Writes ``manifest.json`` before a command starts and completes it afterwards."""

    def __init__(
        self, out_dir: Path, command: str, version: str, config: dict[str, Any]
    ) -> None:
        self._dir = out_dir
        self._path = out_dir / RUN_MANIFEST_NAME
        self._manifest = RunManifest(command=command, version=version, config=config)
        write_json(self._path, self._manifest)

    @property
    def manifest(self) -> RunManifest:
        return self._manifest

    def complete(self, artifacts: Iterable[Path]) -> RunManifest:
        """Record artifact digests, keyed by path below the run directory."""
        digests = {
            _artifact_key(p, self._dir): sha256_file(p)
            for p in sorted(artifacts)
            if p.is_file()
        }
        self._manifest = self._manifest.model_copy(
            update={"status": "complete", "artifacts": digests}
        )
        write_json(self._path, self._manifest)
        return self._manifest


def generate_dataset(
    config: AppConfig,
    out_dir: Path,
    *,
    bands: Sequence[BandSpec] = DEFAULT_BANDS,
    noise: float | None = None,
) -> DatasetManifest:
    """Generate every split of the toy protocol from ``config.toy`` and write it."""
    toy = config.toy
    level = toy.noise if noise is None else noise
    rates_per_split = {
        Split.TRAIN: toy.train_rates,
        Split.VAL: toy.val_rates,
        Split.TEST: toy.test_rates,
    }
    splits = gen_dataset(
        rates_per_split,
        toy.seqs_per_rate,
        Rng(config.seed),
        bands=bands,
        n_obs=toy.n_obs,
        noise=level,
        workers=config.workers,
    )
    return write_dataset(
        out_dir,
        splits,
        bands=bands,
        rates_per_split=rates_per_split,
        seqs_per_rate=toy.seqs_per_rate,
        seed=config.seed,
        noise=level,
        n_obs=toy.n_obs,
    )


def read_json_model(path: Path, model: type[ModelT], what: str) -> ModelT:
    """Parse ``path`` as ``model``.

    Raises:
        ConfigurationError: If the file is missing or does not validate.
    """
    if not path.is_file():
        raise ConfigurationError(
            f"{what} file not found: {path}", details={"path": str(path)}
        )
    try:
        return model.model_validate_json(path.read_text(encoding="utf-8"))
    except ValidationError as e:
        raise ConfigurationError(f"Invalid {what.lower()} file {path}: {e}") from e


def read_observation_csv(path: Path) -> npt.NDArray[np.float64]:
    """A ``(C, T)`` observation matrix, one channel per row.

    Raises:
        DatasetError: If the file is missing, ragged or not numeric.
    """
    if not path.is_file():
        raise DatasetError(
            f"Observation file not found: {path}", details={"path": str(path)}
        )
    try:
        matrix = np.loadtxt(path, delimiter=",", ndmin=2, dtype=np.float64)
    except ValueError as e:
        raise DatasetError(
            f"Observation file {path} is not a numeric matrix: {e}"
        ) from e
    if not np.all(np.isfinite(matrix)):
        raise DatasetError(f"Observation file {path} holds non-finite values")
    return matrix

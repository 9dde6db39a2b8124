"""Record and table files.

RECORD FORMAT:
==============
A record is a pair of files sharing a stem:

    record.f64    raw little-endian float64 samples, shape (n_samples, channels)
    record.json   sidecar header validated against RECORD_HEADER_SCHEMA

{
  "format": "optomech-f64",
  "schema_version": 1,
  "data_file": "record.f64",
  "channels": ["i_x", "i_y"],
  "n_samples": 2100000,
  "sample_rate_hz": 3500000.0,
  "demod_frequency_hz": 1167000.0,
  "units": "shot-noise",
  "kind": "iq",
  "meta": {"seed": 20240601}
}

Truth trajectories are written as a separate record (kind "truth") so the
photocurrent record stays what a real experiment would produce.

TABLES:
=======
CSV files carry one header row whose column names include their units,
e.g. "frequency_hz,psd_shot_noise_per_hz".
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from jsonschema import Draft202012Validator

from config.schema import RECORD_FORMAT, RECORD_HEADER_SCHEMA, SCHEMA_VERSION

from .errors import RecordIOError
from .simulator import CarrierRecord, MeasurementRecord

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]
DTYPE = np.dtype("<f8")


@dataclass
class RecordHeader:
    channels: List[str]
    n_samples: int
    sample_rate_hz: float
    kind: str = "iq"
    demod_frequency_hz: float = 0.0
    units: str = "shot-noise"
    data_file: str = ""
    meta: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "format": RECORD_FORMAT,
            "schema_version": SCHEMA_VERSION,
            "data_file": self.data_file,
            "channels": list(self.channels),
            "n_samples": int(self.n_samples),
            "sample_rate_hz": float(self.sample_rate_hz),
            "demod_frequency_hz": float(self.demod_frequency_hz),
            "units": self.units,
            "kind": self.kind,
            "meta": self.meta,
        }


def _header_path(path: PathLike) -> Path:
    path = Path(path)
    return path if path.suffix == ".json" else path.with_suffix(".json")


def _jsonable(value: Any) -> Any:
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    return value


# ============================================================================
# RAW RECORDS
# ============================================================================


def write_record(path: PathLike, data: np.ndarray, header: RecordHeader) -> Path:
    """Write samples and their sidecar header; returns the header path.

    Raises:
        RecordIOError: If the files cannot be written
    """
    data = np.asarray(data, dtype=DTYPE)
    if data.ndim == 1:
        data = data[:, None]
    if data.shape[1] != len(header.channels):
        raise RecordIOError(f"{data.shape[1]} data columns but {len(header.channels)} channel names")
    header_file = _header_path(path)
    data_file = header_file.with_suffix(".f64")
    header.data_file = data_file.name
    header.n_samples = int(data.shape[0])
    header.meta = _jsonable(header.meta)
    try:
        header_file.parent.mkdir(parents=True, exist_ok=True)
        np.ascontiguousarray(data).tofile(data_file)
        header_file.write_text(json.dumps(header.to_dict(), indent=2))
    except OSError as exc:
        raise RecordIOError(f"cannot write record {header_file}: {exc}") from exc
    logger.debug(
        "Record written",
        extra={"operation": "write_record", "path": str(header_file), "n_samples": header.n_samples},
    )
    return header_file


def read_header(path: PathLike) -> RecordHeader:
    """Read and validate a sidecar header.

    Raises:
        RecordIOError: If the header is missing, unreadable or invalid
    """
    header_file = _header_path(path)
    try:
        document = json.loads(header_file.read_text())
    except FileNotFoundError as exc:
        raise RecordIOError(f"record header not found: {header_file}") from exc
    except (OSError, json.JSONDecodeError) as exc:
        raise RecordIOError(f"corrupt record header {header_file}: {exc}") from exc
    errors = list(Draft202012Validator(RECORD_HEADER_SCHEMA).iter_errors(document))
    if errors:
        where = ".".join(str(p) for p in errors[0].absolute_path) or "<root>"
        raise RecordIOError(f"invalid record header {header_file} at {where}: {errors[0].message}")
    return RecordHeader(
        channels=list(document["channels"]),
        n_samples=document["n_samples"],
        sample_rate_hz=document["sample_rate_hz"],
        kind=document["kind"],
        demod_frequency_hz=document.get("demod_frequency_hz", 0.0),
        units=document.get("units", ""),
        data_file=document["data_file"],
        meta=document.get("meta", {}),
    )


def read_record(path: PathLike) -> Tuple[RecordHeader, np.ndarray]:
    """Read a record as (header, samples of shape (n_samples, channels)).

    Raises:
        RecordIOError: If a file is missing or its size disagrees with the header
    """
    header = read_header(path)
    data_file = _header_path(path).parent / header.data_file
    if not data_file.is_file():
        raise RecordIOError(f"record data file not found: {data_file}")
    expected = header.n_samples * len(header.channels) * DTYPE.itemsize
    actual = data_file.stat().st_size
    if actual != expected:
        raise RecordIOError(
            f"{data_file} holds {actual} bytes, header implies {expected}",
            hint="the record was truncated or belongs to another header",
        )
    data = np.fromfile(data_file, dtype=DTYPE).reshape(header.n_samples, len(header.channels))
    return header, data


# ============================================================================
# DOMAIN RECORDS
# ============================================================================


def save_measurement(record: MeasurementRecord, path: PathLike) -> List[Path]:
    """Write a measurement record and, when present, its truth as "<stem>_truth"."""
    header_file = _header_path(path)
    header = RecordHeader(
        channels=["i_x", "i_y"],
        n_samples=record.n,
        sample_rate_hz=record.sample_rate,
        demod_frequency_hz=record.demod_frequency,
        kind="iq",
        meta=dict(record.meta),
    )
    written = [write_record(header_file, record.channels, header)]
    if record.truth is not None:
        n_modes = record.truth.shape[1] // 2
        names = [f"{q}{k + 1}" for k in range(n_modes) for q in ("X", "Y")]
        truth_header = RecordHeader(
            channels=names,
            n_samples=record.n,
            sample_rate_hz=record.sample_rate,
            demod_frequency_hz=record.demod_frequency,
            kind="truth",
            units="vacuum-quadrature",
            meta={"record": header_file.name},
        )
        truth_file = header_file.with_name(header_file.stem + "_truth.json")
        written.append(write_record(truth_file, record.truth, truth_header))
    return written


def save_carrier(record: CarrierRecord, path: PathLike) -> Path:
    header = RecordHeader(
        channels=["s"],
        n_samples=record.samples.size,
        sample_rate_hz=record.sample_rate,
        demod_frequency_hz=record.carrier_frequency,
        kind="carrier",
    )
    return write_record(path, record.samples, header)


def load_measurement(path: PathLike) -> Union[MeasurementRecord, CarrierRecord]:
    """Load an IQ or carrier record; a sibling truth record is attached when present.

    Raises:
        RecordIOError: On missing or corrupt files, or an unsupported kind
    """
    header, data = read_record(path)
    if header.kind == "carrier":
        return CarrierRecord(
            samples=data[:, 0].copy(),
            sample_rate=header.sample_rate_hz,
            carrier_frequency=header.demod_frequency_hz,
        )
    if header.kind != "iq" or data.shape[1] != 2:
        raise RecordIOError(f"{path}: expected a two-channel iq record, got kind {header.kind!r}")
    header_file = _header_path(path)
    truth = None
    truth_file = header_file.with_name(header_file.stem + "_truth.json")
    if truth_file.is_file():
        _, truth = read_record(truth_file)
    return MeasurementRecord(
        i_x=data[:, 0].copy(),
        i_y=data[:, 1].copy(),
        sample_rate=header.sample_rate_hz,
        demod_frequency=header.demod_frequency_hz,
        truth=truth,
        meta=header.meta,
    )


# ============================================================================
# CSV TABLES
# ============================================================================


def write_csv(path: PathLike, columns: Dict[str, Sequence[Any]]) -> Path:
    """Write equally long columns with a single header row.

    Floats are written with repr precision so reruns are byte-identical.
    """
    path = Path(path)
    names = list(columns)
    values = [list(np.asarray(columns[name]).tolist()) for name in names]
    lengths = {len(v) for v in values}
    if len(lengths) > 1:
        raise RecordIOError(f"{path}: columns have different lengths {sorted(lengths)}")
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(names)
            writer.writerows(zip(*values))
    except OSError as exc:
        raise RecordIOError(f"cannot write {path}: {exc}") from exc
    return path


def write_matrix_csv(path: PathLike, matrix: np.ndarray, labels: Sequence[str]) -> Path:
    """Square matrix with labelled rows and columns."""
    matrix = np.asarray(matrix)
    columns: Dict[str, Sequence[Any]] = {"row": list(labels)}
    for j, label in enumerate(labels):
        columns[label] = matrix[:, j]
    return write_csv(path, columns)


def read_csv(path: PathLike) -> Dict[str, np.ndarray]:
    """Read a numeric CSV written by write_csv().

    Raises:
        RecordIOError: If the file is missing or not numeric
    """
    path = Path(path)
    try:
        with path.open(newline="") as handle:
            rows = list(csv.reader(handle))
    except OSError as exc:
        raise RecordIOError(f"cannot read {path}: {exc}") from exc
    if len(rows) < 2:
        raise RecordIOError(f"{path}: no data rows")
    names = rows[0]
    try:
        data = np.array([[float(x) for x in row] for row in rows[1:] if row], dtype=float)
    except ValueError as exc:
        raise RecordIOError(f"{path}: non-numeric entry: {exc}") from exc
    return {name: data[:, j] for j, name in enumerate(names)}


def read_psd_csv(path: PathLike) -> Tuple[np.ndarray, np.ndarray, Optional[np.ndarray]]:
    """Frequency, PSD and optional weight columns of a PSD table.

    The first column is frequency in Hz and the second the PSD; a column named
    "weight" is returned when present.
    """
    table = read_csv(path)
    names = list(table)
    if len(names) < 2:
        raise RecordIOError(f"{path}: a PSD table needs frequency and PSD columns")
    return table[names[0]], table[names[1]], table.get("weight")

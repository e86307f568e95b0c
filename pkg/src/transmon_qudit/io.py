"""CSV and JSON readers and writers.

Floats are written with ``repr`` so every emitted CSV reads back bit for bit.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from transmon_qudit.decay import PopulationTrace
from transmon_qudit.ramsey import RamseyTrace
from transmon_qudit.readout import InversionMatrix, calibration_matrix


class DataError(ValueError):
    """An input file is missing, malformed or inconsistent."""


def _fmt(x) -> str:
    return repr(float(x))


def write_table(path: str | Path, header: Sequence[str], rows: Iterable[Sequence[float]]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    return path


def read_table(path: str | Path, expected: Sequence[str] | None = None) -> tuple[list[str], np.ndarray]:
    """Header and float rows of a CSV file.

    ``expected`` checks the header exactly; a trailing ``...`` entry accepts any
    number of further columns.
    """
    path = Path(path)
    try:
        with path.open(newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    if not rows:
        raise DataError(f"{path} is empty")
    header = [h.strip() for h in rows[0]]
    if expected is not None:
        fixed = [e for e in expected if e != "..."]
        open_ended = expected and expected[-1] == "..."
        if header[: len(fixed)] != fixed or (not open_ended and len(header) != len(fixed)):
            raise DataError(f"{path}: header {header} does not match {list(expected)}")
    try:
        data = np.array([[float(v) for v in r] for r in rows[1:] if r], dtype=float)
    except ValueError as exc:
        raise DataError(f"{path}: non-numeric value ({exc})") from exc
    if data.size == 0:
        raise DataError(f"{path} has no data rows")
    if data.shape[1] != len(header):
        raise DataError(f"{path}: rows have {data.shape[1]} columns, header has {len(header)}")
    return header, data


def write_population_csv(path, trace: PopulationTrace) -> Path:
    header = ["time_us"] + [f"p{i}" for i in range(trace.n_levels)]
    return write_table(path, header, np.column_stack([trace.times, trace.populations]))


def read_population_csv(path, provenance: str = "measured") -> PopulationTrace:
    header, data = read_table(path, ["time_us", "..."])
    levels = header[1:]
    if not levels or levels != [f"p{i}" for i in range(len(levels))]:
        raise DataError(f"{path}: population columns must be p0, p1, ...")
    try:
        return PopulationTrace(data[:, 0], data[:, 1:], provenance=provenance)
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from exc


def write_spectrum_csv(path, freqs, s21) -> Path:
    s = np.asarray(s21, dtype=complex)
    return write_table(path, ["freq_ghz", "re", "im"], np.column_stack([freqs, s.real, s.imag]))


def read_spectrum_csv(path) -> tuple[np.ndarray, np.ndarray]:
    _, data = read_table(path, ["freq_ghz", "re", "im"])
    return data[:, 0], data[:, 1] + 1j * data[:, 2]


def write_trace_csv(path, trace: RamseyTrace) -> Path:
    return write_table(path, ["time_us", "amplitude"], np.column_stack([trace.times, trace.amplitude]))


def read_trace_csv(path) -> RamseyTrace:
    _, data = read_table(path, ["time_us", "amplitude"])
    try:
        return RamseyTrace(data[:, 0], data[:, 1])
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from exc


def write_calibration_json(path, cal: InversionMatrix) -> Path:
    payload = {
        "matrix": np.asarray(cal.matrix, dtype=float).tolist(),
        "probe_freqs_ghz": None if cal.probe_freqs is None else cal.probe_freqs.tolist(),
    }
    return write_json(path, payload)


def read_calibration_json(path) -> InversionMatrix:
    payload = read_json(path)
    if not isinstance(payload, dict) or "matrix" not in payload:
        raise DataError(f"{path}: expected an object with a 'matrix' entry")
    try:
        return calibration_matrix(payload["matrix"], payload.get("probe_freqs_ghz"))
    except (ValueError, TypeError) as exc:
        raise DataError(f"{path}: {exc}") from exc


def to_jsonable(obj: Any) -> Any:
    """Plain JSON types; non-finite floats become None."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj) if math.isfinite(obj) else None
    if isinstance(obj, complex):
        return {"re": to_jsonable(obj.real), "im": to_jsonable(obj.imag)}
    return obj


def dumps(obj: Any) -> str:
    """Canonical JSON text: sorted keys, fixed indentation."""
    return json.dumps(to_jsonable(obj), sort_keys=True, indent=2, allow_nan=False) + "\n"


def write_json(path, obj: Any) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps(obj))
    return path


def read_json(path) -> Any:
    try:
        return json.loads(Path(path).read_text())
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON ({exc})") from exc

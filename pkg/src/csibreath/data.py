"""Domain types and on-disk formats for CSI records and reference traces.

File formats
------------
CSI CSV
    Header line ``# csi v1 kind=<complex|magnitude> subcarriers=<N> nominal_rate=<Hz>``
    (optionally followed by ``subject=<id>`` and ``posture=<label>`` tokens),
    then one row per frame: ``t,<v1>,...`` with N values for magnitude records
    and 2N interleaved re,im values for complex records. Timestamps are written
    as fixed-point seconds with six fractional digits; values use shortest-repr
    text, so load/save round trips are byte identical for canonical files.

CSI NDJSON
    Optional first line ``{"csi": "v1", "kind": ..., "subcarriers": ..., ...}``,
    then one object per frame: ``{"t": <seconds>, "sc": [<values>]}`` with the
    same magnitude/complex value layout as CSV rows.

Reference CSV
    Header ``# ref v1 rate=<Hz> start=<s>``, then one value per row. The same
    format stores any uniformly sampled waveform (e.g. extracted respiratory
    signals).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .util import atomic_write_text, fmt_time, fmt_value

POSTURES = ("supine", "side", "prone", "unknown")

DEFAULT_SUBCARRIERS = 50
DEFAULT_NOMINAL_RATE = 62.5
DEFAULT_REFERENCE_RATE = 100.0


class DataFormatError(ValueError):
    """Malformed input file; carries the path and 1-based data-row number
    (header lines are not counted)."""

    def __init__(self, path, row: int | None, message: str):
        self.path = str(path)
        self.row = row
        where = f"{self.path}: " + (f"row {row}: " if row is not None else "")
        super().__init__(where + message)


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class RecordMeta:
    subject: str = ""
    posture: str = "unknown"
    tags: tuple[str, ...] = ()

    def __post_init__(self):
        if self.posture not in POSTURES:
            raise ValueError(f"unknown posture {self.posture!r}; expected one of {POSTURES}")


@dataclass(frozen=True)
class CsiFrame:
    """One CSI measurement: a timestamp plus per-subcarrier values.

    `subcarriers` holds complex channel values or non-negative magnitudes,
    depending on the owning record's kind.
    """

    timestamp: float
    subcarriers: np.ndarray

    def __post_init__(self):
        sc = np.asarray(self.subcarriers)
        if sc.ndim != 1:
            raise ValueError("subcarriers must be a 1-D vector")
        if not math.isfinite(self.timestamp):
            raise ValueError("timestamp must be finite")
        if not np.all(np.isfinite(sc)):
            raise ValueError("subcarrier values must be finite")
        if not np.iscomplexobj(sc) and np.any(sc < 0):
            raise ValueError("magnitude values must be >= 0")
        object.__setattr__(self, "subcarriers", _readonly(sc))


@dataclass(frozen=True)
class CsiRecord:
    """An ordered CSI trace: strictly increasing timestamps, fixed subcarrier count.

    `values` has shape (n_frames, n_subcarriers) and is complex when
    kind == "complex", real non-negative when kind == "magnitude".
    """

    timestamps: np.ndarray
    values: np.ndarray
    kind: str = "magnitude"
    nominal_rate: float = DEFAULT_NOMINAL_RATE
    meta: RecordMeta = field(default_factory=RecordMeta)

    def __post_init__(self):
        ts = np.asarray(self.timestamps, dtype=np.float64)
        vals = np.asarray(self.values)
        if self.kind not in ("magnitude", "complex"):
            raise ValueError(f"kind must be 'magnitude' or 'complex', got {self.kind!r}")
        if self.kind == "complex":
            vals = vals.astype(np.complex128, copy=False)
        else:
            vals = vals.astype(np.float64, copy=False)
        if ts.ndim != 1 or vals.ndim != 2 or len(ts) != len(vals):
            raise ValueError("timestamps must be 1-D and match values rows")
        if len(ts) < 2:
            raise ValueError("a record needs at least 2 frames")
        if not np.all(np.isfinite(ts)):
            raise ValueError("timestamps must be finite")
        if np.any(np.diff(ts) <= 0):
            bad = int(np.argmax(np.diff(ts) <= 0)) + 1
            raise ValueError(f"timestamps must be strictly increasing (frame {bad})")
        if not np.all(np.isfinite(vals.view(np.float64) if vals.dtype.kind == "c" else vals)):
            raise ValueError("subcarrier values must be finite")
        if self.kind == "magnitude" and np.any(vals < 0):
            raise ValueError("magnitude values must be >= 0")
        if not self.nominal_rate > 0:
            raise ValueError("nominal_rate must be > 0")
        object.__setattr__(self, "timestamps", _readonly(ts))
        object.__setattr__(self, "values", _readonly(vals))

    @property
    def n_frames(self) -> int:
        return len(self.timestamps)

    @property
    def n_subcarriers(self) -> int:
        return self.values.shape[1]

    @property
    def duration(self) -> float:
        return float(self.timestamps[-1] - self.timestamps[0])

    def frame(self, i: int) -> CsiFrame:
        return CsiFrame(float(self.timestamps[i]), self.values[i])

    @classmethod
    def from_frames(cls, frames, kind="magnitude", nominal_rate=DEFAULT_NOMINAL_RATE,
                    meta=None) -> "CsiRecord":
        ts = np.array([f.timestamp for f in frames])
        vals = np.array([f.subcarriers for f in frames])
        return cls(ts, vals, kind=kind, nominal_rate=nominal_rate,
                   meta=meta or RecordMeta())


@dataclass(frozen=True)
class UniformSeries:
    """A uniformly sampled scalar waveform."""

    samples: np.ndarray
    rate: float
    start_time: float = 0.0

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=np.float64)
        if s.ndim != 1:
            raise ValueError("samples must be 1-D")
        if not np.all(np.isfinite(s)):
            raise ValueError("samples must be finite")
        if not self.rate > 0:
            raise ValueError("rate must be > 0")
        object.__setattr__(self, "samples", _readonly(s))

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def duration(self) -> float:
        return (len(self.samples) - 1) / self.rate

    @property
    def end_time(self) -> float:
        return self.start_time + self.duration

    def times(self) -> np.ndarray:
        return self.start_time + np.arange(len(self.samples)) / self.rate

    def slice(self, lo: int, hi: int) -> "UniformSeries":
        return UniformSeries(self.samples[lo:hi], self.rate,
                             self.start_time + lo / self.rate)


# The belt-style respiration reference is just a uniform series sampled at its
# own rate (100 Hz by default); no extra behaviour is needed.
ReferenceTrace = UniformSeries


def magnitudes(record: CsiRecord) -> np.ndarray:
    """Per-frame, per-subcarrier magnitudes as a (frames, subcarriers) float matrix.

    Complex records take the modulus; magnitude records pass through unchanged,
    so the operation is idempotent.
    """
    if record.kind == "complex":
        return np.abs(record.values)
    return np.array(record.values, copy=True)


# ---------------------------------------------------------------------------
# Header parsing / writing

def _parse_header_tokens(path, line: str, expected_tag: str) -> dict:
    parts = line.strip().split()
    if len(parts) < 3 or parts[0] != "#" or parts[1] != expected_tag or parts[2] != "v1":
        raise DataFormatError(path, None, f"expected header '# {expected_tag} v1 ...'")
    tokens = {}
    for tok in parts[3:]:
        if "=" not in tok:
            raise DataFormatError(path, None, f"malformed header token {tok!r}")
        key, val = tok.split("=", 1)
        tokens[key] = val
    return tokens


def _csi_header(record: CsiRecord) -> str:
    head = (f"# csi v1 kind={record.kind} subcarriers={record.n_subcarriers}"
            f" nominal_rate={fmt_value(record.nominal_rate)}")
    if record.meta.subject:
        head += f" subject={record.meta.subject}"
    if record.meta.posture != "unknown":
        head += f" posture={record.meta.posture}"
    if record.meta.tags:
        head += " tags=" + ";".join(record.meta.tags)
    return head


def _meta_from_tokens(tokens: dict) -> RecordMeta:
    tags = tuple(t for t in tokens.get("tags", "").split(";") if t)
    return RecordMeta(subject=tokens.get("subject", ""),
                      posture=tokens.get("posture", "unknown"),
                      tags=tags)


# ---------------------------------------------------------------------------
# CSI load/save

def load_csi(path, format: str | None = None) -> CsiRecord:
    """Load a CSI record from CSV or NDJSON.

    `format` is "csv" or "ndjson"; when None it is inferred from the suffix
    (.ndjson/.jsonl -> ndjson, anything else csv). Raises DataFormatError with
    the offending row number for malformed content.
    """
    path = Path(path)
    if format is None:
        format = "ndjson" if path.suffix in (".ndjson", ".jsonl") else "csv"
    if format == "csv":
        return _load_csi_csv(path)
    if format == "ndjson":
        return _load_csi_ndjson(path)
    raise ValueError(f"unknown CSI format {format!r}")


def _load_csi_csv(path: Path) -> CsiRecord:
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise DataFormatError(path, None, "empty file")
    tokens = _parse_header_tokens(path, lines[0], "csi")
    try:
        kind = tokens.get("kind", "magnitude")
        n_sc = int(tokens.get("subcarriers", DEFAULT_SUBCARRIERS))
        nominal = float(tokens.get("nominal_rate", DEFAULT_NOMINAL_RATE))
    except ValueError as exc:
        raise DataFormatError(path, None, f"bad header value: {exc}") from None
    if kind not in ("magnitude", "complex"):
        raise DataFormatError(path, None, f"unknown kind {kind!r}")
    n_cols = 1 + (2 * n_sc if kind == "complex" else n_sc)

    ts, rows = [], []
    for row_no, line in enumerate(lines[1:], start=1):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != n_cols:
            raise DataFormatError(path, row_no,
                                  f"expected {n_cols} columns, got {len(parts)}")
        try:
            nums = np.array(parts, dtype=np.float64)
        except ValueError:
            raise DataFormatError(path, row_no, "non-numeric value") from None
        if ts and nums[0] <= ts[-1]:
            raise DataFormatError(path, row_no, "non-increasing timestamp")
        ts.append(nums[0])
        rows.append(nums[1:])
    if len(ts) < 2:
        raise DataFormatError(path, None, "need at least 2 frames")
    vals = np.vstack(rows)
    if kind == "complex":
        vals = vals[:, 0::2] + 1j * vals[:, 1::2]
    try:
        return CsiRecord(np.array(ts), vals, kind=kind, nominal_rate=nominal,
                         meta=_meta_from_tokens(tokens))
    except ValueError as exc:
        raise DataFormatError(path, None, str(exc)) from None


def _load_csi_ndjson(path: Path) -> CsiRecord:
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise DataFormatError(path, None, "empty file")
    kind, n_sc, nominal = "magnitude", None, DEFAULT_NOMINAL_RATE
    meta = RecordMeta()
    start = 0
    try:
        first = json.loads(lines[0])
    except json.JSONDecodeError:
        raise DataFormatError(path, 1, "invalid JSON") from None
    if isinstance(first, dict) and "csi" in first:
        kind = first.get("kind", "magnitude")
        n_sc = first.get("subcarriers")
        nominal = float(first.get("nominal_rate", DEFAULT_NOMINAL_RATE))
        meta = RecordMeta(subject=str(first.get("subject", "")),
                          posture=first.get("posture", "unknown"),
                          tags=tuple(first.get("tags", ())))
        start = 1

    ts, rows = [], []
    for row_no, line in enumerate(lines[start:], start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
            t = float(obj["t"])
            sc = np.asarray(obj["sc"], dtype=np.float64)
        except (json.JSONDecodeError, KeyError, TypeError, ValueError):
            raise DataFormatError(path, row_no, "malformed frame object") from None
        expected = (2 * n_sc if kind == "complex" else n_sc) if n_sc else None
        if expected is not None and len(sc) != expected:
            raise DataFormatError(path, row_no,
                                  f"expected {expected} values, got {len(sc)}")
        if ts and t <= ts[-1]:
            raise DataFormatError(path, row_no, "non-increasing timestamp")
        ts.append(t)
        rows.append(sc)
    if len(ts) < 2:
        raise DataFormatError(path, None, "need at least 2 frames")
    vals = np.vstack(rows)
    if kind == "complex":
        vals = vals[:, 0::2] + 1j * vals[:, 1::2]
    try:
        return CsiRecord(np.array(ts), vals, kind=kind, nominal_rate=nominal, meta=meta)
    except ValueError as exc:
        raise DataFormatError(path, None, str(exc)) from None


def save_csi(path, record: CsiRecord, format: str | None = None) -> None:
    path = Path(path)
    if format is None:
        format = "ndjson" if path.suffix in (".ndjson", ".jsonl") else "csv"
    if format == "csv":
        text = _csi_csv_text(record)
    elif format == "ndjson":
        text = _csi_ndjson_text(record)
    else:
        raise ValueError(f"unknown CSI format {format!r}")
    atomic_write_text(path, text)


def _row_values(record: CsiRecord, i: int) -> list[float]:
    if record.kind == "complex":
        row = record.values[i]
        out = np.empty(2 * len(row))
        out[0::2] = row.real
        out[1::2] = row.imag
        return out.tolist()
    return record.values[i].tolist()


def _csi_csv_text(record: CsiRecord) -> str:
    out = [_csi_header(record)]
    for i in range(record.n_frames):
        cells = [fmt_time(record.timestamps[i])]
        cells.extend(fmt_value(v) for v in _row_values(record, i))
        out.append(",".join(cells))
    return "\n".join(out) + "\n"


def _csi_ndjson_text(record: CsiRecord) -> str:
    head = {"csi": "v1", "kind": record.kind, "subcarriers": record.n_subcarriers,
            "nominal_rate": record.nominal_rate}
    if record.meta.subject:
        head["subject"] = record.meta.subject
    if record.meta.posture != "unknown":
        head["posture"] = record.meta.posture
    if record.meta.tags:
        head["tags"] = list(record.meta.tags)
    out = [json.dumps(head, sort_keys=True)]
    for i in range(record.n_frames):
        out.append('{"t": %s, "sc": [%s]}'
                   % (fmt_value(record.timestamps[i]),
                      ", ".join(fmt_value(v) for v in _row_values(record, i))))
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# Reference / waveform load/save

def load_reference(path, rate: float | None = None) -> UniformSeries:
    """Load a single-column reference/waveform CSV; `rate` overrides the header."""
    path = Path(path)
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise DataFormatError(path, None, "empty file")
    tokens = _parse_header_tokens(path, lines[0], "ref")
    try:
        file_rate = float(tokens.get("rate", DEFAULT_REFERENCE_RATE))
        start = float(tokens.get("start", 0.0))
    except ValueError as exc:
        raise DataFormatError(path, None, f"bad header value: {exc}") from None
    samples = []
    for row_no, line in enumerate(lines[1:], start=1):
        if not line.strip():
            continue
        try:
            samples.append(float(line))
        except ValueError:
            raise DataFormatError(path, row_no, "non-numeric value") from None
    if len(samples) < 2:
        raise DataFormatError(path, None, "need at least 2 samples")
    try:
        return UniformSeries(np.array(samples), rate if rate is not None else file_rate,
                             start)
    except ValueError as exc:
        raise DataFormatError(path, None, str(exc)) from None


def save_reference(path, series: UniformSeries) -> None:
    out = [f"# ref v1 rate={fmt_value(series.rate)} start={fmt_value(series.start_time)}"]
    out.extend(fmt_value(v) for v in series.samples.tolist())
    atomic_write_text(path, "\n".join(out) + "\n")

"""Series ingestion, chronological splitting, min-max scaling, windowing,
and synthetic generators standing in for proprietary flow data.

CSV format: header ``timestamp,value``, ISO-8601 timestamps with a zone
designator, decimal values.  Records are sorted ascending after parsing;
duplicate timestamps are rejected as a data-quality signal.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone
from pathlib import Path
from typing import Optional, Sequence, TextIO, Union

import numpy as np

from .errors import ConfigError, ParseError

__all__ = [
    "SeriesRecord",
    "Scaler",
    "WindowedDataset",
    "parse_csv",
    "write_csv",
    "split_series",
    "fit_scaler",
    "scale",
    "unscale",
    "make_windows",
    "synth_series",
    "SYNTH_KINDS",
]

# Scaled values may drift outside [0, 1] on test data; beyond these
# bounds the series is considered incompatible with the scaler.
SCALED_LOW = -0.5
SCALED_HIGH = 1.5

EPOCH = datetime(2017, 1, 1, tzinfo=timezone.utc)

SYNTH_KINDS = ("sine", "double-season", "trend-season")


@dataclass(frozen=True)
class SeriesRecord:
    timestamp: datetime
    value: float


@dataclass(frozen=True)
class Scaler:
    """Linear map sending [min, max] onto [0, 1]."""

    min: float
    max: float

    def __post_init__(self):
        if not (math.isfinite(self.min) and math.isfinite(self.max)):
            raise ConfigError("scaler bounds must be finite")
        if self.max <= self.min:
            raise ConfigError(
                f"scaler needs max > min, got min={self.min} max={self.max}"
            )


@dataclass(frozen=True)
class WindowedDataset:
    """Supervised samples: each row of inputs predicts the matching target."""

    window_len: int
    inputs: np.ndarray   # (n, window_len), scaled
    targets: np.ndarray  # (n,), scaled
    scaler: Scaler

    def __post_init__(self):
        inputs = np.asarray(self.inputs, dtype=np.float64)
        targets = np.asarray(self.targets, dtype=np.float64)
        if inputs.ndim != 2 or inputs.shape[1] != self.window_len:
            raise ConfigError(
                f"inputs must be (n, {self.window_len}), got {inputs.shape}"
            )
        if targets.shape != (inputs.shape[0],):
            raise ConfigError(
                f"{inputs.shape[0]} inputs but {targets.shape} targets"
            )
        lo = min(inputs.min(), targets.min()) if targets.size else 0.0
        hi = max(inputs.max(), targets.max()) if targets.size else 0.0
        if targets.size and (lo < SCALED_LOW or hi > SCALED_HIGH):
            raise ConfigError(
                f"scaled values fall outside [{SCALED_LOW}, {SCALED_HIGH}] "
                f"(range [{lo:.4f}, {hi:.4f}]); series is incompatible with "
                "the scaler"
            )
        object.__setattr__(self, "inputs", inputs)
        object.__setattr__(self, "targets", targets)

    def __len__(self) -> int:
        return len(self.targets)


def _parse_timestamp(text: str, line_no: int) -> datetime:
    raw = text.strip()
    # datetime.fromisoformat on 3.10 rejects a trailing Z designator.
    candidate = raw[:-1] + "+00:00" if raw.endswith("Z") else raw
    try:
        ts = datetime.fromisoformat(candidate)
    except ValueError as exc:
        raise ParseError(f"line {line_no}: bad timestamp {raw!r}: {exc}") from exc
    if ts.tzinfo is None:
        raise ParseError(f"line {line_no}: timestamp {raw!r} has no zone designator")
    return ts


def parse_csv(source: Union[str, Path, TextIO]) -> list[SeriesRecord]:
    """Read, validate and chronologically sort a timestamp,value CSV."""
    if isinstance(source, (str, Path)):
        with open(source, "r", encoding="utf-8", newline="") as fh:
            return parse_csv(fh)
    reader = csv.reader(source)
    try:
        header = next(reader)
    except StopIteration:
        raise ParseError("empty file: expected a 'timestamp,value' header") from None
    if [h.strip() for h in header] != ["timestamp", "value"]:
        raise ParseError(
            f"line 1: expected header 'timestamp,value', got {','.join(header)!r}"
        )
    records = []
    for line_no, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != 2:
            raise ParseError(f"line {line_no}: expected 2 fields, got {len(row)}")
        ts = _parse_timestamp(row[0], line_no)
        try:
            value = float(row[1])
        except ValueError as exc:
            raise ParseError(
                f"line {line_no}: bad value {row[1]!r}: not a number"
            ) from exc
        if not math.isfinite(value):
            raise ParseError(f"line {line_no}: non-finite value {row[1]!r}")
        records.append(SeriesRecord(timestamp=ts, value=value))
    if not records:
        raise ParseError("file has a header but no records")
    records.sort(key=lambda r: r.timestamp)
    for prev, cur in zip(records, records[1:]):
        if prev.timestamp == cur.timestamp:
            raise ParseError(f"duplicate timestamp {prev.timestamp.isoformat()}")
    return records


def _format_timestamp(ts: datetime) -> str:
    return ts.isoformat().replace("+00:00", "Z")


def write_csv(records: Sequence[SeriesRecord], dest: Union[str, Path, TextIO]) -> None:
    """Serialize records in the same format parse_csv reads."""
    if isinstance(dest, (str, Path)):
        with open(dest, "w", encoding="utf-8", newline="") as fh:
            write_csv(records, fh)
        return
    dest.write("timestamp,value\n")
    for rec in records:
        dest.write(f"{_format_timestamp(rec.timestamp)},{rec.value!r}\n")


def serialize_csv(records: Sequence[SeriesRecord]) -> str:
    buf = io.StringIO()
    write_csv(records, buf)
    return buf.getvalue()


def split_series(
    series: Sequence[SeriesRecord], train_fraction: float
) -> tuple[list[SeriesRecord], list[SeriesRecord]]:
    """Chronological prefix/suffix split; training gets ceil(fraction * n)."""
    if not (0 < train_fraction < 1):
        raise ConfigError(
            f"train_fraction must lie strictly between 0 and 1, got {train_fraction}"
        )
    if len(series) < 2:
        raise ConfigError(f"need at least 2 records to split, got {len(series)}")
    cut = math.ceil(train_fraction * len(series))
    return list(series[:cut]), list(series[cut:])


def fit_scaler(train_values) -> Scaler:
    """Fit min-max bounds; call this on the training split only."""
    values = np.asarray(
        [v.value for v in train_values]
        if train_values and isinstance(train_values[0], SeriesRecord)
        else train_values,
        dtype=np.float64,
    )
    if values.size == 0:
        raise ConfigError("cannot fit a scaler on an empty series")
    lo, hi = float(values.min()), float(values.max())
    if hi == lo:
        raise ConfigError(f"constant series (all values {lo}); scaling is degenerate")
    return Scaler(min=lo, max=hi)


def scale(values, scaler: Scaler) -> np.ndarray:
    values = np.asarray(values, dtype=np.float64)
    return (values - scaler.min) / (scaler.max - scaler.min)


def unscale(values, scaler: Scaler) -> np.ndarray:
    values = np.asarray(values, dtype=np.float64)
    return values * (scaler.max - scaler.min) + scaler.min


def make_windows(
    series_values,
    window_len: int,
    scaler: Scaler,
    warmup: Optional[Sequence[float]] = None,
) -> WindowedDataset:
    """Slide a window over scaled values, pairing each full-history
    position with the next value as its target.

    ``warmup`` supplies trailing values from the preceding split so the
    first targets of a test split still see a full window of context.
    Sample count is len(warmup) + len(series_values) - window_len.
    """
    if window_len < 1:
        raise ConfigError(f"window_len must be >= 1, got {window_len}")
    values = np.asarray(series_values, dtype=np.float64)
    warm = np.asarray([] if warmup is None else warmup, dtype=np.float64)
    if warm.size not in (0, window_len):
        raise ConfigError(
            f"warmup must be empty or exactly {window_len} values, got {warm.size}"
        )
    full = np.concatenate([warm, values])
    n_samples = full.size - window_len
    if values.size == 0 or n_samples < 1:
        raise ConfigError(
            f"need warmup + series length >= window + 1 "
            f"({full.size} values for window {window_len})"
        )
    inputs = np.stack([full[t - window_len:t] for t in range(window_len, full.size)])
    targets = full[window_len:].copy()
    return WindowedDataset(
        window_len=window_len, inputs=inputs, targets=targets, scaler=scaler
    )


def synth_series(
    kind: str, n: int, noise_sigma: float = 0.0, seed: int = 0
) -> list[SeriesRecord]:
    """Deterministic hourly synthetic flow series.

    sine:          10 + 3 sin(2 pi t / 24) + noise
    double-season: sine plus a 1.5-amplitude weekly (period 168) component
    trend-season:  sine plus a 0.01 * t linear drift
    """
    if n < 1:
        raise ConfigError(f"n must be >= 1, got {n}")
    if noise_sigma < 0:
        raise ConfigError(f"noise_sigma must be >= 0, got {noise_sigma}")
    t = np.arange(n, dtype=np.float64)
    base = 10.0 + 3.0 * np.sin(2 * np.pi * t / 24.0)
    if kind == "sine":
        values = base
    elif kind == "double-season":
        values = base + 1.5 * np.sin(2 * np.pi * t / 168.0)
    elif kind == "trend-season":
        values = base + 0.01 * t
    else:
        raise ConfigError(
            f"unknown kind {kind!r}; expected one of {', '.join(SYNTH_KINDS)}"
        )
    rng = np.random.default_rng(seed)
    values = values + noise_sigma * rng.standard_normal(n)
    return [
        SeriesRecord(timestamp=EPOCH + timedelta(hours=int(i)), value=float(v))
        for i, v in enumerate(values)
    ]

"""Z-axis bandpass filtering and 30 s activity-count epochs."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.signal import butter, sosfiltfilt

from .errors import InvalidFilterSpec, LengthMismatch, MalformedRow, NonMonotoneTimestamp, SequenceTooShort

EPOCH_SECONDS = 30
EPOCH_HEADER = ["epoch_index", "count", "missing"]


@dataclass(frozen=True)
class FilterSpec:
    low_cut_hz: float = 0.25
    high_cut_hz: float = 11.0
    order: int = 4
    sample_rate_hz: float = 30.0

    def validate(self) -> None:
        nyq = self.sample_rate_hz / 2
        if not (0 < self.low_cut_hz < self.high_cut_hz < nyq):
            raise InvalidFilterSpec(
                f"need 0 < {self.low_cut_hz} < {self.high_cut_hz} < {nyq} (Nyquist)"
            )
        if self.order < 1:
            raise InvalidFilterSpec("order must be >= 1")

    def sos(self) -> np.ndarray:
        self.validate()
        return butter(
            self.order,
            [self.low_cut_hz, self.high_cut_hz],
            btype="bandpass",
            fs=self.sample_rate_hz,
            output="sos",
        )


def bandpass(z_samples, spec: FilterSpec = FilterSpec()) -> np.ndarray:
    """Zero-phase Butterworth bandpass (forward-backward second-order sections)."""
    sos = spec.sos()
    x = np.asarray(z_samples, dtype=np.float64)
    if x.ndim != 1 or len(x) < spec.order + 1:
        raise SequenceTooShort(f"need at least {spec.order + 1} samples, got {x.size}")
    padlen = min(3 * (2 * len(sos) + 1), len(x) - 1)
    return sosfiltfilt(sos, x, padlen=padlen)


@dataclass
class EpochSeries:
    participant_id: str
    start_ms: int
    counts: np.ndarray
    missing: np.ndarray
    epoch_seconds: int = EPOCH_SECONDS

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.float64)
        self.missing = np.asarray(self.missing, dtype=bool)
        if self.counts.shape != self.missing.shape:
            raise LengthMismatch("counts and missing mask differ in length")
        if np.any(self.counts < 0):
            raise ValueError("activity counts must be non-negative")
        if np.any(self.counts[self.missing] != 0):
            raise ValueError("missing epochs must carry a zero count")

    def __len__(self) -> int:
        return len(self.counts)


def epoch_counts(
    filtered,
    timestamps,
    sample_rate_hz: float = 30.0,
    *,
    participant_id: str = "",
    start_ms: int | None = None,
    end_ms: int | None = None,
) -> EpochSeries:
    """Sum of per-second maxima of ``|filtered|`` for each 30 s epoch.

    Seconds are counted from ``start_ms`` (default: first timestamp) and the
    series covers ``[start_ms, end_ms)``; ``end_ms`` defaults to one sample
    period past the last timestamp.  An epoch with more than half of its
    seconds empty is marked missing and zero-filled.
    """
    x = np.abs(np.asarray(filtered, dtype=np.float64))
    ts = np.asarray(timestamps, dtype=np.int64)
    if x.shape != ts.shape:
        raise LengthMismatch(f"{x.size} values vs {ts.size} timestamps")
    if ts.size > 1 and np.any(np.diff(ts) <= 0):
        raise NonMonotoneTimestamp("timestamps not strictly increasing")
    if start_ms is None:
        start_ms = int(ts[0]) if ts.size else 0
    if end_ms is None:
        end_ms = int(ts[-1]) + int(round(1000.0 / sample_rate_hz)) if ts.size else start_ms
    keep = (ts >= start_ms) & (ts < end_ms)
    x, ts = x[keep], ts[keep]

    n_epochs = -(-(end_ms - start_ms) // (1000 * EPOCH_SECONDS))
    n_sec = n_epochs * EPOCH_SECONDS
    per_sec = np.zeros(n_sec, dtype=np.float64)
    has = np.zeros(n_sec, dtype=bool)
    if ts.size:
        sec = (ts - start_ms) // 1000
        starts = np.flatnonzero(np.r_[True, sec[1:] != sec[:-1]])
        per_sec[sec[starts]] = np.maximum.reduceat(x, starts)
        has[sec[starts]] = True

    per_sec = per_sec.reshape(n_epochs, EPOCH_SECONDS)
    # sequential left-to-right accumulation, same order as a plain loop
    counts = np.zeros(n_epochs, dtype=np.float64)
    for k in range(EPOCH_SECONDS):
        counts += per_sec[:, k]
    empty = EPOCH_SECONDS - has.reshape(n_epochs, EPOCH_SECONDS).sum(axis=1)
    missing = empty > EPOCH_SECONDS // 2
    counts[missing] = 0.0
    return EpochSeries(participant_id, int(start_ms), counts, missing)


def counts_from_raw(rec, spec: FilterSpec | None = None, end_ms: int | None = None) -> EpochSeries:
    """Filter a RawRecording's Z axis and reduce it to epochs."""
    spec = spec or FilterSpec(sample_rate_hz=rec.nominal_rate_hz)
    z = rec.z
    ts = rec.timestamps
    # gaps split the stream into independently filtered runs
    gap = np.flatnonzero(np.diff(ts) > 2 * 1000.0 / spec.sample_rate_hz) + 1
    filtered = np.zeros_like(z)
    for lo, hi in zip(np.r_[0, gap], np.r_[gap, len(z)]):
        if hi - lo >= spec.order + 1:
            filtered[lo:hi] = bandpass(z[lo:hi], spec)
    return epoch_counts(
        filtered, ts, spec.sample_rate_hz, participant_id=rec.participant_id, end_ms=end_ms
    )


def write_epoch_csv(series: EpochSeries, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        fh.write(",".join(EPOCH_HEADER) + "\n")
        for i, (c, m) in enumerate(zip(series.counts.tolist(), series.missing.tolist())):
            fh.write(f"{i},{c!r},{int(m)}\n")


def read_epoch_csv(path, participant_id: str | None = None, start_ms: int = 0) -> EpochSeries:
    """Parse an epoch CSV; rows may come in any order but indices must be 0..n-1."""
    path = Path(path)
    rows: list[tuple[int, float, bool]] = []
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != EPOCH_HEADER:
            raise MalformedRow(1, f"expected header {','.join(EPOCH_HEADER)}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                idx, c, m = int(row[0]), float(row[1]), int(row[2])
            except (ValueError, IndexError):
                raise MalformedRow(lineno, "expected epoch_index,count,missing") from None
            if m not in (0, 1) or c < 0:
                raise MalformedRow(lineno, "missing must be 0/1 and count >= 0")
            rows.append((idx, c, bool(m)))
    rows.sort(key=lambda r: r[0])
    if [r[0] for r in rows] != list(range(len(rows))):
        raise MalformedRow(0, "epoch indices are not a contiguous 0..n-1 range")
    counts = np.array([r[1] for r in rows], dtype=np.float64)
    missing = np.array([r[2] for r in rows], dtype=bool)
    return EpochSeries(participant_id or path.stem, start_ms, counts, missing)

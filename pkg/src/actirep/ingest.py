"""Raw accelerometer and survey CSV ingestion.

Ingestion is lossless: gaps in timestamps are kept as-is and resolved later
when epochs are assembled into maps.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DuplicateParticipant, EmptyFile, MalformedRow, NonMonotoneTimestamp, OutOfRangeScore

RAW_HEADER = ["timestamp_ms", "x", "y", "z"]
SURVEY_HEADER = ["participant_id", "pcl5", "prom_dep8b", "panic_sleep", "sf12"]


@dataclass
class RawRecording:
    participant_id: str
    timestamps: np.ndarray  # int64 ms since epoch
    xyz: np.ndarray  # float64, shape (n, 3), in g
    nominal_rate_hz: float = 30.0

    def __post_init__(self):
        self.timestamps = np.asarray(self.timestamps, dtype=np.int64)
        self.xyz = np.asarray(self.xyz, dtype=np.float64).reshape(-1, 3)
        if len(self.timestamps) != len(self.xyz):
            raise ValueError("timestamps and samples differ in length")
        if self.nominal_rate_hz <= 0:
            raise ValueError("nominal_rate_hz must be positive")
        if len(self.timestamps) > 1 and np.any(np.diff(self.timestamps) <= 0):
            raise NonMonotoneTimestamp(f"{self.participant_id}: timestamps not strictly increasing")
        if not np.isfinite(self.xyz).all():
            raise ValueError("non-finite acceleration value")

    @property
    def z(self) -> np.ndarray:
        return self.xyz[:, 2]

    def __len__(self) -> int:
        return len(self.timestamps)

    def __eq__(self, other) -> bool:
        if not isinstance(other, RawRecording):
            return NotImplemented
        return (
            self.participant_id == other.participant_id
            and np.array_equal(self.timestamps, other.timestamps)
            and np.array_equal(self.xyz, other.xyz)
        )


@dataclass(frozen=True)
class SurveyRecord:
    participant_id: str
    pcl5: int | None = None
    prom_dep8b: float | None = None
    panic_sleep_item: int | None = None
    sf12_prehealth: float | None = None

    def __post_init__(self):
        if self.pcl5 is not None and not 0 <= self.pcl5 <= 80:
            raise OutOfRangeScore(f"{self.participant_id}: PCL-5 {self.pcl5} outside [0, 80]")
        if self.panic_sleep_item is not None and not 0 <= self.panic_sleep_item <= 3:
            raise OutOfRangeScore(f"{self.participant_id}: PanicSleep {self.panic_sleep_item} outside [0, 3]")
        for name in ("prom_dep8b", "sf12_prehealth"):
            v = getattr(self, name)
            if v is not None and not math.isfinite(v):
                raise OutOfRangeScore(f"{self.participant_id}: {name} is not finite")


def participant_from_path(path) -> str:
    return Path(path).stem


def parse_raw_csv(path, participant_id: str | None = None, nominal_rate_hz: float = 30.0) -> RawRecording:
    """Read a ``timestamp_ms,x,y,z`` file; participant id defaults to the file stem."""
    path = Path(path)
    pid = participant_id or participant_from_path(path)
    ts: list[int] = []
    vals: list[tuple[float, float, float]] = []
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise EmptyFile(str(path))
        if [h.strip() for h in header] != RAW_HEADER:
            raise MalformedRow(1, f"expected header {','.join(RAW_HEADER)}")
        prev = None
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 4:
                raise MalformedRow(lineno, f"expected 4 fields, got {len(row)}")
            try:
                t = int(row[0])
                x, y, z = float(row[1]), float(row[2]), float(row[3])
            except ValueError as exc:
                raise MalformedRow(lineno, str(exc)) from None
            if not (math.isfinite(x) and math.isfinite(y) and math.isfinite(z)):
                raise MalformedRow(lineno, "non-finite acceleration")
            if prev is not None and t <= prev:
                raise NonMonotoneTimestamp(f"{path}: line {lineno}: {t} after {prev}")
            prev = t
            ts.append(t)
            vals.append((x, y, z))
    if not ts:
        raise EmptyFile(str(path))
    return RawRecording(pid, np.array(ts, dtype=np.int64), np.array(vals, dtype=np.float64), nominal_rate_hz)


def write_raw_csv(rec: RawRecording, path) -> None:
    # repr() gives the shortest string that round-trips a float64 exactly
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        fh.write(",".join(RAW_HEADER) + "\n")
        lines = [
            f"{t},{x!r},{y!r},{z!r}\n"
            for t, (x, y, z) in zip(rec.timestamps.tolist(), rec.xyz.tolist())
        ]
        fh.writelines(lines)


def _opt(cell: str, conv, lineno: int, name: str):
    cell = cell.strip()
    if cell == "":
        return None
    try:
        return conv(cell)
    except ValueError:
        raise MalformedRow(lineno, f"bad {name} value {cell!r}") from None


def _int_score(cell: str) -> int:
    v = float(cell)
    if v != int(v):
        raise ValueError(cell)
    return int(v)


def parse_survey_csv(path) -> list[SurveyRecord]:
    path = Path(path)
    out: list[SurveyRecord] = []
    seen: set[str] = set()
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise EmptyFile(str(path))
        if [h.strip() for h in header] != SURVEY_HEADER:
            raise MalformedRow(1, f"expected header {','.join(SURVEY_HEADER)}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 5:
                raise MalformedRow(lineno, f"expected 5 fields, got {len(row)}")
            pid = row[0].strip()
            if not pid:
                raise MalformedRow(lineno, "empty participant_id")
            if pid in seen:
                raise DuplicateParticipant(f"{pid} (line {lineno})")
            seen.add(pid)
            out.append(
                SurveyRecord(
                    pid,
                    pcl5=_opt(row[1], _int_score, lineno, "pcl5"),
                    prom_dep8b=_opt(row[2], float, lineno, "prom_dep8b"),
                    panic_sleep_item=_opt(row[3], _int_score, lineno, "panic_sleep"),
                    sf12_prehealth=_opt(row[4], float, lineno, "sf12"),
                )
            )
    return out


def write_survey_csv(records, path) -> None:
    def cell(v):
        return "" if v is None else repr(v)

    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        fh.write(",".join(SURVEY_HEADER) + "\n")
        for r in records:
            fh.write(
                ",".join(
                    [r.participant_id, cell(r.pcl5), cell(r.prom_dep8b), cell(r.panic_sleep_item), cell(r.sf12_prehealth)]
                )
                + "\n"
            )

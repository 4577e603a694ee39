"""Day x time actigraphy maps: assembly, normalisation, persistence, double plots."""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import BadMagic, Excluded, TruncatedFile, VersionMismatch
from .signal import EPOCH_SECONDS, EpochSeries

SECONDS_PER_DAY = 86400
MAX_MISSING_FRACTION = 0.5
MAP_MAGIC = b"AMAP"
MAP_VERSION = 1


@dataclass(frozen=True)
class MapConfig:
    days: int = 28
    bin_seconds: int = 60
    normalization_cap: float = 1.0

    def __post_init__(self):
        if self.days < 1:
            raise ValueError("days must be >= 1")
        if self.bin_seconds <= 0 or self.bin_seconds % EPOCH_SECONDS:
            raise ValueError(f"bin_seconds must be a positive multiple of {EPOCH_SECONDS}")
        if SECONDS_PER_DAY % self.bin_seconds:
            raise ValueError("bin_seconds must divide a day")
        if not self.normalization_cap > 0:
            raise ValueError("normalization_cap must be > 0")

    @property
    def bins_per_day(self) -> int:
        return SECONDS_PER_DAY // self.bin_seconds

    @property
    def epochs_per_bin(self) -> int:
        return self.bin_seconds // EPOCH_SECONDS

    @property
    def n_epochs(self) -> int:
        return self.days * SECONDS_PER_DAY // EPOCH_SECONDS


@dataclass
class ActigraphyMap:
    participant_id: str
    values: np.ndarray  # float32 (days, bins_per_day), each in [0, 1]
    missing_fraction: float = 0.0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float32)
        if self.values.ndim != 2:
            raise ValueError("map values must be a 2-D matrix")

    @property
    def days(self) -> int:
        return self.values.shape[0]

    @property
    def bins_per_day(self) -> int:
        return self.values.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def __eq__(self, other) -> bool:
        if not isinstance(other, ActigraphyMap):
            return NotImplemented
        return (
            self.participant_id == other.participant_id
            and self.values.shape == other.values.shape
            and self.values.tobytes() == other.values.tobytes()
        )


def bin_counts(series: EpochSeries, cfg: MapConfig) -> tuple[np.ndarray, float]:
    """Binned (days, bins) count matrix and missing fraction of the window."""
    need = cfg.n_epochs
    if len(series) < need:
        raise Excluded(Excluded.TOO_SHORT, f"{series.participant_id}: {len(series)} epochs < {need}")
    counts = np.where(series.missing[:need], 0.0, series.counts[:need])
    frac = float(series.missing[:need].mean())
    binned = counts.reshape(cfg.days, cfg.bins_per_day, cfg.epochs_per_bin).sum(axis=2)
    return binned, frac


def normalize(counts, cap: float) -> np.ndarray:
    """log(1 + c) / log(1 + cap), clipped to [0, 1]."""
    v = np.log1p(np.asarray(counts, dtype=np.float64)) / np.log1p(cap)
    return np.clip(v, 0.0, 1.0)


def build_map(series: EpochSeries, cfg: MapConfig) -> ActigraphyMap:
    """Raise :class:`Excluded` when the window is too short or more than half missing."""
    binned, frac = bin_counts(series, cfg)
    if frac > MAX_MISSING_FRACTION:
        raise Excluded(Excluded.TOO_MISSING, f"{series.participant_id}: {frac:.3f} missing")
    return ActigraphyMap(series.participant_id, normalize(binned, cfg.normalization_cap), frac)


def fit_normalization_cap(series_list, cfg: MapConfig, percentile: float = 99.5) -> float:
    """Dataset-level cap: the given percentile of nonzero binned training counts."""
    pooled = []
    for s in series_list:
        try:
            binned, _ = bin_counts(s, cfg)
        except Excluded:
            continue
        pooled.append(binned[binned > 0])
    nz = np.concatenate(pooled) if pooled else np.empty(0)
    if nz.size == 0:
        return 1.0
    return float(np.percentile(nz, percentile))


# -- double plot ----------------------------------------------------------
def double_plot(m: ActigraphyMap) -> np.ndarray:
    """uint8 image, shape (2*bins, days-1); column k holds day k above day k+1."""
    if m.days < 2:
        raise ValueError("double plot needs at least 2 days")
    v = np.clip(m.values.astype(np.float64), 0.0, 1.0)
    stacked = np.concatenate([v[:-1], v[1:]], axis=1)  # (days-1, 2*bins)
    return np.round(stacked.T * 255.0).astype(np.uint8)


def write_pgm(img: np.ndarray, path) -> None:
    img = np.asarray(img, dtype=np.uint8)
    h, w = img.shape
    with Path(path).open("wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(np.ascontiguousarray(img).tobytes())


def read_pgm(path) -> np.ndarray:
    buf = Path(path).read_bytes()
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while buf[pos : pos + 1].isspace():
            pos += 1
        start = pos
        while not buf[pos : pos + 1].isspace():
            pos += 1
        tokens.append(buf[start:pos])
    if tokens[0] != b"P5":
        raise BadMagic("not a binary PGM")
    w, h, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    pos += 1
    data = np.frombuffer(buf[pos : pos + w * h], dtype=np.uint8)
    if data.size != w * h or maxval != 255:
        raise TruncatedFile("PGM payload shorter than header")
    return data.reshape(h, w)


def render_double_plot(m: ActigraphyMap, path) -> np.ndarray:
    img = double_plot(m)
    write_pgm(img, path)
    return img


# -- binary persistence -----------------------------------------------------
def save_map(m: ActigraphyMap) -> bytes:
    rows, cols = m.values.shape
    pid = m.participant_id.encode("utf-8")
    head = MAP_MAGIC + struct.pack("<HIIH", MAP_VERSION, rows, cols, len(pid)) + pid
    return head + np.ascontiguousarray(m.values, dtype="<f4").tobytes()


def load_map(buf: bytes) -> ActigraphyMap:
    if len(buf) < 4:
        raise TruncatedFile("missing magic")
    if buf[:4] != MAP_MAGIC:
        raise BadMagic("not an AMAP file")
    if len(buf) < 16:
        raise TruncatedFile("header truncated")
    version, rows, cols, id_len = struct.unpack("<HIIH", buf[4:16])
    if version != MAP_VERSION:
        raise VersionMismatch(f"map version {version}, expected {MAP_VERSION}")
    pos = 16 + id_len
    end = pos + 4 * rows * cols
    if len(buf) < end:
        raise TruncatedFile(f"expected {end} bytes, got {len(buf)}")
    pid = buf[16:pos].decode("utf-8")
    vals = np.frombuffer(buf[pos:end], dtype="<f4").astype(np.float32).reshape(rows, cols)
    return ActigraphyMap(pid, vals)


def write_map(m: ActigraphyMap, path) -> None:
    Path(path).write_bytes(save_map(m))


def read_map(path) -> ActigraphyMap:
    return load_map(Path(path).read_bytes())

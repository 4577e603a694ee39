"""Synthetic cohort generator.

Each participant gets a circadian activity envelope (24 h + 12 h harmonics,
rectified so nights are quiet), per-epoch activity bursts, sparse night-time
bursts, and optional contiguous wear gaps.  The per-epoch burst amplitude is
shared by two output levels:

* ``raw``: a 30 Hz triaxial stream whose Z axis is the burst amplitude times
  unit band-limited noise riding on gravity.  This is what a device would
  record; it is large (2.6 M rows per day).
* ``epochs``: activity counts drawn directly from the count distribution the
  raw path produces after filtering (calibrated once by pushing unit noise
  through :mod:`actirep.signal`).  Used for month-long cohorts.

Unhealthy participants get a lower envelope amplitude, a delayed phase and
more night bursts, controlled by :class:`Effect`.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy.signal import butter, sosfilt

from .ingest import RawRecording, SurveyRecord, write_raw_csv, write_survey_csv
from .seeding import derive_seed
from .signal import EPOCH_SECONDS, EpochSeries, FilterSpec, bandpass, epoch_counts, write_epoch_csv

SAMPLE_RATE_HZ = 30.0
START_MS = 1_501_459_200_000  # 2017-07-31T00:00:00Z
EPOCHS_PER_DAY = 86400 // EPOCH_SECONDS
HEALTHY, UNHEALTHY = "healthy", "unhealthy"


@dataclass(frozen=True)
class Effect:
    amplitude_drop: float = 0.3
    phase_shift_hours: float = 2.0
    fragmentation_boost: float = 1.5

    def __post_init__(self):
        if not 0 <= self.amplitude_drop <= 1:
            raise ValueError("amplitude_drop must lie in [0, 1]")
        if self.fragmentation_boost < 0:
            raise ValueError("fragmentation_boost must be >= 0")


NO_EFFECT = Effect(0.0, 0.0, 0.0)


@dataclass(frozen=True)
class CohortSpec:
    n_participants: int = 200
    days: int = 28
    unhealthy_fraction: float = 0.5
    effect: Effect = field(default_factory=Effect)
    missing_rate: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.n_participants < 2:
            raise ValueError("n_participants must be >= 2")
        if self.days < 1:
            raise ValueError("days must be >= 1")
        if not 0 < self.unhealthy_fraction < 1:
            raise ValueError("unhealthy_fraction must lie in (0, 1)")
        if not 0 <= self.missing_rate < 1:
            raise ValueError("missing_rate must lie in [0, 1)")

    @property
    def n_unhealthy(self) -> int:
        return int(round(self.n_participants * self.unhealthy_fraction))


@dataclass
class SimParticipant:
    participant_id: str
    label: str
    levels: np.ndarray  # burst amplitude per 30 s epoch, in g
    missing: np.ndarray  # bool per epoch
    survey: SurveyRecord
    index: int


def participant_id(i: int) -> str:
    return f"p{i:04d}"


# -- noise process ------------------------------------------------------------
@lru_cache(maxsize=1)
def _noise_sos() -> np.ndarray:
    return butter(2, [0.5, 4.0], btype="bandpass", fs=SAMPLE_RATE_HZ, output="sos")


@lru_cache(maxsize=1)
def _noise_scale() -> float:
    rng = np.random.default_rng(12345)
    y = sosfilt(_noise_sos(), rng.standard_normal(600_000))
    return float(y[1000:].std())


def unit_noise(rng: np.random.Generator, n: int) -> np.ndarray:
    """Band-limited (0.5-4 Hz) Gaussian noise with unit standard deviation."""
    return sosfilt(_noise_sos(), rng.standard_normal(n)) / _noise_scale()


@lru_cache(maxsize=1)
def unit_count_stats() -> tuple[float, float]:
    """Mean and SD of the epoch count produced by unit-amplitude noise."""
    rng = np.random.default_rng(54321)
    n = int(4 * 3600 * SAMPLE_RATE_HZ)
    ts = np.round(np.arange(n) * (1000.0 / SAMPLE_RATE_HZ)).astype(np.int64)
    z = -1.0 + unit_noise(rng, n)
    c = epoch_counts(bandpass(z, FilterSpec()), ts, SAMPLE_RATE_HZ).counts[2:-2]
    return float(c.mean()), float(c.std(ddof=1))


# -- activity model -------------------------------------------------------------
def circadian_shape(hours: np.ndarray, acrophase: float, harmonic: float) -> np.ndarray:
    """Rectified 24 h + 12 h sinusoid scaled to peak near 1; zero at night."""
    x = 2 * np.pi * (hours - acrophase) / 24.0
    g = np.cos(x) + harmonic * np.cos(2 * x) + 0.1
    return np.maximum(g, 0.0) / (1.1 + harmonic)


def _assign_labels(spec: CohortSpec) -> list[str]:
    rng = np.random.default_rng(derive_seed(spec.seed, "sim/labels"))
    order = rng.permutation(spec.n_participants)
    sick = set(order[: spec.n_unhealthy].tolist())
    return [UNHEALTHY if i in sick else HEALTHY for i in range(spec.n_participants)]


def _levels(spec: CohortSpec, i: int, unhealthy: bool) -> np.ndarray:
    rng = np.random.default_rng(derive_seed(spec.seed, "sim/activity", i))
    eff = spec.effect
    amp = 0.12 * np.exp(rng.normal(0.0, 0.25))
    acrophase = 15.0 + rng.normal(0.0, 1.0)
    harmonic = 0.4 + rng.normal(0.0, 0.08)
    night_rate = 0.03
    if unhealthy:
        amp *= 1.0 - eff.amplitude_drop
        acrophase += eff.phase_shift_hours
        night_rate *= 1.0 + eff.fragmentation_boost

    n = spec.days * EPOCHS_PER_DAY
    hours = (np.arange(n) * EPOCH_SECONDS / 3600.0) % 24.0
    day_factor = np.repeat(np.exp(rng.normal(0.0, 0.15, spec.days)), EPOCHS_PER_DAY)
    g = circadian_shape(hours, acrophase, harmonic)
    active = rng.random(n) < np.where(g > 0, 0.1 + 0.85 * g, 0.0)
    burst = rng.gamma(2.0, 0.5, n)
    levels = np.where(active, amp * day_factor * g * burst, 0.0)

    night = g == 0
    night_burst = night & (rng.random(n) < night_rate)
    levels = np.where(night_burst, 0.5 * amp * rng.gamma(2.0, 0.5, n), levels)
    return levels


def _missing_mask(spec: CohortSpec, i: int) -> np.ndarray:
    n = spec.days * EPOCHS_PER_DAY
    mask = np.zeros(n, dtype=bool)
    target = int(round(spec.missing_rate * n))
    if target == 0:
        return mask
    rng = np.random.default_rng(derive_seed(spec.seed, "sim/missing", i))
    first = min(120, n - 1)  # keep the first hour so the recording start is fixed
    while mask.sum() < target:
        length = max(1, int(rng.exponential(6 * 120)))
        start = int(rng.integers(first, n))
        room = target - int(mask.sum())
        seg = mask[start : start + length]
        fresh = np.flatnonzero(~seg)[:room]
        seg[fresh] = True
    return mask


def _survey(spec: CohortSpec, i: int, unhealthy: bool) -> SurveyRecord:
    rng = np.random.default_rng(derive_seed(spec.seed, "sim/survey", i))
    pid = participant_id(i)
    if unhealthy:
        return SurveyRecord(
            pid,
            pcl5=int(rng.integers(29, 81)),
            prom_dep8b=round(float(rng.uniform(60.0, 80.0)), 1),
            panic_sleep_item=int(rng.integers(1, 4)),
            sf12_prehealth=round(float(rng.normal(44.0, 8.0)), 1),
        )
    return SurveyRecord(
        pid,
        pcl5=int(rng.integers(0, 29)),
        prom_dep8b=round(float(rng.uniform(38.0, 59.8)), 1),
        panic_sleep_item=0,
        sf12_prehealth=round(float(rng.normal(52.0, 8.0)), 1),
    )


def simulate_participant(spec: CohortSpec, i: int, labels: list[str] | None = None) -> SimParticipant:
    labels = labels or _assign_labels(spec)
    sick = labels[i] == UNHEALTHY
    return SimParticipant(
        participant_id(i),
        labels[i],
        _levels(spec, i, sick),
        _missing_mask(spec, i),
        _survey(spec, i, sick),
        i,
    )


def simulate_cohort(spec: CohortSpec) -> list[SimParticipant]:
    labels = _assign_labels(spec)
    return [simulate_participant(spec, i, labels) for i in range(spec.n_participants)]


def epoch_series(spec: CohortSpec, p: SimParticipant) -> EpochSeries:
    """Count-level realisation matching the raw path's filtered-count distribution."""
    mu, sd = unit_count_stats()
    rng = np.random.default_rng(derive_seed(spec.seed, "sim/counts", p.index))
    s = np.maximum(rng.normal(mu, sd, len(p.levels)), 0.0)
    counts = np.round(p.levels * s, 4)
    counts[p.missing] = 0.0
    return EpochSeries(p.participant_id, START_MS, counts, p.missing.copy())


def raw_recording(spec: CohortSpec, p: SimParticipant) -> RawRecording:
    """30 Hz triaxial stream; samples inside missing epochs are dropped."""
    rng = np.random.default_rng(derive_seed(spec.seed, "sim/raw", p.index))
    n = int(spec.days * 86400 * SAMPLE_RATE_HZ)
    k = np.arange(n)
    offsets = np.round(k * (1000.0 / SAMPLE_RATE_HZ)).astype(np.int64)
    epoch = offsets // (1000 * EPOCH_SECONDS)
    amp = p.levels[epoch]
    z = -1.0 + amp * unit_noise(rng, n)
    x = 0.05 * amp * rng.standard_normal(n)
    y = 0.05 * amp * rng.standard_normal(n)
    keep = ~p.missing[epoch]
    xyz = np.round(np.stack([x, y, z], axis=1)[keep], 4) + 0.0  # +0.0 folds -0.0
    return RawRecording(p.participant_id, START_MS + offsets[keep], xyz, SAMPLE_RATE_HZ)


def generate_cohort(spec: CohortSpec, out_dir, level: str = "epochs") -> dict:
    """Write per-participant CSVs, ``surveys.csv``, ``manifest.json`` and ``cohort.json``.

    The manifest maps participant id -> {label, files}; ``cohort.json``
    records the generating spec and output level.
    """
    if level not in ("raw", "epochs"):
        raise ValueError("level must be 'raw' or 'epochs'")
    out = Path(out_dir)
    sub = out / level
    sub.mkdir(parents=True, exist_ok=True)
    manifest: dict[str, dict] = {}
    surveys = []
    for p in simulate_cohort(spec):
        path = sub / f"{p.participant_id}.csv"
        if level == "raw":
            write_raw_csv(raw_recording(spec, p), path)
        else:
            write_epoch_csv(epoch_series(spec, p), path)
        surveys.append(p.survey)
        manifest[p.participant_id] = {"label": p.label, "files": [f"{level}/{path.name}"]}
    write_survey_csv(surveys, out / "surveys.csv")
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    meta = {"spec": asdict(spec), "level": level, "start_ms": START_MS}
    (out / "cohort.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return manifest

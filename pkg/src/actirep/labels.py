"""Survey scoring, per-experiment outcome labels and classifier features."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import MissingSF12
from .ingest import SurveyRecord

PCL5_CUTOFF = 28  # PTSD when strictly greater
DEPRESSION_CUTOFF = 60.0  # inclusive
PANIC_SLEEP_CUTOFF = 1  # inclusive

PCL5, PANIC_SLEEP, PROM_DEP8B = "PCL5", "PanicSleep", "PROMDep8b"
HEALTHY, UNHEALTHY, INELIGIBLE = "healthy", "unhealthy", "ineligible"


@dataclass(frozen=True)
class ExperimentSpec:
    id: str
    surveys_used: frozenset
    use_sf12_feature: bool = False


EXPERIMENTS = {
    "E1": ExperimentSpec("E1", frozenset({PCL5})),
    "E2": ExperimentSpec("E2", frozenset({PCL5, PANIC_SLEEP})),
    "E3": ExperimentSpec("E3", frozenset({PCL5, PANIC_SLEEP, PROM_DEP8B})),
    "E4": ExperimentSpec("E4", frozenset({PCL5, PANIC_SLEEP, PROM_DEP8B}), use_sf12_feature=True),
}


def experiment(eid: str) -> ExperimentSpec:
    try:
        return EXPERIMENTS[eid]
    except KeyError:
        raise ValueError(f"unknown experiment {eid!r}; choose from {sorted(EXPERIMENTS)}") from None


@dataclass(frozen=True)
class SurveyFlags:
    ptsd: bool | None
    depression: bool | None
    panic_sleep: bool | None

    def get(self, survey: str) -> bool | None:
        return {PCL5: self.ptsd, PANIC_SLEEP: self.panic_sleep, PROM_DEP8B: self.depression}[survey]


def score_surveys(record: SurveyRecord) -> SurveyFlags:
    return SurveyFlags(
        ptsd=None if record.pcl5 is None else record.pcl5 > PCL5_CUTOFF,
        depression=None if record.prom_dep8b is None else record.prom_dep8b >= DEPRESSION_CUTOFF,
        panic_sleep=None if record.panic_sleep_item is None else record.panic_sleep_item >= PANIC_SLEEP_CUTOFF,
    )


@dataclass(frozen=True)
class OutcomeLabel:
    participant_id: str
    experiment: str
    label: str


def assign_label(record: SurveyRecord, spec: ExperimentSpec) -> OutcomeLabel:
    """Unhealthy needs every used survey positive, healthy needs every one negative.

    Mixed patterns and absent values are ineligible.
    """
    flags = score_surveys(record)
    values = [flags.get(s) for s in sorted(spec.surveys_used)]
    if any(v is None for v in values) or (spec.use_sf12_feature and record.sf12_prehealth is None):
        label = INELIGIBLE
    elif all(values):
        label = UNHEALTHY
    elif not any(values):
        label = HEALTHY
    else:
        label = INELIGIBLE
    return OutcomeLabel(record.participant_id, spec.id, label)


def label_cohort(records, spec: ExperimentSpec) -> dict[str, str]:
    return {r.participant_id: assign_label(r, spec).label for r in records}


def write_labels_csv(labels: list[OutcomeLabel], path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        fh.write("participant_id,experiment,label\n")
        for lab in labels:
            fh.write(f"{lab.participant_id},{lab.experiment},{lab.label}\n")


def read_labels_csv(path) -> list[OutcomeLabel]:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        return [OutcomeLabel(r["participant_id"], r["experiment"], r["label"]) for r in csv.DictReader(fh)]


# -- features -----------------------------------------------------------------
@dataclass
class Standardizer:
    mean: np.ndarray
    scale: np.ndarray
    fitted_on: frozenset = frozenset()

    @classmethod
    def fit(cls, rows, ids=()) -> "Standardizer":
        x = np.asarray(rows, dtype=np.float64)
        sd = x.std(axis=0)
        return cls(x.mean(axis=0), np.where(sd > 0, sd, 1.0), frozenset(ids))

    def transform(self, rows) -> np.ndarray:
        return (np.asarray(rows, dtype=np.float64) - self.mean) / self.scale


def raw_features(mu, record: SurveyRecord | None, spec: ExperimentSpec) -> np.ndarray:
    """Unstandardised feature row: latent means, plus SF-12 for E4."""
    mu = np.asarray(mu, dtype=np.float64).ravel()
    if not spec.use_sf12_feature:
        return mu
    if record is None or record.sf12_prehealth is None:
        pid = record.participant_id if record is not None else "?"
        raise MissingSF12(f"{pid}: experiment {spec.id} needs the SF-12 pre-health score")
    return np.append(mu, record.sf12_prehealth)


def build_features(code, record: SurveyRecord | None, spec: ExperimentSpec, standardizer: Standardizer) -> np.ndarray:
    """Standardised z_act (8 values), with standardised SF-12 appended for E4."""
    mu = code.mu if hasattr(code, "mu") else code
    return standardizer.transform(raw_features(mu, record, spec))

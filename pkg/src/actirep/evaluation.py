"""Undersampled, repeated hold-out evaluation and the metrics it reports.

One external repeat = fresh majority-class undersample + stratified
train/test split, both seeded from ``(seed, repeat)`` only, so repeats can
run in any order.  Deep models choose their epoch count by internal k-fold
cross-validation on the training part before being refit on all of it.
"""

from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.stats import rankdata

from . import cnnlstm as cl
from . import vae as vae_mod
from .actigram import ActigraphyMap
from .errors import EmptyClass, InsufficientData, LeakageError, LengthMismatch, NonFinite, SingleClassAUC, SingleClassData
from .ingest import SurveyRecord
from .labels import HEALTHY, UNHEALTHY, ExperimentSpec, Standardizer, raw_features
from .seeding import derive_seed

MODEL_KINDS = ("vae_lr", "cnnlstm", "cnnlstm_aug")
METRICS = ("accuracy", "auc", "precision", "recall")


@dataclass(frozen=True)
class ProtocolConfig:
    external_repeats: int = 30
    internal_folds: int = 5
    test_fraction: float = 0.2
    seed: int = 0
    threshold: float = 0.5
    l2: float = 1e-4
    n_synthetic_per_class: int = 100

    def __post_init__(self):
        if self.external_repeats < 1:
            raise ValueError("external_repeats must be >= 1")
        if self.internal_folds < 2:
            raise ValueError("internal_folds must be >= 2")
        if not 0 < self.test_fraction < 1:
            raise ValueError("test_fraction must lie in (0, 1)")


# -- metrics -------------------------------------------------------------------
def auc_score(scores, labels) -> float:
    """P(random positive outscores random negative), ties counted one half."""
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels).astype(bool)
    n_pos = int(y.sum())
    n_neg = len(y) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise SingleClassAUC("AUC needs both classes")
    ranks = rankdata(s)  # average ranks for ties
    return float((ranks[y].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def metrics(scores, labels, threshold: float = 0.5) -> dict[str, float]:
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels).astype(bool)
    if s.shape != y.shape:
        raise LengthMismatch(f"{s.size} scores vs {y.size} labels")
    if s.size == 0:
        raise LengthMismatch("empty input")
    pred = s >= threshold
    tp = int(np.sum(pred & y))
    fp = int(np.sum(pred & ~y))
    fn = int(np.sum(~pred & y))
    tn = int(np.sum(~pred & ~y))
    return {
        "accuracy": (tp + tn) / len(y),
        "auc": auc_score(s, y),
        "precision": tp / (tp + fp) if tp + fp else 0.0,
        "recall": tp / (tp + fn) if tp + fn else 0.0,
    }


# -- logistic regression ---------------------------------------------------------
def _signed(y: np.ndarray) -> np.ndarray:
    return 2.0 * y - 1.0


def logistic_objective(w: np.ndarray, b: float, X: np.ndarray, y: np.ndarray, l2: float) -> float:
    m = -_signed(y) * (X @ w + b)
    return float(np.mean(np.logaddexp(0.0, m)) + 0.5 * l2 * np.dot(w, w))


def logistic_gradient(w: np.ndarray, b: float, X: np.ndarray, y: np.ndarray, l2: float):
    s = _signed(y)
    m = -s * (X @ w + b)
    # residual written as -s * sigmoid(m) so flipping every label negates it exactly
    r = -s * np.exp(-np.logaddexp(0.0, -m))
    return X.T @ r / len(y) + l2 * w, float(r.mean())


def fit_logistic(X, y, l2: float = 1e-4, tol: float = 1e-6, max_iter: int = 10_000):
    """Full-batch gradient descent from zero; returns (weights, bias)."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if not np.isfinite(X).all():
        raise NonFinite("features contain NaN or inf")
    if len(np.unique(y)) < 2:
        raise SingleClassData("logistic regression needs both classes")
    Xa = np.hstack([X, np.ones((len(X), 1))])
    lipschitz = np.linalg.norm(Xa, 2) ** 2 / (4.0 * len(X)) + l2
    step = 1.0 / lipschitz
    w = np.zeros(X.shape[1])
    b = 0.0
    for _ in range(max_iter):
        gw, gb = logistic_gradient(w, b, X, y, l2)
        if max(np.max(np.abs(gw), initial=0.0), abs(gb)) < tol:
            break
        w = w - step * gw
        b = b - step * gb
    return w, b


def predict_logistic(w, b, X) -> np.ndarray:
    z = np.asarray(X, dtype=np.float64) @ w + b
    return np.exp(-np.logaddexp(0.0, -z))


# -- sampling ----------------------------------------------------------------------
def undersample(healthy, unhealthy, seed: int) -> tuple[list[str], list[str]]:
    """Keep every minority member; sample the majority down without replacement."""
    h = sorted(healthy)
    u = sorted(unhealthy)
    if not h or not u:
        raise EmptyClass("both classes need at least one member")
    rng = np.random.default_rng(derive_seed(seed, "eval/undersample"))
    if len(h) >= len(u):
        pick = rng.choice(len(h), size=len(u), replace=False)
        return sorted(h[i] for i in pick), u
    pick = rng.choice(len(u), size=len(h), replace=False)
    return h, sorted(u[i] for i in pick)


def stratified_split(healthy, unhealthy, test_fraction: float, seed: int):
    """Return (train_ids, test_ids) with each class split separately."""
    rng = np.random.default_rng(derive_seed(seed, "eval/split"))
    train: list[str] = []
    test: list[str] = []
    for ids in (sorted(healthy), sorted(unhealthy)):
        perm = [ids[i] for i in rng.permutation(len(ids))]
        k = int(round(test_fraction * len(ids)))
        k = min(max(k, 1), len(ids) - 1) if len(ids) >= 2 else 0
        test += perm[:k]
        train += perm[k:]
    return sorted(train), sorted(test)


def stratified_folds(ids, labels: dict[str, str], k: int, seed: int) -> list[list[str]]:
    rng = np.random.default_rng(derive_seed(seed, "eval/folds"))
    folds: list[list[str]] = [[] for _ in range(k)]
    for cls in (HEALTHY, UNHEALTHY):
        members = sorted(i for i in ids if labels[i] == cls)
        for j, idx in enumerate(rng.permutation(len(members))):
            folds[j % k].append(members[idx])
    return [sorted(f) for f in folds]


# -- harness -----------------------------------------------------------------------
@dataclass
class ExperimentData:
    labels: dict[str, str]
    surveys: dict[str, SurveyRecord] = field(default_factory=dict)
    codes: dict[str, vae_mod.LatentCode] = field(default_factory=dict)
    maps: dict[str, ActigraphyMap] = field(default_factory=dict)
    vae: vae_mod.VaeModel | None = None
    cnnlstm: cl.CnnLstmConfig | None = None


@dataclass
class EvalReport:
    experiment: str
    model_kind: str
    n_healthy: int
    n_unhealthy: int
    per_repeat: list[dict[str, float]]
    config: dict
    selected_epochs: list[int] = field(default_factory=list)

    @property
    def mean(self) -> dict[str, float]:
        return {m: float(np.mean([r[m] for r in self.per_repeat])) for m in METRICS}

    @property
    def std(self) -> dict[str, float]:
        if len(self.per_repeat) < 2:
            return {m: 0.0 for m in METRICS}
        return {m: float(np.std([r[m] for r in self.per_repeat], ddof=1)) for m in METRICS}

    def to_dict(self) -> dict:
        return {
            "experiment": self.experiment,
            "model_kind": self.model_kind,
            "n_healthy": self.n_healthy,
            "n_unhealthy": self.n_unhealthy,
            "mean": self.mean,
            "std": self.std,
            "per_repeat": {m: [r[m] for r in self.per_repeat] for m in METRICS},
            "selected_epochs": self.selected_epochs,
            "config": self.config,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def write(self, path) -> None:
        Path(path).write_text(self.to_json())

    def table(self) -> str:
        mean, std = self.mean, self.std
        features = "z_act, SF-12" if self.config.get("use_sf12_feature") else "z_act"
        cols = ["Outcome", "Features", "Num. healthy/unhealthy", "Acc.", "AUC", "Precision", "Recall"]
        row = [
            f"{self.experiment} ({'+'.join(self.config.get('surveys_used', []))})",
            features,
            f"{self.n_healthy}/{self.n_unhealthy}",
        ] + [f"{mean[m]:.2f}({std[m]:.2f})" for m in METRICS]
        widths = [max(len(a), len(b)) for a, b in zip(cols, row)]
        fmt = "  ".join(f"{{:<{w}}}" for w in widths)
        return f"{self.model_kind}: mean(std) over {len(self.per_repeat)} external repeats\n" + "\n".join(
            [fmt.format(*cols).rstrip(), fmt.format(*row).rstrip()]
        ) + "\n"


def _check_disjoint(name: str, used, test) -> None:
    overlap = set(used) & set(test)
    if overlap:
        raise LeakageError(f"{name} touched test participants: {sorted(overlap)[:5]}")


def _vae_lr_scores(spec: ExperimentSpec, data: ExperimentData, train, test, labels, cfg: ProtocolConfig):
    rows_tr = [raw_features(data.codes[i].mu, data.surveys.get(i), spec) for i in train]
    std = Standardizer.fit(rows_tr, ids=train)
    _check_disjoint("standardizer", std.fitted_on, test)
    Xtr = std.transform(rows_tr)
    ytr = np.array([labels[i] == UNHEALTHY for i in train], dtype=float)
    w, b = fit_logistic(Xtr, ytr, l2=cfg.l2)
    Xte = std.transform([raw_features(data.codes[i].mu, data.surveys.get(i), spec) for i in test])
    return predict_logistic(w, b, Xte), None


def _items(ids, data: ExperimentData, labels) -> list[vae_mod.LabeledMap]:
    return [vae_mod.LabeledMap(data.maps[i], labels[i]) for i in ids]


def _synthetic(data: ExperimentData, train, labels, cfg: ProtocolConfig, seed: int):
    if data.vae is None:
        raise InsufficientData("cnnlstm_aug needs a trained VAE")
    stats = vae_mod.fit_class_stats([(data.codes[i], labels[i]) for i in train])
    out = []
    for label in (HEALTHY, UNHEALTHY):
        out += vae_mod.generate(data.vae, stats[label], cfg.n_synthetic_per_class, seed)
    return out


def _cnnlstm_scores(data: ExperimentData, train, test, labels, cfg: ProtocolConfig, seed: int, augment: bool):
    ccfg = data.cnnlstm or cl.CnnLstmConfig()
    ccfg = cl.CnnLstmConfig(**{**asdict(ccfg), "seed": derive_seed(seed, "eval/cnnlstm")})
    test_items = _items(test, data, labels)
    cl.assert_no_synthetic(test_items)
    synthetic = _synthetic(data, train, labels, cfg, seed) if augment else []

    folds = stratified_folds(train, labels, cfg.internal_folds, seed)
    curves = []
    for k, fold in enumerate(folds):
        if not fold:
            continue
        inner = [i for i in train if i not in set(fold)]
        if len({labels[i] for i in inner}) < 2:
            continue
        _, log = cl.train_with_augmentation(
            _items(inner, data, labels), synthetic, ccfg, test=_items(fold, data, labels), val=_items(fold, data, labels)
        )
        curves.append(log.val_loss)
    best = int(np.argmin(np.mean(curves, axis=0))) + 1 if curves else ccfg.epochs
    model, _ = cl.train_with_augmentation(_items(train, data, labels), synthetic, ccfg, test=test_items, epochs=best)
    return cl.predict_proba(model, [data.maps[i] for i in test]), best


def run_repeat(model_kind: str, spec: ExperimentSpec, cfg: ProtocolConfig, data: ExperimentData, r: int):
    """One external repeat; returns (metrics, selected_epochs or None)."""
    labels = data.labels
    healthy = [i for i, lab in labels.items() if lab == HEALTHY]
    unhealthy = [i for i, lab in labels.items() if lab == UNHEALTHY]
    seed = derive_seed(cfg.seed, "eval/repeat", r)
    h, u = undersample(healthy, unhealthy, seed)
    train, test = stratified_split(h, u, cfg.test_fraction, seed)
    _check_disjoint("training split", train, test)
    for part, name in ((train, "train"), (test, "test")):
        if len({labels[i] for i in part}) < 2:
            raise InsufficientData(f"{name} split lacks a class")
    if model_kind == "vae_lr":
        scores, best = _vae_lr_scores(spec, data, train, test, labels, cfg)
    else:
        scores, best = _cnnlstm_scores(data, train, test, labels, cfg, seed, augment=model_kind == "cnnlstm_aug")
    y = [labels[i] == UNHEALTHY for i in test]
    return metrics(scores, y, cfg.threshold), best


def run_experiment(
    model_kind: str, spec: ExperimentSpec, cfg: ProtocolConfig, data: ExperimentData, jobs: int = 1
) -> EvalReport:
    """All external repeats; ``jobs > 1`` runs them in worker processes.

    Each repeat is seeded from its index alone, so the report does not depend
    on ``jobs``.
    """
    if model_kind not in MODEL_KINDS:
        raise ValueError(f"model_kind must be one of {MODEL_KINDS}")
    eligible = {i: lab for i, lab in data.labels.items() if lab in (HEALTHY, UNHEALTHY)}
    if model_kind == "vae_lr":
        eligible = {i: lab for i, lab in eligible.items() if i in data.codes}
    else:
        eligible = {i: lab for i, lab in eligible.items() if i in data.maps}
    data = ExperimentData(eligible, data.surveys, data.codes, data.maps, data.vae, data.cnnlstm)
    repeats = range(cfg.external_repeats)
    if jobs > 1 and cfg.external_repeats > 1:
        with ProcessPoolExecutor(max_workers=min(jobs, cfg.external_repeats)) as pool:
            futures = [pool.submit(run_repeat, model_kind, spec, cfg, data, r) for r in repeats]
            results = [f.result() for f in futures]
    else:
        results = [run_repeat(model_kind, spec, cfg, data, r) for r in repeats]
    per_repeat, epochs = [], []
    for m, best in results:
        per_repeat.append(m)
        if best is not None:
            epochs.append(best)
    config = {
        **asdict(cfg),
        "surveys_used": sorted(spec.surveys_used),
        "use_sf12_feature": spec.use_sf12_feature,
    }
    if data.cnnlstm is not None and model_kind != "vae_lr":
        config["cnnlstm"] = asdict(data.cnnlstm)
    return EvalReport(
        spec.id,
        model_kind,
        sum(lab == HEALTHY for lab in eligible.values()),
        sum(lab == UNHEALTHY for lab in eligible.values()),
        per_repeat,
        config,
        epochs,
    )

"""Acceptance suite: one recorded PASS/FAIL line per criterion.

Each test prints its line and asserts. The lines are repeated in the pytest
terminal summary under "acceptance criteria".
"""

from __future__ import annotations

import json
import os
import time
from pathlib import Path

import numpy as np
import pytest

from actirep import actigram, cnnlstm, evaluation, labels, nncore as nn, simulate, vae
from actirep.cli import main
from actirep.errors import LeakageError
from actirep.evaluation import auc_score, logistic_gradient, logistic_objective, undersample
from actirep.nncore.gradcheck import check_gradients, numeric_grad, relative_error
from actirep.nncore.tensor import Tensor, activation
from actirep.signal import FilterSpec, bandpass, epoch_counts

from test_nncore import LAYER_CASES
from test_signal import FS, butterworth_bandpass_gain, oracle_counts, random_signal, steady_amplitude

ROOT = Path(__file__).resolve().parents[1]
JOBS = max(1, min(4, os.cpu_count() or 1))


def cli(*argv) -> int:
    return main([str(a) for a in argv])


def cohort_maps(spec: simulate.CohortSpec, bin_seconds: int):
    people = simulate.simulate_cohort(spec)
    series = [simulate.epoch_series(spec, p) for p in people]
    cfg = actigram.MapConfig(bin_seconds=bin_seconds)
    cfg = actigram.MapConfig(bin_seconds=bin_seconds, normalization_cap=actigram.fit_normalization_cap(series, cfg))
    return people, [actigram.build_map(s, cfg) for s in series]


def experiment_data(people, maps, model) -> evaluation.ExperimentData:
    codes = vae.encode_batch(model, maps)
    return evaluation.ExperimentData(
        labels={p.participant_id: p.label for p in people},
        surveys={p.participant_id: p.survey for p in people},
        codes={m.participant_id: c for m, c in zip(maps, codes)},
        maps={m.participant_id: m for m in maps},
        vae=model,
        cnnlstm=cnnlstm.CnnLstmConfig(),
    )


@pytest.mark.criterion(1)
def test_c01_clinical_values_not_reproducible(criterion):
    text = (ROOT / "README.md").read_text()
    ok = "cannot be reproduced" in text and "AURORA" in text
    criterion.record(ok, "clinical tables not reproducible (private AURORA data); stated in README")
    assert ok


@pytest.mark.criterion(2)
def test_c02_epoch_counts_oracle(criterion):
    rng = np.random.default_rng(2024)
    signals = [random_signal(rng) for _ in range(1000)]
    t0 = time.perf_counter()
    results = [epoch_counts(x, ts, start_ms=0, end_ms=600_000, sample_rate_hz=FS) for x, ts in signals]
    elapsed = time.perf_counter() - t0
    mismatches = 0
    for (x, ts), s in zip(signals, results):
        counts, missing = oracle_counts(x.tolist(), ts.tolist(), 0, 20)
        if np.asarray(counts).tobytes() != s.counts.tobytes() or missing != s.missing.tolist():
            mismatches += 1
    ok = mismatches == 0 and elapsed < 30
    criterion.record(ok, f"1000 signals, {mismatches} bitwise mismatches, epoch_counts {elapsed:.1f}s (< 30s)")
    assert ok


@pytest.mark.criterion(3)
def test_c03_filter_response(criterion):
    t = np.arange(int(600 * FS)) / FS
    lo, hi = int(200 * FS), int(400 * FS)
    amp = {f: steady_amplitude(bandpass(np.sin(2 * np.pi * f * t)), f, t, lo, hi) for f in (0.05, 1.0, 14.0)}
    spec = FilterSpec()
    # filtfilt applies the magnitude twice
    oracle = {f: butterworth_bandpass_gain(f, spec.low_cut_hz, spec.high_cut_hz, spec.order, spec.sample_rate_hz) ** 2 for f in amp}
    att = {f: 20 * np.log10(amp[1.0] / amp[f]) for f in (0.05, 14.0)}
    oracle_dev = max(abs(amp[f] - oracle[f]) / oracle[f] for f in amp)
    rng = np.random.default_rng(3)
    a, b = rng.standard_normal(5000), rng.standard_normal(5000)
    lin = bandpass(2.5 * a - 0.7 * b) - (2.5 * bandpass(a) - 0.7 * bandpass(b))
    resid = float(np.max(np.abs(lin)) / np.max(np.abs(bandpass(a))))
    ok = min(att.values()) >= 20 and oracle_dev < 1e-3 and resid < 1e-9
    criterion.record(
        ok,
        f"attenuation 0.05Hz {att[0.05]:.1f} dB, 14Hz {att[14.0]:.1f} dB (>= 20); "
        f"oracle rel dev {oracle_dev:.1e}; linearity {resid:.1e} (< 1e-9)",
    )
    assert ok


@pytest.mark.criterion(4)
def test_c04_gradients(criterion):
    t0 = time.perf_counter()
    worst = {}
    for name, (spec, in_shape) in sorted(LAYER_CASES.items()):
        rng = np.random.default_rng(len(name))
        params = {
            k: Tensor(rng.standard_normal(v.shape) * 0.5, requires_grad=True, dtype=np.float64)
            for k, v in nn.seeded_init(spec, 1).items()
        }
        x = Tensor(rng.standard_normal(in_shape), requires_grad=True, dtype=np.float64)
        r = Tensor(rng.standard_normal(nn.forward(spec, params, x).shape), dtype=np.float64)
        worst[name] = max(check_gradients(lambda: nn.tsum(nn.forward(spec, params, x) * r), params | {"x": x}).values())
    for kind in ("relu", "sigmoid", "tanh"):
        rng = np.random.default_rng(7)
        v = rng.uniform(0.1, 1.0, 12) * rng.choice([-1, 1], 12)
        x = Tensor(v, requires_grad=True, dtype=np.float64)
        r = Tensor(rng.standard_normal(12), dtype=np.float64)
        worst[kind] = check_gradients(lambda: nn.tsum(activation(x, kind) * r), {"x": x})["x"]
    rng = np.random.default_rng(8)
    X = rng.standard_normal((60, 4))
    y = (X[:, 0] + rng.standard_normal(60) > 0).astype(float)
    theta = rng.standard_normal(5)
    gw, gb = logistic_gradient(theta[:4], theta[4], X, y, 1e-4)
    num = numeric_grad(lambda: logistic_objective(theta[:4], theta[4], X, y, 1e-4), theta, h=1e-5)
    worst["logistic"] = relative_error(np.r_[gw, gb], num)
    elapsed = time.perf_counter() - t0
    top = max(worst, key=worst.get)
    ok = worst[top] < 1e-4 and elapsed < 120
    criterion.record(ok, f"{len(worst)} checks, worst {top} {worst[top]:.1e} (< 1e-4), {elapsed:.1f}s (< 120s)")
    assert ok


@pytest.mark.criterion(5)
def test_c05_kl_monte_carlo(criterion):
    rng = np.random.default_rng(5)
    worst = 0.0
    for _ in range(20):
        mu = rng.normal(0, 1, 8)
        lv = rng.uniform(-2, 1, 8)
        z = mu + np.exp(0.5 * lv) * rng.standard_normal((1_000_000, 8))
        log_q = -0.5 * np.sum(lv + (z - mu) ** 2 / np.exp(lv), axis=1)
        log_p = -0.5 * np.sum(z**2, axis=1)
        mc = float(np.mean(log_q - log_p))
        worst = max(worst, abs(float(vae.kl_divergence(mu, lv)) - mc) / mc)
    ok = worst < 0.01
    criterion.record(ok, f"20 pairs, worst relative gap {worst:.2%} (< 1%)")
    assert ok


def pairwise_auc(scores, y) -> float:
    pos = [s for s, t in zip(scores, y) if t]
    neg = [s for s, t in zip(scores, y) if not t]
    total = 0.0
    for p in pos:
        for n in neg:
            total += 1.0 if p > n else 0.5 if p == n else 0.0
    return total / (len(pos) * len(neg))


@pytest.mark.criterion(6)
def test_c06_auc_oracle(criterion):
    rng = np.random.default_rng(6)
    worst = 0.0
    for k in range(100):
        y = rng.random(200) < 0.4
        y[:2] = [True, False]
        # half the instances use coarse scores so ties are common
        s = rng.integers(0, 10, 200).astype(float) if k % 2 else rng.standard_normal(200)
        worst = max(worst, abs(auc_score(s, y) - pairwise_auc(s, y)))
    ok = worst <= 1e-12
    criterion.record(ok, f"100 instances n=200, max |AUC - pairwise| {worst:.1e} (<= 1e-12)")
    assert ok


@pytest.mark.criterion(7)
def test_c07_signal_recovery(criterion):
    t0 = time.perf_counter()
    people, maps = cohort_maps(simulate.CohortSpec(n_participants=200, days=28, seed=1), 60)
    model, _ = vae.train_vae(maps, vae.VaeConfig(epochs=30, batch_size=128, seed=0))
    data = experiment_data(people, maps, model)
    cfg = evaluation.ProtocolConfig(external_repeats=10, seed=0)
    spec = labels.experiment("E3")
    real = evaluation.run_experiment("vae_lr", spec, cfg, data, jobs=JOBS)
    ids = sorted(data.labels)
    shuffled = [data.labels[i] for i in ids]
    np.random.default_rng(0).shuffle(shuffled)
    data.labels = dict(zip(ids, shuffled))
    null = evaluation.run_experiment("vae_lr", spec, cfg, data, jobs=JOBS)
    elapsed = time.perf_counter() - t0
    auc, auc0 = real.mean["auc"], null.mean["auc"]
    ok = auc >= 0.75 and 0.4 <= auc0 <= 0.6
    criterion.record(
        ok,
        f"200x28d 60s bins: AUC {auc:.2f}({real.std['auc']:.2f}) (>= 0.75); "
        f"shuffled {auc0:.2f}({null.std['auc']:.2f}) (in [0.4, 0.6]); {elapsed / 60:.1f} min",
    )
    assert ok


@pytest.mark.criterion(8)
def test_c08_protocol_shape(criterion, tmp_path):
    d = tmp_path
    assert cli("simulate", "-q", "--participants", 40, "--seed", 8, "--out", d / "cohort") == 0
    assert cli("prep", "-q", "--raw-dir", d / "cohort", "--out", d / "maps", "--bin-seconds", 1800) == 0
    assert cli("labels", "-q", "--surveys", d / "cohort" / "surveys.csv", "--out", d / "labels.csv") == 0
    assert cli("train-vae", "-q", "--maps", d / "maps", "--out", d / "v.ckpt", "--epochs", 2, "--batch-size", 16) == 0
    assert cli("encode", "-q", "--model", d / "v.ckpt", "--maps", d / "maps", "--out", d / "lat.csv") == 0
    assert cli("evaluate", "-q", "--latents", d / "lat.csv", "--labels", d / "labels.csv", "--repeats", 30, "--out", d / "r.json") == 0
    report = json.loads((d / "r.json").read_text())
    lengths = {len(v) for v in report["per_repeat"].values()}
    dev = 0.0
    for m, values in report["per_repeat"].items():
        n = len(values)
        mean = sum(values) / n
        std = (sum((v - mean) ** 2 for v in values) / (n - 1)) ** 0.5
        dev = max(dev, abs(mean - report["mean"][m]), abs(std - report["std"][m]))
    healthy = [f"h{i:03d}" for i in range(494)]
    unhealthy = [f"u{i:03d}" for i in range(111)]
    h, u = undersample(healthy, unhealthy, seed=8)
    ok = lengths == {30} and dev <= 1e-12 and (len(h), len(u)) == (111, 111) and set(u) == set(unhealthy)
    criterion.record(
        ok,
        f"per-repeat tuples {sorted(lengths)} (== 30); mean/std oracle dev {dev:.1e} (<= 1e-12); "
        f"494/111 undersampled to {len(h)}/{len(u)}",
    )
    assert ok


@pytest.mark.criterion(9)
def test_c09_paper_shapes(criterion):
    people, maps = cohort_maps(simulate.CohortSpec(n_participants=24, days=28, seed=9), 1800)
    model, _ = vae.train_vae(maps, vae.VaeConfig(epochs=1, batch_size=24, seed=0))
    codes = vae.encode_batch(model, maps)
    code_len = {len(c.mu) for c in codes}
    grid = vae.traversal_grid(model, codes[0], -2.0, 2.0, 9)
    sweep = np.linspace(-2.0, 2.0, 9)
    stats = vae.fit_class_stats([(c, p.label) for c, p in zip(codes, people)])
    synthetic = [s for lab in ("healthy", "unhealthy") for s in vae.generate(model, stats[lab], 100, 0)]
    n_syn = {lab: sum(s.label == lab for s in synthetic) for lab in ("healthy", "unhealthy")}
    days = len(cnnlstm.day_subsequences(maps[0].values))
    ok = (
        code_len == {8}
        and grid.shape[:2] == (8, 9)
        and sweep[0] == -2.0
        and sweep[-1] == 2.0
        and n_syn == {"healthy": 100, "unhealthy": 100}
        and days == 28
    )
    criterion.record(
        ok,
        f"code length {sorted(code_len)}; traversal {grid.shape[0]} rows x {grid.shape[1]} steps over [-2, 2]; "
        f"synthetic {n_syn['healthy']}+{n_syn['unhealthy']}; {days} day-subsequences",
    )
    assert ok


@pytest.mark.criterion(10)
def test_c10_augmentation_recall(criterion):
    # 180/40 (4.5:1) cohort; 30-minute bins keep ten repeats of both models near 8 minutes
    t0 = time.perf_counter()
    spec = simulate.CohortSpec(n_participants=220, unhealthy_fraction=40 / 220, seed=5)
    people, maps = cohort_maps(spec, 1800)
    model, _ = vae.train_vae(maps, vae.VaeConfig(epochs=30, batch_size=128, seed=0))
    data = experiment_data(people, maps, model)
    cfg = evaluation.ProtocolConfig(external_repeats=10, seed=0)
    e3 = labels.experiment("E3")
    base = evaluation.run_experiment("cnnlstm", e3, cfg, data, jobs=JOBS)
    aug = evaluation.run_experiment("cnnlstm_aug", e3, cfg, data, jobs=JOBS)
    guard = True
    real = [vae.LabeledMap(m, p.label) for m, p in zip(maps[:8], people[:8])]
    synthetic = vae.generate(model, vae.fit_class_stats([(c, p.label) for c, p in zip(data.codes.values(), people)])["healthy"], 2, 0)
    try:
        cnnlstm.train_with_augmentation(real, synthetic, cnnlstm.CnnLstmConfig(epochs=1), test=synthetic[:1])
        guard = False
    except LeakageError:
        pass
    r0, r1 = base.mean["recall"], aug.mean["recall"]
    ok = r1 >= r0 - 0.02 and guard
    criterion.record(
        ok,
        f"180/40 cohort, 10 repeats: recall cnnlstm {r0:.2f}({base.std['recall']:.2f}), "
        f"cnnlstm_aug {r1:.2f}({aug.std['recall']:.2f}) (aug >= base - 0.02); "
        f"leakage guard {'raises' if guard else 'MISSING'}; {(time.perf_counter() - t0) / 60:.1f} min",
    )
    assert ok


def pipeline(root: Path, seed: int) -> list[Path]:
    d = root
    steps = [
        ("simulate", "--participants", 40, "--out", d / "cohort"),
        ("prep", "--raw-dir", d / "cohort", "--out", d / "maps", "--bin-seconds", 1800),
        ("labels", "--surveys", d / "cohort" / "surveys.csv", "--out", d / "labels.csv"),
        ("train-vae", "--maps", d / "maps", "--out", d / "vae.ckpt", "--epochs", 3, "--batch-size", 16),
        ("encode", "--model", d / "vae.ckpt", "--maps", d / "maps", "--out", d / "lat.csv"),
        ("generate", "--model", d / "vae.ckpt", "--latents", d / "lat.csv", "--labels", d / "labels.csv", "--out", d / "syn"),
        ("train-cnnlstm", "--maps", d / "maps", "--labels", d / "labels.csv", "--synthetic", d / "syn", "--epochs", 2, "--out", d / "cnn.ckpt"),
        ("evaluate", "--latents", d / "lat.csv", "--labels", d / "labels.csv", "--repeats", 5, "--out", d / "vae_lr.json"),
        ("evaluate", "--model-kind", "cnnlstm", "--maps", d / "maps", "--labels", d / "labels.csv",
         "--repeats", 2, "--folds", 2, "--epochs", 2, "--out", d / "cnnlstm.json"),
    ]
    for cmd, *rest in steps:
        assert cli(cmd, "-q", "--seed", seed, *rest) == 0, cmd
    return [d / "vae.ckpt", d / "cnn.ckpt", d / "vae_lr.json", d / "cnnlstm.json", d / "lat.csv", d / "syn" / "synthetic.csv"]


@pytest.mark.criterion(11)
def test_c11_determinism(criterion, tmp_path):
    a = pipeline(tmp_path / "a", 11)
    b = pipeline(tmp_path / "b", 11)
    same = [x.read_bytes() == y.read_bytes() for x, y in zip(a, b)]
    ok = all(same)
    criterion.record(ok, f"two seeded CLI runs: {sum(same)}/{len(same)} artifacts byte-identical (reports, checkpoints)")
    assert ok

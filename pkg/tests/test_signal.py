import bisect

import numpy as np
import pytest

from actirep.errors import InvalidFilterSpec, LengthMismatch, NonMonotoneTimestamp, SequenceTooShort
from actirep.signal import EpochSeries, FilterSpec, bandpass, counts_from_raw, epoch_counts, read_epoch_csv, write_epoch_csv
from actirep.ingest import RawRecording

FS = 30.0


def butterworth_bandpass_gain(f, low=0.25, high=11.0, order=4, fs=FS):
    """|H(f)| of a bilinear-transformed analog Butterworth bandpass, from the closed form.

    With prewarped frequencies W = tan(pi f / fs), the lowpass->bandpass map
    gives |H|^2 = 1 / (1 + ((W^2 - W0^2) / (W B))^(2 order)).
    """
    w = np.tan(np.pi * np.asarray(f, dtype=float) / fs)
    wl, wh = np.tan(np.pi * low / fs), np.tan(np.pi * high / fs)
    x = (w**2 - wl * wh) / (w * (wh - wl))
    return 1.0 / np.sqrt(1.0 + x ** (2 * order))


def steady_amplitude(y, f, t, lo, hi):
    """Least-squares sinusoid amplitude fitted on samples lo:hi."""
    a = np.column_stack([np.sin(2 * np.pi * f * t[lo:hi]), np.cos(2 * np.pi * f * t[lo:hi])])
    coef, *_ = np.linalg.lstsq(a, y[lo:hi], rcond=None)
    return float(np.hypot(*coef))


def tone_response(f, seconds):
    t = np.arange(int(seconds * FS)) / FS
    y = bandpass(np.sin(2 * np.pi * f * t))
    n = len(t)
    return steady_amplitude(y, f, t, n // 4, 3 * n // 4)


class TestBandpass:
    def test_dc_rejected(self):
        y = bandpass(np.full(600, 0.5))
        assert np.max(np.abs(y[150:450])) < 1e-3

    @pytest.mark.parametrize("f,seconds", [(1.0, 30), (3.0, 30), (0.5, 60), (14.0, 30), (0.05, 1200), (0.15, 600)])
    def test_matches_closed_form_response(self, f, seconds):
        # forward-backward application squares the one-pass magnitude
        expected = butterworth_bandpass_gain(f) ** 2
        assert tone_response(f, seconds) == pytest.approx(expected, rel=1e-3, abs=1e-6)

    def test_passband_and_stopband(self):
        assert 0.9 <= tone_response(1.0, 30) <= 1.1
        assert tone_response(14.0, 30) < 0.1

    def test_linearity(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            x, y = rng.standard_normal((2, 900))
            a, b = rng.uniform(-10, 10, 2)
            resid = bandpass(a * x + b * y) - a * bandpass(x) - b * bandpass(y)
            assert np.max(np.abs(resid)) < 1e-9

    def test_zero_phase(self):
        t = np.arange(1800) / FS
        x = np.sin(2 * np.pi * 2.0 * t)
        y = bandpass(x)
        lag = np.argmax(np.correlate(y[300:1500], x[300:1500], "full")) - (1200 - 1)
        assert lag == 0

    def test_same_length(self):
        assert bandpass(np.ones(5)).shape == (5,)

    def test_too_short(self):
        with pytest.raises(SequenceTooShort):
            bandpass(np.ones(4))

    @pytest.mark.parametrize("spec", [FilterSpec(0.0, 11.0), FilterSpec(5.0, 1.0), FilterSpec(0.25, 15.0), FilterSpec(order=0)])
    def test_invalid_spec(self, spec):
        with pytest.raises(InvalidFilterSpec):
            bandpass(np.ones(100), spec)


def oracle_counts(values, ts, start_ms, n_epochs):
    """Window membership by bisection; per-second max of |x| summed in order."""
    counts, missing = [], []
    for e in range(n_epochs):
        total, empty = 0.0, 0
        for s in range(30):
            lo = start_ms + (e * 30 + s) * 1000
            i, j = bisect.bisect_left(ts, lo), bisect.bisect_left(ts, lo + 1000)
            if i == j:
                empty += 1
                m = 0.0
            else:
                m = max(abs(v) for v in values[i:j])
            total += m
        miss = empty > 15
        counts.append(0.0 if miss else total)
        missing.append(miss)
    return counts, missing


def random_signal(rng, seconds=600):
    n = int(seconds * FS)
    ts = np.cumsum(rng.integers(20, 47, n)).astype(np.int64)
    ts = ts[ts < seconds * 1000]
    if rng.random() < 0.5:
        # cut out a random gap
        a, b = np.sort(rng.integers(0, seconds * 1000, 2))
        ts = ts[(ts < a) | (ts >= b)]
    x = rng.standard_normal(ts.size) * rng.uniform(0.01, 2.0)
    return x, ts


class TestEpochCounts:
    def test_zero_signal(self):
        ts = np.arange(1800) * 1000 // 30
        s = epoch_counts(np.zeros(1800), ts, start_ms=0, end_ms=60000)
        assert s.counts.tolist() == [0.0, 0.0]
        assert not s.missing.any()

    def test_one_spike_per_second(self):
        ts = np.arange(900) * 1000 // 30
        x = np.where(np.arange(900) % 30 == 7, 1.0, 0.0)
        assert epoch_counts(x, ts, start_ms=0, end_ms=30000).counts.tolist() == [30.0]

    def test_gap_marks_missing(self):
        ts = np.arange(900) * 1000 // 30
        x = np.ones(900) * 0.5
        s = epoch_counts(x, ts, start_ms=0, end_ms=60000)
        assert s.counts.tolist() == [15.0, 0.0]
        assert s.missing.tolist() == [False, True]

    def test_half_empty_epoch_is_kept(self):
        # 15 of 30 seconds empty is not "more than half"
        ts = np.arange(0, 15000, 100)
        s = epoch_counts(np.ones(ts.size), ts, start_ms=0, end_ms=30000)
        assert s.missing.tolist() == [False]
        assert s.counts.tolist() == [15.0]
        ts = np.arange(0, 14000, 100)
        assert epoch_counts(np.ones(ts.size), ts, start_ms=0, end_ms=30000).missing.tolist() == [True]

    def test_matches_bruteforce_oracle_bitwise(self):
        rng = np.random.default_rng(42)
        for _ in range(200):
            x, ts = random_signal(rng)
            s = epoch_counts(x, ts, start_ms=0, end_ms=600000)
            ref, miss = oracle_counts(x.tolist(), ts.tolist(), 0, 20)
            assert s.counts.tolist() == ref
            assert s.missing.tolist() == miss

    def test_scale_homogeneity(self):
        rng = np.random.default_rng(1)
        x, ts = random_signal(rng)
        base = epoch_counts(x, ts, start_ms=0, end_ms=600000).counts
        for c in (0.003, 1.7, 250.0):
            np.testing.assert_allclose(epoch_counts(c * x, ts, start_ms=0, end_ms=600000).counts, c * base, rtol=1e-12)

    def test_permutation_within_second(self):
        rng = np.random.default_rng(2)
        x, ts = random_signal(rng, 120)
        sec = ts // 1000
        y = x.copy()
        for s in np.unique(sec):
            idx = np.flatnonzero(sec == s)
            y[idx] = rng.permutation(x[idx])
        a = epoch_counts(x, ts, start_ms=0, end_ms=120000).counts
        b = epoch_counts(y, ts, start_ms=0, end_ms=120000).counts
        assert a.tolist() == b.tolist()

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatch):
            epoch_counts(np.zeros(3), np.arange(4))

    def test_non_monotone(self):
        with pytest.raises(NonMonotoneTimestamp):
            epoch_counts(np.zeros(3), np.array([0, 5, 5]))


def test_series_invariants():
    with pytest.raises(LengthMismatch):
        EpochSeries("p", 0, [1.0, 2.0], [False])
    with pytest.raises(ValueError):
        EpochSeries("p", 0, [1.0], [True])
    with pytest.raises(ValueError):
        EpochSeries("p", 0, [-1.0], [False])


def test_counts_from_raw_covers_window():
    ts = np.arange(0, 120000, 33, dtype=np.int64)
    z = np.sin(2 * np.pi * 1.0 * ts / 1000.0)
    rec = RawRecording("p", ts, np.column_stack([np.zeros_like(z), np.zeros_like(z), z]))
    s = counts_from_raw(rec, end_ms=180000)
    assert len(s) == 6
    assert s.missing.tolist() == [False] * 4 + [True] * 2
    assert np.all(s.counts[1:3] > 25)


def test_epoch_csv_round_trip(tmp_path):
    s = EpochSeries("p7", 0, [1.25, 0.0, 3.0 / 7.0], [False, True, False])
    write_epoch_csv(s, tmp_path / "p7.csv")
    back = read_epoch_csv(tmp_path / "p7.csv")
    assert back.participant_id == "p7"
    assert back.counts.tobytes() == s.counts.tobytes()
    assert back.missing.tolist() == s.missing.tolist()

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from plcml import features as ft
from plcml.features import FeatureConfig, SlotPair, Trace

FS = 1e6


def test_slotting_counts_and_tail():
    x = np.arange(1050.0)
    slots = ft.slot(Trace(x, FS), Trace(-x, FS), 100)
    assert len(slots) == 10
    assert np.array_equal(np.concatenate([s.ch1 for s in slots]), x[:1000])
    assert len(ft.slot(Trace(x[:1000], FS), Trace(x[:1000], FS), 100)) == 10
    with pytest.raises(ValueError):
        ft.slot(Trace(x[:50], FS), Trace(x[:50], FS), 100)


def test_constant_slot_moments():
    m = ft.moments(np.full(10, 2.0))
    assert (m["sum"], m["sum2"], m["std"]) == (20.0, 40.0, 0.0)
    assert m["degenerate"] and m["skew"] == 0.0 and m["kurt"] == 0.0


def test_small_slot_moments():
    m = ft.moments([-1.0, 1.0, -1.0, 1.0])
    assert m["maxAbs"] == 1.0 and m["sum"] == 0.0 and m["sum2"] == 4.0
    m = ft.moments([-1.0, 1.0, 0.0, 0.0])
    assert m["sum2"] == 2.0


def test_gaussian_moments_against_direct_summation():
    s = np.random.default_rng(0).standard_normal(100_000)
    n = s.size
    mu = math.fsum(s) / n
    m2 = math.fsum((v - mu) ** 2 for v in s) / n
    m3 = math.fsum((v - mu) ** 3 for v in s) / n
    m4 = math.fsum((v - mu) ** 4 for v in s) / n
    m = ft.moments(s)
    assert abs(m["skew"]) <= 0.05
    assert m["skew"] == pytest.approx(m3 / m2, abs=1e-12)
    assert m["kurt"] == pytest.approx(m4 / m2, rel=1e-12)
    assert m["std"] == pytest.approx(math.sqrt(m2 * n / (n - 1)), rel=1e-12)


def test_pair_stats_identical_and_inverted():
    x = np.random.default_rng(1).normal(size=64)
    same = ft.pair_stats(SlotPair(x, x.copy()))
    assert same["pears"] == pytest.approx(1.0) and same["dist"] == 0.0
    assert same["dCor"] == pytest.approx(1.0)
    assert ft.pair_stats(SlotPair(x, -x))["pears"] == pytest.approx(-1.0)


def test_zero_variance_channel_flags():
    x = np.random.default_rng(1).normal(size=16)
    st_ = ft.pair_stats(SlotPair(x, np.ones(16)))
    assert st_["pears"] == 0.0 and st_["degenerate"]


def _dcor_loops(x, y):
    n = len(x)
    a = [[abs(x[j] - x[k]) for k in range(n)] for j in range(n)]
    b = [[abs(y[j] - y[k]) for k in range(n)] for j in range(n)]

    def centre(m):
        rows = [sum(r) / n for r in m]
        cols = [sum(m[j][k] for j in range(n)) / n for k in range(n)]
        tot = sum(rows) / n
        return [[m[j][k] - rows[j] - cols[k] + tot for k in range(n)] for j in range(n)]

    A, B = centre(a), centre(b)
    cov = sum(A[j][k] * B[j][k] for j in range(n) for k in range(n)) / n ** 2
    va = sum(A[j][k] ** 2 for j in range(n) for k in range(n)) / n ** 2
    vb = sum(B[j][k] ** 2 for j in range(n) for k in range(n)) / n ** 2
    return math.sqrt(cov / math.sqrt(va * vb))


def test_distance_correlation_matches_loop_oracle():
    rng = np.random.default_rng(2)
    x = rng.normal(size=25)
    y = x ** 2 + 0.3 * rng.normal(size=25)
    assert ft.distance_correlation(x, y) == pytest.approx(_dcor_loops(x, y), rel=1e-10)


def test_distance_correlation_independent_and_affine():
    rng = np.random.default_rng(3)
    # the sample statistic is biased upward; check the Monte-Carlo mean
    draws = [ft.distance_correlation(rng.normal(size=500), rng.normal(size=500))
             for _ in range(20)]
    assert np.mean(draws) <= 0.1
    x = rng.normal(size=500)
    assert ft.distance_correlation(x, 2.5 * x - 7.0) == pytest.approx(1.0, abs=1e-12)


def _apen_enumerate(x, m, r):
    n = len(x)

    def phi(mm):
        k = n - mm + 1
        tmpl = [x[i:i + mm] for i in range(k)]
        total = 0.0
        for i in range(k):
            count = sum(
                1 for j in range(k)
                if max(abs(tmpl[i][t] - tmpl[j][t]) for t in range(mm)) <= r
            )
            total += math.log(count / k)
        return total / k

    return phi(m) - phi(m + 1)


def test_apen_small_vector_enumeration():
    x = [0.1, 0.5, 0.2, 0.45, 0.15, 0.6]
    assert ft.apen(x, 2, 0.1) == pytest.approx(_apen_enumerate(x, 2, 0.1), abs=1e-14)
    rng = np.random.default_rng(4)
    y = rng.normal(size=40)
    assert ft.apen(y, 2, 0.3) == pytest.approx(_apen_enumerate(list(y), 2, 0.3), abs=1e-12)


def test_apen_constant_is_zero():
    assert ft.apen(np.full(50, 3.0), 2, 0.1) == 0.0


def test_apen_sinusoid_more_regular_than_noise():
    t = np.arange(500)
    sine = np.sqrt(2) * np.sin(2 * np.pi * t / 25.0)
    noise = np.random.default_rng(5).standard_normal(500)
    assert ft.apen(sine, 2, 0.2 * sine.std(ddof=1)) < ft.apen(noise, 2, 0.2 * noise.std(ddof=1))


def test_burg_white_noise_is_flat():
    x = np.random.default_rng(6).standard_normal(4096)
    psd, _ = ft.burg_psd(x, order=2, n_bins=256, sample_rate=1.0)
    db = 10 * np.log10(psd / np.mean(psd))
    assert np.all(np.abs(db) <= 3.0)


def test_burg_recovers_ar1_coefficient():
    rng = np.random.default_rng(7)
    w = rng.standard_normal(8192)
    x = np.zeros_like(w)
    for t in range(1, w.size):
        x[t] = 0.9 * x[t - 1] + w[t]
    for order in (1, 3):
        fit = ft.burg(x, order)
        assert fit.coefficients[1] == pytest.approx(-0.9, abs=0.02)


def test_burg_sinusoid_peak_bin():
    rng = np.random.default_rng(8)
    fs, f0, n_bins = 1e6, 123e3, 256
    t = np.arange(4096) / fs
    x = np.sin(2 * np.pi * f0 * t) + 0.3 * rng.standard_normal(t.size)
    psd, _ = ft.burg_psd(x, 16, n_bins, fs)
    centres = ft.psd_grid(n_bins, fs)
    assert np.argmax(psd) == np.argmin(np.abs(centres - f0))


def test_burg_psd_integrates_to_variance():
    fs = 2e5
    for seed in range(5):
        x = np.random.default_rng(seed).normal(scale=0.7, size=2048)
        psd, _ = ft.burg_psd(x, 16, 256, fs)
        power = psd.sum() * fs / (2 * 256)
        assert power == pytest.approx(np.var(x), rel=0.10)


def test_burg_unstable_order_is_reduced():
    x = np.array([1.0, -1.0] * 20)
    with pytest.warns(RuntimeWarning):
        fit = ft.burg(x, 5)
    assert fit.reduced and fit.order < 5


def test_spectral_features_simple_cases():
    cfg = FeatureConfig(slot_len=100, peak_threshold=10.0, burg_order=4)
    s = np.random.default_rng(9).normal(scale=0.1, size=100)
    assert ft.spectral_features(s, cfg, FS)["fPeak"] == 0
    s = np.zeros(100)
    s[10], s[50] = 5.0, -4.0
    s += 1e-3 * np.random.default_rng(10).normal(size=100)
    assert ft.spectral_features(s, cfg, FS)["fdist"] == 40


def test_bandpass_energy_concentrated_in_range():
    rng = np.random.default_rng(11)
    n = 2048
    spec = np.fft.rfft(rng.standard_normal(n))
    f = np.fft.rfftfreq(n, 1 / FS)
    spec[(f < 80e3) | (f > 120e3)] = 0
    x = np.fft.irfft(spec, n)
    cfg = FeatureConfig(slot_len=n, freq_range=(50e3, 150e3))
    psd, _ = ft.burg_psd(x, cfg.burg_order, cfg.psd_bins, FS)
    total = psd.sum() * FS / (2 * cfg.psd_bins)
    assert ft.spectral_features(x, cfg, FS)["fEnFr"] / total >= 0.9


def test_feature_matrix_cross_checks_standalone_operations():
    rng = np.random.default_rng(12)
    n = 3 * 256 + 17
    a = rng.normal(size=n)
    b = 0.5 * a + rng.normal(size=n)
    cfg = FeatureConfig(slot_len=256, freq_range=(10e3, 200e3), burg_order=8, psd_bins=64)
    fm = ft.feature_matrix(Trace(a, FS), Trace(b, FS), cfg)
    assert fm.values.shape == (3, 18)
    slots = ft.slot(Trace(a, FS), Trace(b, FS), 256)
    thr = ft.default_peak_threshold(slots)
    for row, pair in zip(fm.values, slots):
        mom = ft.moments(pair.ch1)
        ps = ft.pair_stats(pair, 2, 0.2)
        sp = ft.spectral_features(pair.ch1, cfg, FS, thr)
        expected = {**mom, **ps, **sp, "ent": ft.apen(pair.ch1, 2, 0.2 * mom["std"])}
        for name, value in zip(ft.FEATURE_NAMES, row):
            assert value == expected[name], name


def test_identical_channels_give_unit_pearson_and_zero_distance():
    a = np.random.default_rng(13).normal(size=1024)
    fm = ft.feature_matrix(Trace(a, FS), Trace(a, FS),
                           FeatureConfig(slot_len=256, burg_order=8, psd_bins=32))
    assert np.allclose(fm.column("pears"), 1.0)
    assert np.all(fm.column("dist") == 0.0)


@settings(max_examples=15, deadline=None)
@given(st.floats(0.01, 100.0), st.integers(0, 1000))
def test_scale_equivariance(c, seed):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=64)
    b = 0.3 * a + rng.normal(size=64)
    base = {**ft.moments(a), **ft.pair_stats(SlotPair(a, b))}
    scaled = {**ft.moments(c * a), **ft.pair_stats(SlotPair(c * a, c * b))}
    assert scaled["pears"] == pytest.approx(base["pears"], abs=1e-10)
    assert scaled["dCor"] == pytest.approx(base["dCor"], abs=1e-10)
    for key in ("maxAbs", "std", "dist"):
        assert scaled[key] == pytest.approx(c * base[key], rel=1e-10)


def test_csv_roundtrips(tmp_path):
    rng = np.random.default_rng(14)
    fm = ft.FeatureMatrix(rng.normal(size=(4, 18)))
    fm.to_csv(tmp_path / "f.csv")
    assert np.array_equal(ft.FeatureMatrix.from_csv(tmp_path / "f.csv").values, fm.values)

    t1, t2 = Trace(rng.normal(size=50), FS), Trace(rng.normal(size=50), FS)
    ft.write_traces_csv(tmp_path / "t.csv", t1, t2)
    r1, r2 = ft.read_traces_csv(tmp_path / "t.csv", FS)
    assert np.array_equal(r1.samples, t1.samples) and np.array_equal(r2.samples, t2.samples)
    ft.write_traces_raw(tmp_path / "t.bin", t1, t2)
    r1, r2 = ft.read_traces_raw(tmp_path / "t.bin")
    assert r1.sample_rate == FS
    assert np.array_equal(r1.samples, t1.samples) and np.array_equal(r2.samples, t2.samples)

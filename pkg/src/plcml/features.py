"""Per-slot noise features for two-channel recordings.

The eighteen columns, in order: maxAbs, sum, sum2, std, skew, kurt, pears,
dist, dCor, ent, diffEnt, sumEnt, fPeak, fEnFr, fdist, corrStd, corrSkew,
corrKurt.  Single-channel columns are computed on channel 1.

``skew`` and ``kurt`` divide the third and fourth central moments by the
second central moment, not by its 3/2 and 2 powers.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.signal import find_peaks

from . import textio

FEATURE_NAMES = (
    "maxAbs", "sum", "sum2", "std", "skew", "kurt", "pears", "dist", "dCor",
    "ent", "diffEnt", "sumEnt", "fPeak", "fEnFr", "fdist", "corrStd",
    "corrSkew", "corrKurt",
)


@dataclass
class Trace:
    samples: np.ndarray
    sample_rate: float

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=float).reshape(-1)
        if self.samples.size == 0:
            raise ValueError("empty trace")
        if not self.sample_rate > 0:
            raise ValueError("sample_rate must be positive")

    def __len__(self):
        return self.samples.size


@dataclass
class SlotPair:
    ch1: np.ndarray
    ch2: np.ndarray

    def __post_init__(self):
        self.ch1 = np.asarray(self.ch1, dtype=float)
        self.ch2 = np.asarray(self.ch2, dtype=float)
        if self.ch1.shape != self.ch2.shape or self.ch1.size < 4:
            raise ValueError("slot channels must have equal length >= 4")


@dataclass
class FeatureConfig:
    slot_len: int = 2048
    # None: 4x the median channel-1 slot std of the recording being processed
    peak_threshold: float | None = None
    freq_range: tuple = (50e3, 150e3)
    burg_order: int = 16
    psd_bins: int = 256
    apen_m: int = 2
    apen_r_factor: float = 0.2

    def validate(self, sample_rate: float) -> None:
        lo, hi = self.freq_range
        if not 0 < lo < hi <= sample_rate / 2:
            raise ValueError("freq_range must satisfy 0 < f_lo < f_hi <= sample_rate/2")
        if not self.burg_order < self.slot_len / 2:
            raise ValueError("burg_order must be below slot_len/2")


def slot(trace1: Trace, trace2: Trace, slot_len: int) -> list:
    """Cut both traces into non-overlapping slots; the tail is dropped."""
    if len(trace1) != len(trace2) or trace1.sample_rate != trace2.sample_rate:
        raise ValueError("traces must share length and sample rate")
    if slot_len > len(trace1):
        raise ValueError("slot_len exceeds the trace length")
    n = len(trace1) // slot_len
    return [
        SlotPair(trace1.samples[k * slot_len:(k + 1) * slot_len],
                 trace2.samples[k * slot_len:(k + 1) * slot_len])
        for k in range(n)
    ]


def _table_moments(s: np.ndarray):
    """(std, skew, kurt, degenerate) with the Table-style normalisation."""
    n = s.size
    d = s - s.mean()
    m2 = np.mean(d * d)
    std = np.sqrt(np.sum(d * d) / (n - 1))
    if m2 <= 0.0:
        return 0.0, 0.0, 0.0, True
    return float(std), float(np.mean(d ** 3) / m2), float(np.mean(d ** 4) / m2), False


def moments(s) -> dict:
    s = np.asarray(s, dtype=float)
    if s.size < 4:
        raise ValueError("need at least 4 samples")
    std, skew, kurt, degenerate = _table_moments(s)
    return {
        "maxAbs": float(np.max(np.abs(s))),
        "sum": float(np.sum(s)),
        "sum2": float(np.sum(s * s)),
        "std": std,
        "skew": skew,
        "kurt": kurt,
        "degenerate": degenerate,
    }


def pearson(a: np.ndarray, b: np.ndarray):
    da, db = a - a.mean(), b - b.mean()
    den = np.sqrt(np.sum(da * da) * np.sum(db * db))
    if den == 0.0:
        return 0.0, True
    return float(np.clip(np.sum(da * db) / den, -1.0, 1.0)), False


def _centered_distances(x: np.ndarray) -> np.ndarray:
    a = np.abs(x[:, None] - x[None, :])
    return a - a.mean(axis=0, keepdims=True) - a.mean(axis=1, keepdims=True) + a.mean()


def distance_correlation(x, y) -> float:
    """Sample distance correlation of two equal-length 1-D samples."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    a = _centered_distances(x)
    b = _centered_distances(y)
    dcov2 = np.mean(a * b)
    dvar = np.sqrt(np.mean(a * a) * np.mean(b * b))
    if dvar <= 0.0:
        return 0.0
    return float(np.sqrt(np.clip(dcov2 / dvar, 0.0, 1.0)))


def apen(s, m: int = 2, r: float | None = None) -> float:
    """Approximate entropy ApEn(m, r), Chebyshev distance, self-matches counted.

    ``r`` defaults to 0.2 times the sample standard deviation.
    """
    x = np.asarray(s, dtype=float)
    n = x.size
    if n <= m + 1:
        raise ValueError("need more than m + 1 samples")
    if r is None:
        r = 0.2 * np.std(x, ddof=1)
    if r < 0:
        raise ValueError("r must be non-negative")

    k = n - m + 1
    # Chebyshev distance between all length-m templates
    dist = np.zeros((k, k))
    for off in range(m):
        seg = x[off:off + k]
        np.maximum(dist, np.abs(seg[:, None] - seg[None, :]), out=dist)
    phi_m = np.mean(np.log(np.mean(dist <= r, axis=1)))

    k1 = k - 1
    seg = x[m:m + k1]
    dist1 = np.maximum(dist[:k1, :k1], np.abs(seg[:, None] - seg[None, :]))
    phi_m1 = np.mean(np.log(np.mean(dist1 <= r, axis=1)))
    return float(phi_m - phi_m1)


@dataclass
class BurgResult:
    coefficients: np.ndarray  # [1, a1, ..., ap]
    noise_var: float
    order: int
    reduced: bool = False


def burg(x, order: int) -> BurgResult:
    """AR fit by Burg's recursion (forward+backward prediction error)."""
    x = np.asarray(x, dtype=float)
    n = x.size
    if not 0 < order < n / 2:
        raise ValueError("order must lie in (0, N/2)")
    f = x[1:].copy()
    b = x[:-1].copy()
    a = np.array([1.0])
    e = float(np.mean(x * x))
    reduced = False
    for m in range(order):
        den = np.dot(f, f) + np.dot(b, b)
        if den <= 0.0:
            reduced = True
            break
        k = -2.0 * np.dot(f, b) / den
        if abs(k) >= 1.0:
            reduced = True
            break
        ext = np.append(a, 0.0)
        a = ext + k * ext[::-1]
        e *= 1.0 - k * k
        f, b = (f + k * b)[1:], (b + k * f)[:-1]
    if reduced:
        warnings.warn(f"Burg recursion stopped at order {a.size - 1}", RuntimeWarning)
    return BurgResult(a, e, a.size - 1, reduced)


def psd_grid(n_bins: int, sample_rate: float) -> np.ndarray:
    """Bin centres of a uniform grid over [0, fs/2]."""
    return (np.arange(n_bins) + 0.5) * sample_rate / (2.0 * n_bins)


def burg_psd(x, order: int = 16, n_bins: int = 256, sample_rate: float = 1.0):
    """One-sided AR power spectral density on :func:`psd_grid`.

    Scaled as 2*sigma^2 / (fs * |A|^2) so the bin sum times the bin width
    approximates the signal variance.
    """
    fit = burg(x, order)
    freqs = psd_grid(n_bins, sample_rate)
    z = np.exp(-2j * np.pi * np.outer(freqs / sample_rate, np.arange(fit.coefficients.size)))
    resp = np.abs(z @ fit.coefficients) ** 2
    return 2.0 * fit.noise_var / (sample_rate * resp), fit


def peak_distance(s) -> int:
    """Index distance between the two highest local maxima of |s|."""
    mag = np.abs(np.asarray(s, dtype=float))
    peaks, _ = find_peaks(np.r_[-np.inf, mag, -np.inf])
    peaks = peaks - 1
    if peaks.size < 2:
        order = np.argsort(-mag, kind="stable")[:2]
        return int(abs(order[1] - order[0]))
    top = peaks[np.argsort(-mag[peaks], kind="stable")[:2]]
    return int(abs(top[1] - top[0]))


def spectral_features(s, config: FeatureConfig, sample_rate: float,
                      peak_threshold: float | None = None) -> dict:
    s = np.asarray(s, dtype=float)
    thr = config.peak_threshold if peak_threshold is None else peak_threshold
    if thr is None:
        thr = 4.0 * np.std(s, ddof=1)
    psd, fit = burg_psd(s, config.burg_order, config.psd_bins, sample_rate)
    freqs = psd_grid(config.psd_bins, sample_rate)
    lo, hi = config.freq_range
    width = sample_rate / (2.0 * config.psd_bins)
    band = (freqs >= lo) & (freqs <= hi)
    return {
        "fPeak": int(np.count_nonzero(np.abs(s) > thr)),
        "fEnFr": float(np.sum(psd[band]) * width),
        "fdist": peak_distance(s),
        "burg_reduced": fit.reduced,
    }


def cross_correlation(a, b) -> np.ndarray:
    """Full-lag cross-correlation of the centred channels, normalised so lag 0 is Pearson's r."""
    da = np.asarray(a, dtype=float) - np.mean(a)
    db = np.asarray(b, dtype=float) - np.mean(b)
    den = np.sqrt(np.dot(da, da) * np.dot(db, db))
    full = np.correlate(da, db, mode="full")
    return full / den if den > 0 else np.zeros_like(full)


def pair_stats(pair: SlotPair, apen_m: int = 2, apen_r_factor: float = 0.2) -> dict:
    ch1, ch2 = pair.ch1, pair.ch2
    pears, degenerate = pearson(ch1, ch2)
    diff = ch1 - ch2
    summ = ch1 + ch2
    corr = cross_correlation(ch1, ch2)
    c_std, c_skew, c_kurt, _ = _table_moments(corr)
    return {
        "pears": pears,
        "dist": float(np.sqrt(np.dot(diff, diff))),
        "dCor": distance_correlation(ch1, ch2),
        "diffEnt": apen(diff, apen_m, apen_r_factor * np.std(diff, ddof=1)),
        "sumEnt": apen(summ, apen_m, apen_r_factor * np.std(summ, ddof=1)),
        "corrStd": c_std,
        "corrSkew": c_skew,
        "corrKurt": c_kurt,
        "degenerate": degenerate,
    }


def slot_features(pair: SlotPair, config: FeatureConfig, sample_rate: float,
                  peak_threshold: float | None = None):
    """Return the 18 feature values of one slot and its degenerate flag."""
    mom = moments(pair.ch1)
    ps = pair_stats(pair, config.apen_m, config.apen_r_factor)
    ent = apen(pair.ch1, config.apen_m, config.apen_r_factor * mom["std"])
    sp = spectral_features(pair.ch1, config, sample_rate, peak_threshold)
    merged = {**mom, **ps, **sp, "ent": ent}
    row = np.array([float(merged[k]) for k in FEATURE_NAMES])
    return row, bool(mom["degenerate"] or ps["degenerate"] or sp["burg_reduced"])


@dataclass
class FeatureMatrix:
    values: np.ndarray
    degenerate: np.ndarray = field(default=None)
    names: tuple = FEATURE_NAMES

    def __post_init__(self):
        self.values = np.atleast_2d(np.asarray(self.values, dtype=float))
        if self.values.shape[1] != len(FEATURE_NAMES):
            raise ValueError("a feature matrix has exactly 18 columns")
        if self.degenerate is None:
            self.degenerate = np.zeros(self.values.shape[0], dtype=bool)

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.names.index(name)]

    def to_csv(self, path) -> None:
        textio.write_csv(path, list(self.names), self.values.tolist())

    @classmethod
    def from_csv(cls, path) -> "FeatureMatrix":
        header, rows = textio.read_csv(path)
        if tuple(header) != FEATURE_NAMES:
            raise ValueError("unexpected feature header")
        return cls(np.array(rows, dtype=float))


def default_peak_threshold(slots) -> float:
    return 4.0 * float(np.median([np.std(p.ch1, ddof=1) for p in slots]))


def feature_matrix(trace1: Trace, trace2: Trace, config: FeatureConfig | None = None,
                   ) -> FeatureMatrix:
    config = config or FeatureConfig()
    config.validate(trace1.sample_rate)
    slots = slot(trace1, trace2, config.slot_len)
    thr = config.peak_threshold
    if thr is None:
        thr = default_peak_threshold(slots)
    rows, flags = [], []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        for pair in slots:
            row, flag = slot_features(pair, config, trace1.sample_rate, thr)
            rows.append(row)
            flags.append(flag)
    return FeatureMatrix(np.array(rows), np.array(flags))


def zscore(values: np.ndarray):
    """Column-wise standardisation; constant columns map to 0."""
    mu = values.mean(axis=0)
    sd = values.std(axis=0)
    sd = np.where(sd > 0, sd, 1.0)
    return (values - mu) / sd


def read_traces_csv(path, sample_rate: float):
    """Two-column CSV (ch1, ch2) with a header row."""
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return Trace(data[:, 0], sample_rate), Trace(data[:, 1], sample_rate)


def write_traces_csv(path, trace1: Trace, trace2: Trace) -> None:
    textio.write_csv(path, ["ch1", "ch2"], zip(trace1.samples.tolist(), trace2.samples.tolist()))


def write_traces_raw(path, trace1: Trace, trace2: Trace) -> None:
    """Interleaved little-endian float64 (ch1, ch2) plus ``<path>.json`` metadata."""
    path = Path(path)
    np.column_stack([trace1.samples, trace2.samples]).astype("<f8").tofile(path)
    textio.write_json(path.with_name(path.name + ".json"),
                      {"sample_rate": trace1.sample_rate, "length": len(trace1)})


def read_traces_raw(path):
    path = Path(path)
    meta = textio.read_json(path.with_name(path.name + ".json"))
    data = np.fromfile(path, dtype="<f8")
    n = int(meta["length"])
    channels = data.size // n
    if channels * n != data.size or channels not in (1, 2):
        raise ValueError("raw file size does not match the metadata length")
    data = data.reshape(n, channels)
    fs = float(meta["sample_rate"])
    if channels == 1:
        return Trace(data[:, 0], fs), None
    return Trace(data[:, 0], fs), Trace(data[:, 1], fs)

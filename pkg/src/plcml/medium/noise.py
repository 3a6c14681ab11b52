"""Synthetic two-channel power-line noise.

Each component is drawn once as a shared realisation and once per channel;
channel k receives sqrt(coupling) * shared + sqrt(1 - coupling) * own_k.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..features import Trace
from ..seeding import child_seed


@dataclass(frozen=True)
class Stationary:
    level: float  # rms
    slope_db_per_decade: float = 0.0
    corner: float | None = None  # Hz; flat below it, default fs/200


@dataclass(frozen=True)
class Narrowband:
    freq: float  # Hz
    amplitude: float


@dataclass(frozen=True)
class Bursts:
    """Gaussian noise gated on for ``duty`` of every mains-synchronous period."""

    period: float  # s
    duty: float
    level: float  # rms while on


@dataclass(frozen=True)
class Impulsive:
    """Poisson impulses: exponential amplitude and decay-time distributions."""

    rate: float  # impulses per second
    amplitude: float  # mean |peak|
    width: float  # mean decay time (s)


@dataclass
class NoiseSpec:
    components: list = field(default_factory=list)
    coupling: float = 0.0

    def validate(self):
        if not 0.0 <= self.coupling <= 1.0:
            raise ValueError("coupling must lie in [0, 1]")
        for c in self.components:
            if isinstance(c, Stationary) and c.level < 0:
                raise ValueError("levels must be non-negative")
            if isinstance(c, Narrowband) and (c.amplitude < 0 or c.freq <= 0):
                raise ValueError("interferers need positive frequency and non-negative amplitude")
            if isinstance(c, Bursts) and not (0.0 <= c.duty <= 1.0 and c.level >= 0 and c.period > 0):
                raise ValueError("bursts need duty in [0, 1], level >= 0, period > 0")
            if isinstance(c, Impulsive) and min(c.rate, c.amplitude, c.width) < 0:
                raise ValueError("impulsive parameters must be non-negative")


def _coloured(rng, n, fs, comp: Stationary):
    white = rng.standard_normal(n)
    if comp.slope_db_per_decade == 0.0:
        x = white
    else:
        spec = np.fft.rfft(white)
        f = np.fft.rfftfreq(n, 1.0 / fs)
        corner = comp.corner if comp.corner is not None else fs / 200.0
        shape = (np.maximum(f, corner) / (fs / 4.0)) ** (comp.slope_db_per_decade / 20.0)
        shape[0] = 0.0
        x = np.fft.irfft(spec * shape, n)
    rms = np.sqrt(np.mean(x ** 2))
    return x * (comp.level / rms) if rms > 0 else x


def _render(rng, n, fs, comp):
    t = np.arange(n) / fs
    if isinstance(comp, Stationary):
        return _coloured(rng, n, fs, comp)
    if isinstance(comp, Narrowband):
        return comp.amplitude * np.sin(2 * np.pi * comp.freq * t + rng.uniform(0, 2 * np.pi))
    if isinstance(comp, Bursts):
        phase = (t + rng.uniform(0, comp.period)) % comp.period
        return comp.level * rng.standard_normal(n) * (phase < comp.duty * comp.period)
    if isinstance(comp, Impulsive):
        out = np.zeros(n)
        count = rng.poisson(comp.rate * n / fs)
        for _ in range(count):
            start = int(rng.integers(n))
            amp = rng.exponential(comp.amplitude) * rng.choice((-1.0, 1.0))
            tau = max(rng.exponential(comp.width) * fs, 1e-9)
            span = min(n - start, int(np.ceil(10 * tau)) + 1)
            out[start:start + span] += amp * np.exp(-np.arange(span) / tau)
        return out
    raise TypeError(f"unknown noise component {comp!r}")


def noise_synthesize(spec: NoiseSpec, duration: float, sample_rate: float, seed: int = 0,
                     slot_len: int = 2048):
    """Two correlated noise traces of ``duration`` seconds."""
    spec.validate()
    n = int(round(duration * sample_rate))
    if n < slot_len:
        raise ValueError("duration too short for a single slot")
    a, b = np.sqrt(spec.coupling), np.sqrt(1.0 - spec.coupling)
    ch1 = np.zeros(n)
    ch2 = np.zeros(n)
    for i, comp in enumerate(spec.components):
        shared, own1, own2 = (
            np.random.default_rng(child_seed(seed, f"noise/{i}/{part}"))
            for part in ("shared", "ch1", "ch2")
        )
        common = _render(shared, n, sample_rate, comp) if a > 0 else 0.0
        ch1 += a * common + (b * _render(own1, n, sample_rate, comp) if b > 0 else 0.0)
        ch2 += a * common + (b * _render(own2, n, sample_rate, comp) if b > 0 else 0.0)
    return Trace(ch1, sample_rate), Trace(ch2, sample_rate)

"""Phenomenological echo-path channel model and a random generator for it."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .line import ChannelResponse, FrequencyGrid


@dataclass
class MultipathParams:
    gains: np.ndarray
    lengths: np.ndarray  # m
    a0: float = 0.0  # 1/m
    a1: float = 0.0  # s/m when k = 1
    k: float = 1.0
    v: float = 1.5e8  # m/s

    def __post_init__(self):
        self.gains = np.atleast_1d(np.asarray(self.gains, dtype=float))
        self.lengths = np.atleast_1d(np.asarray(self.lengths, dtype=float))
        if self.gains.size < 1 or self.gains.shape != self.lengths.shape:
            raise ValueError("need one gain per path and at least one path")
        if np.any(self.lengths <= 0) or self.v <= 0:
            raise ValueError("path lengths and speed must be positive")

    def to_dict(self) -> dict:
        return {"gains": self.gains.tolist(), "lengths": self.lengths.tolist(),
                "a0": self.a0, "a1": self.a1, "k": self.k, "v": self.v}


def topdown_channel(params: MultipathParams, grid: FrequencyGrid) -> ChannelResponse:
    f = grid.freqs
    d = params.lengths[:, None]
    atten = np.exp(-(params.a0 + params.a1 * f ** params.k) * d)
    delay = np.exp(-2j * np.pi * f * d / params.v)
    return ChannelResponse(grid, np.sum(params.gains[:, None] * atten * delay, axis=0))


@dataclass(frozen=True)
class MultipathConfig:
    """Ranges for :func:`random_multipath`.

    The first path has unit gain; echoes get uniform gains in
    ``+-echo_gain`` and extra lengths in ``extra_length``.  All gains are then
    scaled by a common level drawn N(level_db) in dB, which gives the
    log-normal spread of average channel gain.
    """

    n_paths: tuple = (3, 10)
    first_length: tuple = (30.0, 300.0)
    extra_length: tuple = (5.0, 400.0)
    echo_gain: float = 0.5
    a0: tuple = (0.0, 2e-3)
    a1: tuple = (5e-12, 5e-11)
    k: float = 1.0
    v: float = 1.5e8
    level_db: tuple = (-40.0, 7.0)  # mean, std
    db_range: tuple = (-90.0, -10.0)
    grid: FrequencyGrid = field(default_factory=lambda: FrequencyGrid(2e6, 86e6, 256))
    max_tries: int = 1000

    def validate(self):
        lo, hi = self.n_paths
        if not 1 <= lo <= hi:
            raise ValueError("n_paths range must satisfy 1 <= lo <= hi")
        for name in ("first_length", "extra_length", "a0", "a1"):
            a, b = getattr(self, name)
            if a > b or a < 0:
                raise ValueError(f"{name} must be a non-negative ordered range")
        if self.first_length[0] <= 0 or self.v <= 0 or self.level_db[1] < 0:
            raise ValueError("lengths, speed and level spread must be positive")
        if self.db_range[0] >= self.db_range[1]:
            raise ValueError("db_range must be ordered")


def random_multipath(seed: int = 0, config: MultipathConfig | None = None,
                     rng: np.random.Generator | None = None) -> MultipathParams:
    """Draw parameters whose response magnitude lies inside ``config.db_range``."""
    config = config or MultipathConfig()
    config.validate()
    rng = rng if rng is not None else np.random.default_rng(seed)
    lo_db, hi_db = config.db_range
    for _ in range(config.max_tries):
        n = int(rng.integers(config.n_paths[0], config.n_paths[1] + 1))
        d1 = rng.uniform(*config.first_length)
        lengths = d1 + np.concatenate([[0.0], np.sort(rng.uniform(*config.extra_length, n - 1))])
        gains = np.concatenate([[1.0], rng.uniform(-config.echo_gain, config.echo_gain, n - 1)])
        gains *= 10.0 ** (rng.normal(*config.level_db) / 20.0)
        params = MultipathParams(gains, lengths, rng.uniform(*config.a0), rng.uniform(*config.a1),
                                 config.k, config.v)
        db = topdown_channel(params, config.grid).mag_db()
        if db.min() >= lo_db and db.max() <= hi_db:
            return params
    raise RuntimeError(f"no admissible channel after {config.max_tries} draws")

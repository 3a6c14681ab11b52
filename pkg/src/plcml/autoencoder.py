"""End-to-end autoencoder physical layer.

encoder MLP -> power normalisation -> FIR channel + Gaussian noise ->
decoder MLP (softmax), trained with cross-entropy on uniform messages.
Signalling is real-valued, so the natural baseline is M-PAM.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq
from scipy.special import erfc

from . import nn, textio
from .medium.line import ChannelResponse
from .seeding import child_seed

NORMALIZATIONS = ("avg_power", "per_symbol")


@dataclass
class AeConfig:
    m: int = 4
    n: int = 1
    encoder_hidden: tuple = (32,)
    decoder_hidden: tuple = (32,)
    channel: object = None  # None (AWGN only), a ChannelResponse, or an FIR tap vector
    train_ebn0_db: float = 8.0
    normalization: str = "avg_power"
    epochs: int = 40
    steps_per_epoch: int = 50
    batch_size: int = 256
    learning_rate: float = 5e-3
    seed: int = 0

    def validate(self):
        if self.m < 2 or self.m & (self.m - 1):
            raise ValueError("M must be a power of two >= 2")
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if self.normalization not in NORMALIZATIONS:
            raise ValueError(f"normalization must be one of {NORMALIZATIONS}")
        if self.epochs < 0 or self.steps_per_epoch < 1 or self.batch_size < 1:
            raise ValueError("epochs >= 0, steps_per_epoch >= 1, batch_size >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning rate must be positive")


@dataclass
class AeSystem:
    encoder: nn.MlpModel
    decoder: nn.MlpModel
    channel_taps: np.ndarray
    normalization: str = "avg_power"
    history: list = field(default_factory=list)

    @property
    def m(self) -> int:
        return self.encoder.input_dim

    @property
    def n(self) -> int:
        return self.encoder.output_dim

    def constellation(self) -> np.ndarray:
        """Normalised codeword of every message, shape (M, n)."""
        x = nn.predict(self.encoder, np.eye(self.m))
        return normalize(x, self.normalization)[0]


@dataclass
class SerCurve:
    ebn0_db: np.ndarray
    ser: np.ndarray
    trials: int

    def __post_init__(self):
        self.ebn0_db = np.asarray(self.ebn0_db, dtype=float)
        self.ser = np.asarray(self.ser, dtype=float)
        if self.ebn0_db.shape != self.ser.shape:
            raise ValueError("curve vectors must have equal length")


# ---------------------------------------------------------------- layers

def fir_taps(response: ChannelResponse, n: int) -> np.ndarray:
    """Real n-tap FIR from the inverse transform of a response, unit energy."""
    taps = np.real(np.fft.ifft(response.h))[:n]
    energy = np.sqrt(np.sum(taps ** 2))
    if energy == 0:
        raise ValueError("channel response has no energy in the first n taps")
    return taps / energy


def _toeplitz(taps, n):
    taps = np.asarray(taps, dtype=float)
    t = np.zeros((n, n))
    for lag in range(min(n, taps.size)):
        t += taps[lag] * np.eye(n, k=-lag)
    return t


def channel_layer(x, taps, noise_std: float = 0.0, rng: np.random.Generator | None = None):
    """Causal convolution truncated to n outputs plus Gaussian noise.

    Returns ``(y, vjp)``; ``vjp(g)`` maps dL/dy to dL/dx, i.e. correlates with
    the taps.  The noise does not depend on x.
    """
    taps = np.atleast_1d(np.asarray(taps, dtype=float))
    if taps.size == 0:
        raise ValueError("taps must be non-empty")
    if noise_std < 0:
        raise ValueError("noise_std must be non-negative")
    x = np.atleast_2d(np.asarray(x, dtype=float))
    t = _toeplitz(taps, x.shape[1])
    y = x @ t.T
    if noise_std > 0:
        rng = rng if rng is not None else np.random.default_rng()
        y = y + noise_std * rng.standard_normal(y.shape)
    return y, lambda g: np.asarray(g) @ t


def normalize(batch, rule: str = "avg_power"):
    """Scale to unit mean-square entry (``avg_power``) or ||row||^2 = n (``per_symbol``).

    Returns ``(normalised, vjp)``.
    """
    x = np.atleast_2d(np.asarray(batch, dtype=float))
    if rule == "avg_power":
        s = np.sqrt(np.mean(x * x))
        if s == 0:
            raise ValueError("cannot normalise an all-zero batch")
        y = x / s

        def vjp(g):
            return (g - y * np.mean(g * y)) / s
    elif rule == "per_symbol":
        s = np.sqrt(np.mean(x * x, axis=1, keepdims=True))
        if np.any(s == 0):
            raise ValueError("zero-energy row under per-symbol normalisation")
        y = x / s

        def vjp(g):
            return (g - y * np.mean(g * y, axis=1, keepdims=True)) / s
    else:
        raise ValueError(f"unknown normalisation {rule!r}")
    return y, vjp


def noise_std_for(ebn0_db: float, m: int, n: int) -> float:
    """Per-dimension noise std for unit mean-square entries (symbol energy n)."""
    eb = n / math.log2(m)
    n0 = eb / 10.0 ** (ebn0_db / 10.0)
    return math.sqrt(n0 / 2.0)


# ---------------------------------------------------------------- training

def _forward(system, messages, noise_std, rng):
    onehot = np.eye(system.m)[messages]
    enc = nn.forward(system.encoder, onehot)
    z, norm_vjp = normalize(enc[-1], system.normalization)
    y, ch_vjp = channel_layer(z, system.channel_taps, noise_std, rng)
    dec = nn.forward(system.decoder, y)
    return onehot, enc, norm_vjp, ch_vjp, dec


def ae_gradients(system: AeSystem, messages, noise_std: float = 0.0, rng=None):
    """Cross-entropy loss and gradients ordered encoder params then decoder params."""
    onehot, enc, norm_vjp, ch_vjp, dec = _forward(system, messages, noise_std, rng)
    b = onehot.shape[0]
    value = nn.loss(dec[-1], onehot, "cross_entropy")
    dgrads, gy = nn.backward_from(system.decoder, dec, (dec[-1] - onehot) / b,
                                  pre_activation=True)
    egrads, _ = nn.backward_from(system.encoder, enc, norm_vjp(ch_vjp(gy)))
    return value, egrads + dgrads


def ae_grad_check(system: AeSystem, messages, epsilon: float = 1e-5) -> float:
    """Max relative error of end-to-end gradients at zero noise."""
    _, analytic = ae_gradients(system, messages)
    params = system.encoder.params() + system.decoder.params()
    worst = 0.0
    for p, g in zip(params, analytic):
        flat, gflat = p.reshape(-1), g.reshape(-1)
        for k in range(flat.size):
            old = flat[k]
            flat[k] = old + epsilon
            up = ae_gradients(system, messages)[0]
            flat[k] = old - epsilon
            down = ae_gradients(system, messages)[0]
            flat[k] = old
            num = (up - down) / (2 * epsilon)
            worst = max(worst, abs(gflat[k] - num) / max(abs(gflat[k]), abs(num), 1e-12))
    return worst


def build_system(config: AeConfig) -> AeSystem:
    config.validate()
    m, n = config.m, config.n
    enc_sizes = [m, *config.encoder_hidden, n]
    dec_sizes = [n, *config.decoder_hidden, m]
    encoder = nn.MlpModel.build(enc_sizes, ["relu"] * len(config.encoder_hidden) + ["identity"],
                                seed=child_seed(config.seed, "ae/encoder"))
    decoder = nn.MlpModel.build(dec_sizes, ["relu"] * len(config.decoder_hidden) + ["softmax"],
                                seed=child_seed(config.seed, "ae/decoder"))
    if config.channel is None:
        taps = np.array([1.0])
    elif isinstance(config.channel, ChannelResponse):
        taps = fir_taps(config.channel, n)
    else:
        taps = np.atleast_1d(np.asarray(config.channel, dtype=float))
    return AeSystem(encoder, decoder, taps, config.normalization)


def ae_train(config: AeConfig) -> AeSystem:
    system = build_system(config)
    rng = np.random.default_rng(child_seed(config.seed, "ae/train"))
    sigma = noise_std_for(config.train_ebn0_db, config.m, config.n)
    params = system.encoder.params() + system.decoder.params()
    opt = nn.Adam(config.learning_rate)
    for epoch in range(config.epochs):
        total = 0.0
        for _ in range(config.steps_per_epoch):
            msgs = rng.integers(0, config.m, size=config.batch_size)
            value, grads = ae_gradients(system, msgs, sigma, rng)
            if not math.isfinite(value):
                raise nn.TrainingDiverged(f"loss became {value} in epoch {epoch}")
            opt.step(params, grads)
            total += value
        system.history.append(total / config.steps_per_epoch)
    return system


# ---------------------------------------------------------------- evaluation

def evaluate_ser(system: AeSystem, ebn0_db, n_trials: int = 100_000, seed: int = 0,
                 chunk: int = 50_000) -> SerCurve:
    """Monte-Carlo SER over uniform messages; ``inf`` means a noiseless channel."""
    points = np.atleast_1d(np.asarray(ebn0_db, dtype=float))
    codes = system.constellation()
    ser = []
    for i, db in enumerate(points):
        rng = np.random.default_rng(child_seed(seed, f"ser/{i}"))
        sigma = 0.0 if np.isposinf(db) else noise_std_for(db, system.m, system.n)
        errors = 0
        done = 0
        while done < n_trials:
            size = min(chunk, n_trials - done)
            msgs = rng.integers(0, system.m, size=size)
            y, _ = channel_layer(codes[msgs], system.channel_taps, sigma, rng)
            errors += int(np.sum(np.argmax(nn.predict(system.decoder, y), axis=1) != msgs))
            done += size
        ser.append(errors / n_trials)
    return SerCurve(points, np.array(ser), n_trials)


def qfunc(x):
    return 0.5 * erfc(np.asarray(x, dtype=float) / math.sqrt(2.0))


def pam_ser_analytic(m: int, ebn0_db):
    """Matched-filter M-PAM symbol error rate in AWGN."""
    if m < 2 or m & (m - 1):
        raise ValueError("M must be a power of two >= 2")
    k = math.log2(m)
    lin = 10.0 ** (np.asarray(ebn0_db, dtype=float) / 10.0)
    return 2.0 * (m - 1) / m * qfunc(np.sqrt(6.0 * k / (m * m - 1) * lin))


def pam_simulate(m: int, ebn0_db: float, n_trials: int, seed: int = 0) -> float:
    """Monte-Carlo M-PAM with nearest-level detection."""
    levels = np.arange(-(m - 1), m, 2, dtype=float)
    levels /= np.sqrt(np.mean(levels ** 2))
    rng = np.random.default_rng(seed)
    msgs = rng.integers(0, m, size=n_trials)
    y = levels[msgs] + noise_std_for(ebn0_db, m, 1) * rng.standard_normal(n_trials)
    decided = np.argmin(np.abs(y[:, None] - levels[None, :]), axis=1)
    return float(np.mean(decided != msgs))


def required_ebn0(curve: SerCurve, target: float) -> float:
    """Eb/N0 where the curve crosses ``target``, interpolating log10(SER) linearly."""
    db, ser = curve.ebn0_db, curve.ser
    for i in range(len(db) - 1):
        a, b = ser[i], ser[i + 1]
        if a >= target >= b and b > 0:
            if a == b:
                return float(db[i])
            la, lb, lt = np.log10(a), np.log10(b), np.log10(target)
            return float(db[i] + (la - lt) / (la - lb) * (db[i + 1] - db[i]))
    return math.nan


def pam_required_ebn0(m: int, target: float) -> float:
    return float(brentq(lambda x: pam_ser_analytic(m, x) - target, -10.0, 40.0, xtol=1e-12))


def write_ser_csv(path, curve: SerCurve, m: int) -> None:
    pam = pam_ser_analytic(m, curve.ebn0_db)
    textio.write_csv(path, ["ebn0_db", "ser_autoencoder", "ser_pam_analytic", "trials"],
                     [(d, s, p, curve.trials) for d, s, p in zip(curve.ebn0_db, curve.ser, pam)])


def write_constellation_csv(path, system: AeSystem) -> None:
    codes = system.constellation()
    textio.write_csv(path, ["message"] + [f"x{i}" for i in range(system.n)],
                     [[k, *row] for k, row in enumerate(codes)])

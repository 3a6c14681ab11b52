"""Generative adversarial synthesis of channel magnitude responses (dB).

The generator works in a normalised space: corpus [min, max] dB maps to
[-1, 1] and a tanh head keeps every generated value inside the corpus range.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from . import nn, textio
from .medium.line import FrequencyGrid
from .medium.multipath import MultipathConfig, random_multipath, topdown_channel
from .seeding import child_seed

EPS = 1e-12


@dataclass
class ChannelCorpus:
    responses: np.ndarray  # (N, F) dB magnitudes
    grid: FrequencyGrid

    def __post_init__(self):
        self.responses = np.atleast_2d(np.asarray(self.responses, dtype=float))
        if self.responses.shape[1] != self.grid.n_bins:
            raise ValueError("corpus width must equal the number of bins")

    def to_csv(self, path) -> None:
        write_responses_csv(path, self.responses, self.grid)

    @classmethod
    def from_csv(cls, path) -> "ChannelCorpus":
        header, rows = textio.read_csv(path)
        f = np.array(header, dtype=float)
        return cls(np.array(rows, dtype=float), FrequencyGrid(f[0], f[-1], f.size))


def write_responses_csv(path, responses, grid: FrequencyGrid) -> None:
    textio.write_csv(path, [textio.fmt(f) for f in grid.freqs], np.asarray(responses).tolist())


def build_corpus(n: int = 1000, seed: int = 0, config: MultipathConfig | None = None) -> ChannelCorpus:
    config = config or MultipathConfig()
    rng = np.random.default_rng(child_seed(seed, "gan/corpus"))
    rows = [topdown_channel(random_multipath(config=config, rng=rng), config.grid).mag_db()
            for _ in range(n)]
    return ChannelCorpus(np.array(rows), config.grid)


def average_gain_db(responses_db) -> np.ndarray:
    r = np.atleast_2d(responses_db)
    return 10.0 * np.log10(np.mean(10.0 ** (r / 10.0), axis=1))


@dataclass
class GanConfig:
    latent_dim: int = 16
    generator_hidden: tuple = (64, 64)
    discriminator_hidden: tuple = (64,)
    epochs: int = 300
    batch_size: int = 64
    lr_generator: float = 1e-4
    lr_discriminator: float = 4e-4
    seed: int = 0

    def validate(self, n_bins: int | None = None, corpus_size: int | None = None):
        if self.latent_dim < 1:
            raise ValueError("latent_dim must be >= 1")
        if self.epochs < 0 or self.batch_size < 1:
            raise ValueError("epochs >= 0 and batch_size >= 1 required")
        if self.lr_generator <= 0 or self.lr_discriminator <= 0:
            raise ValueError("learning rates must be positive")
        if corpus_size is not None and corpus_size < 10 * self.batch_size:
            raise ValueError("corpus must hold at least 10 batches")


@dataclass
class GanGenerator:
    model: nn.MlpModel
    lo: float
    hi: float

    @property
    def latent_dim(self) -> int:
        return self.model.input_dim

    def to_db(self, out):
        return self.lo + (np.asarray(out) + 1.0) * 0.5 * (self.hi - self.lo)

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        z = rng.standard_normal((n, self.latent_dim))
        return np.clip(self.to_db(nn.predict(self.model, z)), self.lo, self.hi)


@dataclass
class CorpusResampler:
    """Draws corpus rows; with n equal to the corpus size it returns them all."""

    corpus: ChannelCorpus

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        rows = self.corpus.responses
        if n == rows.shape[0]:
            return rows.copy()
        return rows[rng.integers(0, rows.shape[0], size=n)]


@dataclass
class GanResult:
    generator: GanGenerator
    discriminator: nn.MlpModel
    history: list = field(default_factory=list)  # (epoch, d_loss, g_loss)
    collapsed: bool = False


def value_function(d_real, d_fake) -> float:
    """Batch-mean log D(x) + log(1 - D(G(y)))."""
    d_real, d_fake = np.asarray(d_real), np.asarray(d_fake)
    return float(np.mean(np.log(np.maximum(d_real, EPS))) +
                 np.mean(np.log(np.maximum(1.0 - d_fake, EPS))))


def is_collapsed(generated, reference, ratio: float = 1e-3) -> bool:
    """True when the generated batch spread is below ``ratio`` of the reference spread."""
    return float(np.mean(np.std(generated, axis=0))) < ratio * float(np.mean(np.std(reference, axis=0)))


def _build(config: GanConfig, n_bins: int):
    g = nn.MlpModel.build([config.latent_dim, *config.generator_hidden, n_bins],
                          ["relu"] * len(config.generator_hidden) + ["tanh"],
                          seed=child_seed(config.seed, "gan/generator"))
    d = nn.MlpModel.build([n_bins, *config.discriminator_hidden, 1],
                          ["relu"] * len(config.discriminator_hidden) + ["sigmoid"],
                          seed=child_seed(config.seed, "gan/discriminator"))
    return g, d


def discriminator_step_grads(disc: nn.MlpModel, real, fake):
    """Loss -[log D(x) + log(1 - D(G(y)))] and its parameter gradients."""
    ar = nn.forward(disc, real)
    af = nn.forward(disc, fake)
    dr, df = ar[-1], af[-1]
    loss = -value_function(dr, df)
    gr, _ = nn.backward_from(disc, ar, (dr - 1.0) / dr.shape[0], pre_activation=True)
    gf, _ = nn.backward_from(disc, af, df / df.shape[0], pre_activation=True)
    return loss, [a + b for a, b in zip(gr, gf)]


def generator_step_grads(gen: nn.MlpModel, disc: nn.MlpModel, z):
    """Non-saturating loss -log D(G(z)) with the discriminator frozen."""
    ag = nn.forward(gen, z)
    ad = nn.forward(disc, ag[-1])
    d = ad[-1]
    loss = float(-np.mean(np.log(np.maximum(d, EPS))))
    _, g_in = nn.backward_from(disc, ad, (d - 1.0) / d.shape[0], pre_activation=True)
    grads, _ = nn.backward_from(gen, ag, g_in)
    return loss, grads


def generator_grad_check(gen: nn.MlpModel, disc: nn.MlpModel, z, epsilon: float = 1e-5) -> float:
    _, analytic = generator_step_grads(gen, disc, z)
    worst = 0.0
    for p, g in zip(gen.params(), analytic):
        flat, gflat = p.reshape(-1), g.reshape(-1)
        for k in range(flat.size):
            old = flat[k]
            flat[k] = old + epsilon
            up = generator_step_grads(gen, disc, z)[0]
            flat[k] = old - epsilon
            down = generator_step_grads(gen, disc, z)[0]
            flat[k] = old
            num = (up - down) / (2 * epsilon)
            worst = max(worst, abs(gflat[k] - num) / max(abs(gflat[k]), abs(num), 1e-12))
    return worst


def gan_train(corpus: ChannelCorpus, config: GanConfig | None = None) -> GanResult:
    config = config or GanConfig()
    data = corpus.responses
    config.validate(data.shape[1], data.shape[0])
    lo, hi = float(data.min()), float(data.max())
    if hi <= lo:
        raise ValueError("corpus has no dynamic range")
    real_all = 2.0 * (data - lo) / (hi - lo) - 1.0  # a new array; the corpus stays untouched
    gen, disc = _build(config, data.shape[1])
    # start the generator at the corpus mean profile
    gen.layers[-1].biases[:] = np.arctanh(np.clip(real_all.mean(axis=0), -0.99, 0.99))
    opt_g, opt_d = nn.Adam(config.lr_generator, beta1=0.5), nn.Adam(config.lr_discriminator, beta1=0.5)
    rng = np.random.default_rng(child_seed(config.seed, "gan/train"))
    result = GanResult(GanGenerator(gen, lo, hi), disc)
    b = config.batch_size
    n_batches = data.shape[0] // b
    for epoch in range(config.epochs):
        d_total = g_total = 0.0
        order = rng.permutation(data.shape[0])
        for k in range(n_batches):
            real = real_all[order[k * b:(k + 1) * b]]
            fake = nn.predict(gen, rng.standard_normal((b, config.latent_dim)))
            d_loss, d_grads = discriminator_step_grads(disc, real, fake)
            opt_d.step(disc.params(), d_grads)
            z = rng.standard_normal((b, config.latent_dim))
            g_loss, g_grads = generator_step_grads(gen, disc, z)
            opt_g.step(gen.params(), g_grads)
            if not (math.isfinite(d_loss) and math.isfinite(g_loss)):
                raise nn.TrainingDiverged(f"non-finite GAN loss in epoch {epoch}")
            d_total += d_loss
            g_total += g_loss
        result.history.append((epoch, d_total / n_batches, g_total / n_batches))
        result.collapsed = is_collapsed(fake, real_all)
    if result.collapsed:
        warnings.warn("generator output has collapsed to a single mode", RuntimeWarning)
    return result


def generate(generator, n: int, seed: int = 0) -> np.ndarray:
    return generator.sample(n, np.random.default_rng(child_seed(seed, "gan/generate")))


@dataclass
class GanReport:
    mean_error_db: np.ndarray  # per bin |mean_gen - mean_corpus|
    std_ratio: np.ndarray  # per bin std_gen / std_corpus
    ks_avg_gain: float
    within_5db: float  # fraction of bins with mean error <= 5 dB
    flagged_bins: int  # bins with mean error > 5 dB
    generated_min: float
    generated_max: float

    def to_dict(self) -> dict:
        return {"mean_error_db": self.mean_error_db.tolist(), "std_ratio": self.std_ratio.tolist(),
                "ks_avg_gain": self.ks_avg_gain, "within_5db": self.within_5db,
                "flagged_bins": self.flagged_bins, "generated_min": self.generated_min,
                "generated_max": self.generated_max}


def evaluate_gan(generator, corpus: ChannelCorpus, n_samples: int = 1000, seed: int = 0) -> GanReport:
    gen = generate(generator, n_samples, seed)
    ref = corpus.responses
    err = np.abs(gen.mean(axis=0) - ref.mean(axis=0))
    ref_std = ref.std(axis=0)
    ratio = np.divide(gen.std(axis=0), ref_std, out=np.full(ref_std.shape, np.nan), where=ref_std > 0)
    ks = float(stats.ks_2samp(average_gain_db(gen), average_gain_db(ref)).statistic)
    return GanReport(err, ratio, ks, float(np.mean(err <= 5.0)), int(np.sum(err > 5.0)),
                     float(gen.min()), float(gen.max()))

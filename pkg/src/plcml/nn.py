"""A small dense feed-forward network engine written directly on numpy.

Models are plain dataclasses holding float64 arrays.  ``forward`` returns
every intermediate activation so that ``backward`` can run without caching
state on the model, which keeps forward/loss/gradient checks pure.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import expit

from . import textio

ACTIVATIONS = ("identity", "relu", "tanh", "sigmoid", "softmax")
LOSSES = ("mse", "cross_entropy")
OPTIMIZERS = ("sgd", "adam")

CE_CLAMP = 1e-12


class ShapeError(ValueError):
    pass


class ContractError(ValueError):
    pass


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class DenseLayer:
    weights: np.ndarray  # (out, in)
    biases: np.ndarray  # (out,)
    activation: str = "identity"

    def __post_init__(self):
        self.weights = np.atleast_2d(np.asarray(self.weights, dtype=float))
        self.biases = np.asarray(self.biases, dtype=float).reshape(-1)
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.weights.shape[0] != self.biases.shape[0]:
            raise ShapeError(
                f"weights {self.weights.shape} do not match biases {self.biases.shape}"
            )

    @property
    def n_in(self) -> int:
        return self.weights.shape[1]

    @property
    def n_out(self) -> int:
        return self.weights.shape[0]


@dataclass
class MlpModel:
    layers: list

    def __post_init__(self):
        if not self.layers:
            raise ValueError("a model needs at least one layer")
        for i, layer in enumerate(self.layers):
            if layer.activation == "softmax" and i != len(self.layers) - 1:
                raise ValueError("softmax is only allowed on the final layer")
            if i and layer.n_in != self.layers[i - 1].n_out:
                raise ShapeError(
                    f"layer {i} expects {layer.n_in} inputs, "
                    f"previous layer gives {self.layers[i - 1].n_out}"
                )

    @classmethod
    def build(cls, sizes, activations, seed=0, rng=None) -> "MlpModel":
        """Glorot-uniform weights, zero biases.

        ``sizes`` lists the widths from input to output, ``activations`` one
        entry per layer (``len(sizes) - 1``).
        """
        if len(activations) != len(sizes) - 1:
            raise ValueError("need one activation per layer")
        rng = rng if rng is not None else np.random.default_rng(seed)
        layers = []
        for n_in, n_out, act in zip(sizes[:-1], sizes[1:], activations):
            lim = np.sqrt(6.0 / (n_in + n_out))
            layers.append(
                DenseLayer(rng.uniform(-lim, lim, size=(n_out, n_in)), np.zeros(n_out), act)
            )
        return cls(layers)

    @property
    def input_dim(self) -> int:
        return self.layers[0].n_in

    @property
    def output_dim(self) -> int:
        return self.layers[-1].n_out

    def params(self) -> list:
        """Parameter arrays in a fixed order (W1, b1, W2, b2, ...), by reference."""
        out = []
        for layer in self.layers:
            out += [layer.weights, layer.biases]
        return out

    def copy(self) -> "MlpModel":
        return MlpModel(
            [DenseLayer(l.weights.copy(), l.biases.copy(), l.activation) for l in self.layers]
        )

    def to_dict(self) -> dict:
        return {
            "layers": [
                {
                    "rows": l.n_out,
                    "cols": l.n_in,
                    "weights": l.weights.ravel().tolist(),
                    "biases": l.biases.tolist(),
                    "activation": l.activation,
                }
                for l in self.layers
            ]
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MlpModel":
        layers = []
        for l in d["layers"]:
            w = np.asarray(l["weights"], dtype=float).reshape(l["rows"], l["cols"])
            layers.append(DenseLayer(w, np.asarray(l["biases"], dtype=float), l["activation"]))
        return cls(layers)


def save_model(model: MlpModel, path) -> None:
    textio.write_json(path, model.to_dict())


def load_model(path) -> MlpModel:
    return MlpModel.from_dict(textio.read_json(Path(path)))


@dataclass
class LabeledDataset:
    inputs: np.ndarray
    targets: np.ndarray

    def __post_init__(self):
        self.inputs = np.atleast_2d(np.asarray(self.inputs, dtype=float))
        self.targets = np.asarray(self.targets, dtype=float)
        if self.targets.ndim == 1:
            self.targets = self.targets[:, None]
        if self.inputs.shape[0] != self.targets.shape[0]:
            raise ShapeError("inputs and targets have different row counts")

    def __len__(self) -> int:
        return self.inputs.shape[0]


@dataclass
class TrainConfig:
    optimizer: str = "adam"
    learning_rate: float = 1e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    batch_size: int = 32
    epochs: int = 100
    dropout_rate: float = 0.0
    seed: int = 0
    loss: str = "mse"

    def __post_init__(self):
        if self.optimizer not in OPTIMIZERS:
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.loss not in LOSSES:
            raise ValueError(f"unknown loss {self.loss!r}")
        # a zero rate is accepted: it freezes the parameters
        if not self.learning_rate >= 0:
            raise ValueError("learning_rate must be >= 0")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must lie in [0, 1)")
        if self.batch_size < 1 or self.epochs < 0:
            raise ValueError("batch_size must be >= 1 and epochs >= 0")


def _activate(z: np.ndarray, kind: str) -> np.ndarray:
    if kind == "identity":
        return z
    if kind == "relu":
        return np.maximum(z, 0.0)
    if kind == "tanh":
        return np.tanh(z)
    if kind == "sigmoid":
        return expit(z)
    e = np.exp(z - z.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def _activation_vjp(y: np.ndarray, g: np.ndarray, kind: str) -> np.ndarray:
    """Pull ``g = dL/dy`` back through the activation, using only the output ``y``."""
    if kind == "identity":
        return g
    if kind == "relu":
        return g * (y > 0)
    if kind == "tanh":
        return g * (1.0 - y * y)
    if kind == "sigmoid":
        return g * y * (1.0 - y)
    return y * (g - np.sum(g * y, axis=1, keepdims=True))


def forward(model: MlpModel, batch, dropout_mask=None) -> list:
    """Return ``[x0, x1, ..., xL]``; ``x0`` is the (masked) input batch."""
    x = np.atleast_2d(np.asarray(batch, dtype=float))
    if x.shape[1] != model.input_dim:
        raise ShapeError(f"batch has {x.shape[1]} columns, model expects {model.input_dim}")
    if dropout_mask is not None:
        x = x * dropout_mask
    acts = [x]
    for layer in model.layers:
        x = _activate(x @ layer.weights.T + layer.biases, layer.activation)
        acts.append(x)
    return acts


def predict(model: MlpModel, batch) -> np.ndarray:
    return forward(model, batch)[-1]


def _check_one_hot(targets: np.ndarray) -> None:
    ok = np.all((targets == 0.0) | (targets == 1.0)) and np.all(targets.sum(axis=1) == 1.0)
    if not ok:
        raise ContractError("cross-entropy targets must be one-hot rows")


def loss(predictions, targets, kind: str = "mse") -> float:
    """Batch-mean loss; MSE sums squared error over output columns per sample."""
    p = np.atleast_2d(np.asarray(predictions, dtype=float))
    t = np.atleast_2d(np.asarray(targets, dtype=float))
    if p.shape != t.shape:
        raise ShapeError(f"prediction shape {p.shape} != target shape {t.shape}")
    n = p.shape[0]
    if kind == "mse":
        return float(np.sum((p - t) ** 2) / n)
    if kind == "cross_entropy":
        _check_one_hot(t)
        return float(-np.sum(t * np.log(np.clip(p, CE_CLAMP, 1.0))) / n)
    raise ValueError(f"unknown loss {kind!r}")


def backward_from(model: MlpModel, acts: list, grad_out, dropout_mask=None,
                  pre_activation: bool = False):
    """Backpropagate an upstream gradient through the whole model.

    ``grad_out`` is dL/d(output) or, with ``pre_activation=True``, dL/d(final
    pre-activation).  Returns ``(param_grads, grad_input)`` where
    ``param_grads`` is ordered like :meth:`MlpModel.params`.
    """
    g = np.asarray(grad_out, dtype=float)
    grads = [None] * (2 * len(model.layers))
    for i in range(len(model.layers) - 1, -1, -1):
        layer = model.layers[i]
        if pre_activation and i == len(model.layers) - 1:
            dz = g
        else:
            dz = _activation_vjp(acts[i + 1], g, layer.activation)
        grads[2 * i] = dz.T @ acts[i]
        grads[2 * i + 1] = dz.sum(axis=0)
        g = dz @ layer.weights
    if dropout_mask is not None:
        g = g * dropout_mask
    return grads, g


def backward(model: MlpModel, acts: list, targets, kind: str = "mse", dropout_mask=None):
    """Gradients of the batch-mean loss w.r.t. every parameter (W1, b1, ...)."""
    y = acts[-1]
    t = np.atleast_2d(np.asarray(targets, dtype=float))
    if y.shape != t.shape:
        raise ShapeError(f"output shape {y.shape} != target shape {t.shape}")
    n = y.shape[0]
    if kind == "mse":
        grads, _ = backward_from(model, acts, 2.0 * (y - t) / n, dropout_mask)
        return grads
    if kind != "cross_entropy":
        raise ValueError(f"unknown loss {kind!r}")
    _check_one_hot(t)
    if model.layers[-1].activation == "softmax":
        # fused softmax + cross-entropy; exact while no probability hits the clamp
        grads, _ = backward_from(model, acts, (y - t) / n, dropout_mask, pre_activation=True)
        return grads
    g = np.where(y > CE_CLAMP, -t / np.maximum(y, CE_CLAMP), 0.0) / n
    grads, _ = backward_from(model, acts, g, dropout_mask)
    return grads


class Sgd:
    def __init__(self, learning_rate: float):
        self.lr = learning_rate

    def step(self, params, grads) -> None:
        for p, g in zip(params, grads):
            p -= self.lr * g


class Adam:
    def __init__(self, learning_rate=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.b1, self.b2, self.eps = learning_rate, beta1, beta2, eps
        self.t = 0
        self.m = None
        self.v = None

    def step(self, params, grads) -> None:
        if self.m is None:
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def make_optimizer(config: TrainConfig):
    if config.optimizer == "sgd":
        return Sgd(config.learning_rate)
    return Adam(config.learning_rate, config.adam_beta1, config.adam_beta2, config.adam_eps)


def dropout_mask(rng: np.random.Generator, shape, rate: float):
    """Inverted-dropout mask: kept entries carry 1/(1-rate)."""
    if rate <= 0.0:
        return None
    keep = rng.random(shape) >= rate
    return keep / (1.0 - rate)


def train(model: MlpModel, dataset: LabeledDataset, config: TrainConfig) -> list:
    """Minibatch training in place; returns the mean training loss per epoch."""
    n = len(dataset)
    if n == 0:
        raise ValueError("empty dataset")
    if dataset.inputs.shape[1] != model.input_dim:
        raise ShapeError("dataset inputs do not match the model input width")
    if config.loss == "cross_entropy":
        _check_one_hot(dataset.targets)
    rng = np.random.default_rng(config.seed)
    opt = make_optimizer(config)
    params = model.params()
    history = []
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            xb, yb = dataset.inputs[idx], dataset.targets[idx]
            mask = dropout_mask(rng, xb.shape, config.dropout_rate)
            acts = forward(model, xb, mask)
            batch_loss = loss(acts[-1], yb, config.loss)
            if not np.isfinite(batch_loss):
                raise TrainingDiverged(
                    f"non-finite loss at epoch {epoch}, batch starting {start}"
                )
            total += batch_loss * len(idx)
            opt.step(params, backward(model, acts, yb, config.loss, mask))
        history.append(total / n)
    return history


def _flat_loss(model, x, t, kind):
    return loss(forward(model, x)[-1], t, kind)


def grad_check(model: MlpModel, sample: LabeledDataset, epsilon: float = 1e-5,
               kind: str = "mse") -> float:
    """Max relative error between backprop and central finite differences."""
    if not 0.0 < epsilon <= 1e-3:
        raise ValueError("epsilon must lie in (0, 1e-3]")
    x, t = sample.inputs, sample.targets
    analytic = backward(model, forward(model, x), t, kind)
    worst = 0.0
    for p, g in zip(model.params(), analytic):
        flat = p.reshape(-1)
        gflat = g.reshape(-1)
        for k in range(flat.size):
            old = flat[k]
            flat[k] = old + epsilon
            up = _flat_loss(model, x, t, kind)
            flat[k] = old - epsilon
            down = _flat_loss(model, x, t, kind)
            flat[k] = old
            num = (up - down) / (2.0 * epsilon)
            a = gflat[k]
            err = abs(a - num) / max(abs(a), abs(num), 1e-12)
            worst = max(worst, err)
    return worst

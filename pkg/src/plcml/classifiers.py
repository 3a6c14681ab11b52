"""Kernel SVM trained with simplified SMO, and k-nearest neighbours."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist, pdist

from . import textio


def rbf_kernel(x, y, sigma: float) -> float:
    """exp(-||x - y||^2 / sigma^2)."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    d = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
    return float(np.exp(-np.dot(d, d) / sigma ** 2))


def kernel_matrix(a, b, kernel: str = "rbf", sigma: float = 1.0) -> np.ndarray:
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.atleast_2d(np.asarray(b, dtype=float))
    if kernel == "linear":
        return a @ b.T
    if kernel == "rbf":
        return np.exp(-cdist(a, b, "sqeuclidean") / sigma ** 2)
    raise ValueError(f"unknown kernel {kernel!r}")


def median_sigma(x) -> float:
    """Median pairwise Euclidean distance (the usual bandwidth heuristic)."""
    d = pdist(np.atleast_2d(np.asarray(x, dtype=float)))
    d = d[d > 0]
    return float(np.median(d)) if d.size else 1.0


def dual_objective(alphas, labels, gram) -> float:
    ay = alphas * labels
    return float(alphas.sum() - 0.5 * ay @ gram @ ay)


@dataclass
class SvmModel:
    support_vectors: np.ndarray
    alphas: np.ndarray
    labels: np.ndarray
    bias: float
    kernel: str = "rbf"
    sigma: float = 1.0
    c_penalty: float = 10.0
    converged: bool = True
    dual_history: list = field(default_factory=list)

    def decision(self, x) -> np.ndarray:
        k = kernel_matrix(x, self.support_vectors, self.kernel, self.sigma)
        return k @ (self.alphas * self.labels) + self.bias

    def to_dict(self) -> dict:
        return {
            "alphas": self.alphas.tolist(),
            "labels": self.labels.tolist(),
            "support_vectors": self.support_vectors.tolist(),
            "bias": self.bias,
            "kernel": self.kernel,
            "sigma": self.sigma,
            "C": self.c_penalty,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SvmModel":
        return cls(
            support_vectors=np.asarray(d["support_vectors"], dtype=float),
            alphas=np.asarray(d["alphas"], dtype=float),
            labels=np.asarray(d["labels"], dtype=float),
            bias=float(d["bias"]),
            kernel=d["kernel"],
            sigma=float(d["sigma"]),
            c_penalty=float(d["C"]),
        )


def save_svm(model: SvmModel, path) -> None:
    textio.write_json(path, model.to_dict())


def load_svm(path) -> SvmModel:
    return SvmModel.from_dict(textio.read_json(path))


def svm_train(x, y, kernel: str = "rbf", c: float = 10.0, tol: float = 1e-3,
              sigma: float | None = None, seed: int = 0, max_passes: int | None = None,
              ) -> SvmModel:
    """Simplified SMO on the soft-margin dual.

    The second multiplier of each pair is drawn at random; when that pair
    cannot move, the partner with the largest error gap is tried, then every
    other index.  Training stops after a sweep with no update (every KKT
    violation is then within ``tol``) or after ``max_passes`` sweeps
    (default ``10 * N``), in which case ``converged`` is False and a warning
    is emitted.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.asarray(y, dtype=float).reshape(-1)
    n = x.shape[0]
    if n < 2 or not (np.any(y == 1) and np.any(y == -1)):
        raise ValueError("need at least two samples from both classes")
    if not np.all(np.abs(y) == 1):
        raise ValueError("labels must be +1/-1")
    if kernel == "rbf" and sigma is None:
        sigma = median_sigma(x)
    sigma = 1.0 if sigma is None else float(sigma)
    gram = kernel_matrix(x, x, kernel, sigma)
    rng = np.random.default_rng(seed)
    max_passes = 10 * n if max_passes is None else max_passes

    alpha = np.zeros(n)
    b = 0.0
    f = np.zeros(n)  # decision values without bias
    history = [0.0]

    def take_step(i, j, ei):
        nonlocal b
        ej = f[j] + b - y[j]
        ai, aj = alpha[i], alpha[j]
        if y[i] != y[j]:
            lo, hi = max(0.0, aj - ai), min(c, c + aj - ai)
        else:
            lo, hi = max(0.0, ai + aj - c), min(c, ai + aj)
        if lo >= hi:
            return False
        eta = 2.0 * gram[i, j] - gram[i, i] - gram[j, j]
        if eta >= 0:
            return False
        aj_new = min(hi, max(lo, aj - y[j] * (ei - ej) / eta))
        if abs(aj_new - aj) < 1e-12:
            return False
        ai_new = ai + y[i] * y[j] * (aj - aj_new)
        di, dj = ai_new - ai, aj_new - aj
        b1 = b - ei - y[i] * di * gram[i, i] - y[j] * dj * gram[i, j]
        b2 = b - ej - y[i] * di * gram[i, j] - y[j] * dj * gram[j, j]
        if 0 < ai_new < c:
            b = b1
        elif 0 < aj_new < c:
            b = b2
        else:
            b = 0.5 * (b1 + b2)
        alpha[i], alpha[j] = ai_new, aj_new
        f[:] += y[i] * di * gram[:, i] + y[j] * dj * gram[:, j]
        return True

    passes = 0
    converged = False
    while passes < max_passes:
        changed = 0
        for i in range(n):
            ei = f[i] + b - y[i]
            if not ((y[i] * ei < -tol and alpha[i] < c) or (y[i] * ei > tol and alpha[i] > 0)):
                continue
            j = int(rng.integers(n - 1))
            j += j >= i
            if take_step(i, j, ei):
                changed += 1
                continue
            # random partner made no progress: largest |Ei - Ej|, then a full scan
            err = f + b - y
            j = int(np.argmax(np.abs(ei - err)))
            if j != i and take_step(i, j, ei):
                changed += 1
                continue
            start = int(rng.integers(n))
            for j in np.roll(np.arange(n), -start):
                if j != i and take_step(i, int(j), ei):
                    changed += 1
                    break
        passes += 1
        history.append(dual_objective(alpha, y, gram))
        if changed == 0:
            converged = True
            break

    if not converged:
        warnings.warn(f"SMO stopped after {passes} passes without converging", RuntimeWarning)

    free = (alpha > 1e-12) & (alpha < c - 1e-12)
    if np.any(free):
        b = float(np.mean(y[free] - f[free]))
    keep = alpha > 0
    return SvmModel(
        support_vectors=x[keep].copy(),
        alphas=alpha[keep].copy(),
        labels=y[keep].copy(),
        bias=float(b),
        kernel=kernel,
        sigma=sigma,
        c_penalty=c,
        converged=converged,
        dual_history=history,
    )


def svm_predict(model: SvmModel, x):
    """Return ``(class, decision_value)``; a zero decision value maps to +1."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != model.support_vectors.shape[1]:
        raise ValueError("input dimension does not match the training data")
    f = float(model.decision(x.reshape(1, -1))[0])
    return (1 if f >= 0 else -1), f


@dataclass
class SvmOvr:
    """One-vs-rest multiclass wrapper; predicts the argmax decision value."""

    classes: np.ndarray
    models: list

    def decision(self, x) -> np.ndarray:
        return np.column_stack([m.decision(x) for m in self.models])

    def predict(self, x) -> np.ndarray:
        return self.classes[np.argmax(self.decision(x), axis=1)]


def svm_train_ovr(x, labels, kernel: str = "rbf", c: float = 10.0, tol: float = 1e-3,
                  sigma: float | None = None, seed: int = 0) -> SvmOvr:
    x = np.atleast_2d(np.asarray(x, dtype=float))
    labels = np.asarray(labels).reshape(-1)
    classes = np.unique(labels)
    if kernel == "rbf" and sigma is None:
        sigma = median_sigma(x)
    models = [
        svm_train(x, np.where(labels == cls, 1.0, -1.0), kernel, c, tol, sigma, seed + k)
        for k, cls in enumerate(classes)
    ]
    return SvmOvr(classes, models)


@dataclass
class KnnModel:
    points: np.ndarray
    labels: np.ndarray
    k: int = 3

    def __post_init__(self):
        self.points = np.atleast_2d(np.asarray(self.points, dtype=float))
        self.labels = np.asarray(self.labels).reshape(-1)
        if self.k < 1 or self.k > self.points.shape[0]:
            raise ValueError("k must lie in [1, number of points]")


def knn_predict(model: KnnModel, x):
    """Majority label of the k nearest points.

    Distance ties go to the lower point index.  A multiclass vote tie goes to
    the tied label whose first member appears earliest in distance order.
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    d = np.sum((model.points - x) ** 2, axis=1)
    nearest = np.argsort(d, kind="stable")[: model.k]
    votes = {}
    for idx in nearest:
        lab = model.labels[idx].item()
        votes[lab] = votes.get(lab, 0) + 1
    best = max(votes.values())
    for idx in nearest:
        lab = model.labels[idx].item()
        if votes[lab] == best:
            return lab


def knn_predict_batch(model: KnnModel, xs) -> np.ndarray:
    return np.array([knn_predict(model, x) for x in np.atleast_2d(xs)])

"""Grid anomaly classification from magnitude ratios of line measurements.

Every realization measures one signal (input admittance, reflection
coefficient or transfer function) at a fixed observation node before and
after an anomaly; the classifier sees |after| / |before| per frequency bin.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

from . import classifiers, nn, textio
from .medium.line import FrequencyGrid, NetworkSolver, reflection
from .medium.topology import (ConcentratedFault, DistributedFault, LoadChange, Topology,
                              perturb, topo_random)
from .seeding import child_seed


class AnomalyClass(IntEnum):
    UNPERTURBED = 1
    LOAD_CHANGE = 2
    CONCENTRATED_FAULT = 3
    DISTRIBUTED_FAULT = 4


SIGNALS = ("yin", "rho_in", "h")
LOAD_MODES = ("constant", "variable")
CLASSIFIERS = ("mlp100", "svm_ovr", "knn")
MAX_RESAMPLES = 100


@dataclass
class DiagConfig:
    n_nodes: int = 20
    avg_edge_len: float = 700.0
    area_side: float = 3000.0
    n_realizations: int = 10000
    signal: str = "yin"
    load_mode: str = "constant"
    constant_load: float = 2000.0
    load_range: tuple = (100.0, 1e4)  # log-uniform draw in variable mode
    # anomaly severities: load change in decades, shunt fault ohms, R/G factor
    load_change_decades: tuple = (0.5, 1.5)
    fault_impedance: tuple = (1.0, 100.0)
    distributed_factor: tuple = (10.0, 1000.0)
    f_start: float = 4.3e3
    f_max: float = 500e3
    spacing: float = 4.3e3
    classes: tuple = (1, 2, 3, 4)
    train_fraction: float = 0.5
    seed: int = 0

    def validate(self):
        if self.signal not in SIGNALS:
            raise ValueError(f"signal must be one of {SIGNALS}")
        if self.load_mode not in LOAD_MODES:
            raise ValueError(f"load_mode must be one of {LOAD_MODES}")
        if self.n_nodes < 3 or self.avg_edge_len <= 0 or self.area_side <= 0:
            raise ValueError("need >= 3 nodes and positive lengths")
        if not 0 < self.f_start < self.f_max or self.spacing <= 0:
            raise ValueError("band must satisfy 0 < f_start < f_max with positive spacing")
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError("train_fraction must lie in (0, 1)")
        if not 0 < self.load_range[0] <= self.load_range[1] or self.constant_load <= 0:
            raise ValueError("loads must be positive")
        if not (0 <= self.load_change_decades[0] <= self.load_change_decades[1]
                and 0 < self.fault_impedance[0] <= self.fault_impedance[1]
                and 0 < self.distributed_factor[0] <= self.distributed_factor[1]):
            raise ValueError("anomaly severity ranges must be ordered and positive")
        bad = [c for c in self.classes if c not in set(AnomalyClass)]
        if bad or len(set(self.classes)) < 2:
            raise ValueError("classes must be >= 2 distinct members of 1..4")
        if self.n_realizations < len(self.classes):
            raise ValueError("need at least one realization per class")

    @property
    def grid(self) -> FrequencyGrid:
        return FrequencyGrid.from_spacing(self.f_start, self.f_max, self.spacing)


@dataclass
class DiagDataset:
    ratios: np.ndarray  # (N, F), |measured| / |reference|
    labels: np.ndarray  # AnomalyClass values
    grid: FrequencyGrid
    observation_node: int = 0
    resampled: int = 0

    def subset(self, classes) -> "DiagDataset":
        keep = np.isin(self.labels, list(classes))
        return DiagDataset(self.ratios[keep], self.labels[keep], self.grid,
                           self.observation_node, self.resampled)

    def to_csv(self, path) -> None:
        header = [f"ratio_{textio.fmt(f)}" for f in self.grid.freqs] + ["label"]
        rows = [[*r, int(c)] for r, c in zip(self.ratios.tolist(), self.labels)]
        textio.write_csv(path, header, rows)

    @classmethod
    def from_csv(cls, path) -> "DiagDataset":
        header, rows = textio.read_csv(path)
        arr = np.array(rows, dtype=float)
        f = np.array([h.split("_", 1)[1] for h in header[:-1]], dtype=float)
        return cls(arr[:, :-1], arr[:, -1].astype(int), FrequencyGrid(f[0], f[-1], f.size))


def base_topology(config: DiagConfig) -> Topology:
    rng = np.random.default_rng(child_seed(config.seed, "diag/topology"))
    return topo_random(config.n_nodes, config.area_side, config.avg_edge_len,
                       load=config.constant_load, rng=rng)


def observation_node(topo: Topology) -> int:
    """Highest-degree node, smallest id on ties."""
    return int(np.argmax(topo.degree()))


def _log_uniform(rng, lo, hi) -> float:
    return float(np.exp(rng.uniform(np.log(lo), np.log(hi))))


def random_anomaly(topo: Topology, cls: int, rng: np.random.Generator,
                   config: DiagConfig | None = None):
    """One anomaly of class ``cls`` with randomly drawn location and severity."""
    config = config or DiagConfig()
    cls = AnomalyClass(cls)
    if cls is AnomalyClass.UNPERTURBED:
        return None
    if cls is AnomalyClass.LOAD_CHANGE:
        node = int(rng.integers(topo.n_nodes))
        old = topo.nodes[node].load
        factor = 10.0 ** (rng.uniform(*config.load_change_decades) * rng.choice((-1.0, 1.0)))
        return LoadChange(node, complex(old) * factor if old is not None else 2000.0)
    k = int(rng.integers(len(topo.edges)))
    length = topo.edges[k].length
    if cls is AnomalyClass.CONCENTRATED_FAULT:
        # low-impedance shunt somewhere inside the edge
        return ConcentratedFault(k, float(rng.uniform(0.05, 0.95)) * length,
                                 _log_uniform(rng, *config.fault_impedance))
    span = float(rng.uniform(0.2, 0.5)) * length
    start = float(rng.uniform(0.0, length - span))
    return DistributedFault(k, start, span, _log_uniform(rng, *config.distributed_factor))


def measure(topo: Topology, signal: str, node: int, rx: int | None, freqs) -> np.ndarray:
    solver = NetworkSolver(topo, freqs)
    if signal == "h":
        return solver.transfer(node, rx)
    y = solver.node_admittance(node)
    return y if signal == "yin" else reflection(y)


def _leaves(topo: Topology, exclude: int) -> list:
    deg = topo.degree()
    return [i for i in range(topo.n_nodes) if deg[i] == 1 and i != exclude]


def _realization(config, base, obs, leaves, cls, rng, freqs):
    topo = base.copy()
    if config.load_mode == "variable":
        for node in topo.nodes:
            node.load = _log_uniform(rng, *config.load_range)
    rx = int(rng.choice(leaves)) if config.signal == "h" else None
    anomaly = random_anomaly(topo, cls, rng, config)
    reference = measure(topo, config.signal, obs, rx, freqs)
    if anomaly is None:
        measured = reference
    else:
        measured = measure(perturb(topo, anomaly), config.signal, obs, rx, freqs)
    return np.abs(measured) / np.abs(reference)


def build_diag_dataset(config: DiagConfig | None = None) -> DiagDataset:
    """Balanced dataset: realization i belongs to ``classes[i % K]``.

    The reference of each realization is the same grid (with the same loads)
    before the anomaly is applied.  Realizations with non-finite or
    non-positive ratios are redrawn and counted in ``resampled``.
    """
    config = config or DiagConfig()
    config.validate()
    freqs = config.grid.freqs
    base = base_topology(config)
    obs = observation_node(base)
    leaves = _leaves(base, obs)
    ratios = np.empty((config.n_realizations, freqs.size))
    labels = np.empty(config.n_realizations, dtype=int)
    resampled = 0
    for i in range(config.n_realizations):
        cls = config.classes[i % len(config.classes)]
        rng = np.random.default_rng(child_seed(config.seed, f"diag/realization/{i}"))
        for _ in range(MAX_RESAMPLES):
            r = _realization(config, base, obs, leaves, cls, rng, freqs)
            if np.all(np.isfinite(r)) and np.all(r > 0):
                break
            resampled += 1
        else:
            raise RuntimeError(f"realization {i} stayed degenerate after {MAX_RESAMPLES} draws")
        ratios[i] = r
        labels[i] = cls
    return DiagDataset(ratios, labels, config.grid, obs, resampled)


# ---------------------------------------------------------------- classifiers

def stratified_split(labels, train_fraction: float = 0.5, seed: int = 0):
    """Disjoint, exhaustive (train_idx, test_idx) with per-class proportions kept."""
    if not 0.0 < train_fraction < 1.0:
        raise ValueError("train_fraction must lie in (0, 1)")
    labels = np.asarray(labels)
    rng = np.random.default_rng(child_seed(seed, "diag/split"))
    train, test = [], []
    for cls in np.unique(labels):
        idx = rng.permutation(np.flatnonzero(labels == cls))
        k = int(round(train_fraction * idx.size))
        if k == 0:
            raise ValueError(f"class {cls} has no training samples")
        train.extend(idx[:k])
        test.extend(idx[k:])
    return np.sort(np.array(train, dtype=int)), np.sort(np.array(test, dtype=int))


def _inputs(ratios) -> np.ndarray:
    # ratios are multiplicative; the log makes increase and decrease symmetric
    return np.log(np.asarray(ratios, dtype=float))


@dataclass
class DiagModel:
    kind: str
    model: object
    classes: np.ndarray
    mean: np.ndarray
    std: np.ndarray

    def predict(self, ratios) -> np.ndarray:
        x = (_inputs(np.atleast_2d(ratios)) - self.mean) / self.std
        if self.kind == "mlp100":
            return self.classes[np.argmax(nn.predict(self.model, x), axis=1)]
        if self.kind == "svm_ovr":
            return self.model.predict(x)
        return classifiers.knn_predict_batch(self.model, x)


@dataclass
class TrainSettings:
    epochs: int = 150
    batch_size: int = 64
    learning_rate: float = 1e-3
    svm_c: float = 10.0
    knn_k: int = 5


def train_diag(dataset: DiagDataset, classifier: str = "mlp100", seed: int = 0,
               train_fraction: float = 0.5, settings: TrainSettings | None = None):
    """Return ``(model, train_idx, test_idx)``."""
    if classifier not in CLASSIFIERS:
        raise ValueError(f"classifier must be one of {CLASSIFIERS}")
    classes = np.unique(dataset.labels)
    if classes.size < 2:
        raise ValueError("need at least two classes")
    settings = settings or TrainSettings()
    train_idx, test_idx = stratified_split(dataset.labels, train_fraction, seed)
    x = _inputs(dataset.ratios[train_idx])
    y = dataset.labels[train_idx]
    mean, std = x.mean(axis=0), x.std(axis=0)
    std[std == 0] = 1.0
    x = (x - mean) / std
    if classifier == "mlp100":
        model = nn.MlpModel.build([x.shape[1], 100, classes.size], ["tanh", "softmax"],
                                  seed=child_seed(seed, "diag/mlp/init"))
        onehot = (y[:, None] == classes[None, :]).astype(float)
        cfg = nn.TrainConfig(optimizer="adam", learning_rate=settings.learning_rate,
                             batch_size=settings.batch_size, epochs=settings.epochs,
                             loss="cross_entropy", seed=child_seed(seed, "diag/mlp/train"))
        nn.train(model, nn.LabeledDataset(x, onehot), cfg)
    elif classifier == "svm_ovr":
        model = classifiers.svm_train_ovr(x, y, c=settings.svm_c, seed=seed)
    else:
        model = classifiers.KnnModel(x, y, min(settings.knn_k, x.shape[0]))
    return DiagModel(classifier, model, classes, mean, std), train_idx, test_idx


@dataclass
class DiagReport:
    classes: np.ndarray
    confusion: np.ndarray  # rows true, columns predicted
    accuracy: float
    per_class: np.ndarray
    detection_accuracy: float  # class 1 against every other class merged; nan without class 1
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"classes": [int(c) for c in self.classes], "confusion": self.confusion.tolist(),
                "accuracy": self.accuracy, "per_class": self.per_class.tolist(),
                "detection_accuracy": self.detection_accuracy, **self.details}


def report_from_predictions(truth, predicted, classes) -> DiagReport:
    truth, predicted = np.asarray(truth), np.asarray(predicted)
    classes = np.asarray(classes)
    pos = {int(c): i for i, c in enumerate(classes)}
    cm = np.zeros((classes.size, classes.size), dtype=int)
    for t, p in zip(truth, predicted):
        cm[pos[int(t)], pos[int(p)]] += 1
    rows = cm.sum(axis=1)
    per_class = np.divide(np.diag(cm), rows, out=np.full(classes.size, np.nan), where=rows > 0)
    acc = float(np.trace(cm) / cm.sum()) if cm.sum() else math.nan
    if AnomalyClass.UNPERTURBED in pos:
        detection = float(np.mean((truth == AnomalyClass.UNPERTURBED)
                                  == (predicted == AnomalyClass.UNPERTURBED)))
    else:
        detection = math.nan
    return DiagReport(classes, cm, acc, per_class, detection)


def evaluate_diag(model: DiagModel, dataset: DiagDataset, test_idx) -> DiagReport:
    return report_from_predictions(dataset.labels[test_idx],
                                   model.predict(dataset.ratios[test_idx]), model.classes)


def class_subset_experiment(dataset: DiagDataset, classes, classifier: str = "mlp100",
                            seed: int = 0, train_fraction: float = 0.5,
                            settings: TrainSettings | None = None) -> DiagReport:
    classes = sorted(set(int(c) for c in classes))
    if len(classes) < 2 or any(c not in set(AnomalyClass) for c in classes):
        raise ValueError("classes must be >= 2 distinct members of 1..4")
    sub = dataset.subset(classes)
    model, _, test_idx = train_diag(sub, classifier, seed, train_fraction, settings)
    return evaluate_diag(model, sub, test_idx)


def write_confusion_csv(path, report: DiagReport) -> None:
    header = ["true\\predicted"] + [str(int(c)) for c in report.classes]
    rows = [[int(c), *row] for c, row in zip(report.classes, report.confusion.tolist())]
    textio.write_csv(path, header, rows)


def table_row(load_mode: str, full: DiagReport, three: DiagReport | None) -> dict:
    """One load-mode row of the accuracy summary."""
    return {"load_mode": load_mode, "fault_detection": full.detection_accuracy,
            "all_4_classes": full.accuracy,
            "3_classes": three.accuracy if three is not None else math.nan}

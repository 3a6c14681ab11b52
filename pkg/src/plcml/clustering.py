"""Unsupervised tools: K-means, self-organising maps, agglomerative
clustering and PCA, plus the cluster-quality helpers used to pick a map size.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import stats
from scipy.spatial.distance import cdist

from . import textio


@dataclass
class KMeansModel:
    centroids: np.ndarray
    inertia: float
    inertia_history: list = field(default_factory=list)


def _kmeanspp(data, k, rng):
    n = data.shape[0]
    centres = [data[rng.integers(n)]]
    d2 = np.sum((data - centres[0]) ** 2, axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total <= 0:
            idx = rng.integers(n)
        else:
            idx = rng.choice(n, p=d2 / total)
        centres.append(data[idx])
        d2 = np.minimum(d2, np.sum((data - data[idx]) ** 2, axis=1))
    return np.array(centres, dtype=float)


def kmeans(data, k: int, seed: int = 0, max_iters: int = 300):
    """Lloyd iterations from k-means++ seeds; returns ``(model, assignments)``.

    An emptied cluster is re-seeded at the point farthest from its centroid.
    """
    data = np.atleast_2d(np.asarray(data, dtype=float))
    n = data.shape[0]
    if not 1 <= k <= n:
        raise ValueError("K must lie in [1, rows]")
    rng = np.random.default_rng(seed)
    centroids = _kmeanspp(data, k, rng)
    assign = None
    history = []
    for _ in range(max_iters):
        d2 = cdist(data, centroids, "sqeuclidean")
        new = np.argmin(d2, axis=1)
        history.append(float(d2[np.arange(n), new].sum()))
        if assign is not None and np.array_equal(new, assign):
            break
        assign = new
        for j in range(k):
            members = data[assign == j]
            if members.size:
                centroids[j] = members.mean(axis=0)
            else:
                far = int(np.argmax(d2[np.arange(n), assign]))
                centroids[j] = data[far]
                assign[far] = j
    d2 = cdist(data, centroids, "sqeuclidean")
    assign = np.argmin(d2, axis=1)
    inertia = float(d2[np.arange(n), assign].sum())
    return KMeansModel(centroids, inertia, history), assign


@dataclass
class SomGrid:
    width: int
    height: int
    prototypes: np.ndarray  # (width*height, D); unit (i, j) is row i*width + j
    trained_epochs: int = 0

    @property
    def coords(self) -> np.ndarray:
        i, j = np.divmod(np.arange(self.width * self.height), self.width)
        return np.column_stack([i, j]).astype(float)


def som_train(data, width: int, height: int, epochs: int = 50, seed: int = 0,
              alpha=(0.5, 0.01), radius=None) -> SomGrid:
    """Online SOM with a Gaussian neighbourhood.

    Learning rate and neighbourhood radius fall linearly over all updates,
    from ``alpha[0]`` to ``alpha[1]`` and from max(width, height)/2 to 0.5.
    """
    data = np.atleast_2d(np.asarray(data, dtype=float))
    if width < 1 or height < 1:
        raise ValueError("grid must have at least one unit")
    rng = np.random.default_rng(seed)
    n = data.shape[0]
    units = width * height
    init = rng.choice(n, size=units, replace=units > n)
    grid = SomGrid(width, height, data[init].copy())
    r0, r1 = radius if radius is not None else (max(width, height) / 2.0, 0.5)
    coords = grid.coords
    total = max(epochs * n - 1, 1)
    step = 0
    w = grid.prototypes
    for _ in range(epochs):
        for idx in rng.permutation(n):
            frac = step / total
            a = alpha[0] + (alpha[1] - alpha[0]) * frac
            r = r0 + (r1 - r0) * frac
            x = data[idx]
            bmu = int(np.argmin(np.sum((w - x) ** 2, axis=1)))
            g2 = np.sum((coords - coords[bmu]) ** 2, axis=1)
            h = np.exp(-g2 / (2.0 * r * r))
            w += (a * h)[:, None] * (x - w)
            step += 1
    grid.trained_epochs = epochs
    return grid


def som_assign(grid: SomGrid, data) -> np.ndarray:
    """Index of the nearest prototype; ties go to the lowest unit index."""
    data = np.atleast_2d(np.asarray(data, dtype=float))
    return np.argmin(cdist(data, grid.prototypes, "sqeuclidean"), axis=1)


@dataclass
class Dendrogram:
    merges: list  # (cluster_a, cluster_b, distance); new cluster gets id n_leaves + step
    n_leaves: int

    def cut(self, k: int) -> np.ndarray:
        """Flat labels 0..k-1 after undoing the last k-1 merges."""
        if not 1 <= k <= self.n_leaves:
            raise ValueError("k must lie in [1, n_leaves]")
        parent = list(range(self.n_leaves + len(self.merges)))

        def find(a):
            while parent[a] != a:
                parent[a] = parent[parent[a]]
                a = parent[a]
            return a

        for step, (a, b, _) in enumerate(self.merges[: self.n_leaves - k]):
            new = self.n_leaves + step
            parent[find(a)] = new
            parent[find(b)] = new
        roots = [find(i) for i in range(self.n_leaves)]
        remap = {}
        return np.array([remap.setdefault(r, len(remap)) for r in roots])


def hc_agglomerative(data, linkage: str = "average") -> Dendrogram:
    """Bottom-up merging of the closest pair under single/complete/average linkage."""
    data = np.atleast_2d(np.asarray(data, dtype=float))
    n = data.shape[0]
    if n < 2:
        raise ValueError("need at least two rows")
    if linkage not in ("single", "complete", "average"):
        raise ValueError(f"unknown linkage {linkage!r}")
    d = cdist(data, data)
    np.fill_diagonal(d, np.inf)
    active = np.ones(n, dtype=bool)
    ids = list(range(n))
    sizes = np.ones(n)
    merges = []
    for step in range(n - 1):
        masked = np.where(active[:, None] & active[None, :], d, np.inf)
        flat = int(np.argmin(masked))
        i, j = divmod(flat, n)
        if i > j:
            i, j = j, i
        dist = float(d[i, j])
        merges.append((ids[i], ids[j], dist))
        if linkage == "single":
            row = np.minimum(d[i], d[j])
        elif linkage == "complete":
            row = np.maximum(d[i], d[j])
        else:
            row = (sizes[i] * d[i] + sizes[j] * d[j]) / (sizes[i] + sizes[j])
        d[i, :] = row
        d[:, i] = row
        d[i, i] = np.inf
        active[j] = False
        d[j, :] = np.inf
        d[:, j] = np.inf
        sizes[i] += sizes[j]
        ids[i] = n + step
    return Dendrogram(merges, n)


@dataclass
class PcaModel:
    mean: np.ndarray
    components: np.ndarray  # (D, M)
    eigenvalues: np.ndarray  # (M,), descending
    all_eigenvalues: np.ndarray = None


def pca_fit(data, m: int) -> PcaModel:
    data = np.atleast_2d(np.asarray(data, dtype=float))
    d = data.shape[1]
    if not 1 <= m <= d:
        raise ValueError("M must lie in [1, D]")
    mean = data.mean(axis=0)
    cov = np.cov(data - mean, rowvar=False, ddof=1).reshape(d, d)
    vals, vecs = np.linalg.eigh(cov)
    order = np.argsort(vals)[::-1]
    vals = np.clip(vals[order], 0.0, None)
    vecs = vecs[:, order]
    return PcaModel(mean, vecs[:, :m].copy(), vals[:m].copy(), vals)


def pca_transform(model: PcaModel, data) -> np.ndarray:
    return (np.atleast_2d(np.asarray(data, dtype=float)) - model.mean) @ model.components


def pca_reconstruct(model: PcaModel, scores) -> np.ndarray:
    return model.mean + np.atleast_2d(scores) @ model.components.T


def purity(assignments, labels) -> float:
    """Fraction of samples carrying the majority true label of their cluster."""
    assignments = np.asarray(assignments)
    labels = np.asarray(labels)
    hits = 0
    for c in np.unique(assignments):
        _, counts = np.unique(labels[assignments == c], return_counts=True)
        hits += counts.max()
    return hits / labels.size


def davies_bouldin(data, assignments) -> float:
    data = np.atleast_2d(np.asarray(data, dtype=float))
    clusters = np.unique(assignments)
    if clusters.size < 2:
        return np.inf
    centres = np.array([data[assignments == c].mean(axis=0) for c in clusters])
    scatter = np.array([
        np.mean(np.linalg.norm(data[assignments == c] - centres[k], axis=1))
        for k, c in enumerate(clusters)
    ])
    sep = cdist(centres, centres)
    np.fill_diagonal(sep, np.inf)
    ratio = (scatter[:, None] + scatter[None, :]) / sep
    return float(np.mean(ratio.max(axis=1)))


SOM_SCAN_SIZES = ((1, 2), (1, 3), (2, 2), (2, 3), (3, 3))


def som_scan(data, sizes=SOM_SCAN_SIZES, epochs: int = 50, seed: int = 0):
    """Train one SOM per (height, width) and keep the lowest Davies-Bouldin index.

    Returns ``(best_grid, best_assignments, table)`` where ``table`` lists
    ``(height, width, n_used_units, db_index)`` for every size tried.
    """
    best = None
    table = []
    for h, w in sizes:
        grid = som_train(data, w, h, epochs, seed)
        assign = som_assign(grid, data)
        db = davies_bouldin(data, assign)
        table.append((h, w, int(np.unique(assign).size), db))
        if best is None or db < best[2]:
            best = (grid, assign, db)
    return best[0], best[1], table


def fit_distributions(values) -> dict:
    """Moment fits of a Gaussian and (for positive data) a log-normal, with KS statistics."""
    v = np.asarray(values, dtype=float)
    out = {}
    mu, sd = float(v.mean()), float(v.std(ddof=1)) if v.size > 1 else 0.0
    out["normal"] = {"mu": mu, "sigma": sd,
                     "ks": float(stats.kstest(v, "norm", args=(mu, sd)).statistic) if sd > 0 else 1.0}
    if np.all(v > 0):
        lv = np.log(v)
        lmu, lsd = float(lv.mean()), float(lv.std(ddof=1)) if v.size > 1 else 0.0
        out["lognormal"] = {
            "mu": lmu, "sigma": lsd,
            "ks": float(stats.kstest(lv, "norm", args=(lmu, lsd)).statistic) if lsd > 0 else 1.0,
        }
    return out


def cluster_summary(values, assignments, names):
    """Rows of (cluster_id, count, per-feature means...)."""
    values = np.atleast_2d(values)
    rows = []
    for c in np.unique(assignments):
        sel = values[assignments == c]
        rows.append([int(c), int(sel.shape[0])] + sel.mean(axis=0).tolist())
    return ["cluster_id", "count"] + [f"mean_{n}" for n in names], rows


def write_assignments(path, assignments) -> None:
    textio.write_csv(path, ["slot_index", "cluster_id"],
                     [(i, int(c)) for i, c in enumerate(assignments)])

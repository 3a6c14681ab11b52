"""Capacity-constrained relay routing over power-line deployments.

Links between any two nodes exist through the cable tree; a link "works"
when its Shannon capacity reaches a threshold.  Routers are the intermediate
relays of a path.
"""

from __future__ import annotations

import itertools
import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from . import nn, textio
from .medium.capacity import NOISE_FLOOR_DBM_HZ, dbm_hz_to_w_hz
from .medium.line import FrequencyGrid, NetworkSolver
from .medium.topology import Topology, topo_random
from .seeding import child_seed

DEFAULT_GRID = FrequencyGrid(2e6, 86e6, 64)
DEFAULT_TX_PSD_DBM_HZ = -80.0
DEFAULT_MIN_CAPACITY = 100e6
N_SECTORS = 8
DIRECT = N_SECTORS  # next-hop class meaning "go straight to the destination"


@dataclass
class Deployment:
    topology: Topology
    area_side: float  # m

    @property
    def density(self) -> float:
        """Nodes per km^2."""
        return self.topology.n_nodes / (self.area_side / 1000.0) ** 2


def random_deployment(n_nodes: int, area_side: float, seed: int = 0, rng=None) -> Deployment:
    return Deployment(topo_random(n_nodes, area_side, seed=seed, rng=rng), area_side)


@dataclass
class LinkTable:
    capacity: np.ndarray  # (N, N) bit/s, zero diagonal
    backbone_distance: np.ndarray  # (N, N) m

    @property
    def n_nodes(self) -> int:
        return self.capacity.shape[0]


def build_link_table(deployment: Deployment, grid: FrequencyGrid = DEFAULT_GRID,
                     noise_psd_dbm_hz: float = NOISE_FLOOR_DBM_HZ,
                     tx_psd_dbm_hz: float = DEFAULT_TX_PSD_DBM_HZ) -> LinkTable:
    topo = deployment.topology
    solver = NetworkSolver(topo, grid.freqs)
    snr0 = dbm_hz_to_w_hz(tx_psd_dbm_hz) / dbm_hz_to_w_hz(noise_psd_dbm_hz)
    n = topo.n_nodes
    cap = np.zeros((n, n))
    for tx in range(n):
        h2 = np.abs(solver.transfer_from(tx)) ** 2
        cap[tx] = grid.spacing * np.sum(np.log2(1.0 + snr0 * h2), axis=1)
    # H(i->j) and H(j->i) differ by the ratio of node admittances, not by
    # reciprocity of the voltage ratio; a link is used in both directions, so
    # keep the weaker direction
    cap = np.minimum(cap, cap.T)
    np.fill_diagonal(cap, 0.0)
    return LinkTable(cap, topo.tree_distances())


# ---------------------------------------------------------------- optimum

@dataclass(frozen=True)
class RoutingProblem:
    source: int
    dest: int
    min_capacity: float = DEFAULT_MIN_CAPACITY

    def __post_init__(self):
        if self.source == self.dest:
            raise ValueError("source and destination must differ")


@dataclass
class RoutingSolution:
    path: list
    bottleneck_capacity: float
    feasible: bool = True
    reason: str = ""

    @property
    def n_routers(self) -> int:
        return len(self.path) - 2 if self.feasible else -1


def infeasible(reason: str) -> RoutingSolution:
    return RoutingSolution([], 0.0, False, reason)


def _hops_to(adj: np.ndarray, dest: int) -> np.ndarray:
    n = adj.shape[0]
    dist = np.full(n, -1)
    dist[dest] = 0
    queue = deque([dest])
    while queue:
        u = queue.popleft()
        for v in np.flatnonzero(adj[u]):
            if dist[v] < 0:
                dist[v] = dist[u] + 1
                queue.append(v)
    return dist


def path_bottleneck(table: LinkTable, path) -> float:
    return float(min(table.capacity[a, b] for a, b in zip(path[:-1], path[1:])))


def optimal_route(table: LinkTable, problem: RoutingProblem) -> RoutingSolution:
    """Fewest routers, then widest bottleneck, then lexicographically smallest path."""
    s, d = problem.source, problem.dest
    n = table.n_nodes
    if not (0 <= s < n and 0 <= d < n):
        raise ValueError("problem references unknown nodes")
    cap = table.capacity
    adj = cap >= problem.min_capacity
    np.fill_diagonal(adj, False)
    dist = _hops_to(adj, d)
    if dist[s] < 0:
        return infeasible("no path meets the capacity threshold")
    hops = int(dist[s])
    # layers of the shortest-path DAG: step k holds nodes exactly hops-k from d
    layer = [np.flatnonzero(dist == hops - k) for k in range(hops + 1)]
    # widest bottleneck from every DAG node to d
    width = np.full(n, -np.inf)
    width[d] = np.inf
    for k in range(hops - 1, -1, -1):
        nxt = layer[k + 1]
        for u in layer[k]:
            ok = nxt[adj[u, nxt]]
            if ok.size:
                width[u] = np.max(np.minimum(cap[u, ok], width[ok]))
    best = width[s]
    # greedy smallest id among successors that keep the optimal bottleneck
    path = [s]
    u = s
    for k in range(hops):
        nxt = layer[k + 1]
        ok = nxt[adj[u, nxt] & (cap[u, nxt] >= best) & (width[nxt] >= best)]
        u = int(ok.min())
        path.append(u)
    return RoutingSolution(path, float(best))


def exhaustive_route(table: LinkTable, problem: RoutingProblem) -> RoutingSolution:
    """Enumerate every simple path; only meant for small test instances."""
    s, d = problem.source, problem.dest
    n = table.n_nodes
    others = [v for v in range(n) if v not in (s, d)]
    best_key, best_path = None, None
    for r in range(len(others) + 1):
        for mid in itertools.permutations(others, r):
            path = [s, *mid, d]
            caps = [table.capacity[a, b] for a, b in zip(path[:-1], path[1:])]
            if min(caps) < problem.min_capacity:
                continue
            key = (r, -min(caps), path)
            if best_key is None or key < best_key:
                best_key, best_path = key, path
        if best_key is not None:
            break
    if best_path is None:
        return infeasible("no path meets the capacity threshold")
    return RoutingSolution(best_path, -best_key[1])


def validate_path(table: LinkTable, problem: RoutingProblem, path) -> bool:
    if len(path) < 2 or path[0] != problem.source or path[-1] != problem.dest:
        return False
    if len(set(path)) != len(path):
        return False
    return all(table.capacity[a, b] >= problem.min_capacity for a, b in zip(path[:-1], path[1:]))


# ---------------------------------------------------------------- features

BEARING_FRACTIONS = (0.25, 1.0 / 3.0, 0.5, 2.0 / 3.0, 0.75)
MAX_ROUTERS = 7
BASE_FEATURES = ("cur_x", "cur_y", "dest_x", "dest_y", "n_nodes", "max_backbone", "min_capacity",
                 "area_side", "density", "euclid", "backbone", "tree_hops", "bridged_taps",
                 "tap_length") + tuple(
    f"bearing_{k}_{part}" for k in range(len(BEARING_FRACTIONS)) for part in ("cos", "sin"))
STEP_FEATURES = BASE_FEATURES + ("remaining",)


@dataclass
class RouteContext:
    """Per-deployment data shared by every problem on it."""

    deployment: Deployment
    table: LinkTable
    max_backbone: float = field(init=False)

    def __post_init__(self):
        self.max_backbone = float(self.table.backbone_distance.max())
        topo = self.deployment.topology
        self._pos = topo.positions()
        self._degree = topo.degree()
        self._hanging = self._branch_lengths(topo)

    @staticmethod
    def _branch_lengths(topo):
        """Total cable (m) behind every directed edge u->v, seen from u."""
        adj = topo.adjacency()
        total = sum(e.length for e in topo.edges)
        below = {}
        order, parent = [0], {0: None}
        for u in order:
            for v, _ in adj[u]:
                if v not in parent:
                    parent[v] = u
                    order.append(v)
        sub = {}
        for v in reversed(order):
            sub[v] = sum(sub[w] + topo.edges[k].length for w, k in adj[v] if parent.get(w) == v)
        for v in order[1:]:
            u = parent[v]
            k = next(k for w, k in adj[v] if w == u)
            below[(u, v)] = sub[v] + topo.edges[k].length
            below[(v, u)] = total - sub[v]
        return below

    def _taps(self, path):
        """Side branches at interior path nodes and the cable length they carry."""
        adj = self.deployment.topology.adjacency()
        count, length = 0, 0.0
        for i in range(1, len(path) - 1):
            u = path[i]
            for w, _ in adj[u]:
                if w != path[i - 1] and w != path[i + 1]:
                    count += 1
                    length += self._hanging[(u, w)]
        return count, length

    def _point_along(self, path, dist):
        for a, b in zip(path[:-1], path[1:]):
            length = self.table.backbone_distance[a, b]
            if dist <= length:
                t = dist / length if length > 0 else 0.0
                return self._pos[a] + t * (self._pos[b] - self._pos[a])
            dist -= length
        return self._pos[path[-1]]

    def features(self, current: int, dest: int, min_capacity: float, remaining=None) -> np.ndarray:
        side = self.deployment.area_side
        c, d = self._pos[current], self._pos[dest]
        path = self.deployment.topology.path(current, dest)
        backbone = self.table.backbone_distance[current, dest]
        heading = math.atan2(d[1] - c[1], d[0] - c[0])
        taps, tap_length = self._taps(path)
        bearings = []
        for frac in BEARING_FRACTIONS:
            p = self._point_along(path, frac * backbone)
            ang = math.atan2(p[1] - c[1], p[0] - c[0]) - heading
            bearings += [math.cos(ang), math.sin(ang)]
        row = [c[0] / side, c[1] / side, d[0] / side, d[1] / side,
               self.table.n_nodes / 100.0, self.max_backbone / side, min_capacity / 1e8,
               side / 1000.0, self.deployment.density / 100.0,
               float(np.linalg.norm(d - c)) / side, backbone / side, (len(path) - 1) / 10.0,
               taps / 10.0, tap_length / side,
               *bearings]
        if remaining is not None:
            row.append(float(remaining))
        return np.array(row)

    def sector(self, current: int, target: int, dest: int) -> int:
        """Angular sector of ``target`` seen from ``current``; sector 0 is centred on the
        destination direction and sectors count counter-clockwise."""
        if target == dest:
            return DIRECT
        c = self._pos[current]
        v, d = self._pos[target], self._pos[dest]
        ang = math.atan2(v[1] - c[1], v[0] - c[0]) - math.atan2(d[1] - c[1], d[0] - c[0])
        return int(((ang + math.pi / N_SECTORS) % (2 * math.pi)) // (2 * math.pi / N_SECTORS))


@dataclass
class RouteRecord:
    topology_index: int
    problem: RoutingProblem
    features: np.ndarray
    solution: RoutingSolution


@dataclass
class RouteDataset:
    contexts: list
    records: list
    step_inputs: np.ndarray
    step_labels: np.ndarray
    skipped: int = 0

    def count_dataset(self, records=None) -> nn.LabeledDataset:
        records = self.records if records is None else records
        x = np.array([r.features for r in records])
        y = np.eye(MAX_ROUTERS + 1)[[min(r.solution.n_routers, MAX_ROUTERS) for r in records]]
        return nn.LabeledDataset(x, y)

    def step_dataset(self) -> nn.LabeledDataset:
        return nn.LabeledDataset(self.step_inputs, np.eye(N_SECTORS + 1)[self.step_labels])

    def subset(self, n_records: int) -> "RouteDataset":
        """First ``n_records`` problems and their step samples."""
        keep = self.records[:n_records]
        steps = sum(len(r.solution.path) - 1 for r in keep)
        return RouteDataset(self.contexts, keep, self.step_inputs[:steps], self.step_labels[:steps],
                            self.skipped)


def route_dataset(n_topologies: int, node_range=(100, 175), seed: int = 0,
                  problems_per_topology: int = 50, area_range=(800.0, 1200.0),
                  min_capacity: float = DEFAULT_MIN_CAPACITY, grid: FrequencyGrid = DEFAULT_GRID,
                  tx_psd_dbm_hz: float = DEFAULT_TX_PSD_DBM_HZ,
                  noise_psd_dbm_hz: float = NOISE_FLOOR_DBM_HZ) -> RouteDataset:
    lo, hi = node_range
    if not 2 <= lo <= hi:
        raise ValueError("node range must satisfy 2 <= lo <= hi")
    contexts, records, steps_x, steps_y = [], [], [], []
    skipped = 0
    for t in range(n_topologies):
        rng = np.random.default_rng(child_seed(seed, f"route/topology/{t}"))
        n = int(rng.integers(lo, hi + 1))
        dep = random_deployment(n, float(rng.uniform(*area_range)), rng=rng)
        ctx = RouteContext(dep, build_link_table(dep, grid, noise_psd_dbm_hz, tx_psd_dbm_hz))
        contexts.append(ctx)
        for _ in range(problems_per_topology):
            s, d = (int(v) for v in rng.choice(n, size=2, replace=False))
            problem = RoutingProblem(s, d, min_capacity)
            sol = optimal_route(ctx.table, problem)
            if not sol.feasible:
                skipped += 1
                continue
            records.append(RouteRecord(t, problem, ctx.features(s, d, min_capacity), sol))
            remaining = sol.n_routers
            for c, v in zip(sol.path[:-1], sol.path[1:]):
                steps_x.append(ctx.features(c, d, min_capacity, remaining))
                steps_y.append(ctx.sector(c, v, d))
                remaining -= 1
    return RouteDataset(contexts, records, np.array(steps_x), np.array(steps_y, dtype=int), skipped)


def write_route_dataset_csv(path, dataset: RouteDataset) -> None:
    header = ["topology"] + list(BASE_FEATURES) + ["label_n_routers", "label_path"]
    rows = [[r.topology_index, *r.features, r.solution.n_routers,
             "-".join(str(v) for v in r.solution.path)] for r in dataset.records]
    textio.write_csv(path, header, rows)


# ---------------------------------------------------------------- NN router

@dataclass
class RouterConfig:
    hidden: tuple = (64, 64)
    dropout_rate: float = 0.5
    epochs: int = 60
    batch_size: int = 64
    learning_rate: float = 2e-3
    seed: int = 0


@dataclass
class NnRouter:
    count_model: nn.MlpModel
    step_model: nn.MlpModel
    count_scale: tuple  # (mean, std) for input standardisation
    step_scale: tuple

    def predict_routers(self, features) -> int:
        x = (np.atleast_2d(features) - self.count_scale[0]) / self.count_scale[1]
        return int(np.argmax(nn.predict(self.count_model, x)[0]))

    def predict_sector(self, features) -> int:
        x = (np.atleast_2d(features) - self.step_scale[0]) / self.step_scale[1]
        return int(np.argmax(nn.predict(self.step_model, x)[0]))


def _standardise(x):
    mean = x.mean(axis=0)
    std = x.std(axis=0)
    std[std == 0] = 1.0
    return mean, std


def _fit(data: nn.LabeledDataset, config: RouterConfig, label: str):
    mean, std = _standardise(data.inputs)
    sizes = [data.inputs.shape[1], *config.hidden, data.targets.shape[1]]
    model = nn.MlpModel.build(sizes, ["relu"] * len(config.hidden) + ["softmax"],
                              seed=child_seed(config.seed, f"router/{label}/init"))
    cfg = nn.TrainConfig(optimizer="adam", learning_rate=config.learning_rate,
                         batch_size=config.batch_size, epochs=config.epochs,
                         dropout_rate=config.dropout_rate, loss="cross_entropy",
                         seed=child_seed(config.seed, f"router/{label}/train"))
    nn.train(model, nn.LabeledDataset((data.inputs - mean) / std, data.targets), cfg)
    return model, (mean, std)


def nn_route_train(dataset: RouteDataset, config: RouterConfig | None = None) -> NnRouter:
    config = config or RouterConfig()
    count_model, count_scale = _fit(dataset.count_dataset(), config, "count")
    step_model, step_scale = _fit(dataset.step_dataset(), config, "step")
    return NnRouter(count_model, step_model, count_scale, step_scale)


def _widest_within(table: LinkTable, dest: int, min_capacity: float, max_hops: int) -> np.ndarray:
    """W[k, v]: best bottleneck from v to dest using at most k hops (-inf if none)."""
    cap = np.where(table.capacity >= min_capacity, table.capacity, -np.inf)
    np.fill_diagonal(cap, -np.inf)
    n = table.n_nodes
    w = np.full((max_hops + 1, n), -np.inf)
    w[0, dest] = np.inf
    for k in range(1, max_hops + 1):
        via = np.max(np.minimum(cap, w[k - 1][None, :]), axis=1)
        w[k] = np.maximum(w[k - 1], via)
        w[k, dest] = np.inf
    return w


def nn_route_predict(router, context: RouteContext, problem: RoutingProblem,
                     hop_budget: int | None = None) -> RoutingSolution:
    """Follow the predicted router count and sectors to build a path.

    Each predicted sector is resolved, from the link table, to the feasible
    node in that sector that can still reach the destination within the
    remaining predicted routers with the widest bottleneck (smallest id on
    ties).  The result is validated and never repaired.
    """
    s, d = problem.source, problem.dest
    thr = problem.min_capacity
    table = context.table
    # a path cannot use more routers than there are other nodes
    remaining = min(router.predict_routers(context.features(s, d, thr)), table.n_nodes - 2)
    budget = hop_budget if hop_budget is not None else 2 * (remaining + 1) + 2
    widest = _widest_within(table, d, thr, max(remaining, 1))
    path = [s]
    current = s
    while current != d:
        if len(path) - 1 >= budget:
            return RoutingSolution(path, 0.0, False, "hop budget exceeded")
        # once the predicted routers are used up the next hop is the destination
        sector = DIRECT if remaining <= 0 else router.predict_sector(
            context.features(current, d, thr, remaining))
        if sector == DIRECT:
            nxt = d
        else:
            # after this hop, remaining - 1 routers means `remaining` hops are left
            k = max(remaining, 1)
            best, nxt = -np.inf, None
            for v in range(table.n_nodes):
                if v in path or v == d or table.capacity[current, v] < thr:
                    continue
                if context.sector(current, v, d) != sector:
                    continue
                score = min(table.capacity[current, v], widest[min(k, widest.shape[0] - 1), v])
                if score > best:
                    best, nxt = score, v
            if nxt is None or best == -np.inf:
                return RoutingSolution(path, 0.0, False, "no node can serve the predicted sector")
        path.append(nxt)
        current = nxt
        remaining -= 1
    if not validate_path(table, problem, path):
        return RoutingSolution(path, 0.0, False, "predicted path violates the capacity threshold")
    return RoutingSolution(path, path_bottleneck(table, path))


def path_capacity(table: LinkTable, problem: RoutingProblem, path, router_budget: int) -> float:
    """Bottleneck of a working path using at most ``router_budget`` routers, else 0."""
    if not validate_path(table, problem, path) or len(path) - 2 > router_budget:
        return 0.0
    return path_bottleneck(table, path)


@dataclass
class OracleRouter:
    """Returns the optimal path; used to check the evaluation plumbing."""

    def route(self, context, problem):
        return optimal_route(context.table, problem)


@dataclass
class DirectRouter:
    def route(self, context, problem):
        return RoutingSolution([problem.source, problem.dest],
                               float(context.table.capacity[problem.source, problem.dest]))


def _route_with(model, context, problem, hop_budget=None):
    if isinstance(model, NnRouter):
        return nn_route_predict(model, context, problem, hop_budget)
    return model.route(context, problem)


def evaluate_match(model, contexts, problems_per_topology: int = 50, seed: int = 0,
                   min_capacity: float = DEFAULT_MIN_CAPACITY):
    """Fraction of feasible problems whose predicted path equals the optimum exactly."""
    hits = total = 0
    for t, ctx in enumerate(contexts):
        rng = np.random.default_rng(child_seed(seed, f"route/eval/{t}"))
        n = ctx.table.n_nodes
        for _ in range(problems_per_topology):
            s, d = (int(v) for v in rng.choice(n, size=2, replace=False))
            problem = RoutingProblem(s, d, min_capacity)
            opt = optimal_route(ctx.table, problem)
            if not opt.feasible:
                continue
            pred = _route_with(model, ctx, problem, 2 * (opt.n_routers + 1) + 2)
            total += 1
            hits += int(pred.feasible and pred.path == opt.path)
    return hits / total if total else math.nan, total


def make_contexts(n_topologies: int, node_range, seed: int, area_range=(800.0, 1200.0),
                  **link_kw) -> list:
    out = []
    for t in range(n_topologies):
        rng = np.random.default_rng(child_seed(seed, f"route/topology/{t}"))
        n = int(rng.integers(node_range[0], node_range[1] + 1))
        dep = random_deployment(n, float(rng.uniform(*area_range)), rng=rng)
        out.append(RouteContext(dep, build_link_table(dep, **link_kw)))
    return out


# ---------------------------------------------------------------- capacity surface

@dataclass
class CapacitySurface:
    density_edges: np.ndarray
    distance_edges: np.ndarray
    mean: np.ndarray  # (n_density, n_distance); nan where unsupported
    std: np.ndarray
    count: np.ndarray
    min_count: int = 3

    def _cell(self, edges, value):
        return int(np.clip(np.searchsorted(edges, value, side="right") - 1, 0, len(edges) - 2))

    def query(self, density: float, distance: float):
        """Return ``(capacity, extrapolated)``.

        Points outside the sampled box or in a sparse cell are answered from the
        nearest supported cell and flagged.
        """
        i = self._cell(self.density_edges, density)
        j = self._cell(self.distance_edges, distance)
        inside = (self.density_edges[0] <= density <= self.density_edges[-1]
                  and self.distance_edges[0] <= distance <= self.distance_edges[-1])
        if inside and self.count[i, j] >= self.min_count:
            return float(self.mean[i, j]), False
        ok = np.argwhere(self.count >= self.min_count)
        if ok.size == 0:
            return math.nan, True
        k = np.argmin((ok[:, 0] - i) ** 2 + (ok[:, 1] - j) ** 2)
        return float(self.mean[tuple(ok[k])]), True

    def rows(self):
        out = []
        for i in range(len(self.density_edges) - 1):
            for j in range(len(self.distance_edges) - 1):
                out.append([0.5 * (self.density_edges[i] + self.density_edges[i + 1]),
                            0.5 * (self.distance_edges[j] + self.distance_edges[j + 1]),
                            self.mean[i, j], self.std[i, j], int(self.count[i, j]),
                            int(self.count[i, j] < self.min_count)])
        return ["density_km2", "distance_m", "capacity_mean", "capacity_std", "count",
                "extrapolated"], out


def capacity_regression(samples, density_bins: int = 6, distance_bins: int = 8,
                        min_count: int = 3, density_edges=None, distance_edges=None) -> CapacitySurface:
    """Local-mean surface over a (density, distance) grid from (density, distance, capacity) rows."""
    arr = np.asarray(samples, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 3 or arr.shape[0] < 50:
        raise ValueError("need at least 50 (density, distance, capacity) samples")
    dens, dist, cap = arr.T
    de = np.asarray(density_edges) if density_edges is not None else np.linspace(dens.min(), dens.max(), density_bins + 1)
    xe = np.asarray(distance_edges) if distance_edges is not None else np.linspace(dist.min(), dist.max(), distance_bins + 1)
    shape = (len(de) - 1, len(xe) - 1)
    mean, std, count = np.full(shape, np.nan), np.full(shape, np.nan), np.zeros(shape, dtype=int)
    ii = np.clip(np.searchsorted(de, dens, side="right") - 1, 0, shape[0] - 1)
    jj = np.clip(np.searchsorted(xe, dist, side="right") - 1, 0, shape[1] - 1)
    for i in range(shape[0]):
        for j in range(shape[1]):
            sel = cap[(ii == i) & (jj == j)]
            count[i, j] = sel.size
            if sel.size:
                mean[i, j] = sel.mean()
                std[i, j] = sel.std()
    return CapacitySurface(de, xe, mean, std, count, min_count)


def capacity_samples(contexts, pairs_per_topology: int = 200, seed: int = 0) -> np.ndarray:
    rows = []
    for t, ctx in enumerate(contexts):
        rng = np.random.default_rng(child_seed(seed, f"route/capsample/{t}"))
        n = ctx.table.n_nodes
        for _ in range(pairs_per_topology):
            a, b = rng.choice(n, size=2, replace=False)
            rows.append((ctx.deployment.density, ctx.table.backbone_distance[a, b],
                         ctx.table.capacity[a, b]))
    return np.array(rows)


# ---------------------------------------------------------------- capacity gain

def eval_capacity_gain(model, contexts, problems_per_topology: int = 50, seed: int = 0,
                       min_capacity: float = DEFAULT_MIN_CAPACITY):
    """Per deployment density: (density, ML gain, optimal gain).

    Gain is the mean working capacity of the routed paths over the mean
    working capacity of the direct links, where a link or path works when
    every hop meets the threshold and it uses no more routers than the
    optimum.
    """
    by_density = {}
    for t, ctx in enumerate(contexts):
        rng = np.random.default_rng(child_seed(seed, f"route/gain/{t}"))
        n = ctx.table.n_nodes
        acc = by_density.setdefault(round(ctx.deployment.density, 6), [0.0, 0.0, 0.0])
        for _ in range(problems_per_topology):
            s, d = (int(v) for v in rng.choice(n, size=2, replace=False))
            problem = RoutingProblem(s, d, min_capacity)
            opt = optimal_route(ctx.table, problem)
            if not opt.feasible:
                continue
            pred = _route_with(model, ctx, problem, 2 * (opt.n_routers + 1) + 2)
            acc[0] += path_capacity(ctx.table, problem, [s, d], opt.n_routers)
            acc[1] += path_capacity(ctx.table, problem, pred.path, opt.n_routers) if pred.feasible else 0.0
            acc[2] += opt.bottleneck_capacity
    out = []
    for dens in sorted(by_density):
        direct, ml, best = by_density[dens]
        out.append((dens, ml / direct if direct > 0 else math.nan,
                    best / direct if direct > 0 else math.nan))
    return out

"""Tree-shaped power-line networks and the anomalies injected into them."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.sparse.csgraph import minimum_spanning_tree
from scipy.spatial.distance import cdist

from .. import textio


@dataclass(frozen=True)
class CableParams:
    """Per-unit-length line constants.

    ``r0`` and ``g0`` are quoted at 1 MHz; R grows as f**skin_exp and G as
    f**dielectric_exp.
    """

    r0: float = 1e-3  # ohm/m
    l: float = 0.5e-6  # H/m
    c: float = 50e-12  # F/m
    g0: float = 1e-9  # S/m
    skin_exp: float = 0.5
    dielectric_exp: float = 1.0

    def __post_init__(self):
        if min(self.r0, self.l, self.c, self.g0) < 0 or self.l <= 0 or self.c <= 0:
            raise ValueError("cable constants must be non-negative with L, C > 0")

    def rlgc(self, f):
        f = np.asarray(f, dtype=float)
        r = self.r0 * (f / 1e6) ** self.skin_exp
        g = self.g0 * (f / 1e6) ** self.dielectric_exp
        return r, self.l, g, self.c

    def scaled(self, rg: float = 1.0, lc: float = 1.0) -> "CableParams":
        return replace(self, r0=self.r0 * rg, g0=self.g0 * rg, l=self.l * lc, c=self.c * lc)

    def to_dict(self) -> dict:
        return {"r0": self.r0, "l": self.l, "c": self.c, "g0": self.g0,
                "skin_exp": self.skin_exp, "dielectric_exp": self.dielectric_exp}


DEFAULT_CABLE = CableParams()


@dataclass
class Node:
    id: int
    x: float = 0.0
    y: float = 0.0
    load: complex | None = 2000.0  # ohm; None is an open circuit


@dataclass
class Edge:
    a: int
    b: int
    length: float
    cable: CableParams = DEFAULT_CABLE


@dataclass
class Topology:
    nodes: list
    edges: list
    _adj: dict = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        n = len(self.nodes)
        if [node.id for node in self.nodes] != list(range(n)):
            raise ValueError("node ids must be 0..N-1 in order")
        if len(self.edges) != n - 1:
            raise ValueError("a tree on N nodes has N-1 edges")
        parent = list(range(n))

        def find(a):
            while parent[a] != a:
                parent[a] = parent[parent[a]]
                a = parent[a]
            return a

        for e in self.edges:
            if e.length < 0:
                raise ValueError("edge lengths must be non-negative")
            ra, rb = find(e.a), find(e.b)
            if ra == rb:
                raise ValueError("edges contain a cycle")
            parent[ra] = rb

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    def adjacency(self) -> dict:
        """node -> list of (neighbour, edge index)."""
        if self._adj is None:
            adj = {i: [] for i in range(self.n_nodes)}
            for k, e in enumerate(self.edges):
                adj[e.a].append((e.b, k))
                adj[e.b].append((e.a, k))
            self._adj = adj
        return self._adj

    def path(self, src: int, dst: int) -> list:
        """Node sequence along the unique tree path."""
        prev = {src: None}
        stack = [src]
        while stack:
            u = stack.pop()
            if u == dst:
                break
            for v, _ in self.adjacency()[u]:
                if v not in prev:
                    prev[v] = u
                    stack.append(v)
        out = [dst]
        while out[-1] != src:
            out.append(prev[out[-1]])
        return out[::-1]

    def tree_distances(self) -> np.ndarray:
        """All-pairs cable-path lengths (m)."""
        n = self.n_nodes
        dist = np.zeros((n, n))
        adj = self.adjacency()
        for s in range(n):
            seen = np.zeros(n, dtype=bool)
            seen[s] = True
            stack = [s]
            while stack:
                u = stack.pop()
                for v, k in adj[u]:
                    if not seen[v]:
                        seen[v] = True
                        dist[s, v] = dist[s, u] + self.edges[k].length
                        stack.append(v)
        return dist

    def positions(self) -> np.ndarray:
        return np.array([[n.x, n.y] for n in self.nodes], dtype=float)

    def degree(self) -> np.ndarray:
        return np.array([len(self.adjacency()[i]) for i in range(self.n_nodes)])

    def copy(self) -> "Topology":
        return Topology([replace(n) for n in self.nodes], [replace(e) for e in self.edges])

    def to_dict(self) -> dict:
        def load_parts(z):
            if z is None:
                return None, None
            z = complex(z)
            return z.real, z.imag

        nodes = []
        for n in self.nodes:
            re, im = load_parts(n.load)
            nodes.append({"id": n.id, "x": n.x, "y": n.y, "load_re": re, "load_im": im})
        edges = [{"a": e.a, "b": e.b, "length": e.length, "cable": e.cable.to_dict()}
                 for e in self.edges]
        return {"nodes": nodes, "edges": edges}

    @classmethod
    def from_dict(cls, d: dict) -> "Topology":
        nodes = []
        for n in d["nodes"]:
            load = None if n["load_re"] is None else complex(n["load_re"], n["load_im"] or 0.0)
            nodes.append(Node(int(n["id"]), float(n["x"]), float(n["y"]), load))
        edges = [Edge(int(e["a"]), int(e["b"]), float(e["length"]), CableParams(**e["cable"]))
                 for e in d["edges"]]
        return cls(nodes, edges)


def save_topology(topo: Topology, path) -> None:
    textio.write_json(path, topo.to_dict())


def load_topology(path) -> Topology:
    return Topology.from_dict(textio.read_json(path))


def topo_random(n_nodes: int, area_side: float, avg_edge_len: float | None = None,
                seed: int = 0, load=2000.0, cable: CableParams = DEFAULT_CABLE,
                rng: np.random.Generator | None = None) -> Topology:
    """Uniform nodes in a square joined by their Euclidean minimum spanning tree.

    With ``avg_edge_len`` the cable lengths (not the positions) are rescaled
    so their mean hits the target.  ``load`` is either one impedance for every
    node or a callable ``rng -> impedance``.
    """
    if n_nodes < 2:
        raise ValueError("need at least two nodes")
    rng = rng if rng is not None else np.random.default_rng(seed)
    pos = rng.uniform(0.0, area_side, size=(n_nodes, 2))
    mst = minimum_spanning_tree(cdist(pos, pos)).tocoo()
    pairs = sorted((min(a, b), max(a, b), w) for a, b, w in zip(mst.row, mst.col, mst.data))
    lengths = np.array([w for _, _, w in pairs])
    if avg_edge_len is not None:
        lengths = lengths * (avg_edge_len / lengths.mean())
    loads = [load(rng) if callable(load) else load for _ in range(n_nodes)]
    nodes = [Node(i, float(pos[i, 0]), float(pos[i, 1]), loads[i]) for i in range(n_nodes)]
    edges = [Edge(int(a), int(b), float(length), cable)
             for (a, b, _), length in zip(pairs, lengths)]
    return Topology(nodes, edges)


# ---------------------------------------------------------------- anomalies

@dataclass(frozen=True)
class LoadChange:
    node: int
    impedance: complex | None


@dataclass(frozen=True)
class ConcentratedFault:
    edge: int
    position: float  # metres from edge.a
    impedance: complex | None  # shunt; None (or inf) is an open circuit


@dataclass(frozen=True)
class DistributedFault:
    edge: int
    start: float  # metres from edge.a
    length: float
    factor: float  # multiplies R and G over the segment
    scale_lc: float = 1.0


def _split(topo: Topology, k: int, positions, loads):
    """Split edge ``k`` at the given distances from ``edge.a``; returns the new topology
    and the ids of the inserted nodes."""
    edge = topo.edges[k]
    if any(not 0.0 < p < edge.length for p in positions):
        raise ValueError("split positions must lie strictly inside the edge")
    nodes = [replace(n) for n in topo.nodes]
    a, b = nodes[edge.a], nodes[edge.b]
    ids = []
    for p, load in zip(positions, loads):
        t = p / edge.length
        nid = len(nodes)
        nodes.append(Node(nid, a.x + t * (b.x - a.x), a.y + t * (b.y - a.y), load))
        ids.append(nid)
    chain = [edge.a] + ids + [edge.b]
    cuts = [0.0] + list(positions) + [edge.length]
    pieces = [Edge(chain[i], chain[i + 1], cuts[i + 1] - cuts[i], edge.cable)
              for i in range(len(chain) - 1)]
    edges = [replace(e) for i, e in enumerate(topo.edges) if i != k]
    return Topology(nodes, edges + pieces), pieces


def perturb(topo: Topology, anomaly) -> Topology:
    """Return a new topology with ``anomaly`` applied; the input is untouched."""
    if isinstance(anomaly, LoadChange):
        if not 0 <= anomaly.node < topo.n_nodes:
            raise ValueError("unknown node")
        out = topo.copy()
        out.nodes[anomaly.node].load = anomaly.impedance
        return out

    if not 0 <= anomaly.edge < len(topo.edges):
        raise ValueError("unknown edge")
    edge = topo.edges[anomaly.edge]

    if isinstance(anomaly, ConcentratedFault):
        z = anomaly.impedance
        if z is not None and not math.isfinite(abs(complex(z))):
            z = None
        out, _ = _split(topo, anomaly.edge, [anomaly.position], [z])
        return out

    if isinstance(anomaly, DistributedFault):
        start, stop = anomaly.start, anomaly.start + anomaly.length
        if not (0.0 <= start < stop <= edge.length):
            raise ValueError("fault segment must lie within the edge")
        cuts = [p for p in (start, stop) if 0.0 < p < edge.length]
        out, pieces = _split(topo, anomaly.edge, cuts, [None] * len(cuts)) if cuts else (
            topo.copy(), None)
        faulty = edge.cable.scaled(anomaly.factor, anomaly.scale_lc)
        if pieces is None:
            out.edges[anomaly.edge] = replace(edge, cable=faulty)
        else:
            idx = 1 if start > 0.0 else 0
            target = pieces[idx]
            for i, e in enumerate(out.edges):
                if e is target:
                    out.edges[i] = replace(e, cable=faulty)
        return out

    raise TypeError(f"unknown anomaly {anomaly!r}")

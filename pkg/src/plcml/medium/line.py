"""Two-conductor transmission-line analysis of tree networks.

Every branch hanging off the tx->rx backbone is folded into a shunt
admittance; the voltage ratio across one line section with far-end
admittance Y is 1 / (A + B Y) where [A B; C D] is its ABCD matrix.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import textio
from .topology import CableParams, Topology

Z0_DEFAULT = 50.0


@dataclass(frozen=True)
class FrequencyGrid:
    """``n_bins`` uniformly spaced points from ``f_start`` to ``f_stop`` inclusive."""

    f_start: float
    f_stop: float
    n_bins: int

    def __post_init__(self):
        if not 0 < self.f_start < self.f_stop:
            raise ValueError("need 0 < f_start < f_stop")
        if self.n_bins < 2:
            raise ValueError("need at least two bins")

    @classmethod
    def from_spacing(cls, f_start: float, f_max: float, spacing: float) -> "FrequencyGrid":
        n = int(np.floor((f_max - f_start) / spacing + 1e-9)) + 1
        return cls(f_start, f_start + (n - 1) * spacing, n)

    @property
    def freqs(self) -> np.ndarray:
        return np.linspace(self.f_start, self.f_stop, self.n_bins)

    @property
    def spacing(self) -> float:
        return (self.f_stop - self.f_start) / (self.n_bins - 1)


@dataclass
class ChannelResponse:
    grid: FrequencyGrid
    h: np.ndarray

    def __post_init__(self):
        self.h = np.asarray(self.h, dtype=complex)
        if self.h.shape != (self.grid.n_bins,):
            raise ValueError("response length must equal n_bins")
        if not np.all(np.isfinite(self.h)):
            raise ValueError("response must be finite")

    def mag_db(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return 20.0 * np.log10(np.abs(self.h))

    def to_csv(self, path) -> None:
        db = self.mag_db()
        rows = [(f, z.real, z.imag, m) for f, z, m in zip(self.grid.freqs, self.h, db)]
        textio.write_csv(path, ["freq_hz", "re", "im", "mag_db"], rows)

    @classmethod
    def from_csv(cls, path) -> "ChannelResponse":
        _, rows = textio.read_csv(path)
        arr = np.array(rows, dtype=float)
        grid = FrequencyGrid(arr[0, 0], arr[-1, 0], arr.shape[0])
        return cls(grid, arr[:, 1] + 1j * arr[:, 2])


@dataclass
class LineState:
    y_in: np.ndarray
    rho_in: np.ndarray
    z0: float = Z0_DEFAULT


def line_constants(cable: CableParams, freqs):
    """Characteristic impedance and propagation constant per frequency."""
    r, l, g, c = cable.rlgc(freqs)
    w = 2.0 * np.pi * np.asarray(freqs, dtype=float)
    z = r + 1j * w * l
    y = g + 1j * w * c
    return np.sqrt(z / y), np.sqrt(z * y)


def abcd(cable: CableParams, length: float, freqs):
    """(A, B, C) of a uniform line section; D equals A."""
    zc, gamma = line_constants(cable, freqs)
    gl = gamma * length
    ch, sh = np.cosh(gl), np.sinh(gl)
    return ch, zc * sh, sh / zc


def _load_admittance(load, n):
    if load is None:
        return np.zeros(n, dtype=complex)
    return np.full(n, 1.0 / complex(load))


class NetworkSolver:
    """Directed-edge admittances of a tree at a fixed frequency grid.

    ``away[(u, v)]`` is the admittance at ``v`` looking away from ``u`` (the
    load at v plus every line leaving v except the one back to u);
    ``line_in[(u, v)]`` is the admittance seen at ``u`` into the line toward v.
    Both are computed for all directed edges by one post-order and one
    pre-order sweep.
    """

    def __init__(self, topology: Topology, freqs):
        self.topology = topology
        self.freqs = np.asarray(freqs, dtype=float)
        nf = self.freqs.size
        adj = topology.adjacency()
        n = topology.n_nodes
        self.load_y = [_load_admittance(node.load, nf) for node in topology.nodes]
        self.sections = {}
        for e in topology.edges:
            a, b, c = abcd(e.cable, e.length, self.freqs)
            self.sections[(e.a, e.b)] = self.sections[(e.b, e.a)] = (a, b, c)

        parent = [-1] * n
        order = [0]
        seen = [False] * n
        seen[0] = True
        for u in order:
            for v, _ in adj[u]:
                if not seen[v]:
                    seen[v] = True
                    parent[v] = u
                    order.append(v)

        self.away = {}
        self.line_in = {}
        # children first: admittance at v looking away from its parent
        for v in reversed(order):
            p = parent[v]
            total = self.load_y[v].copy()
            for w, _ in adj[v]:
                if w != p:
                    total += self.line_in[(v, w)]
            if p >= 0:
                self.away[(p, v)] = total
                self.line_in[(p, v)] = self._fold(p, v, total)
        # then toward the parent, reusing the sibling sums
        for u in order:
            p = parent[u]
            total = self.load_y[u].copy()
            for w, _ in adj[u]:
                total += self.line_in[(u, w)]
            for w, _ in adj[u]:
                if w == p:
                    continue
                self.away[(w, u)] = total - self.line_in[(u, w)]
                self.line_in[(w, u)] = self._fold(w, u, self.away[(w, u)])

    def _fold(self, u, v, y_far):
        a, b, c = self.sections[(u, v)]
        return (c + a * y_far) / (a + b * y_far)

    def step(self, u, v) -> np.ndarray:
        """V_v / V_u across the section u->v."""
        a, b, _ = self.sections[(u, v)]
        return 1.0 / (a + b * self.away[(u, v)])

    def node_admittance(self, node) -> np.ndarray:
        total = self.load_y[node].copy()
        for w, _ in self.topology.adjacency()[node]:
            total += self.line_in[(node, w)]
        return total

    def transfer(self, tx, rx) -> np.ndarray:
        path = self.topology.path(tx, rx)
        h = np.ones(self.freqs.size, dtype=complex)
        for u, v in zip(path[:-1], path[1:]):
            h = h * self.step(u, v)
        return h

    def transfer_from(self, tx) -> np.ndarray:
        """H(tx -> every node), shape (N, F)."""
        n = self.topology.n_nodes
        out = np.empty((n, self.freqs.size), dtype=complex)
        out[tx] = 1.0
        seen = np.zeros(n, dtype=bool)
        seen[tx] = True
        stack = [tx]
        adj = self.topology.adjacency()
        while stack:
            u = stack.pop()
            for v, _ in adj[u]:
                if not seen[v]:
                    seen[v] = True
                    out[v] = out[u] * self.step(u, v)
                    stack.append(v)
        return out


def _check_nodes(topology, *nodes):
    for node in nodes:
        if not 0 <= node < topology.n_nodes:
            raise ValueError(f"node {node} not in topology")


def tl_transfer(topology: Topology, tx_node: int, rx_node: int,
                grid: FrequencyGrid) -> ChannelResponse:
    """H = V_rx / V_tx with tx driven by an ideal voltage source."""
    _check_nodes(topology, tx_node, rx_node)
    if tx_node == rx_node:
        raise ValueError("tx and rx must differ")
    solver = NetworkSolver(topology, grid.freqs)
    return ChannelResponse(grid, solver.transfer(tx_node, rx_node))


def input_admittance(topology: Topology, node: int, grid: FrequencyGrid,
                     z0: float = Z0_DEFAULT) -> LineState:
    _check_nodes(topology, node)
    y = NetworkSolver(topology, grid.freqs).node_admittance(node)
    return LineState(y, reflection(y, z0), z0)


def reflection(y_in, z0: float = Z0_DEFAULT) -> np.ndarray:
    """(Z - Z0)/(Z + Z0) written in admittance form so an open circuit gives +1."""
    y_in = np.asarray(y_in, dtype=complex)
    return (1.0 - z0 * y_in) / (1.0 + z0 * y_in)


def nodal_transfer(topology: Topology, tx_node: int, rx_node: int, freqs) -> np.ndarray:
    """Reference solution from the full nodal admittance matrix.

    Each section contributes its two-port Y parameters; the tx node is pinned
    to 1 V and the remaining node voltages are solved directly.
    """
    freqs = np.asarray(freqs, dtype=float)
    n = topology.n_nodes
    out = np.empty(freqs.size, dtype=complex)
    sections = [(e.a, e.b, *line_constants(e.cable, freqs), e.length) for e in topology.edges]
    loads = [_load_admittance(node.load, freqs.size) for node in topology.nodes]
    rest = [i for i in range(n) if i != tx_node]
    rx_pos = rest.index(rx_node)
    for k in range(freqs.size):
        y = np.zeros((n, n), dtype=complex)
        for a, b, zc, gamma, length in sections:
            gl = gamma[k] * length
            self_y = 1.0 / (zc[k] * np.tanh(gl))
            mutual = -1.0 / (zc[k] * np.sinh(gl))
            y[a, a] += self_y
            y[b, b] += self_y
            y[a, b] += mutual
            y[b, a] += mutual
        for i in range(n):
            y[i, i] += loads[i][k]
        v = np.linalg.solve(y[np.ix_(rest, rest)], -y[rest, tx_node])
        out[k] = v[rx_pos]
    return out

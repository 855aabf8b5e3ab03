"""
Sensor-network topology and consensus weights.

Graphs are undirected and stored as a frozen set of ``(i, j)`` pairs with
``i < j``; connectivity and hop distances go through networkx.
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import networkx as nx
import numpy as np

from .config import tol
from .errors import DisconnectedGraphError, GraphGenerationError, InvalidInputError

logger = logging.getLogger(__name__)

MAX_GRAPH_ATTEMPTS = 1000


@dataclass(frozen=True, eq=False)
class Graph:
    node_count: int
    edges: frozenset
    positions: np.ndarray | None = None

    def __post_init__(self):
        N = int(self.node_count)
        if N < 1:
            raise InvalidInputError(f"graph needs at least one node, got {N}")
        normalized = set()
        for i, j in self.edges:
            i, j = int(i), int(j)
            if i == j:
                raise InvalidInputError(f"self-edge ({i}, {j}) is not allowed")
            if not (0 <= i < N and 0 <= j < N):
                raise InvalidInputError(f"edge ({i}, {j}) references a node outside 0..{N - 1}")
            normalized.add((min(i, j), max(i, j)))
        object.__setattr__(self, "node_count", N)
        object.__setattr__(self, "edges", frozenset(normalized))
        if self.positions is not None:
            positions = np.array(self.positions, dtype=float)
            if positions.shape != (N, 2):
                raise InvalidInputError(f"positions must be {N}x2, got {positions.shape}")
            positions.setflags(write=False)
            object.__setattr__(self, "positions", positions)

    def degrees(self):
        deg = np.zeros(self.node_count, dtype=int)
        for i, j in self.edges:
            deg[i] += 1
            deg[j] += 1
        return deg

    def to_networkx(self):
        G = nx.Graph()
        G.add_nodes_from(range(self.node_count))
        G.add_edges_from(sorted(self.edges))
        return G

    @classmethod
    def from_networkx(cls, G, positions=None):
        return cls(G.number_of_nodes(), frozenset(G.edges()), positions)


@dataclass(frozen=True, eq=False)
class WeightMatrix:
    """Doubly stochastic consensus matrix with nonnegative entries and positive diagonal.

    When ``graph`` is given, every positive off-diagonal entry must sit on an edge.
    """

    entries: np.ndarray
    graph: Graph | None = None

    def __post_init__(self):
        L = np.array(self.entries, dtype=float)
        if L.ndim != 2 or L.shape[0] != L.shape[1] or L.shape[0] < 1:
            raise InvalidInputError(f"weight matrix must be square, got shape {L.shape}")
        if not np.all(np.isfinite(L)):
            raise InvalidInputError("weight matrix has non-finite entries")
        if np.any(L < 0.0):
            raise InvalidInputError("weight matrix has negative entries")
        if np.any(np.diag(L) <= 0.0):
            raise InvalidInputError("weight matrix needs a positive diagonal")
        atol = tol("stochastic_atol")
        if np.max(np.abs(L.sum(axis=1) - 1.0)) > atol or np.max(np.abs(L.sum(axis=0) - 1.0)) > atol:
            raise InvalidInputError("weight matrix is not doubly stochastic")
        if self.graph is not None:
            if self.graph.node_count != L.shape[0]:
                raise InvalidInputError("weight matrix and graph disagree on the node count")
            for i, j in zip(*np.nonzero(L)):
                if i != j and (min(i, j), max(i, j)) not in self.graph.edges:
                    raise InvalidInputError(f"positive weight l[{i},{j}] on a non-edge")
        L.setflags(write=False)
        object.__setattr__(self, "entries", L)

    @property
    def node_count(self):
        return self.entries.shape[0]


class GraphMetrics(NamedTuple):
    diameter: int
    connected: bool


def random_geometric(N, width, radius, seed):
    """Scatter ``N`` nodes uniformly in ``[0, width]^2`` and link pairs within ``radius``.

    Disconnected draws are regenerated with ``seed + attempt``.
    """
    if N < 1 or width <= 0 or radius <= 0:
        raise InvalidInputError(f"need N >= 1, width > 0, radius > 0 (got {N}, {width}, {radius})")
    for attempt in range(MAX_GRAPH_ATTEMPTS):
        rng = np.random.default_rng(seed + attempt)
        positions = rng.uniform(0.0, width, size=(N, 2))
        diff = positions[:, None, :] - positions[None, :, :]
        dist = np.sqrt(np.sum(diff**2, axis=-1))
        ii, jj = np.nonzero(np.triu(dist <= radius, k=1))
        g = Graph(N, frozenset(zip(ii.tolist(), jj.tolist())), positions)
        if graph_metrics(g).connected:
            if attempt:
                logger.warning("Random geometric graph: seed %d connected after %d regenerations", seed + attempt, attempt)
            return g
        logger.debug("Random geometric graph for seed %d is disconnected, retrying", seed + attempt)
    raise GraphGenerationError(
        f"No connected graph with N={N}, width={width}, radius={radius} "
        f"after {MAX_GRAPH_ATTEMPTS} attempts; try a larger radius"
    )


def complete_graph(N):
    return Graph.from_networkx(nx.complete_graph(N))


def path_graph(N):
    return Graph.from_networkx(nx.path_graph(N))


def graph_metrics(g):
    """Diameter over reachable pairs and the connectivity flag."""
    G = g.to_networkx()
    diameter = 0
    for _, lengths in nx.all_pairs_shortest_path_length(G):
        diameter = max(diameter, max(lengths.values()))
    return GraphMetrics(diameter=int(diameter), connected=bool(nx.is_connected(G)))


def hop_distances(g):
    """N x N BFS hop counts; ``-1`` marks unreachable pairs."""
    N = g.node_count
    hops = np.full((N, N), -1, dtype=int)
    for i, lengths in nx.all_pairs_shortest_path_length(g.to_networkx()):
        for j, d in lengths.items():
            hops[i, j] = d
    return hops


def metropolis_weights(g):
    """w_ij = 1 / (1 + max(deg_i, deg_j)) on edges, w_ii = 1 - sum_j w_ij."""
    if not graph_metrics(g).connected:
        raise DisconnectedGraphError(
            f"graph with {g.node_count} nodes is not connected; consensus weights need a connected graph"
        )
    deg = g.degrees()
    L = np.zeros((g.node_count, g.node_count))
    for i, j in g.edges:
        L[i, j] = L[j, i] = 1.0 / (1.0 + max(deg[i], deg[j]))
    np.fill_diagonal(L, 1.0 - L.sum(axis=1))
    return WeightMatrix(L, graph=g)


def uniform_weights(N):
    """(1/N) 1 1^T on the complete graph."""
    return WeightMatrix(np.full((N, N), 1.0 / N), graph=complete_graph(N))


def _entries(W):
    return W.entries if isinstance(W, WeightMatrix) else np.asarray(W, dtype=float)


def weight_power(W, L):
    L = int(L)
    if L < 0:
        raise InvalidInputError(f"fusion depth must be >= 0, got {L}")
    return np.linalg.matrix_power(_entries(W), L)


def slem(W):
    """Second-largest eigenvalue modulus: drop one eigenvalue at 1, take max |lambda| of the rest."""
    M = _entries(W)
    if np.allclose(M, M.T, rtol=0.0, atol=tol("stochastic_atol")):
        eigs = np.linalg.eigvalsh(0.5 * (M + M.T)).astype(complex)
    else:
        eigs = np.linalg.eigvals(M)
    dist = np.abs(eigs - 1.0)
    unit = int(np.sum(dist <= tol("unit_eigenvalue_atol")))
    if unit == 0:
        raise InvalidInputError("weight matrix has no eigenvalue at 1; it is not stochastic")
    if unit > 1:
        raise DisconnectedGraphError(f"weight matrix has {unit} unit eigenvalues; the graph is disconnected")
    rest = np.delete(eigs, np.argmin(dist))
    return float(np.max(np.abs(rest))) if rest.size else 0.0


def consensus_error(W, L):
    """max_ij |N l_ij^(L) - 1|."""
    power = weight_power(W, L)
    return float(np.max(np.abs(power.shape[0] * power - 1.0)))


def write_edge_list(g, path):
    """Write ``# nodes N``, then ``i j`` edge lines, then ``i x y`` position lines."""
    lines = [f"# nodes {g.node_count}"]
    lines += [f"{i} {j}" for i, j in sorted(g.edges)]
    if g.positions is not None:
        lines += [f"{i} {float(x)!r} {float(y)!r}" for i, (x, y) in enumerate(g.positions)]
    Path(path).write_text("\n".join(lines) + "\n")


def read_edge_list(path):
    node_count = None
    edges = set()
    positions = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            tokens = line[1:].split()
            if len(tokens) == 2 and tokens[0] == "nodes":
                node_count = int(tokens[1])
            continue
        tokens = line.split()
        try:
            if len(tokens) == 2:
                edges.add((int(tokens[0]), int(tokens[1])))
            elif len(tokens) == 3:
                positions[int(tokens[0])] = (float(tokens[1]), float(tokens[2]))
            else:
                raise ValueError(f"expected 2 or 3 fields, got {len(tokens)}")
        except ValueError as e:
            raise InvalidInputError(f"{path}:{lineno}: cannot parse '{line}' ({e})") from e

    if node_count is None:
        ids = [k for e in edges for k in e] + list(positions)
        node_count = max(ids) + 1 if ids else 1
    coords = None
    if positions:
        if sorted(positions) != list(range(node_count)):
            raise InvalidInputError(f"{path}: positions must be given for all {node_count} nodes or none")
        coords = np.array([positions[i] for i in range(node_count)])
    return Graph(node_count, frozenset(edges), coords)

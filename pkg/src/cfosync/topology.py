"""Network graphs: generation, validation and neighborhood queries.

Node ids are 1-based throughout the package.  Edges are undirected and
stored as sorted (i, j) pairs with i < j.
"""

from __future__ import annotations

from dataclasses import InitVar, dataclass, field

import numpy as np
import scipy.sparse
import scipy.sparse.csgraph

MAX_PLACEMENT_ATTEMPTS = 10_000


class GenerationFailedError(RuntimeError):
    """Random placement never produced a connected graph (density infeasible)."""


@dataclass(frozen=True)
class NetworkGraph:
    """Undirected communication graph with per-node antenna counts.

    ``antennas`` may be given as a single int (same count everywhere) or a
    sequence of length ``num_nodes``.  ``positions`` is an optional
    (num_nodes, 2) array of coordinates, kept only for geometric generation
    and provenance.  Construction validates the invariants (no self loops,
    no duplicate edges, valid reference); connectivity is enforced unless
    ``require_connected=False`` (generation and the engine's disconnected-
    component tests need non-connected instances).
    """

    num_nodes: int
    antennas: tuple = 1
    edges: tuple = ()
    reference: int = 1
    positions: np.ndarray | None = None
    require_connected: InitVar[bool] = True
    _adjacency: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self, require_connected):
        if self.num_nodes < 1:
            raise ValueError("num_nodes must be positive")
        ants = self.antennas
        if np.isscalar(ants):
            ants = (int(ants),) * self.num_nodes
        else:
            ants = tuple(int(a) for a in ants)
        if len(ants) != self.num_nodes or any(a < 1 for a in ants):
            raise ValueError("antennas must be positive, one entry per node")
        norm = []
        seen = set()
        for e in self.edges:
            i, j = int(e[0]), int(e[1])
            if i == j:
                raise ValueError(f"self-loop at node {i}")
            if not (1 <= i <= self.num_nodes and 1 <= j <= self.num_nodes):
                raise ValueError(f"edge ({i},{j}) out of range 1..{self.num_nodes}")
            pair = (min(i, j), max(i, j))
            if pair in seen:
                raise ValueError(f"duplicate edge {pair}")
            seen.add(pair)
            norm.append(pair)
        norm.sort()
        if not (1 <= self.reference <= self.num_nodes):
            raise ValueError(f"reference node {self.reference} is not a valid node")
        pos = self.positions
        if pos is not None:
            pos = np.asarray(pos, dtype=float)
            if pos.shape != (self.num_nodes, 2):
                raise ValueError("positions must have shape (num_nodes, 2)")
            pos.setflags(write=False)
        adj = {i: set() for i in range(1, self.num_nodes + 1)}
        for i, j in norm:
            adj[i].add(j)
            adj[j].add(i)
        object.__setattr__(self, "antennas", ants)
        object.__setattr__(self, "edges", tuple(norm))
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "_adjacency", {i: frozenset(s) for i, s in adj.items()})
        if require_connected and not is_connected(self):
            raise ValueError("graph is not connected")

    @property
    def nodes(self) -> tuple:
        return tuple(range(1, self.num_nodes + 1))

    def antenna_count(self, node: int) -> int:
        self._check_node(node)
        return self.antennas[node - 1]

    def _check_node(self, node: int):
        if not (1 <= node <= self.num_nodes):
            raise KeyError(f"unknown node id {node}")


def neighbors(graph: NetworkGraph, node: int) -> frozenset:
    """Nodes sharing an edge with ``node`` (never includes ``node`` itself)."""
    graph._check_node(node)
    return graph._adjacency[node]


def _adjacency_matrix(graph: NetworkGraph) -> scipy.sparse.csr_matrix:
    k = graph.num_nodes
    if not graph.edges:
        return scipy.sparse.csr_matrix((k, k))
    rows = [e[0] - 1 for e in graph.edges] + [e[1] - 1 for e in graph.edges]
    cols = [e[1] - 1 for e in graph.edges] + [e[0] - 1 for e in graph.edges]
    data = np.ones(len(rows))
    return scipy.sparse.csr_matrix((data, (rows, cols)), shape=(k, k))


def is_connected(graph: NetworkGraph) -> bool:
    """True iff a single search component covers every node."""
    if graph.num_nodes == 1:
        return True
    n_comp, _ = scipy.sparse.csgraph.connected_components(
        _adjacency_matrix(graph), directed=False
    )
    return n_comp == 1


def diameter(graph: NetworkGraph) -> int:
    """Longest shortest path (hop count); graph must be connected."""
    dist = scipy.sparse.csgraph.shortest_path(
        _adjacency_matrix(graph), method="D", unweighted=True, directed=False
    )
    if np.isinf(dist).any():
        raise ValueError("diameter undefined: graph is not connected")
    return int(dist.max())


def random_geometric(
    num_nodes: int,
    side: float,
    comm_range: float,
    antennas=1,
    rng_seed=0,
) -> NetworkGraph:
    """Connected random geometric graph on a ``side x side`` square.

    Node positions are drawn uniformly and an edge connects every pair
    within ``comm_range``.  Placement is resampled from the same seeded
    stream until the graph comes out connected, so the result is
    deterministic given the seed.  Raises :class:`GenerationFailedError`
    after ``MAX_PLACEMENT_ATTEMPTS`` resamples.
    """
    if num_nodes < 2:
        raise ValueError("need at least 2 nodes")
    if side <= 0 or comm_range <= 0:
        raise ValueError("side and comm_range must be positive")
    rng = np.random.default_rng(rng_seed)
    for _ in range(MAX_PLACEMENT_ATTEMPTS):
        pos = rng.uniform(0.0, side, size=(num_nodes, 2))
        delta = pos[:, None, :] - pos[None, :, :]
        dist = np.hypot(delta[..., 0], delta[..., 1])
        ii, jj = np.nonzero(np.triu(dist <= comm_range, k=1))
        edges = [(int(a) + 1, int(b) + 1) for a, b in zip(ii, jj)]
        g = NetworkGraph(
            num_nodes, antennas, tuple(edges), positions=pos, require_connected=False
        )
        if is_connected(g):
            return g
    raise GenerationFailedError(
        f"no connected placement found after {MAX_PLACEMENT_ATTEMPTS} attempts"
    )


def load_edge_list(path, antennas=1) -> NetworkGraph:
    """Read the edge-list text format.

    First non-comment line: ``K R`` (node count and reference id).  Each
    following line: ``i j``, one edge per line, 1-based ids.  Optional
    ``# pos i x y`` comment lines carry coordinates.
    """
    header = None
    edges = []
    pos = {}
    with open(path, "r", encoding="utf-8") as fh:
        for raw in fh:
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                parts = line[1:].split()
                if parts[:1] == ["pos"] and len(parts) == 4:
                    pos[int(parts[1])] = (float(parts[2]), float(parts[3]))
                continue
            parts = line.split()
            if header is None:
                if len(parts) != 2:
                    raise ValueError(f"malformed header line: {line!r}")
                header = (int(parts[0]), int(parts[1]))
            else:
                if len(parts) != 2:
                    raise ValueError(f"malformed edge line: {line!r}")
                edges.append((int(parts[0]), int(parts[1])))
    if header is None:
        raise ValueError("edge-list file has no header line")
    num_nodes, reference = header
    positions = None
    if pos:
        positions = np.zeros((num_nodes, 2))
        for i, (x, y) in pos.items():
            positions[i - 1] = (x, y)
    return NetworkGraph(num_nodes, antennas, tuple(edges), reference, positions)


def save_edge_list(graph: NetworkGraph, path):
    """Write a graph in the edge-list text format (inverse of load)."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{graph.num_nodes} {graph.reference}\n")
        for i, j in graph.edges:
            fh.write(f"{i} {j}\n")
        if graph.positions is not None:
            for i, (x, y) in enumerate(graph.positions, start=1):
                fh.write(f"# pos {i} {float(x)!r} {float(y)!r}\n")

"""Clustered undirected graphs, incidence matrices and Laplacians.

Nodes are indexed globally with clusters occupying contiguous ranges in
declaration order, so the internal Laplacian is literally block diagonal.
All Laplacians use unit edge weights; their entries are small integers
stored as float64, which keeps every identity here exact.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

Edge = tuple[int, int]

MAX_CONNECT_RETRIES = 1000


class GraphError(ValueError):
    """Raised when a graph violates its structural invariants."""


class GeneratorError(RuntimeError):
    """Raised when the random topology generator cannot meet its constraints."""


class OrientedEdge(NamedTuple):
    positive_end: int
    negative_end: int


def orient(u: int, v: int) -> OrientedEdge:
    """Orient an undirected edge: the smaller index is the positive end."""
    if u == v:
        raise GraphError(f"self-loop at node {u}")
    return OrientedEdge(min(u, v), max(u, v))


@dataclass(frozen=True)
class ClusterGraph:
    cluster_sizes: tuple[int, ...]
    internal_edges: tuple[tuple[Edge, ...], ...]
    external_edges: tuple[Edge, ...]

    def __post_init__(self):
        # normalise lists coming from callers into hashable tuples
        object.__setattr__(self, "cluster_sizes", tuple(int(n) for n in self.cluster_sizes))
        object.__setattr__(
            self,
            "internal_edges",
            tuple(tuple((int(i), int(j)) for i, j in edges) for edges in self.internal_edges),
        )
        object.__setattr__(
            self, "external_edges", tuple((int(u), int(v)) for u, v in self.external_edges)
        )

    @property
    def n_clusters(self) -> int:
        return len(self.cluster_sizes)

    @property
    def n_nodes(self) -> int:
        return sum(self.cluster_sizes)

    @property
    def offsets(self) -> tuple[int, ...]:
        """Global index of the first node of each cluster, plus N at the end."""
        return tuple(itertools.accumulate(self.cluster_sizes, initial=0))

    @property
    def m_internal(self) -> int:
        return sum(len(edges) for edges in self.internal_edges)

    @property
    def m_external(self) -> int:
        return len(self.external_edges)

    @property
    def m_total(self) -> int:
        return self.m_internal + self.m_external

    @property
    def n_min(self) -> int:
        return min(self.cluster_sizes)

    @property
    def n_max(self) -> int:
        return max(self.cluster_sizes)

    def cluster_of(self, node: int) -> int:
        offsets = self.offsets
        if not 0 <= node < offsets[-1]:
            raise GraphError(f"node {node} out of range [0, {offsets[-1]})")
        for alpha in range(self.n_clusters):
            if node < offsets[alpha + 1]:
                return alpha
        raise AssertionError("unreachable")

    def global_internal_edges(self) -> list[Edge]:
        offsets = self.offsets
        return [
            (offsets[a] + i, offsets[a] + j)
            for a, edges in enumerate(self.internal_edges)
            for i, j in edges
        ]

    def all_edges(self) -> list[Edge]:
        return self.global_internal_edges() + list(self.external_edges)

    def aggregate_edges(self) -> list[Edge]:
        """Cluster pairs joined by at least one external edge (sorted, unique)."""
        pairs = {tuple(sorted((self.cluster_of(u), self.cluster_of(v)))) for u, v in self.external_edges}
        return sorted(pairs)


def _duplicates(edges: Iterable[Edge]) -> list[Edge]:
    seen: set[frozenset] = set()
    dups = []
    for u, v in edges:
        key = frozenset((u, v))
        if key in seen:
            dups.append((u, v))
        seen.add(key)
    return dups


def validate(graph: ClusterGraph) -> list[str]:
    """Check every structural invariant; return all violations (empty means ok)."""
    errors: list[str] = []
    sizes = graph.cluster_sizes
    if len(sizes) < 1:
        errors.append("graph has no clusters")
    for a, n in enumerate(sizes):
        if n < 1:
            errors.append(f"cluster {a}: size {n} is not positive")
    if len(graph.internal_edges) != len(sizes):
        errors.append(
            f"internal edge lists: got {len(graph.internal_edges)} for {len(sizes)} clusters"
        )
    for a, edges in enumerate(graph.internal_edges):
        n = sizes[a] if a < len(sizes) else 0
        for i, j in edges:
            if i == j:
                errors.append(f"cluster {a}: internal self-loop at local node {i}")
            for end in (i, j):
                if not 0 <= end < n:
                    errors.append(
                        f"cluster {a}: internal edge ({i},{j}) endpoint out of range [0,{n})"
                    )
        for i, j in _duplicates(edges):
            errors.append(f"cluster {a}: duplicate internal edge ({i},{j})")

    n_total = sum(max(n, 0) for n in sizes)
    offsets = list(itertools.accumulate((max(n, 0) for n in sizes), initial=0))
    for u, v in graph.external_edges:
        if u == v:
            errors.append(f"external self-loop at node {u}")
            continue
        if not (0 <= u < n_total and 0 <= v < n_total):
            errors.append(f"external edge ({u},{v}) endpoint out of range [0,{n_total})")
            continue
        cu = int(np.searchsorted(offsets, u, side="right")) - 1
        cv = int(np.searchsorted(offsets, v, side="right")) - 1
        if cu == cv:
            errors.append(f"external edge ({u},{v}) internal to cluster {cu}")
    for u, v in _duplicates(graph.external_edges):
        errors.append(f"duplicate external edge ({u},{v})")
    return errors


def check(graph: ClusterGraph) -> ClusterGraph:
    errors = validate(graph)
    if errors:
        raise GraphError("invalid cluster graph: " + "; ".join(errors))
    return graph


def incidence_matrix(edges: Sequence[OrientedEdge | Edge], n_nodes: int) -> np.ndarray:
    """Node-by-edge incidence matrix, columns in input order.

    Plain ``(u, v)`` pairs are oriented with the smaller index as the positive
    end; :class:`OrientedEdge` instances keep their given orientation.
    """
    D = np.zeros((n_nodes, len(edges)))
    for k, e in enumerate(edges):
        pos, neg = e if isinstance(e, OrientedEdge) else orient(*e)
        if pos == neg:
            raise GraphError(f"edge {k} is a self-loop at node {pos}")
        for end in (pos, neg):
            if not 0 <= end < n_nodes:
                raise GraphError(f"edge {k} endpoint {end} out of range [0,{n_nodes})")
        D[pos, k] = 1.0
        D[neg, k] = -1.0
    return D


def incidence_matrices(graph: ClusterGraph) -> tuple[np.ndarray, np.ndarray]:
    """The internal and external incidence matrices ``(D_I, D_E)``."""
    check(graph)
    n = graph.n_nodes
    return (
        incidence_matrix(graph.global_internal_edges(), n),
        incidence_matrix(list(graph.external_edges), n),
    )


def laplacian(graph: ClusterGraph) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return ``(L, L_internal, L_external)`` built as incidence products."""
    D_int, D_ext = incidence_matrices(graph)
    L_int = D_int @ D_int.T
    L_ext = D_ext @ D_ext.T
    return L_int + L_ext, L_int, L_ext


def internal_blocks(graph: ClusterGraph) -> list[np.ndarray]:
    """Per-cluster Laplacians (the diagonal blocks of the internal Laplacian)."""
    check(graph)
    blocks = []
    for n, edges in zip(graph.cluster_sizes, graph.internal_edges):
        D = incidence_matrix(list(edges), n)
        blocks.append(D @ D.T)
    return blocks


def weighted_laplacian(n_nodes: int, edges: Sequence[Edge], weights: Sequence[float]) -> np.ndarray:
    """Laplacian with positive edge weights.

    Not used by the rate certification, which assumes unit weights.
    """
    if len(weights) != len(edges):
        raise ValueError("one weight per edge required")
    L = np.zeros((n_nodes, n_nodes))
    for (u, v), w in zip(edges, weights):
        if w <= 0:
            raise ValueError(f"edge ({u},{v}) has non-positive weight {w}")
        if u == v:
            raise GraphError(f"self-loop at node {u}")
        L[u, v] -= w
        L[v, u] -= w
        L[u, u] += w
        L[v, v] += w
    return L


def laplacian_direct(graph: ClusterGraph) -> np.ndarray:
    """Degree-minus-adjacency Laplacian, assembled entry by entry."""
    check(graph)
    n = graph.n_nodes
    L = np.zeros((n, n))
    for u, v in graph.all_edges():
        L[u, v] = -1.0
        L[v, u] = -1.0
    for i in range(n):
        L[i, i] = -L[i].sum()
    return L


def is_connected(n_nodes: int, edges: Sequence[Edge]) -> bool:
    """True iff the undirected graph on all ``n_nodes`` vertices is connected."""
    if n_nodes <= 1:
        return n_nodes == 1
    for u, v in edges:
        if not (0 <= u < n_nodes and 0 <= v < n_nodes):
            raise GraphError(f"edge ({u},{v}) endpoint out of range [0,{n_nodes})")
    if not edges:
        return False
    rows, cols = zip(*edges)
    adj = coo_matrix((np.ones(len(edges)), (rows, cols)), shape=(n_nodes, n_nodes))
    n_comp, _ = connected_components(adj, directed=False)
    return n_comp == 1


def clusters_connected(graph: ClusterGraph) -> list[bool]:
    return [is_connected(n, list(edges)) for n, edges in zip(graph.cluster_sizes, graph.internal_edges)]


def external_connected(graph: ClusterGraph, mode: str = "aggregate") -> bool:
    """Connectivity of the external graph.

    ``aggregate`` treats each cluster as one vertex; ``full`` asks for the
    external edges alone to connect all N nodes.
    """
    if mode == "aggregate":
        return is_connected(graph.n_clusters, graph.aggregate_edges())
    if mode == "full":
        return is_connected(graph.n_nodes, list(graph.external_edges))
    raise ValueError(f"unknown connectivity mode {mode!r}")


# --- random topologies -------------------------------------------------------

INTERNAL_MODELS = ("complete", "random")
EXTERNAL_PATTERNS = ("ring", "complete")


@dataclass(frozen=True)
class TopologySpec:
    """Recipe for :func:`generate`.

    ``gateways`` nodes per cluster (the first ones) carry external edges; each
    linked cluster pair gets one edge per gateway rank.  ``external`` is
    ``ring`` (cluster a to a+1) or ``complete`` (every pair, alias ``pairwise``).
    """

    sizes: tuple[int, ...]
    internal: str = "complete"
    p: float = 1.0
    gateways: int = 1
    external: str = "ring"

    def __post_init__(self):
        object.__setattr__(self, "sizes", tuple(int(n) for n in self.sizes))
        if self.external == "pairwise":
            object.__setattr__(self, "external", "complete")
        if self.internal not in INTERNAL_MODELS:
            raise ValueError(f"internal model must be one of {INTERNAL_MODELS}, got {self.internal!r}")
        if self.external not in EXTERNAL_PATTERNS:
            raise ValueError(f"external pattern must be one of {EXTERNAL_PATTERNS}, got {self.external!r}")
        if not self.sizes or min(self.sizes) < 1:
            raise ValueError("cluster sizes must be positive and non-empty")
        if not 0.0 <= self.p <= 1.0:
            raise ValueError(f"edge probability {self.p} outside [0, 1]")
        if self.gateways < 1 or self.gateways > min(self.sizes):
            raise ValueError(f"gateways={self.gateways} must lie in [1, min(sizes)]")

    def cluster_pairs(self) -> list[Edge]:
        r = len(self.sizes)
        if r < 2:
            return []
        if self.external == "complete":
            return list(itertools.combinations(range(r), 2))
        if r == 2:
            return [(0, 1)]
        return [(a, (a + 1) % r) if a + 1 < r else ((a + 1) % r, a) for a in range(r)]

    @classmethod
    def from_dict(cls, d: dict) -> "TopologySpec":
        return cls(
            sizes=tuple(d["sizes"]),
            internal=d.get("internal", "complete"),
            p=float(d.get("p", 1.0)),
            gateways=int(d.get("gateways", 1)),
            external=d.get("external", "ring"),
        )

    def to_dict(self) -> dict:
        return {
            "sizes": list(self.sizes),
            "internal": self.internal,
            "p": self.p,
            "gateways": self.gateways,
            "external": self.external,
        }


def _random_cluster(n: int, p: float, rng: np.random.Generator) -> list[Edge]:
    pairs = list(itertools.combinations(range(n), 2))
    if n == 1:
        return []
    for _ in range(MAX_CONNECT_RETRIES):
        keep = rng.random(len(pairs)) < p
        edges = [e for e, k in zip(pairs, keep) if k]
        if is_connected(n, edges):
            return edges
    raise GeneratorError(
        f"no connected G(n={n}, p={p}) sample in {MAX_CONNECT_RETRIES} attempts"
    )


def generate(spec: TopologySpec, seed: int = 0) -> ClusterGraph:
    """Build a clustered graph from ``spec``; deterministic in ``seed``."""
    rng = np.random.default_rng(seed)
    internal = []
    for n in spec.sizes:
        if spec.internal == "complete":
            internal.append(list(itertools.combinations(range(n), 2)))
        else:
            internal.append(_random_cluster(n, spec.p, rng))
    offsets = list(itertools.accumulate(spec.sizes, initial=0))
    external = [
        (offsets[a] + g, offsets[b] + g)
        for a, b in spec.cluster_pairs()
        for g in range(spec.gateways)
    ]
    return check(ClusterGraph(spec.sizes, tuple(map(tuple, internal)), tuple(external)))


# --- text file format -------------------------------------------------------


def format_graph(graph: ClusterGraph) -> str:
    lines = [f"clusters {graph.n_clusters}", "sizes " + " ".join(map(str, graph.cluster_sizes))]
    for a, edges in enumerate(graph.internal_edges):
        lines.extend(f"internal {a} {i} {j}" for i, j in edges)
    lines.extend(f"external {u} {v}" for u, v in graph.external_edges)
    return "\n".join(lines) + "\n"


def parse_graph(text: str) -> ClusterGraph:
    r = None
    sizes: list[int] | None = None
    internal: list[list[Edge]] = []
    external: list[Edge] = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, *fields = line.split()
        try:
            values = [int(f) for f in fields]
        except ValueError:
            raise GraphError(f"line {lineno}: non-integer field in {raw!r}") from None
        if key == "clusters":
            if len(values) != 1:
                raise GraphError(f"line {lineno}: 'clusters' takes one value")
            r = values[0]
        elif key == "sizes":
            if r is None:
                raise GraphError(f"line {lineno}: 'sizes' before 'clusters'")
            if len(values) != r:
                raise GraphError(f"line {lineno}: expected {r} sizes, got {len(values)}")
            sizes = values
            internal = [[] for _ in range(r)]
        elif key == "internal":
            if sizes is None:
                raise GraphError(f"line {lineno}: 'internal' before 'sizes'")
            if len(values) != 3 or not 0 <= values[0] < len(sizes):
                raise GraphError(f"line {lineno}: bad internal edge {raw!r}")
            internal[values[0]].append((values[1], values[2]))
        elif key == "external":
            if len(values) != 2:
                raise GraphError(f"line {lineno}: bad external edge {raw!r}")
            external.append((values[0], values[1]))
        else:
            raise GraphError(f"line {lineno}: unknown record {key!r}")
    if sizes is None:
        raise GraphError("missing 'clusters'/'sizes' header")
    return check(ClusterGraph(tuple(sizes), tuple(map(tuple, internal)), tuple(external)))


def write_graph(graph: ClusterGraph, path: str | Path) -> None:
    Path(path).write_text(format_graph(graph))


def read_graph(path: str | Path) -> ClusterGraph:
    return parse_graph(Path(path).read_text())


def random_cluster_graph(
    seed: int,
    *,
    max_nodes: int = 60,
    max_clusters: int = 5,
    p_internal: float = 0.5,
    p_external: float = 0.05,
    connected: bool = True,
) -> ClusterGraph:
    """Random clustered graph with mixed cluster sizes, for tests and benchmarks.

    With ``connected=True`` every cluster is internally connected and the
    clusters are chained by at least one external edge each.
    """
    rng = np.random.default_rng(seed)
    r = int(rng.integers(1, max_clusters + 1))
    cap = max(1, max_nodes // r)
    sizes = [int(n) for n in rng.integers(1, cap + 1, size=r)]
    internal = []
    for n in sizes:
        if connected:
            internal.append(_random_cluster(n, max(p_internal, 0.3), rng))
        else:
            pairs = list(itertools.combinations(range(n), 2))
            internal.append([e for e in pairs if rng.random() < p_internal])
    offsets = list(itertools.accumulate(sizes, initial=0))
    external: set[Edge] = set()
    if connected:
        for a in range(r - 1):
            u = offsets[a] + int(rng.integers(sizes[a]))
            v = offsets[a + 1] + int(rng.integers(sizes[a + 1]))
            external.add((u, v))
    for a, b in itertools.combinations(range(r), 2):
        for i in range(sizes[a]):
            for j in range(sizes[b]):
                if rng.random() < p_external:
                    external.add((offsets[a] + i, offsets[b] + j))
    return check(ClusterGraph(tuple(sizes), tuple(map(tuple, internal)), tuple(sorted(external))))

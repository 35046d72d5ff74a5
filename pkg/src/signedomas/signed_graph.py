"""Signed graphs, their incidence and Laplacian matrices, and structural balance.

Edges are stored oriented as ``(tail, head, sign)``.  The orientation only
affects the sign of the corresponding incidence column; the node Laplacian
does not depend on it.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import InvalidGraph, NotConnected

Edge = tuple[int, int, int]


@dataclass(frozen=True)
class SignedGraph:
    """Undirected signed graph with oriented edges.

    ``node_labels`` carry external identities so that the same agent can be
    tracked across modes of an open system.  When omitted, labels default to
    the string form of the node index.
    """

    n_nodes: int
    edges: tuple[Edge, ...]
    node_labels: tuple[str, ...] | None = None

    def __post_init__(self):
        n = int(self.n_nodes)
        if n <= 0:
            raise InvalidGraph(f"n_nodes must be positive, got {self.n_nodes}")
        object.__setattr__(self, "n_nodes", n)
        edges = tuple((int(t), int(h), int(s)) for t, h, s in self.edges)
        seen = set()
        for k, (t, h, s) in enumerate(edges):
            if not (0 <= t < n and 0 <= h < n):
                raise InvalidGraph(f"edge {k} references a node outside [0, {n})")
            if t == h:
                raise InvalidGraph(f"edge {k} is a self-loop on node {t}")
            if s not in (1, -1):
                raise InvalidGraph(f"edge {k} has sign {s}; signs must be +1 or -1")
            pair = frozenset((t, h))
            if pair in seen:
                raise InvalidGraph(f"edge {k} duplicates an earlier edge between {t} and {h}")
            seen.add(pair)
        object.__setattr__(self, "edges", edges)
        if self.node_labels is not None:
            labels = tuple(str(x) for x in self.node_labels)
            if len(labels) != n:
                raise InvalidGraph("node_labels must have one entry per node")
            if len(set(labels)) != n:
                raise InvalidGraph("node labels must be unique")
            object.__setattr__(self, "node_labels", labels)

    @classmethod
    def from_labeled_edges(cls, labels: Sequence[str], edges: Iterable[tuple[str, str, int]]):
        index = {lab: i for i, lab in enumerate(labels)}
        try:
            oriented = [(index[a], index[b], s) for a, b, s in edges]
        except KeyError as exc:
            raise InvalidGraph(f"edge refers to unknown node {exc.args[0]!r}") from None
        return cls(len(labels), tuple(oriented), tuple(labels))

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def labels(self) -> tuple[str, ...]:
        if self.node_labels is None:
            return tuple(str(i) for i in range(self.n_nodes))
        return self.node_labels

    def labeled_edges(self) -> list[tuple[str, str, int]]:
        lab = self.labels
        return [(lab[t], lab[h], s) for t, h, s in self.edges]

    def unsigned(self) -> SignedGraph:
        """Same topology and orientation with every sign set to +1."""
        return SignedGraph(self.n_nodes, tuple((t, h, 1) for t, h, _ in self.edges), self.node_labels)

    def is_tree(self) -> bool:
        return self.n_edges == self.n_nodes - 1 and is_connected(self)


@dataclass(frozen=True)
class BalanceResult:
    """Outcome of the structural-balance test.

    ``gauge`` holds d in {+1, -1}^N when balanced (d_i = +1 for the first camp);
    ``witness_cycle`` holds edge indices of a cycle with negative sign product
    otherwise.
    """

    balanced: bool
    gauge: tuple[int, ...] | None = None
    witness_cycle: tuple[int, ...] | None = None

    @property
    def verdict(self) -> str:
        return "SB" if self.balanced else "SUB"

    def partition(self, g: SignedGraph) -> tuple[tuple[str, ...], tuple[str, ...]]:
        if not self.balanced:
            raise ValueError("an unbalanced graph has no bipartition")
        lab = g.labels
        v1 = tuple(lab[i] for i, d in enumerate(self.gauge) if d > 0)
        v2 = tuple(lab[i] for i, d in enumerate(self.gauge) if d < 0)
        return v1, v2


def incidence_matrix(g: SignedGraph) -> np.ndarray:
    """N x M signed incidence matrix.

    Column k is +1 at the tail of edge k and, at the head, -1 for a
    cooperative edge or +1 for an antagonistic one.
    """
    E = np.zeros((g.n_nodes, g.n_edges))
    for k, (t, h, s) in enumerate(g.edges):
        E[t, k] = 1.0
        E[h, k] = -float(s)
    return E


def adjacency_matrix(g: SignedGraph) -> np.ndarray:
    A = np.zeros((g.n_nodes, g.n_nodes))
    for t, h, s in g.edges:
        A[t, h] = A[h, t] = s
    return A


def signed_laplacian(g: SignedGraph) -> np.ndarray:
    """Signed Laplacian built entrywise: degree on the diagonal, -a_ij off it."""
    A = adjacency_matrix(g)
    L = -A
    L[np.diag_indices_from(L)] = np.abs(A).sum(axis=1)
    return L


def edge_laplacian(g: SignedGraph) -> np.ndarray:
    E = incidence_matrix(g)
    return E.T @ E


def _neighbours(g: SignedGraph) -> list[list[tuple[int, int]]]:
    """Per node, (edge index, other endpoint) pairs in increasing edge index."""
    adj: list[list[tuple[int, int]]] = [[] for _ in range(g.n_nodes)]
    for k, (t, h, _) in enumerate(g.edges):
        adj[t].append((k, h))
        adj[h].append((k, t))
    return adj


def connected_components(g: SignedGraph) -> list[list[int]]:
    adj = _neighbours(g)
    seen = [False] * g.n_nodes
    comps = []
    for root in range(g.n_nodes):
        if seen[root]:
            continue
        seen[root] = True
        comp, queue = [], deque([root])
        while queue:
            u = queue.popleft()
            comp.append(u)
            for _, v in adj[u]:
                if not seen[v]:
                    seen[v] = True
                    queue.append(v)
        comps.append(comp)
    return comps


def is_connected(g: SignedGraph) -> bool:
    return len(connected_components(g)) == 1


def spanning_tree(g: SignedGraph) -> list[int]:
    """Edge indices of a breadth-first spanning tree rooted at node 0.

    Nodes are expanded in BFS order and, within a node, incident edges in
    increasing index, so the lowest-index edge reaching a new node wins.
    """
    adj = _neighbours(g)
    seen = [False] * g.n_nodes
    seen[0] = True
    tree = []
    queue = deque([0])
    while queue:
        u = queue.popleft()
        for k, v in adj[u]:
            if not seen[v]:
                seen[v] = True
                tree.append(k)
                queue.append(v)
    if len(tree) != g.n_nodes - 1:
        raise NotConnected(f"graph has {len(connected_components(g))} components; no spanning tree")
    return sorted(tree)


def check_structural_balance(g: SignedGraph) -> BalanceResult:
    """Breadth-first two-colouring with d_tail * d_head = sign on every edge.

    Each component is rooted at its lowest-index node, which gets d = +1.  On
    the first contradiction the tree paths from both endpoints to their
    common ancestor, closed by the offending edge, form the witness cycle
    (listed as a closed walk starting at the edge's endpoint being expanded).
    """
    adj = _neighbours(g)
    d = [0] * g.n_nodes
    parent_edge = [-1] * g.n_nodes
    parent = [-1] * g.n_nodes
    depth = [0] * g.n_nodes
    for root in range(g.n_nodes):
        if d[root]:
            continue
        d[root] = 1
        queue = deque([root])
        while queue:
            u = queue.popleft()
            for k, v in adj[u]:
                s = g.edges[k][2]
                if not d[v]:
                    d[v] = s * d[u]
                    parent[v], parent_edge[v], depth[v] = u, k, depth[u] + 1
                    queue.append(v)
                elif d[u] * d[v] != s:
                    return BalanceResult(False, witness_cycle=_close_cycle(u, v, k, parent, parent_edge, depth))
    return BalanceResult(True, gauge=tuple(d))


def _close_cycle(u, v, k, parent, parent_edge, depth) -> tuple[int, ...]:
    left, right = [], []
    while depth[u] > depth[v]:
        left.append(parent_edge[u])
        u = parent[u]
    while depth[v] > depth[u]:
        right.append(parent_edge[v])
        v = parent[v]
    while u != v:
        left.append(parent_edge[u])
        right.append(parent_edge[v])
        u, v = parent[u], parent[v]
    return tuple(left + right[::-1] + [k])


def cycle_sign(g: SignedGraph, cycle: Iterable[int]) -> int:
    prod = 1
    for k in cycle:
        prod *= g.edges[k][2]
    return prod


def gauge_matrices(g: SignedGraph, balance: BalanceResult) -> tuple[np.ndarray, np.ndarray]:
    """Node gauge D = diag(d) and edge gauge D_e with d_e,k = d at the tail of edge k.

    D L_s D is the unsigned Laplacian and D_e L_e D_e the unsigned edge
    Laplacian of the same oriented topology.
    """
    if not balance.balanced:
        raise ValueError("gauge transformations exist only for structurally balanced graphs")
    d = np.asarray(balance.gauge, dtype=float)
    if d.shape != (g.n_nodes,):
        raise ValueError("balance result does not belong to this graph")
    d_e = np.array([d[t] for t, _, _ in g.edges])
    return np.diag(d), np.diag(d_e)

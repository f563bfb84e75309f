"""Finite quotient multigraphs with Jacobi data and their covering combinatorics.

A model is a finite connected leafless multigraph with a real potential b per
vertex and a positive weight a per edge.  The operator of interest lives on
the universal cover tree; everything this package computes is derived from
the finite graph, its spanning decomposition (tree edges plus broken edges
labelled by free-group generators) and the directed-edge index set.

Vertex ids are dense integers 0..p-1 and edge ids 0..q-1.  Directed edges are
encoded as ``2*edge + orientation``; ``reverse`` flips the low bit.  For an
edge (u, v), orientation 0 points u -> v and orientation 1 points v -> u.
A self-loop still yields two distinct directed edges.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "GraphError",
    "Disconnected",
    "HasLeaf",
    "NonpositiveWeight",
    "QuotientGraph",
    "SpanningDecomposition",
    "validate",
    "spanning_decomposition",
    "schur_norm_bound",
]


class GraphError(ValueError):
    """Invalid graph description."""


class Disconnected(GraphError):
    def __init__(self, vertex):
        self.vertex = vertex
        super().__init__(f"graph is disconnected: vertex {vertex} is not reachable from vertex 0")


class HasLeaf(GraphError):
    def __init__(self, vertex):
        self.vertex = vertex
        super().__init__(f"graph has a leaf: vertex {vertex} has degree < 2")


class NonpositiveWeight(GraphError):
    def __init__(self, edge):
        self.edge = edge
        super().__init__(f"edge {edge} has non-positive weight a <= 0")


@dataclass(frozen=True)
class QuotientGraph:
    """Validated multigraph with Jacobi data.

    Attributes
    ----------
    b : (p,) float array, diagonal value per vertex.
    edge_u, edge_v : (q,) int arrays, endpoints of each edge (u == v for loops).
    a : (q,) float array, positive edge weights.
    """

    b: np.ndarray
    edge_u: np.ndarray
    edge_v: np.ndarray
    a: np.ndarray

    @property
    def p(self) -> int:
        return self.b.shape[0]

    @property
    def q(self) -> int:
        return self.a.shape[0]

    @property
    def ell(self) -> int:
        """Rank of the fundamental group: q - p + 1."""
        return self.q - self.p + 1

    # -- directed-edge index set (size 2q) --------------------------------

    def de_head(self) -> np.ndarray:
        """Head vertex of each directed edge; directed edge 2e points u->v."""
        out = np.empty(2 * self.q, dtype=np.int64)
        out[0::2] = self.edge_v
        out[1::2] = self.edge_u
        return out

    def de_tail(self) -> np.ndarray:
        out = np.empty(2 * self.q, dtype=np.int64)
        out[0::2] = self.edge_u
        out[1::2] = self.edge_v
        return out

    @staticmethod
    def de_reverse(de):
        return de ^ 1

    @staticmethod
    def de_edge(de):
        return de >> 1

    def de_a(self) -> np.ndarray:
        return np.repeat(self.a, 2)

    def degrees(self) -> np.ndarray:
        """Vertex degrees, self-loops counted twice."""
        deg = np.zeros(self.p, dtype=np.int64)
        np.add.at(deg, self.edge_u, 1)
        np.add.at(deg, self.edge_v, 1)
        return deg

    def is_regular(self) -> bool:
        deg = self.degrees()
        return bool(np.all(deg == deg[0]))

    def edges_at(self, j: int) -> list[int]:
        """Edge ids incident to vertex j (loops listed once)."""
        return [e for e in range(self.q) if self.edge_u[e] == j or self.edge_v[e] == j]

    def to_json_dict(self) -> dict:
        return {
            "vertices": [{"id": j, "b": float(self.b[j])} for j in range(self.p)],
            "edges": [
                {"id": e, "u": int(self.edge_u[e]), "v": int(self.edge_v[e]), "a": float(self.a[e])}
                for e in range(self.q)
            ],
        }


@dataclass(frozen=True)
class SpanningDecomposition:
    """Spanning tree plus broken edges carrying free-group generator labels.

    ``broken_edges[j]`` is the edge id assigned to generator j+1; its stored
    (u, v) orientation is the "+" direction of that generator.
    """

    tree_edges: tuple[int, ...]
    broken_edges: tuple[int, ...]
    seed: int

    @property
    def ell(self) -> int:
        return len(self.broken_edges)


def validate(raw) -> QuotientGraph:
    """Check a raw graph description and return the immutable graph.

    ``raw`` is a dict with keys "vertices": [{"id", "b"}] and
    "edges": [{"id", "u", "v", "a"}].  Ids must be dense 0..p-1 / 0..q-1.
    Unknown keys anywhere are rejected.
    """
    if not isinstance(raw, dict):
        raise GraphError("graph description must be a JSON object")
    unknown = set(raw) - {"vertices", "edges"}
    if unknown:
        raise GraphError(f"unknown top-level keys: {sorted(unknown)}")
    if "vertices" not in raw or "edges" not in raw:
        raise GraphError('graph description needs "vertices" and "edges"')

    verts = raw["vertices"]
    edges = raw["edges"]
    if not verts:
        raise GraphError("graph has no vertices")

    p = len(verts)
    b = np.zeros(p, dtype=float)
    seen = set()
    for entry in verts:
        unknown = set(entry) - {"id", "b"}
        if unknown:
            raise GraphError(f"unknown vertex keys: {sorted(unknown)}")
        j = entry["id"]
        if not isinstance(j, int) or not 0 <= j < p or j in seen:
            raise GraphError(f"vertex ids must be dense integers 0..{p - 1}; got {j!r}")
        seen.add(j)
        b[j] = float(entry["b"])

    q = len(edges)
    eu = np.zeros(q, dtype=np.int64)
    ev = np.zeros(q, dtype=np.int64)
    a = np.zeros(q, dtype=float)
    seen = set()
    for entry in edges:
        unknown = set(entry) - {"id", "u", "v", "a"}
        if unknown:
            raise GraphError(f"unknown edge keys: {sorted(unknown)}")
        e = entry["id"]
        if not isinstance(e, int) or not 0 <= e < q or e in seen:
            raise GraphError(f"edge ids must be dense integers 0..{q - 1}; got {e!r}")
        seen.add(e)
        u, v = entry["u"], entry["v"]
        if not (isinstance(u, int) and isinstance(v, int) and 0 <= u < p and 0 <= v < p):
            raise GraphError(f"edge {e} has endpoints outside 0..{p - 1}")
        eu[e], ev[e] = u, v
        a[e] = float(entry["a"])
        if not a[e] > 0:
            raise NonpositiveWeight(e)

    g = QuotientGraph(b=b, edge_u=eu, edge_v=ev, a=a)

    deg = g.degrees()
    for j in range(p):
        if deg[j] < 2:
            raise HasLeaf(j)

    # connectivity by BFS over undirected edges
    reached = np.zeros(p, dtype=bool)
    reached[0] = True
    stack = [0]
    adj: list[list[int]] = [[] for _ in range(p)]
    for e in range(q):
        adj[eu[e]].append(ev[e])
        adj[ev[e]].append(eu[e])
    while stack:
        u = stack.pop()
        for v in adj[u]:
            if not reached[v]:
                reached[v] = True
                stack.append(v)
    if not reached.all():
        raise Disconnected(int(np.flatnonzero(~reached)[0]))

    if g.ell < 1:
        # q >= p is forced for connected leafless multigraphs
        raise GraphError(f"graph has rank {g.ell} < 1 (q={q}, p={p})")

    g.b.flags.writeable = False
    g.edge_u.flags.writeable = False
    g.edge_v.flags.writeable = False
    g.a.flags.writeable = False
    return g


def spanning_decomposition(g: QuotientGraph, seed: int = 0) -> SpanningDecomposition:
    """Grow a spanning tree from vertex 0; the rest of the edges are broken.

    The tree is grown frontier-first with a seeded random edge priority, ties
    broken by edge id, so the result is deterministic for a fixed seed.
    Self-loops can never join a tree and are always broken; broken edges are
    assigned generators x_1..x_ell in edge-id order.
    """
    rng = np.random.default_rng(seed)
    priority = rng.permutation(g.q)

    in_tree = np.zeros(g.q, dtype=bool)
    visited = np.zeros(g.p, dtype=bool)
    visited[0] = True
    for _ in range(g.p - 1):
        best = None
        for e in range(g.q):
            if in_tree[e]:
                continue
            u, v = g.edge_u[e], g.edge_v[e]
            if visited[u] == visited[v]:
                continue
            key = (priority[e], e)
            if best is None or key < best[0]:
                best = (key, e)
        if best is None:
            raise Disconnected(int(np.flatnonzero(~visited)[0]))
        e = best[1]
        in_tree[e] = True
        visited[g.edge_u[e]] = True
        visited[g.edge_v[e]] = True

    tree = tuple(int(e) for e in np.flatnonzero(in_tree))
    broken = tuple(int(e) for e in np.flatnonzero(~in_tree))
    return SpanningDecomposition(tree_edges=tree, broken_edges=broken, seed=seed)


def schur_norm_bound(g: QuotientGraph) -> float:
    """Row-sum bound R with spec(H) inside [-R, R] for the lifted operator.

    R = max_j (|b_j| + sum of a over edge ends at j), loops counted twice.
    """
    s = np.abs(g.b).astype(float)
    np.add.at(s, g.edge_u, g.a)
    np.add.at(s, g.edge_v, g.a)
    return float(s.max())

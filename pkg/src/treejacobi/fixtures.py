"""Builders for the standard model graphs used in tests and examples."""

from __future__ import annotations

from .graph_model import QuotientGraph, validate

__all__ = [
    "loop_graph",
    "regular_graph",
    "ac_graph",
    "ace_graph",
    "fts_graph",
    "period2_graph",
    "rg_graph",
]


def _build(vertices, edges) -> QuotientGraph:
    return validate(
        {
            "vertices": [{"id": j, "b": float(b)} for j, b in enumerate(vertices)],
            "edges": [
                {"id": e, "u": int(u), "v": int(v), "a": float(a)}
                for e, (u, v, a) in enumerate(edges)
            ],
        }
    )


def loop_graph(a: float = 1.0, b: float = 0.0) -> QuotientGraph:
    """One vertex, one self-loop: the cover is the line (degree-2 tree)."""
    return _build([b], [(0, 0, a)])


def regular_graph(d: int, a: float = 1.0, b: float = 0.0) -> QuotientGraph:
    """Two vertices joined by d parallel edges: cover is the d-regular tree."""
    if d < 2:
        raise ValueError("degree must be >= 2")
    return _build([b, b], [(0, 1, a)] * d)


def ac_graph(a: float, c: float) -> QuotientGraph:
    """One vertex with two self-loops of weights a and c (degree-4 cover)."""
    return _build([0.0], [(0, 0, a), (0, 0, c)])


def ace_graph(a: float, c: float, e: float) -> QuotientGraph:
    """Two vertices joined by three edges of weights a, c, e (degree-3 cover)."""
    return _build([0.0, 0.0], [(0, 1, a), (0, 1, c), (0, 1, e)])


def fts_graph(weights) -> QuotientGraph:
    """Two vertices joined by d = len(weights) edges with the given weights.

    The cover is the d-regular tree whose edge weights around every vertex
    are a_1..a_d; zero potential.
    """
    ws = sorted((float(w) for w in weights), reverse=True)
    if len(ws) < 2:
        raise ValueError("need at least two edge weights")
    return _build([0.0, 0.0], [(0, 1, w) for w in ws])


def period2_graph(d: int, b: float, a: float = 1.0) -> QuotientGraph:
    """Two vertices with potentials +b and -b joined by d parallel edges."""
    if d < 2:
        raise ValueError("degree must be >= 2")
    return _build([b, -b], [(0, 1, a)] * d)


def rg_graph(r: int, g: int, a: float = 1.0) -> QuotientGraph:
    """Complete bipartite graph on r red and g green vertices, all weights a.

    Red vertices are ids 0..r-1 (degree g), green ids r..r+g-1 (degree r).
    """
    if r < 2 or g < 2:
        raise ValueError("r and g must be >= 2")
    edges = [(i, r + j, a) for i in range(r) for j in range(g)]
    return _build([0.0] * (r + g), edges)

"""Finite truncations of the cover and eigenvalue-counting experiments.

The cover is tiled by copies of the spanning tree ("blocks"), one per
reduced word in the free group on the broken-edge generators.  A ball of
radius r keeps the blocks at words of length <= r; its operator is the
restriction of the lifted Jacobi matrix.  Periodic boundary conditions
re-attach the free connectors on the boundary blocks through a pairing,
canonical (word -> letterwise-inverse word) or uniformly random per
generator, giving a finite cover of the quotient graph.

Words are tuples of nonzero signed integers, letter +j / -j for the two
directions of generator j; adjacency is by prepending a letter.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse

from .graph_model import QuotientGraph, SpanningDecomposition, schur_norm_bound, \
    spanning_decomposition

__all__ = [
    "TooLarge",
    "NotReduced",
    "UnbalancedConnectors",
    "CoverBlockBall",
    "CountingMeasure",
    "Pairing",
    "ball_size",
    "boundary_size",
    "build_ball",
    "opposite_word",
    "local_moment",
    "dos_moment",
    "free_bc_spectrum",
    "make_pairing",
    "periodic_bc_spectrum",
    "second_moment_defect",
    "kolmogorov_distance",
]


class TooLarge(ValueError):
    def __init__(self, n_r, cap):
        self.n_r = n_r
        self.cap = cap
        super().__init__(f"ball has {n_r} vertices, over the cap {cap}")


class NotReduced(ValueError):
    """Word contains an immediate cancellation."""


class UnbalancedConnectors(RuntimeError):
    """Free +/- connector counts disagree; the ball bookkeeping is broken."""


def ball_size(g: QuotientGraph, r: int) -> int:
    """Number of cover vertices in the radius-r block ball."""
    ell = g.ell
    blocks = 1 + sum(2 * ell * (2 * ell - 1) ** (k - 1) for k in range(1, r + 1))
    return g.p * blocks


def boundary_size(g: QuotientGraph, r: int) -> int:
    """Number of boundary blocks (words of length exactly r)."""
    ell = g.ell
    return 1 if r == 0 else 2 * ell * (2 * ell - 1) ** (r - 1)


def _check_word(word) -> tuple[int, ...]:
    w = tuple(int(x) for x in word)
    for i, x in enumerate(w):
        if x == 0:
            raise NotReduced("letter 0 is not a generator")
        if i > 0 and w[i] == -w[i - 1]:
            raise NotReduced(f"cancellation at position {i}")
    return w


def opposite_word(word) -> tuple[int, ...]:
    """Letterwise inverse without reversal; an involution on reduced words."""
    w = _check_word(word)
    return tuple(-x for x in w)


def _prepend(letter: int, word: tuple[int, ...]) -> tuple[int, ...]:
    if word and word[0] == -letter:
        return word[1:]
    return (letter,) + word


@dataclass(frozen=True)
class CoverBlockBall:
    """Radius-r block ball of the cover with its finite symmetric operator."""

    graph: QuotientGraph
    decomposition: SpanningDecomposition
    radius: int
    words: tuple[tuple[int, ...], ...]
    operator: scipy.sparse.csr_matrix
    boundary_words: tuple[tuple[int, ...], ...]

    @property
    def n_r(self) -> int:
        return self.operator.shape[0]

    def word_index(self) -> dict:
        return {w: i for i, w in enumerate(self.words)}

    def vertex_index(self, word_pos: int, vertex: int) -> int:
        return word_pos * self.graph.p + vertex


def build_ball(g: QuotientGraph, r: int, decomp: SpanningDecomposition | None = None,
               cap: int | None = 6000) -> CoverBlockBall:
    """Enumerate the block ball and assemble its sparse Jacobi operator."""
    if r < 0:
        raise ValueError("radius must be >= 0")
    if decomp is None:
        decomp = spanning_decomposition(g, seed=0)
    n_r = ball_size(g, r)
    if cap is not None and n_r > cap:
        raise TooLarge(n_r, cap)

    ell = decomp.ell
    letters = [s * j for j in range(1, ell + 1) for s in (1, -1)]
    words: list[tuple[int, ...]] = [()]
    frontier = [()]
    for _ in range(r):
        nxt = []
        for w in frontier:
            for letter in letters:
                if w and w[0] == -letter:
                    continue
                nxt.append((letter,) + w)
        words.extend(nxt)
        frontier = nxt
    index = {w: i for i, w in enumerate(words)}
    nb = len(words)
    p = g.p
    assert nb * p == n_r

    rows: list[int] = []
    cols: list[int] = []
    vals: list[float] = []

    def add(i, j, a):
        rows.append(i)
        cols.append(j)
        vals.append(a)
        rows.append(j)
        cols.append(i)
        vals.append(a)

    for ib in range(nb):
        base = ib * p
        for e in decomp.tree_edges:
            add(base + int(g.edge_u[e]), base + int(g.edge_v[e]), float(g.a[e]))
    # the generator-j link of block w joins it to block x_j w; enumerating
    # (w, j) pairs visits every inter-block edge exactly once
    for w, ib in index.items():
        for jgen, e in enumerate(decomp.broken_edges, start=1):
            w2 = _prepend(jgen, w)
            ib2 = index.get(w2)
            if ib2 is None:
                continue
            add(ib * p + int(g.edge_u[e]), ib2 * p + int(g.edge_v[e]), float(g.a[e]))

    H = scipy.sparse.coo_matrix((vals, (rows, cols)), shape=(n_r, n_r)).tocsr()
    H = H + scipy.sparse.diags(np.tile(g.b, nb))
    boundary = tuple(w for w in words if len(w) == r)
    assert len(boundary) == boundary_size(g, r)
    return CoverBlockBall(graph=g, decomposition=decomp, radius=r,
                          words=tuple(words), operator=H, boundary_words=boundary)


# -- moments ----------------------------------------------------------------


def local_moment(g: QuotientGraph, vertex: int, k: int,
                 decomp: SpanningDecomposition | None = None) -> float:
    """<delta_v, H^k delta_v> on the cover, exact by finite propagation.

    A closed walk of length k never leaves the radius-floor(k/2) ball, and
    the ball operator is an induced subtree, so no walks are added either.
    """
    if k < 0:
        raise ValueError("k must be >= 0")
    if k == 0:
        return 1.0
    ball = build_ball(g, k // 2, decomp=decomp, cap=None)
    vec = np.zeros(ball.n_r)
    vec[vertex] = 1.0  # root block is word 0
    for _ in range(k):
        vec = ball.operator @ vec
    return float(vec[vertex])


def dos_moment(g: QuotientGraph, k: int,
               decomp: SpanningDecomposition | None = None) -> float:
    """k-th moment of the density of states: vertex average of local moments."""
    if k < 0:
        raise ValueError("k must be >= 0")
    if k == 0:
        return 1.0
    ball = build_ball(g, k // 2, decomp=decomp, cap=None)
    vecs = np.zeros((ball.n_r, g.p))
    vecs[: g.p, :] = np.eye(g.p)
    out = vecs
    for _ in range(k):
        out = ball.operator @ out
    return float(np.trace(out[: g.p, :]) / g.p)


# -- eigenvalue counting ----------------------------------------------------


@dataclass(frozen=True)
class CountingMeasure:
    """Normalized eigenvalue counting measure of a finite truncation."""

    eigenvalues: np.ndarray
    radius_bound: float

    def __post_init__(self):
        ev = np.sort(np.asarray(self.eigenvalues, dtype=float))
        object.__setattr__(self, "eigenvalues", ev)
        slack = 1e-8 * max(1.0, self.radius_bound)
        if ev.size and (ev[0] < -self.radius_bound - slack or ev[-1] > self.radius_bound + slack):
            raise AssertionError("eigenvalues escape the spectral bound")

    @property
    def n(self) -> int:
        return self.eigenvalues.size

    def moment(self, k: int) -> float:
        return float(np.mean(self.eigenvalues**k))


def free_bc_spectrum(ball: CoverBlockBall) -> CountingMeasure:
    """All eigenvalues of the free-boundary ball operator."""
    ev = scipy.linalg.eigvalsh(ball.operator.toarray())
    return CountingMeasure(eigenvalues=ev, radius_bound=schur_norm_bound(ball.graph))


def second_moment_defect(ball: CoverBlockBall) -> float:
    """Boundary sum n_r^{-1} * sum over outward edges of a^2.

    Equals the second-moment gap between the density of states and the
    free-boundary counting measure: every walk of length two that the
    truncation lost steps once across an edge leaving the ball, and those
    are exactly the free connectors of the boundary blocks.
    """
    g = ball.graph
    total = 0.0
    for w in ball.boundary_words:
        for jgen, e in enumerate(ball.decomposition.broken_edges, start=1):
            if not w or w[0] != -jgen:  # "+" connector of jgen is free
                total += float(g.a[e]) ** 2
            if not w or w[0] != jgen:  # "-" connector free
                total += float(g.a[e]) ** 2
    return total / ball.n_r


# -- pairings ---------------------------------------------------------------


@dataclass(frozen=True)
class Pairing:
    """Per-generator matching of free + connectors to free - connectors.

    pairs[j] lists (word_plus, word_minus): the x_j link out of word_plus is
    attached to the x_j link into word_minus.
    """

    mode: str
    seed: int | None
    pairs: dict[int, tuple[tuple[tuple[int, ...], tuple[int, ...]], ...]]


def _free_connectors(ball: CoverBlockBall, jgen: int):
    plus = [w for w in ball.boundary_words if not w or w[0] != -jgen]
    minus = [w for w in ball.boundary_words if not w or w[0] != jgen]
    return plus, minus


def make_pairing(ball: CoverBlockBall, mode: str = "canonical",
                 seed: int | None = None) -> Pairing:
    """Build a periodic pairing of the ball's free boundary connectors.

    canonical: the + connector of generator j at word w is linked to the -
    connector of j at the opposite word (letterwise inverse of w).
    random: an independent uniform bijection per generator, seeded.
    """
    ell = ball.decomposition.ell
    pairs: dict[int, tuple] = {}
    rng = np.random.default_rng(seed) if mode == "random" else None
    expected = ((2 * ell - 1) * boundary_size(ball.graph, ball.radius)) // (2 * ell) \
        if ball.radius >= 1 else 1
    for jgen in range(1, ell + 1):
        plus, minus = _free_connectors(ball, jgen)
        if len(plus) != len(minus) or len(plus) != expected:
            raise UnbalancedConnectors(
                f"generator {jgen}: {len(plus)} free '+' vs {len(minus)} free '-'"
                f" (expected {expected})"
            )
        if mode == "canonical":
            minus_set = set(minus)
            matched = []
            for w in plus:
                wt = opposite_word(w)
                if wt not in minus_set:
                    raise UnbalancedConnectors(f"opposite of {w} is not a free '-'")
                matched.append((w, wt))
            pairs[jgen] = tuple(matched)
        elif mode == "random":
            perm = rng.permutation(len(minus))
            pairs[jgen] = tuple((plus[i], minus[int(perm[i])]) for i in range(len(plus)))
        else:
            raise ValueError(f"unknown pairing mode {mode!r}")
    return Pairing(mode=mode, seed=seed, pairs=pairs)


def periodic_bc_spectrum(ball: CoverBlockBall, pairing: Pairing) -> CountingMeasure:
    """Eigenvalues of the ball operator with paired boundary connectors.

    The paired graph is a finite cover of the quotient, so every vertex
    recovers its full degree; this is checked against the per-vertex
    incident weight before the eigensolve.
    """
    g = ball.graph
    index = ball.word_index()
    H = ball.operator.tolil(copy=True)
    for jgen, matched in pairing.pairs.items():
        e = ball.decomposition.broken_edges[jgen - 1]
        a = float(g.a[e])
        u, v = int(g.edge_u[e]), int(g.edge_v[e])
        for w_plus, w_minus in matched:
            s = index[w_plus] * g.p + u
            t = index[w_minus] * g.p + v
            H[s, t] += a
            H[t, s] += a
    H = H.tocsr()

    # full-degree audit: incident weight at every cover vertex must match
    # its quotient vertex (self-loop pair links land on the diagonal as 2a)
    want = np.zeros(g.p)
    np.add.at(want, g.edge_u, g.a)
    np.add.at(want, g.edge_v, g.a)
    diag = H.diagonal()
    absrow = np.abs(H) @ np.ones(H.shape[0]) - np.abs(diag)
    b_tiled = np.tile(g.b, len(ball.words))
    got = absrow + np.abs(diag - b_tiled)
    if not np.allclose(got, np.tile(want, len(ball.words)), atol=1e-9):
        raise UnbalancedConnectors("paired operator is not a full-degree cover")

    ev = scipy.linalg.eigvalsh(H.toarray())
    return CountingMeasure(eigenvalues=ev, radius_bound=schur_norm_bound(g))


def kolmogorov_distance(eigenvalues, cdf) -> float:
    """Sup distance between the empirical CDF of eigenvalues and cdf."""
    xs = np.sort(np.asarray(eigenvalues, dtype=float))
    n = xs.size
    F = np.asarray(cdf(xs), dtype=float)
    lo = np.max(F - np.arange(n) / n)
    hi = np.max((np.arange(n) + 1) / n - F)
    return float(max(lo, hi))

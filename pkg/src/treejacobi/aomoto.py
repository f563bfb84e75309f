"""Index bookkeeping for detected eigenvalues.

For an eigenvalue of the lifted operator, the set X1 of quotient vertices
whose Green's function has a pole there induces a forest in the quotient
graph, and the integer

    index = |X1| - #(edges inside X1) - |neighbors of X1 outside X1|

equals the period times the weight the density of states gives the
eigenvalue.  On regular graphs the same combinatorics forces the index
non-positive, so no eigenvalues exist at all; that case is checked by an
energy scan instead of a subset search.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dos import ATOM_LADDER, NonAtomic, point_mass, richardson_to_zero
from .graph_model import QuotientGraph, schur_norm_bound
from .mfield import greens_ladder

__all__ = [
    "CycleInSupport",
    "NotSupported",
    "AomotoReport",
    "RegularScanResult",
    "pole_support",
    "index_report",
    "regular_index_bound",
]


class CycleInSupport(RuntimeError):
    """Pole support contains a cycle, which a true eigenvalue cannot."""


class NotSupported(RuntimeError):
    """Pole support touches a self-loop; that variant is not implemented."""


def pole_support(g: QuotientGraph, lam: float, eps_ladder=None,
                 threshold: float = 1e-6) -> frozenset[int]:
    """Vertices whose Green's function has a pole at lam.

    A vertex joins the support when its extrapolated residue exceeds the
    threshold; residues of genuine poles are rational multiples of 1 and sit
    far above it.
    """
    pm = point_mass(g, lam, eps_ladder=eps_ladder)
    return frozenset(j for j, w in enumerate(pm.per_vertex) if w > threshold)


@dataclass(frozen=True)
class AomotoReport:
    lam: float
    X1: frozenset[int]
    Xm1: frozenset[int]
    p_X1: int
    q_X1: int
    p_Xm1: int
    index: int
    dos_mass: float
    mass_times_p: float
    consistent: bool

    def to_json_dict(self) -> dict:
        return {
            "lambda": self.lam,
            "X1": sorted(self.X1),
            "Xm1": sorted(self.Xm1),
            "p_X1": self.p_X1,
            "q_X1": self.q_X1,
            "p_Xm1": self.p_Xm1,
            "index": self.index,
            "dos_mass": self.dos_mass,
            "mass_times_p": self.mass_times_p,
            "consistent": self.consistent,
        }


def _index_from_support(g: QuotientGraph, X1: frozenset[int]) -> tuple[int, int, frozenset[int]]:
    """(q_X1, index, Xm1) for a given support set; validates its shape."""
    inside = []
    for e in range(g.q):
        u, v = int(g.edge_u[e]), int(g.edge_v[e])
        if u == v and u in X1:
            raise NotSupported(
                f"pole support touches self-loop {e} at vertex {u}; "
                "the self-loop index variant is not implemented"
            )
        if u in X1 and v in X1:
            inside.append(e)

    parent = {j: j for j in X1}

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for e in inside:
        ru, rv = find(int(g.edge_u[e])), find(int(g.edge_v[e]))
        if ru == rv:
            raise CycleInSupport(f"edge {e} closes a cycle inside the pole support")
        parent[ru] = rv

    Xm1 = set()
    for e in range(g.q):
        u, v = int(g.edge_u[e]), int(g.edge_v[e])
        if u in X1 and v not in X1:
            Xm1.add(v)
        if v in X1 and u not in X1:
            Xm1.add(u)
    index = len(X1) - len(inside) - len(Xm1)
    return len(inside), index, frozenset(Xm1)


def index_report(g: QuotientGraph, lam: float, threshold: float = 1e-6,
                 tol: float = 1e-3) -> AomotoReport:
    """Index of the eigenvalue at lam, audited against the measured weight."""
    X1 = pole_support(g, lam, threshold=threshold)
    if not X1:
        raise ValueError(f"no pole support at lambda={lam}: nothing to index")
    q_X1, index, Xm1 = _index_from_support(g, X1)
    pm = point_mass(g, lam)
    mass_times_p = pm.weight * g.p
    return AomotoReport(
        lam=float(lam),
        X1=X1,
        Xm1=Xm1,
        p_X1=len(X1),
        q_X1=q_X1,
        p_Xm1=len(Xm1),
        index=index,
        dos_mass=pm.weight,
        mass_times_p=mass_times_p,
        consistent=bool(abs(mass_times_p - index) <= tol),
    )


@dataclass(frozen=True)
class RegularScanResult:
    n_scan: int
    max_residue: float
    atoms_found: tuple[float, ...]
    passed: bool


def regular_index_bound(g: QuotientGraph, n_scan: int = 256,
                        threshold: float = 1e-3) -> RegularScanResult:
    """Assert the no-point-spectrum consequence for regular graphs.

    On a regular graph the index of any eigenvalue would be non-positive
    while the trace of its eigenprojection is strictly positive, so there
    are none; numerically, no scanned energy may carry a stable residue.
    """
    deg = g.degrees()
    if not np.all(deg == deg[0]):
        raise ValueError("graph is not regular; the index bound does not apply")
    R = schur_norm_bound(g)
    xs = np.unique(np.concatenate([np.linspace(-R, R, n_scan), [0.0]]))
    ladder = np.asarray(ATOM_LADDER)
    G = greens_ladder(g, xs, ladder)
    vals = ladder[:, None] * G.imag.mean(axis=1)
    est = richardson_to_zero(ladder, vals)
    tail = richardson_to_zero(ladder[-4:], vals[-4:])
    stable = np.abs(est - tail) < 1e-4
    found = tuple(float(x) for x, e, s in zip(xs, est, stable) if s and e > threshold)
    return RegularScanResult(
        n_scan=xs.size,
        max_residue=float(np.max(np.where(stable, est, 0.0))),
        atoms_found=found,
        passed=not found,
    )

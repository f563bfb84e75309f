"""Coupled m-function solver on the upper half-plane.

For each of the 2q directed edges of the quotient graph there is one
m-function: the value attached to a directed edge beta with head j is the
diagonal resolvent at j of the branch of the cover hanging at j once the
edge is cut.  The closed system is

    m(beta) = 1 / (-z + b_j - sum_{alpha out of j, alpha != reverse(beta)}
                                a_alpha^2 m(alpha))

and the p vertex Green's functions are assembled from the full sum over
directed edges out of each vertex.

The solver is a damped fixed-point iteration started at m = 0, which stays
inside the Herglotz cone Im m > 0 for Im z > 0 (the denominator has strictly
negative imaginary part, so even in floating point a sweep cannot leave the
cone).  When the sweep stalls or is already close, guarded Newton steps on
the polynomial form m*D - 1 = 0 finish quadratically.  Fresh solves start
high in the half-plane and descend; `continuation_solve` wraps this descent
for evaluation points just above the real axis.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph_model import QuotientGraph, schur_norm_bound

__all__ = [
    "NoConvergence",
    "BacktrackingPath",
    "MField",
    "solve_m",
    "solve_at_points",
    "continuation_solve",
    "greens_ladder",
    "greens_consistency",
    "greens_path",
    "sweep",
]


class NoConvergence(RuntimeError):
    """Fixed-point solve did not reach the requested residual."""

    def __init__(self, iterations, residual, z=None):
        self.iterations = iterations
        self.residual = residual
        self.z = z
        super().__init__(
            f"no convergence after {iterations} iterations (residual {residual:.3e}"
            + (f" at z={z}" if z is not None else "") + ")"
        )


class BacktrackingPath(ValueError):
    """Path is not a non-backtracking walk from the stated base vertex."""


@dataclass(frozen=True)
class MField:
    """Converged m- and Green's function values at one half-plane point.

    m is indexed by directed-edge id, G by vertex id.  residual is the
    scaled sup-norm defect of the fixed-point system, max over directed
    edges of |m - sweep(m)| / (1 + |m|).
    """

    z: complex
    m: np.ndarray
    G: np.ndarray
    residual: float
    iterations: int

    def __post_init__(self):
        if not self.z.imag > 0:
            raise ValueError("MField requires Im z > 0")
        bound = 1.0 / self.z.imag * (1.0 + 1e-8) + 1e-300
        if np.any(np.abs(self.m) > bound) or np.any(np.abs(self.G) > bound):
            raise ValueError("resolvent bound |m|, |G| <= 1/Im z violated")
        if np.any(self.m.imag <= 0):
            raise ValueError("Herglotz property Im m > 0 violated")


class _Core:
    """Precomputed index arrays for one graph."""

    def __init__(self, g: QuotientGraph):
        self.g = g
        self.p = g.p
        self.n_de = 2 * g.q
        self.head = g.de_head()
        self.tail = g.de_tail()
        self.a2 = g.de_a() ** 2
        # S[beta, alpha] = 1 iff alpha is summed in the equation for m(beta)
        S = np.zeros((self.n_de, self.n_de))
        for beta in range(self.n_de):
            for alpha in range(self.n_de):
                if self.tail[alpha] == self.head[beta] and alpha != (beta ^ 1):
                    S[beta, alpha] = 1.0
        self.S = S
        V = np.zeros((self.p, self.n_de))
        for alpha in range(self.n_de):
            V[self.tail[alpha], alpha] = 1.0
        self.V = V
        self.b_head = g.b[self.head]
        self.R = schur_norm_bound(g)


def _sweep(core: _Core, z, m):
    """One fixed-point sweep; m has shape (2q,) or (2q, n), z scalar or (n,)."""
    D = -z + (core.b_head[:, None] if m.ndim == 2 else core.b_head) \
        - core.S @ (core.a2[:, None] * m if m.ndim == 2 else core.a2 * m)
    return 1.0 / D


def sweep(g: QuotientGraph, z, m):
    """Public single sweep of the m-system (used by the property tests)."""
    return _sweep(_Core(g), z, np.asarray(m, dtype=complex))


def _scaled_residual(m, F):
    return (np.abs(m - F) / (1.0 + np.abs(m))).max(axis=0)


def _newton(core: _Core, z, m, tol, rounds=40):
    """Guarded Newton on m*D - 1 = 0 for a block of columns.

    Returns the improved m and the per-column scaled residual.  Steps that
    leave the Herglotz cone or fail to reduce the residual are shortened and
    ultimately rejected, falling back to the incoming iterate.
    """
    n = z.size
    n_de = core.n_de
    eye = np.eye(n_de)
    a2S = core.S * core.a2[None, :]
    cur = m.copy()
    F = _sweep(core, z, cur)
    res = _scaled_residual(cur, F)
    for _ in range(rounds):
        act = res > tol
        if not act.any():
            break
        mc = cur[:, act]
        zc = z[act]
        D = -zc + core.b_head[:, None] - core.S @ (core.a2[:, None] * mc)
        f = mc * D - 1.0
        # J[col, beta, gamma] = delta * D_beta - m_beta a2_gamma S[beta,gamma]
        J = eye[None, :, :] * D.T[:, :, None] - mc.T[:, :, None] * a2S[None, :, :]
        try:
            delta = np.linalg.solve(J, -f.T[:, :, None])[:, :, 0]
        except np.linalg.LinAlgError:
            break
        improved = np.zeros(mc.shape[1], dtype=bool)
        best = mc.copy()
        best_res = res[act].copy()
        step = delta.T
        for _halve in range(12):
            trial = mc + step
            okcone = (trial.imag > 0).all(axis=0)
            Ft = _sweep(core, zc, trial)
            rt = _scaled_residual(trial, Ft)
            take = okcone & (rt < best_res) & ~improved
            if take.any():
                best[:, take] = trial[:, take]
                best_res[take] = rt[take]
                improved |= take & (rt <= np.maximum(tol, 0.25 * res[act]))
            if improved.all():
                break
            step = 0.5 * step
        cur[:, act] = best
        res[act] = best_res
        if not improved.any():
            break
    return cur, res


def _solve_block(core: _Core, z, m0=None, tol=1e-13, max_iter=100000, damping=0.5):
    """Drive all columns of z to a converged m-field.

    Works on a shrinking set of unconverged columns (compacted, so the bulk
    iterations run on contiguous arrays) with guarded Newton polishing once
    a column is close or the damped sweep stalls.  Returns (m, residual,
    iterations) arrays; raises NoConvergence naming the worst column if the
    budget runs out.
    """
    z_all = np.atleast_1d(np.asarray(z, dtype=complex))
    n = z_all.size
    if np.any(z_all.imag <= 0):
        raise ValueError("all evaluation points need Im z > 0")
    m_all = np.zeros((core.n_de, n), dtype=complex) if m0 is None \
        else m0.astype(complex).copy()
    if m_all.ndim == 1:
        m_all = m_all[:, None].repeat(n, axis=1)

    res_all = np.zeros(n)
    iters_all = np.zeros(n, dtype=np.int64)
    ids = np.arange(n)
    zw = z_all.copy()
    mw = m_all.copy()
    checkpoint = np.full(n, np.inf)
    it = 0
    check_every = 12
    while ids.size and it < max_iter:
        F = _sweep(core, zw, mw)
        sr = _scaled_residual(mw, F)
        it += 1
        done = sr <= tol

        if it % check_every == 0 and not done.all():
            stalled = ~done & ((sr > 0.3 * checkpoint[: ids.size]) | (sr < 1e-5))
            checkpoint[: ids.size] = sr
            if stalled.any():
                mn, rn = _newton(core, zw[stalled], mw[:, stalled], tol)
                mw[:, stalled] = mn
                F = _sweep(core, zw, mw)
                sr = _scaled_residual(mw, F)
                done = sr <= tol

        if done.any():
            cols = ids[done]
            m_all[:, cols] = mw[:, done]
            res_all[cols] = sr[done]
            iters_all[cols] = it
            keep = ~done
            ids = ids[keep]
            zw = zw[keep]
            mw = mw[:, keep]
            checkpoint[: ids.size] = checkpoint[np.flatnonzero(keep)]
            if not ids.size:
                break
            F = _sweep(core, zw, mw)
        mw = (1.0 - damping) * mw + damping * F

    if ids.size:
        F = _sweep(core, zw, mw)
        sr = _scaled_residual(mw, F)
        still = sr > tol
        if still.any():
            worst = int(np.argmax(sr))
            raise NoConvergence(it, float(sr[worst]), z=complex(zw[worst]))
        m_all[:, ids] = mw
        res_all[ids] = sr
        iters_all[ids] = it
    return m_all, res_all, iters_all


def _greens_from_m(core: _Core, z, m):
    if m.ndim == 2:
        return 1.0 / (-z + core.g.b[:, None] - core.V @ (core.a2[:, None] * m))
    return 1.0 / (-z + core.g.b - core.V @ (core.a2 * m))


def _field_from_solution(core: _Core, z, m, res, iters) -> MField:
    G = _greens_from_m(core, z, m)
    return MField(z=complex(z), m=m, G=G, residual=float(res), iterations=int(iters))


def solve_m(g: QuotientGraph, z: complex, tol: float = 1e-13, m0=None,
            max_iter: int = 100000, damping: float = 0.5) -> MField:
    """Solve the coupled m-system at a single point with Im z > 0."""
    core = _Core(g)
    m, res, iters = _solve_block(core, complex(z), m0=m0, tol=tol,
                                 max_iter=max_iter, damping=damping)
    return _field_from_solution(core, complex(z), m[:, 0], res[0], iters[0])


def solve_at_points(g: QuotientGraph, zs, tol: float = 1e-13, m0=None,
                    max_iter: int = 100000):
    """Solve at several independent points; returns (m, G) arrays.

    m has shape (2q, n) and G shape (p, n) with columns matching zs.
    """
    core = _Core(g)
    zs = np.atleast_1d(np.asarray(zs, dtype=complex))
    m, _, _ = _solve_block(core, zs, m0=m0, tol=tol, max_iter=max_iter)
    return m, _greens_from_m(core, zs, m)


def _ladder(eps_start: float, eps_target: float):
    levels = []
    e = eps_start
    while e > eps_target * (1.0 + 1e-12):
        levels.append(e)
        e /= 2.0
    levels.append(eps_target)
    return levels


def continuation_solve(g: QuotientGraph, x: float, eps: float,
                       tol: float = 1e-13, max_iter: int = 100000) -> MField:
    """m-field at x + i*eps, reached by geometric descent from high above.

    Starts at height R + 1 (R the row-sum spectral bound) and halves the
    height down to eps, warm-starting every level; this keeps individual
    solves inside their fast-convergence regime even next to band edges.
    """
    core = _Core(g)
    if not eps > 0:
        raise ValueError("eps must be positive")
    m = None
    z = None
    for e in _ladder(core.R + 1.0, eps):
        z = np.array([complex(x, e)])
        m, res, iters = _solve_block(core, z, m0=m, tol=tol, max_iter=max_iter)
    return _field_from_solution(core, complex(z[0]), m[:, 0], res[0], iters[0])


def greens_ladder(g: QuotientGraph, xs, eps_list, tol: float = 1e-13,
                  max_iter: int = 100000) -> np.ndarray:
    """Green's functions at x + i*eps for a grid of x and a ladder of eps.

    Returns a complex array of shape (len(eps_list), p, len(xs)); eps_list
    entries are visited in descending order internally, warm-starting the
    whole grid from the previous height, and reported in the given order.
    """
    core = _Core(g)
    xs = np.atleast_1d(np.asarray(xs, dtype=float))
    eps_list = [float(e) for e in eps_list]
    if any(e <= 0 for e in eps_list):
        raise ValueError("eps values must be positive")
    descent = sorted(set(_ladder(core.R + 1.0, min(eps_list))) | set(eps_list),
                     reverse=True)
    out = np.empty((len(eps_list), core.p, xs.size), dtype=complex)
    m = None
    for e in descent:
        zs = xs + 1j * e
        m, _, _ = _solve_block(core, zs, m0=m, tol=tol, max_iter=max_iter)
        for i, ei in enumerate(eps_list):
            if ei == e:
                out[i] = _greens_from_m(core, zs, m)
    return out


def greens_consistency(g: QuotientGraph, field: MField) -> float:
    """Largest defect of the cross-relation between G and paired m-values.

    For every directed edge beta with head j and tail r the identity
    G_j = 1 / (1/m(beta) - a_beta^2 m(reverse beta)) must hold exactly.
    """
    core = _Core(g)
    m = field.m
    mr = m[np.arange(core.n_de) ^ 1]
    Gj = field.G[core.head]
    return float(np.max(np.abs(Gj - 1.0 / (1.0 / m - core.a2 * mr))))


def greens_path(g: QuotientGraph, field: MField, start: int, path) -> complex:
    """Off-diagonal Green's function along a non-backtracking cover walk.

    ``path`` lists directed-edge ids; step k moves from the current vertex
    across that edge to its head.  The value is G_start times the product of
    (-a m) over the steps.  Consecutive reversed edges raise
    BacktrackingPath, as does a path that does not chain from ``start``.
    """
    core = _Core(g)
    if not 0 <= start < g.p:
        raise ValueError(f"start vertex {start} out of range")
    val = complex(field.G[start])
    cur = start
    prev = None
    for de in path:
        de = int(de)
        if not 0 <= de < core.n_de:
            raise ValueError(f"directed edge {de} out of range")
        if core.tail[de] != cur:
            raise BacktrackingPath(f"edge {de} does not start at vertex {cur}")
        if prev is not None and de == (prev ^ 1):
            raise BacktrackingPath(f"edge {de} immediately reverses edge {prev}")
        val *= -np.sqrt(core.a2[de]) * field.m[de]
        cur = int(core.head[de])
        prev = de
    return val

"""Closed-form reference formulas for the exactly solvable models.

These are the independent answers the generic solver is validated against:
the regular tree (Kesten-McKay), the complete-bipartite red/green model, the
simplest period-2 model, and the weighted regular tree built from a single
dominant edge weight (the "fts" model), plus a radial half-line continued
fraction that reproduces the red-vertex Green's function.

All m-functions are obtained as the Herglotz root of an explicit quadratic:
for Im z > 0 exactly one root lies in the upper half-plane (the two roots
have a positive real product, so their arguments cannot both lie in (0, pi)).
That root is the one decaying at infinity.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "GapClosed",
    "NoConvergence",
    "RegularModel",
    "RgModel",
    "PeriodTwoModel",
    "FtsModel",
    "regular_m",
    "regular_G",
    "kesten_mckay",
    "kesten_mckay_cdf",
    "rg_m",
    "rg_G",
    "rg_density",
    "rg_atom",
    "p2_m",
    "p2_G",
    "p2_density",
    "fts_gap_open",
    "fts_kernel",
    "fts_row_norm_sq",
    "radial_halfline_m",
    "herglotz_quadratic_root",
    "tracked_sqrt",
]


class GapClosed(ValueError):
    """The kernel formulas require a spectral gap at zero."""


class NoConvergence(RuntimeError):
    """Continued-fraction depth cap exceeded."""


def herglotz_quadratic_root(A, B, C):
    """Root of A*m^2 + B*m + C = 0 with positive imaginary part.

    Caller guarantees exactly one root lies in the upper half-plane.
    """
    A = complex(A)
    s = np.sqrt(complex(B * B - 4.0 * A * C))
    r1 = (-B - s) / (2.0 * A)
    r2 = (-B + s) / (2.0 * A)
    root = r1 if r1.imag >= r2.imag else r2
    if root.imag <= 0:
        raise ValueError(f"no Herglotz root: {r1}, {r2}")
    return root


def tracked_sqrt(f, z, z_start, w_start, steps: int = 256):
    """sqrt(f(.)) continued from a known branch value along a segment.

    Walks from z_start (where the square root equals w_start) to z in straight
    line steps, at each step picking the sign of the principal square root
    closest to the previous value.  Steps are refined until the branch choice
    is unambiguous.
    """
    n = steps
    while n <= 2 ** 16:
        ts = np.linspace(0.0, 1.0, n + 1)
        zs = z_start + (z - z_start) * ts
        w = complex(w_start)
        ok = True
        for zk in zs[1:]:
            wk = np.sqrt(complex(f(zk)))
            if abs(wk - w) > abs(wk + w):
                wk = -wk
            if abs(wk - w) > 0.5 * abs(wk) + 1e-30:
                ok = False
                break
            w = wk
        if ok:
            return w
        n *= 4
    raise NoConvergence("branch tracking did not stabilize")


# -- degree-d regular tree ------------------------------------------------


@dataclass(frozen=True)
class RegularModel:
    d: int

    def __post_init__(self):
        if self.d < 2:
            raise ValueError("degree must be >= 2")

    @property
    def s_d(self) -> float:
        """Top of the spectrum, 2*sqrt(d-1)."""
        return 2.0 * np.sqrt(self.d - 1.0)


def regular_m(d: int, z: complex) -> complex:
    """m-function of the free Laplacian on the d-regular tree, Im z > 0."""
    return herglotz_quadratic_root(d - 1.0, z, 1.0)


def regular_G(d: int, z: complex) -> complex:
    return 1.0 / (-z - d * regular_m(d, z))


def kesten_mckay(d: int, lam) -> np.ndarray:
    """Density of states of the free d-regular tree at real energies."""
    lam = np.asarray(lam, dtype=float)
    s2 = 4.0 * (d - 1.0)
    inside = lam * lam < s2
    out = np.zeros_like(lam)
    lam_in = lam[inside]
    out[inside] = d * np.sqrt(s2 - lam_in**2) / (2.0 * np.pi * (d * d - lam_in**2))
    return out if out.ndim else float(out)


def kesten_mckay_cdf(d: int, x) -> np.ndarray:
    """Integrated density of states of the free d-regular tree.

    Closed form from the trigonometric substitution lam = s_d sin(theta);
    checked against quadrature of the density in the tests.
    """
    x = np.asarray(x, dtype=float)
    s = 2.0 * np.sqrt(d - 1.0)
    t = np.clip(x / s, -1.0, 1.0)
    theta = np.arcsin(t)
    with np.errstate(over="ignore"):
        tan_theta = np.tan(theta)
    second = (d - 2.0) * (np.arctan((d - 2.0) / d * tan_theta) + np.pi / 2.0)
    F = (d * (theta + np.pi / 2.0) - second) / (2.0 * np.pi)
    return F if F.ndim else float(F)


# -- red/green complete bipartite model -----------------------------------


@dataclass(frozen=True)
class RgModel:
    """r red vertices of degree g, g green vertices of degree r, all a = 1."""

    r: int
    g: int

    def __post_init__(self):
        if self.r < 2 or self.g < 2:
            raise ValueError("r and g must be >= 2")

    @property
    def gamma_plus(self) -> float:
        return (np.sqrt(self.r - 1.0) + np.sqrt(self.g - 1.0)) ** 2

    @property
    def gamma_minus(self) -> float:
        return (np.sqrt(self.r - 1.0) - np.sqrt(self.g - 1.0)) ** 2

    def phi(self, z):
        """Quartic whose square root enters every closed form."""
        z2 = z * z
        return z2 * z2 + 2.0 * (2.0 - (self.r + self.g)) * z2 + (self.r - self.g) ** 2

    def bands(self) -> list[tuple[float, float]]:
        gp, gm = np.sqrt(self.gamma_plus), np.sqrt(self.gamma_minus)
        if gm == 0.0:
            return [(-gp, gp)]
        return [(-gp, -gm), (gm, gp)]


def rg_m(model: RgModel, z: complex) -> tuple[complex, complex]:
    """(m_red, m_green) for Im z > 0.

    m_red solves z(r-1) m^2 + (z^2 + r - g) m + z = 0; m_green follows from
    the coupled relation m_green = 1/(-z - (r-1) m_red).
    """
    r, g = model.r, model.g
    m_r = herglotz_quadratic_root(z * (r - 1.0), z * z + (r - g), z)
    m_g = 1.0 / (-z - (r - 1.0) * m_r)
    return m_r, m_g


def rg_G(model: RgModel, z: complex) -> tuple[complex, complex]:
    """(G_red, G_green) assembled from the m-functions."""
    r, g = model.r, model.g
    m_r, m_g = rg_m(model, z)
    G_r = 1.0 / (-z - g * m_g)
    G_g = 1.0 / (-z - r * m_r)
    return G_r, G_g


def rg_density(model: RgModel, lam) -> np.ndarray:
    """Absolutely continuous density of states of the red/green model."""
    r, g = model.r, model.g
    lam = np.asarray(lam, dtype=float)
    lam2 = lam * lam
    inside = (lam2 >= model.gamma_minus) & (lam2 <= model.gamma_plus)
    out = np.zeros_like(lam)
    lam_in = lam[inside]
    neg_phi = -model.phi(lam_in)
    safe = np.where(np.abs(lam_in) < 1e-12, 1.0, np.abs(lam_in))
    val = r * g * np.sqrt(np.maximum(neg_phi, 0.0)) / (
        np.pi * safe * (r + g) * (r * g - lam_in**2)
    )
    # r == g only: the band passes through 0 where sqrt(-phi)/|lam| has a
    # finite limit sqrt(2(r+g-2))
    tiny = np.abs(lam_in) < 1e-12
    if np.any(tiny):
        val = np.where(
            tiny,
            r * g * np.sqrt(2.0 * (r + g - 2.0)) / (np.pi * (r + g) * r * g),
            val,
        )
    out[inside] = val
    return out if out.ndim else float(out)


def rg_atom(model: RgModel) -> float:
    """Weight of the point mass at zero in the density of states."""
    return abs(model.r - model.g) / (model.r + model.g)


# -- simplest period-2 model ----------------------------------------------


@dataclass(frozen=True)
class PeriodTwoModel:
    """Degree-d tree, a = 1, potentials +b and -b on alternating vertices."""

    d: int
    b: float

    def __post_init__(self):
        if self.d < 2:
            raise ValueError("degree must be >= 2")
        if not self.b > 0:
            raise ValueError("b must be positive")

    @property
    def c(self) -> float:
        """Outer band edge, sqrt(b^2 + 4(d-1))."""
        return float(np.sqrt(self.b * self.b + 4.0 * (self.d - 1.0)))

    def bands(self) -> list[tuple[float, float]]:
        return [(-self.c, -self.b), (self.b, self.c)]


def p2_m(model: PeriodTwoModel, z: complex) -> tuple[complex, complex]:
    """(m_plus, m_minus): m at a root vertex with potential +b resp. -b.

    m_plus solves (d-1)(b-z) m^2 + (b^2-z^2) m - (z+b) = 0 and m_minus the
    b -> -b mirror; the Herglotz roots are taken.
    """
    d, b = model.d, model.b
    m_p = herglotz_quadratic_root((d - 1.0) * (b - z), b * b - z * z, -(z + b))
    m_m = herglotz_quadratic_root((d - 1.0) * (-b - z), b * b - z * z, -(z - b))
    return m_p, m_m


def p2_G(model: PeriodTwoModel, z: complex) -> tuple[complex, complex]:
    d, b = model.d, model.b
    m_p, m_m = p2_m(model, z)
    G_p = 1.0 / (-z + b - d * m_m)
    G_m = 1.0 / (-z - b - d * m_p)
    return G_p, G_m


def p2_density(model: PeriodTwoModel, lam) -> np.ndarray:
    """Density of states, supported on [-c,-b] u [b,c].

    Diverges like an inverse square root at the inner edges +-b (as in the
    one-dimensional period-2 chain, which is the d = 2 case).
    """
    d, b, c = model.d, model.b, model.c
    lam = np.asarray(lam, dtype=float)
    lam2 = lam * lam
    inside = (lam2 > b * b) & (lam2 < c * c)
    out = np.zeros_like(lam)
    lam_in = lam[inside]
    num = np.abs(lam_in) * d * np.sqrt(c * c - lam_in**2)
    den = 2.0 * np.pi * (c * c + (d - 2.0) ** 2 - lam_in**2) * np.sqrt(lam_in**2 - b * b)
    out[inside] = num / den
    return out if out.ndim else float(out)


# -- weighted regular tree (free product of d involutions) ----------------


@dataclass(frozen=True)
class FtsModel:
    """Degree-d tree with edge weights a_1 >= ... >= a_d > 0, zero potential.

    Words over letters 1..d with no immediate repeats index the vertices
    relative to a base point; letter j crosses the weight-a_j edge.
    """

    weights: tuple[float, ...]

    def __post_init__(self):
        ws = tuple(float(w) for w in self.weights)
        if len(ws) < 2 or any(w <= 0 for w in ws):
            raise ValueError("need >= 2 positive weights")
        if any(ws[i] < ws[i + 1] for i in range(len(ws) - 1)):
            raise ValueError("weights must be sorted non-increasing")
        object.__setattr__(self, "weights", ws)

    @property
    def d(self) -> int:
        return len(self.weights)

    @property
    def tail_sum(self) -> float:
        return sum(w * w for w in self.weights[1:])


def fts_gap_open(model: FtsModel) -> bool:
    """True iff zero is outside the spectrum: a_1^2 > a_2^2 + ... + a_d^2."""
    return model.weights[0] ** 2 > model.tail_sum


def _check_reduced_word(word) -> tuple[int, ...]:
    w = tuple(int(x) for x in word)
    for i, x in enumerate(w):
        if not 1 <= x:
            raise ValueError(f"letters are 1-based indices; got {x}")
        if i > 0 and w[i - 1] == x:
            raise ValueError(f"word not reduced: repeated letter at position {i}")
    return w


def fts_kernel(model: FtsModel, word) -> float:
    """Zero-energy Green's function entry G_{e,y}(0) for the word y.

    Nonzero only on odd words alternating x_1 k_1 x_1 k_2 ... x_1, where it is
    (1/a_1) * prod_i (-a_{k_i}/a_1).
    """
    if not fts_gap_open(model):
        raise GapClosed("kernel formula needs the gap at zero open")
    w = _check_reduced_word(word)
    if any(x > model.d for x in w):
        raise ValueError("letter index exceeds degree")
    if len(w) % 2 == 0:
        return 0.0
    if any(w[i] != 1 for i in range(0, len(w), 2)):
        return 0.0
    a = model.weights
    val = 1.0 / a[0]
    for i in range(1, len(w), 2):
        val *= -a[w[i] - 1] / a[0]
    return val


def fts_row_norm_sq(model: FtsModel) -> float:
    """Squared l2 norm of the zero-energy Green's row, summed over all words.

    Each shell of words of length 2M+1 contributes a1^-2 * ratio^M with
    ratio = (a_2^2+...+a_d^2)/a_1^2, so the total is a geometric series.
    """
    if not fts_gap_open(model):
        raise GapClosed("row norm diverges when the gap at zero is closed")
    a1sq = model.weights[0] ** 2
    ratio = model.tail_sum / a1sq
    return (1.0 / a1sq) / (1.0 - ratio)


# -- radial half-line reduction for the red/green model -------------------


def radial_halfline_m(r: int, g: int, z: complex, tol: float = 1e-12,
                      max_depth: int = 1 << 22) -> complex:
    """Green's function at a red vertex via the radial continued fraction.

    The radially symmetric part of the model about a red vertex is a
    half-line Jacobi matrix with zero diagonal and off-diagonals
    sqrt(g), sqrt(r-1), sqrt(g-1), sqrt(r-1), sqrt(g-1), ...; its m-function
    is evaluated by backward recurrence with depth doubling.
    """
    if z.imag <= 0:
        raise ValueError("need Im z > 0")

    def eval_depth(n: int) -> complex:
        t = 0.0 + 0.0j
        for k in range(n, 0, -1):
            osq = (r - 1.0) if k % 2 == 1 else (g - 1.0)
            t = 1.0 / (-z - osq * t)
        return 1.0 / (-z - g * t)

    depth = 32
    prev = eval_depth(depth)
    while depth <= max_depth:
        depth *= 2
        cur = eval_depth(depth)
        if abs(cur - prev) < tol:
            return cur
        prev = cur
    raise NoConvergence(f"continued fraction not converged at depth {max_depth}")

"""Density of states, band/gap structure, gap labels and point masses.

Everything here is Stieltjes inversion of the vertex Green's functions: the
absolutely continuous density at x is the limit of Im G(x+i*eps)/pi and an
atom's weight is the limit of eps*Im G(x+i*eps).  Since the Green's
functions are algebraic, both quantities are analytic in eps away from a
finite exceptional set, so Richardson extrapolation of a short ladder of
heights removes the smoothing bias instead of requiring one tiny eps.

Band edges behave like |x-e|^(1/2) or |x-e|^(-1/2) at the edge e; the edge
refiner detects the exponent and fits the linearly-vanishing quantity
(density squared, or its inverse) to locate e far below grid resolution.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .graph_model import QuotientGraph, schur_norm_bound
from .mfield import NoConvergence, greens_ladder

__all__ = [
    "UnresolvedStructure",
    "NonAtomic",
    "DensityGrid",
    "Band",
    "Gap",
    "PointMass",
    "SpectralReport",
    "SymmetryCheck",
    "density_grid",
    "detect_structure",
    "point_mass",
    "symmetry_check",
    "report_moments",
    "richardson_to_zero",
    "adaptive_simpson",
]

DEFAULT_LADDER = (1e-4, 1e-5, 1e-6)
ATOM_LADDER = tuple(np.geomspace(1e-6, 1e-9, 7))


class UnresolvedStructure(RuntimeError):
    """Band/gap candidates too close together for the working resolution."""


class NonAtomic(RuntimeError):
    """The pole-weight extrapolation did not stabilize at this energy."""


def richardson_to_zero(eps, vals) -> np.ndarray:
    """Extrapolate samples vals[i] = f(eps[i]) polynomially to eps = 0.

    vals has shape (len(eps), ...); Neville's scheme is applied along the
    first axis.
    """
    eps = np.asarray(eps, dtype=float)
    T = [np.asarray(v, dtype=float) for v in vals]
    n = len(T)
    for j in range(1, n):
        T = [
            (eps[i] * T[i + 1] - eps[i + j] * T[i]) / (eps[i] - eps[i + j])
            for i in range(n - j)
        ]
    return T[0]


# -- density evaluation ----------------------------------------------------


@dataclass(frozen=True)
class DensityGrid:
    """Raw smoothed densities (1/pi) Im G_j(x + i*eps) on a grid."""

    xs: np.ndarray
    eps: float
    per_vertex: np.ndarray  # (p, n)
    averaged: np.ndarray  # (n,)

    def to_csv(self) -> str:
        p = self.per_vertex.shape[0]
        header = "x,eps,density_avg," + ",".join(f"density_v{j}" for j in range(p))
        lines = [header]
        for i, x in enumerate(self.xs):
            cells = [f"{x:.17g}", f"{self.eps:.17g}", f"{self.averaged[i]:.17g}"]
            cells += [f"{self.per_vertex[j, i]:.17g}" for j in range(p)]
            lines.append(",".join(cells))
        return "\n".join(lines) + "\n"


def _clip_density(rho: np.ndarray) -> np.ndarray:
    # extrapolation can overshoot a little below zero right at a band edge
    if np.any(rho < -5e-3):
        raise AssertionError(f"density came out negative: min {rho.min():.3e}")
    return np.maximum(rho, 0.0)


def density_grid(g: QuotientGraph, xs, eps: float, tol: float = 1e-13) -> DensityGrid:
    """Per-vertex and averaged smoothed density on a grid at one height."""
    xs = np.atleast_1d(np.asarray(xs, dtype=float))
    G = greens_ladder(g, xs, [eps], tol=tol)[0]
    per_vertex = _clip_density(G.imag / np.pi)
    return DensityGrid(xs=xs, eps=float(eps), per_vertex=per_vertex,
                       averaged=per_vertex.mean(axis=0))


def _avg_density_extrap(g: QuotientGraph, xs, edge_dist=None, tol: float = 1e-13):
    """Averaged density extrapolated to eps = 0.

    edge_dist, when given, is the distance of each point to the nearest
    band edge; the eps ladder is scaled well below it so the extrapolation
    stays in its convergent regime even close to an edge.
    """
    xs = np.atleast_1d(np.asarray(xs, dtype=float))
    out = np.empty(xs.size)
    if edge_dist is None:
        ladder = np.asarray(DEFAULT_LADDER)
        G = greens_ladder(g, xs, ladder, tol=tol)
        rho = G.imag.mean(axis=1) / np.pi
        return _clip_density(richardson_to_zero(ladder, rho))

    edge_dist = np.broadcast_to(np.asarray(edge_dist, dtype=float), xs.shape)
    # eps far below the edge distance keeps the extrapolation convergent even
    # where the density diverges; coarse buckets keep the descents few
    base = np.clip(edge_dist / 512.0, 1e-8, 1e-4)
    buckets = np.exp2(3.0 * np.floor(np.log2(base) / 3.0))
    for eb in np.unique(buckets):
        sel = buckets == eb
        ladder = np.array([eb, eb / 2.0, eb / 4.0])
        G = greens_ladder(g, xs[sel], ladder, tol=tol)
        rho = G.imag.mean(axis=1) / np.pi
        out[sel] = richardson_to_zero(ladder, rho)
    return _clip_density(out)


# -- quadrature -------------------------------------------------------------


def adaptive_simpson(f, a: float, b: float, tol, max_rounds: int = 20,
                     min_frac: float = 1e-4):
    """Breadth-first adaptive Simpson rule for a vector-valued integrand.

    ``f`` maps an array of points to an array (k, n) of integrand values;
    ``tol`` is a scalar or (k,) array of absolute tolerances for the whole
    interval.  All refinement happens level by level so that f is always
    called on batches.  Intervals shorter than min_frac of the span are
    accepted as-is, which stops the subdivision from chasing evaluation
    noise.
    """
    tol = np.atleast_1d(np.asarray(tol, dtype=float))
    if b <= a:
        return np.zeros(tol.shape)
    mid = 0.5 * (a + b)
    fa, fm, fb = (v[:, 0] for v in (f(np.array([a])), f(np.array([mid])), f(np.array([b]))))
    k = fa.shape[0]
    A = np.array([a]); B = np.array([b]); M = np.array([mid])
    FA = fa[:, None]; FM = fm[:, None]; FB = fb[:, None]
    S = (B - A) / 6.0 * (FA + 4.0 * FM + FB)
    total = np.zeros(k)
    span = b - a
    for _ in range(max_rounds):
        if A.size == 0:
            break
        m1 = 0.5 * (A + M)
        m2 = 0.5 * (M + B)
        F12 = f(np.concatenate([m1, m2]))
        F1 = F12[:, : m1.size]
        F2 = F12[:, m1.size:]
        Sl = (M - A) / 6.0 * (FA + 4.0 * F1 + FM)
        Sr = (B - M) / 6.0 * (FM + 4.0 * F2 + FB)
        err = (Sl + Sr - S) / 15.0
        frac = (B - A) / span
        ok = (np.abs(err) <= tol[:, None] * frac).all(axis=0) | (frac <= min_frac)
        total += (Sl + Sr + err)[:, ok].sum(axis=1)
        sp = ~ok
        A = np.concatenate([A[sp], M[sp]])
        Bn = np.concatenate([M[sp], B[sp]])
        Mn = np.concatenate([m1[sp], m2[sp]])
        FA = np.concatenate([FA[:, sp], FM[:, sp]], axis=1)
        FB = np.concatenate([FM[:, sp], FB[:, sp]], axis=1)
        FM = np.concatenate([F1[:, sp], F2[:, sp]], axis=1)
        B, M = Bn, Mn
        S = np.concatenate([Sl[:, sp], Sr[:, sp]], axis=1)
    else:
        # depth exhausted: accept the current Simpson sums
        total += S.sum(axis=1)
    return total


def _band_moments(g: QuotientGraph, lo: float, hi: float, kmax: int,
                  tol: float = 1e-9) -> np.ndarray:
    """Integrals of x^k times the density over one band, k = 0..kmax.

    The substitution x = edge +- t^2 removes both square-root vanishing and
    inverse-square-root divergence at the edges.
    """
    mid = 0.5 * (lo + hi)
    scale = max(1.0, max(abs(lo), abs(hi)))
    tol_vec = tol * scale ** np.arange(kmax + 1)

    def make_integrand(edge, sign):
        def f(ts):
            xs = edge + sign * ts * ts
            dist = np.minimum(np.abs(xs - lo), np.abs(hi - xs))
            rho = _avg_density_extrap(g, xs, edge_dist=np.maximum(dist, 1e-12))
            base = 2.0 * ts * rho
            return np.array([base * xs**k for k in range(kmax + 1)])
        return f

    total = np.zeros(kmax + 1)
    for edge, sign, T in ((lo, +1.0, np.sqrt(mid - lo)), (hi, -1.0, np.sqrt(hi - mid))):
        f = make_integrand(edge, sign)
        # skip the removable 0/0 point at t = 0 (the integrand has a finite
        # limit there when the density diverges); the sliver is analytic and
        # a one-point estimate of it is far below tolerance
        t0 = 1e-3 * T
        total += f(np.array([t0]))[:, 0] * t0
        total += adaptive_simpson(f, t0, T, tol_vec / 2)
    return total


# -- point masses -----------------------------------------------------------


@dataclass(frozen=True)
class PointMass:
    location: float
    weight: float
    weight_times_p: int
    per_vertex: tuple[float, ...]

    def to_json_dict(self) -> dict:
        return {
            "location": self.location,
            "weight": self.weight,
            "weight_times_p": self.weight_times_p,
            "per_vertex": list(self.per_vertex),
        }


def point_mass(g: QuotientGraph, x: float, eps_ladder=None, tol: float = 1e-13,
               stab_tol: float = 1e-5) -> PointMass:
    """Weight of the spectral measures at {x} by pole-residue extrapolation.

    Per-vertex weights are the extrapolated values of eps * Im G_j(x+i*eps)
    down the ladder; the average over vertices is the density-of-states
    weight.  Raises NonAtomic when full-ladder and tail-window
    extrapolations disagree, which happens exactly when x carries no pole
    (inside the a.c. spectrum the values decay linearly and both windows
    agree on ~0, so plain a.c. points report zero weight instead).
    """
    ladder = np.asarray(ATOM_LADDER if eps_ladder is None else eps_ladder, dtype=float)
    if ladder.size < 4:
        raise ValueError("need at least 4 ladder heights")
    G = greens_ladder(g, [x], ladder, tol=tol)[:, :, 0]
    vals = ladder[:, None] * G.imag
    full = richardson_to_zero(ladder, vals)
    tail = richardson_to_zero(ladder[-4:], vals[-4:])
    if np.max(np.abs(full - tail)) > stab_tol * max(1.0, np.max(np.abs(full))):
        raise NonAtomic(f"residue extrapolation unstable at x={x}")
    weights = np.where(np.abs(full) < 1e-9, 0.0, full)
    if np.any(weights < 0):
        raise NonAtomic(f"negative residue extrapolation at x={x}")
    avg = float(weights.mean())
    return PointMass(
        location=float(x),
        weight=avg,
        weight_times_p=int(round(avg * g.p)),
        per_vertex=tuple(float(w) for w in weights),
    )


# -- structure detection ----------------------------------------------------


@dataclass(frozen=True)
class Band:
    lo: float
    hi: float
    mass: float

    def to_json_dict(self) -> dict:
        return {"lo": self.lo, "hi": self.hi, "mass": self.mass}


@dataclass(frozen=True)
class Gap:
    lo: float
    hi: float
    ids_value: float
    label_j: int
    label_error: float

    def to_json_dict(self) -> dict:
        return {
            "lo": self.lo,
            "hi": self.hi,
            "ids_value": self.ids_value,
            "label": f"{self.label_j}",
            "label_error": self.label_error,
        }


@dataclass(frozen=True)
class SpectralReport:
    bands: tuple[Band, ...]
    gaps: tuple[Gap, ...]
    point_masses: tuple[PointMass, ...]
    total_mass: float
    period: int
    radius: float
    resolution: float

    def to_json_dict(self, provenance: dict | None = None) -> dict:
        out = {
            "bands": [b.to_json_dict() for b in self.bands],
            "gaps": [dict(g.to_json_dict(), label=f"{g.label_j}/{self.period}")
                     for g in self.gaps],
            "point_masses": [pm.to_json_dict() for pm in self.point_masses],
            "total_mass": self.total_mass,
            "period": self.period,
        }
        if provenance is not None:
            out["provenance"] = provenance
        return out


def _refine_edges(g: QuotientGraph, brackets, gap_threshold, resolution,
                  band_widths) -> list[float]:
    """Sharpen band-edge locations from scan brackets.

    brackets[i] = (x_outside, x_inside).  First bisection on the extrapolated
    density against the threshold, then three rounds of fitting the
    linearly-vanishing power of the density inside the band.
    """
    xo = np.array([br[0] for br in brackets], dtype=float)
    xi = np.array([br[1] for br in brackets], dtype=float)
    n = xo.size
    if n == 0:
        return []
    scale = max(1.0, np.abs(np.concatenate([xo, xi])).max())
    for _ in range(45):
        width = np.abs(xi - xo)
        if width.max() < 1e-5 * scale:
            break
        mid = 0.5 * (xo + xi)
        rho = _avg_density_extrap(g, mid, edge_dist=np.maximum(width / 4.0, 1e-9))
        inside = rho > gap_threshold
        xi = np.where(inside, mid, xi)
        xo = np.where(inside, xo, mid)

    edges = 0.5 * (xo + xi)
    sign = np.sign(xi - xo)
    sign[sign == 0] = 1.0
    # fit windows must stay below the scale on which the density profile
    # varies, so they start small (the bisection is already accurate) and
    # only re-expand to cover a correction that turned out larger
    W = np.minimum(np.full(n, 5e-4 * scale), 0.3 * np.asarray(band_widths, dtype=float))
    n_samp = 12
    for _round in range(4):
        offsets = np.geomspace(1.0 / 8.0, 1.0, n_samp)
        xs = edges[:, None] + sign[:, None] * W[:, None] * offsets[None, :]
        dist = (W[:, None] * offsets[None, :]).ravel()
        rho = _avg_density_extrap(g, xs.ravel(), edge_dist=dist).reshape(n, n_samp)
        rho = np.maximum(rho, 1e-300)
        for i in range(n):
            u = W[i] * offsets
            slope = np.polyfit(np.log(u), np.log(rho[i]), 1)[0]
            y = rho[i] ** 2 if slope > 0 else np.minimum(rho[i], 1e100) ** -2.0
            coef = np.polyfit(u, y, 2)
            roots = np.roots(coef)
            roots = roots[np.abs(roots.imag) < 1e-12 * (1 + np.abs(roots))].real
            if roots.size == 0:
                continue
            r = roots[np.argmin(np.abs(roots))]
            if abs(r) <= 0.5 * W[i]:
                edges[i] = edges[i] + sign[i] * r
                W[i] = max(16.0 * abs(r), W[i] / 8.0, 64e-7 * scale)
    return [float(e) for e in edges]


def _locate_pole(g: QuotientGraph, lo: float, hi: float, eps: float = 1e-8) -> float:
    """Locate a pole inside [lo, hi] as the zero crossing of Re G_avg.

    Near a pole of weight w one has Re G(x+i*eps) ~ w (loc-x)/((loc-x)^2+eps^2),
    which dwarfs the smooth background on the bracket and changes sign at the
    pole itself.
    """
    from scipy.optimize import brentq

    def val(x):
        G = greens_ladder(g, [x], [eps])[0]
        return float(G.real.mean())

    flo, fhi = val(lo), val(hi)
    if not (flo > 0 > fhi):
        # no clear crossing: fall back to the densest point of a fine scan
        xs = np.linspace(lo, hi, 33)
        G = greens_ladder(g, xs, [eps])[0]
        return float(xs[int(np.argmax(G.imag.mean(axis=0)))])
    return float(brentq(val, lo, hi, xtol=1e-12))


def detect_structure(g: QuotientGraph, resolution: float | None = None,
                     gap_threshold: float = 1e-3, quad_tol: float = 1e-9,
                     atom_weight_floor: float = 0.01) -> SpectralReport:
    """Locate bands, gaps with rational labels, and point masses.

    The scan classifies grid points by extrapolated density against
    gap_threshold, refines every band edge, integrates the density over each
    band (adaptive Simpson after the edge substitution x = edge + t^2) and
    assembles the integrated density of states in every gap from the masses
    below it.  Atoms split the gap they sit in.
    """
    R = schur_norm_bound(g)
    if resolution is None:
        resolution = 2.0 * R / 4096.0
    xs = np.arange(-R - 2 * resolution, R + 2.5 * resolution, resolution)
    n = xs.size
    ladder = np.asarray(DEFAULT_LADDER)
    Gl = greens_ladder(g, xs, ladder)
    rho_ladder = Gl.imag.mean(axis=1) / np.pi  # (len(ladder), n)

    # -- atoms first: their poles must be subtracted before classifying ------
    i_min = int(np.argmin(ladder))
    west = ladder[i_min] * np.pi * rho_ladder[i_min]  # ~ per-point weight estimate
    cand_idx = np.flatnonzero(west > atom_weight_floor)
    cand_clusters: list[list[int]] = []
    for i in cand_idx:
        if cand_clusters and i - cand_clusters[-1][-1] <= 1:
            cand_clusters[-1].append(i)
        else:
            cand_clusters.append([i])

    atom_locs = []
    if np.all(g.b == 0.0):
        atom_locs.append(0.0)
    for cluster in cand_clusters:
        lo_c = xs[max(cluster[0] - 1, 0)]
        hi_c = xs[min(cluster[-1] + 1, n - 1)]
        if any(lo_c <= loc <= hi_c for loc in atom_locs):
            continue
        atom_locs.append(_locate_pole(g, lo_c, hi_c))

    point_masses = []
    seen: list[float] = []
    for loc in atom_locs:
        if any(abs(loc - s) < max(resolution, 1e-6) for s in seen):
            continue
        seen.append(loc)
        try:
            pm = point_mass(g, loc)
        except (NonAtomic, NoConvergence):
            continue
        if pm.weight > 1e-8:
            point_masses.append(pm)
    point_masses.sort(key=lambda pm: pm.location)

    for pm in point_masses:
        for i, eps in enumerate(ladder):
            rho_ladder[i] -= pm.weight * (eps / np.pi) / ((xs - pm.location) ** 2 + eps**2)

    rho = _clip_density(richardson_to_zero(ladder, rho_ladder))
    inside = rho > gap_threshold

    runs = []
    i = 0
    while i < n:
        if inside[i]:
            j = i
            while j + 1 < n and inside[j + 1]:
                j += 1
            runs.append((i, j))
            i = j + 1
        else:
            i += 1
    if not runs:
        raise UnresolvedStructure("no spectrum found above the density threshold")
    for (i0, j0), (i1, _) in zip(runs, runs[1:]):
        if j0 - i0 < 2 or i1 - j0 < 3:
            raise UnresolvedStructure(
                f"band/gap near x={xs[j0]:.6g} narrower than the resolution {resolution:.3g}"
            )

    brackets = []
    widths = []
    for i0, j0 in runs:
        w = xs[j0] - xs[i0]
        brackets.append((xs[i0 - 1], xs[i0]))
        widths.append(w)
        brackets.append((xs[j0 + 1], xs[j0]))
        widths.append(w)
    edges = _refine_edges(g, brackets, gap_threshold, resolution, widths)
    band_intervals = [(edges[2 * k], edges[2 * k + 1]) for k in range(len(runs))]

    # -- masses and gap labels ------------------------------------------------
    bands = []
    for lo, hi in band_intervals:
        mass = float(_band_moments(g, lo, hi, 0, tol=quad_tol)[0])
        bands.append(Band(lo=lo, hi=hi, mass=mass))

    def in_band(x):
        return any(b.lo - 1e-12 <= x <= b.hi + 1e-12 for b in bands)

    pieces: list[tuple[float, float]] = [(b.lo, b.hi) for b in bands]
    pieces += [(pm.location, pm.location) for pm in point_masses if not in_band(pm.location)]
    pieces.sort()

    gaps = []
    for (_, hi0), (lo1, _) in zip(pieces, pieces[1:]):
        if lo1 <= hi0:
            continue
        ids = 0.0
        for b in bands:
            if b.hi <= hi0 + 1e-12:
                ids += b.mass
        for pm in point_masses:
            if pm.location <= hi0 + 1e-12:
                ids += pm.weight
        j = int(round(ids * g.p))
        gaps.append(Gap(lo=hi0, hi=lo1, ids_value=ids, label_j=j,
                        label_error=abs(ids - j / g.p)))

    total = sum(b.mass for b in bands) + sum(pm.weight for pm in point_masses)
    return SpectralReport(
        bands=tuple(bands),
        gaps=tuple(gaps),
        point_masses=tuple(point_masses),
        total_mass=float(total),
        period=g.p,
        radius=R,
        resolution=float(resolution),
    )


def report_moments(g: QuotientGraph, report: SpectralReport, kmax: int,
                   quad_tol: float = 1e-9) -> np.ndarray:
    """Moments of the density of states from a report: quadrature plus atoms."""
    out = np.zeros(kmax + 1)
    for b in report.bands:
        out += _band_moments(g, b.lo, b.hi, kmax, tol=quad_tol)
    for pm in report.point_masses:
        out += pm.weight * pm.location ** np.arange(kmax + 1)
    return out


# -- symmetry ---------------------------------------------------------------


@dataclass(frozen=True)
class SymmetryCheck:
    applicable: bool
    even_ok: bool | None
    max_asymmetry: float | None
    zero_in_spectrum: bool | None
    passed: bool
    reason: str


def symmetry_check(g: QuotientGraph, report: SpectralReport, n_points: int = 64,
                   tol: float = 1e-6) -> SymmetryCheck:
    """Check the consequences of a vanishing potential.

    With b = 0 the operator is unitarily conjugate to its negative, so the
    density must be even; and when the period is odd, zero must belong to
    the spectrum.  Refuses (applicable=False) when some b is nonzero.
    """
    if np.any(g.b != 0.0):
        return SymmetryCheck(applicable=False, even_ok=None, max_asymmetry=None,
                             zero_in_spectrum=None, passed=False,
                             reason="potential is not identically zero")
    R = report.radius
    xs = np.linspace(R / n_points, R * (1 - 1.0 / n_points), n_points)
    rho_pos = _avg_density_extrap(g, xs)
    rho_neg = _avg_density_extrap(g, -xs)
    max_asym = float(np.max(np.abs(rho_pos - rho_neg)))
    even_ok = max_asym < tol

    zero_in = None
    passed = even_ok
    if g.p % 2 == 1:
        zero_in = any(b.lo <= 0.0 <= b.hi for b in report.bands) or any(
            abs(pm.location) < report.resolution for pm in report.point_masses
        )
        passed = passed and zero_in
    reason = "" if passed else "asymmetry or missing zero energy"
    return SymmetryCheck(applicable=True, even_ok=even_ok, max_asymmetry=max_asym,
                         zero_in_spectrum=zero_in, passed=passed, reason=reason)

"""Counting tools: Mordell-Weil lattice geometry, covers, bounds and the
combinatorial product lemma.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .elliptic import CurvePoint, WeierstrassCurve, add, neg, sub
from .errors import (BettiHeightError, BudgetExceeded, GenusTooSmall, RankMismatch,
                     ValidationError)
from .heights import tate_limit_height
from .intersection import MultiClass, MultiProjSpace, intersection_number

PSD_TOL = 1e-10
DEFAULT_TUPLE_BUDGET = 10 ** 6
DEFAULT_VOJTA_C = 7


@dataclass(frozen=True)
class MWLattice:
    """Gram matrix of the Neron-Tate pairing on generators."""

    gram: np.ndarray

    def __post_init__(self):
        G = np.atleast_2d(np.asarray(self.gram, dtype=float))
        if G.size == 0:
            G = np.zeros((0, 0))
        if G.shape[0] != G.shape[1]:
            raise ValidationError(f"gram must be square, got {G.shape}")
        if not np.allclose(G, G.T, rtol=1e-12, atol=1e-14):
            raise ValidationError("gram is not symmetric")
        G = (G + G.T) / 2
        if G.shape[0]:
            ev = np.linalg.eigvalsh(G)
            if ev[0] < -PSD_TOL * max(ev[-1], 0.0):
                raise ValidationError(f"gram is not positive semi-definite (min eigenvalue {ev[0]:.3g})")
        object.__setattr__(self, "gram", G)

    @property
    def rank(self) -> int:
        return self.gram.shape[0]

    @classmethod
    def identity(cls, rho: int) -> "MWLattice":
        return cls(np.eye(rho))

    @classmethod
    def from_points(cls, curve: WeierstrassCurve, points: Sequence[CurvePoint], **kw) -> "MWLattice":
        """Gram of <P, Q> = (h(P + Q) - h(P) - h(Q)) / 2 from Tate-limit heights."""
        h = lambda P: tate_limit_height(curve, P, **kw).canonical
        hs = [h(P) for P in points]
        n = len(points)
        G = np.zeros((n, n))
        for i in range(n):
            G[i, i] = hs[i]
            for j in range(i + 1, n):
                G[i, j] = G[j, i] = (h(add(curve, points[i], points[j])) - hs[i] - hs[j]) / 2
        return cls(G)


@dataclass(frozen=True)
class PointBudget:
    small_threshold: float
    large_bound_base: float = DEFAULT_VOJTA_C

    def __post_init__(self):
        if self.small_threshold < 0:
            raise ValidationError("B must be nonnegative")
        if self.large_bound_base < 1:
            raise ValidationError("c must be >= 1")


def _coords(lat: MWLattice, v) -> np.ndarray:
    v = np.asarray(v, dtype=float).reshape(-1)
    if v.shape[0] != lat.rank:
        raise RankMismatch(f"vector of length {v.shape[0]} for a rank {lat.rank} lattice")
    return v


def nt_norm(lat: MWLattice, coords) -> float:
    v = _coords(lat, coords)
    return math.sqrt(max(float(v @ lat.gram @ v), 0.0))


def nt_distance(lat: MWLattice, u, v) -> float:
    return nt_norm(lat, _coords(lat, u) - _coords(lat, v))


def covering_bound(R: float, r: float, rho: int) -> float:
    """(1 + 2R/r)^rho balls of radius r cover a radius R ball in rank rho."""
    if R <= 0 or r <= 0:
        raise ValidationError("R and r must be positive")
    if rho < 0:
        raise ValidationError("rho must be nonnegative")
    return (1 + 2 * R / r) ** rho


def greedy_cover(points: Sequence, lat: MWLattice, r: float) -> list[int]:
    """Indices of centres, picking the first uncovered point each time."""
    if r <= 0:
        raise ValidationError("r must be positive")
    pts = np.array([_coords(lat, p) for p in points]).reshape(len(points), lat.rank)
    if not len(pts):
        return []
    # squared distances via the Cholesky-free quadratic form
    covered = np.zeros(len(pts), dtype=bool)
    centres = []
    r2 = r * r * (1 + 1e-12)
    for i in range(len(pts)):
        if covered[i]:
            continue
        centres.append(i)
        d = pts - pts[i]
        dist2 = np.einsum("ij,jk,ik->i", d, lat.gram, d)
        covered |= dist2 <= r2
    return centres


def assign_to_centres(points: Sequence, lat: MWLattice, centres: Sequence[int]) -> list[int]:
    """For each point, the first centre within the smallest nt-distance."""
    out = []
    for p in points:
        d = [nt_distance(lat, p, points[c]) for c in centres]
        out.append(centres[int(np.argmin(d))])
    return out


@dataclass
class Partition:
    small: list
    large: list

    def as_dict(self) -> dict:
        return {"small": [i for i, _ in self.small], "large": [i for i, _ in self.large]}


def split_small_large(heights: Iterable[tuple], B: float) -> Partition:
    """Stable split; h = B counts as small."""
    if B < 0:
        raise ValidationError("B must be nonnegative")
    small, large = [], []
    for item in heights:
        (small if item[1] <= B else large).append(tuple(item))
    return Partition(small, large)


def vojta_large_bound(c: float = DEFAULT_VOJTA_C, rho: int = 0) -> tuple:
    """(c^rho, c^(1 + rho)): large-point bound and the assembled bound."""
    if c < 1:
        raise ValidationError("c must be >= 1")
    if rho < 0:
        raise ValidationError("rho must be nonnegative")
    return c ** rho, c ** (1 + rho)


def hurwitz_packet_bound(g: int) -> int:
    if g < 2:
        raise GenusTooSmall(f"genus {g} < 2")
    return 84 * (g - 1)


# multihomogeneous polynomials and the product lemma ---------------------------

@dataclass(frozen=True)
class MultiPoly:
    """A polynomial on (P^n)^M.

    ``terms`` maps a tuple of M exponent tuples (each of length n + 1) to an
    integer or rational coefficient.
    """

    n: int
    M: int
    terms: Mapping

    def __post_init__(self):
        clean = {}
        for key, c in self.terms.items():
            key = tuple(tuple(int(e) for e in block) for block in key)
            if len(key) != self.M or any(len(b) != self.n + 1 for b in key):
                raise ValidationError(f"monomial {key} does not fit (P^{self.n})^{self.M}")
            c = Fraction(c)
            if c:
                clean[key] = clean.get(key, 0) + c
        clean = {k: v for k, v in clean.items() if v}
        object.__setattr__(self, "terms", clean)
        self.multidegree  # validates homogeneity

    @property
    def multidegree(self) -> tuple:
        degs = {tuple(sum(b) for b in key) for key in self.terms}
        if len(degs) > 1:
            raise ValidationError(f"not multihomogeneous: degrees {sorted(degs)}")
        return degs.pop() if degs else (0,) * self.M

    @classmethod
    def product_of_linear(cls, forms: Sequence[tuple[int, Sequence]], n: int, M: int) -> "MultiPoly":
        """Product of linear forms, each given as (factor index, coefficients)."""
        terms = {tuple((0,) * (n + 1) for _ in range(M)): Fraction(1)}
        for j, coeffs in forms:
            new = {}
            for key, c in terms.items():
                for k, a in enumerate(coeffs):
                    if not a:
                        continue
                    block = list(key[j])
                    block[k] += 1
                    nk = key[:j] + (tuple(block),) + key[j + 1:]
                    new[nk] = new.get(nk, 0) + c * Fraction(a)
            terms = new
        return cls(n, M, terms)

    def evaluate(self, pts: Sequence[Sequence]) -> Fraction:
        out = Fraction(0)
        for key, c in self.terms.items():
            term = c
            for block, x in zip(key, pts):
                for e, xi in zip(block, x):
                    if e:
                        term *= Fraction(xi) ** e
                if not term:
                    break
            out += term
        return out

    def degree(self) -> int:
        """Degree of the zero set with respect to O(1, ..., 1)."""
        return hypersurface_degree(self.n, self.multidegree)


def hypersurface_degree(n: int, multidegree: Sequence[int]) -> int:
    """(sum d_i H_i) (sum H_i)^{nM - 1} on (P^n)^M."""
    M = len(multidegree)
    S = MultiProjSpace((n,) * M)
    return intersection_number(MultiClass.divisor(S, multidegree) * MultiClass.divisor(S, (1,) * M) ** (n * M - 1))


def alon_test(Sigma: Sequence[Sequence], Z: Sequence[MultiPoly], M: int,
              budget: int = DEFAULT_TUPLE_BUDGET) -> bool:
    """True iff some tuple in Sigma^M is not a common zero of Z.

    Enumeration stops at the first witness; BudgetExceeded is raised only
    if ``budget`` tuples were examined without deciding.
    """
    Z = list(Z)
    for f in Z:
        if f.M != M:
            raise ValidationError(f"polynomial on {f.M} factors, expected {M}")
    if not Z or not Sigma:
        return False
    examined = 0
    for tup in _shells(len(Sigma), M):
        if examined >= budget:
            raise BudgetExceeded(f"examined {examined} tuples of {len(Sigma)}^{M} without a witness")
        pts = [Sigma[i] for i in tup]
        if any(f.evaluate(pts) != 0 for f in Z):
            return True
        examined += 1
    return False


def _shells(size: int, M: int):
    """All M-tuples over range(size), ordered by their largest entry."""
    for k in range(size):
        for pos in range(M):
            # first occurrence of k at position pos
            for head in itertools.product(range(k), repeat=pos):
                for tail in itertools.product(range(k + 1), repeat=M - pos - 1):
                    yield head + (k,) + tail


def alon_bound(M: int, degC: int, degZ: int) -> int:
    """B(1) = degC degZ + 1; B(M) = max(B(M-1, degC, e), e + 1) with e = degZ degC^M."""
    if min(M, degC, degZ) < 1:
        raise ValidationError("M, degC, degZ must be >= 1")
    if M == 1:
        return degC * degZ + 1
    e = degZ * degC ** M
    return max(alon_bound(M - 1, degC, e), e + 1)


# dichotomy -------------------------------------------------------------------------

@dataclass
class DichotomyResult:
    label: str
    count: int
    threshold: float
    members: list = field(default_factory=list)
    heights: dict = field(default_factory=dict)
    errors: list = field(default_factory=list)

    def as_dict(self) -> dict:
        return {"label": self.label, "count": self.count, "threshold": self.threshold,
                "members": self.members, "heights": self.heights, "errors": self.errors}


def dichotomy_scan(curve: WeierstrassCurve, candidates: Sequence[tuple], P_id, c3: float, c4,
                   h_base: float, tol: float = 1e-4, height_fn: Callable | None = None,
                   **height_kw) -> DichotomyResult:
    """Count candidates Q with h(Q - P) <= h_base / c3 over the given enumeration.

    Returns label "AlternativeII" when the count is below c4, else "ExceedsC4".
    """
    if c3 <= 0:
        raise ValidationError("c3 must be positive")
    lookup = dict(candidates)
    if candidates and P_id not in lookup:
        raise ValidationError(f"P = {P_id!r} is not among the candidates")
    if height_fn is None:
        height_fn = lambda Q: tate_limit_height(curve, Q, tol=tol, **height_kw).canonical
    threshold = h_base / c3
    members, heights, errors = [], {}, []
    P = lookup.get(P_id)
    for qid, Q in candidates:
        try:
            h = height_fn(sub(curve, Q, P))
        except BettiHeightError as exc:
            errors.append({"id": qid, "error": f"{type(exc).__name__}: {exc}"})
            continue
        heights[str(qid)] = h
        if h <= threshold:
            members.append(qid)
    label = "AlternativeII" if len(members) < c4 else "ExceedsC4"
    return DichotomyResult(label, len(members), threshold, members, heights, errors)


# small-instance grid for the product lemma ------------------------------------------

PLANE_CURVES = {
    # name: (degree, parametrization P^1 -> P^2)
    "line": (1, lambda s, t: (s, t, s + 2 * t)),
    "conic": (2, lambda s, t: (s * s - t * t, 2 * s * t, s * s + t * t)),
}


def rational_parameters(count: int) -> list[tuple[int, int]]:
    """First ``count`` points of P^1(Q) as coprime (s, t), by height."""
    out = [(1, 0), (0, 1)]
    h = 1
    while len(out) < count:
        for s in range(-h, h + 1):
            for t in (h,) if abs(s) < h else range(1, h + 1):
                if t > 0 and math.gcd(s, t) == 1 and (s, t) not in out:
                    out.append((s, t))
        h += 1
    return out[:count]


def curve_points(curve: str, count: int) -> list[tuple]:
    _, phi = PLANE_CURVES[curve]
    return [phi(s, t) for s, t in rational_parameters(count)]


def contains_power_of_curve(curve: str, Z: Sequence[MultiPoly], M: int, trials: int = 12,
                            seed: int = 0) -> bool:
    """False once some random point of C^M is off Z (a certificate); True otherwise."""
    rng = np.random.default_rng(seed)
    _, phi = PLANE_CURVES[curve]
    for _ in range(trials):
        pts = [phi(int(a), int(b)) for a, b in rng.integers(-50, 51, size=(M, 2))]
        if any(all(x == 0 for x in p) for p in pts):
            continue
        if any(f.evaluate(pts) != 0 for f in Z):
            return False
    return True


def alon_grid(max_M: int = 3, max_deg: int = 3, slack: int = 2, seed: int = 0) -> list[dict]:
    """Instances (curve, M, Z, Sigma) on lines and conics in P^2.

    Z is a single hypersurface: a product of linear forms through points
    of the curve (so that many tuples lie on Z), or a product of diagonal
    bilinear forms x^(i)_0 x^(j)_1 - x^(i)_1 x^(j)_0.  Sigma lists the
    curve points on Z first, so witnesses are as late as possible.
    """
    rng = np.random.default_rng(seed)
    cases = []
    for curve, (degC, _) in PLANE_CURVES.items():
        for M in range(1, max_M + 1):
            for deg in range(1, max_deg + 1):
                pool = curve_points(curve, 6 * deg + 4)
                # linear forms through pairs of curve points (cross product)
                forms = []
                for k in range(deg):
                    j = int(rng.integers(M))
                    P, Q = pool[2 * k], pool[2 * k + 1]
                    line = (P[1] * Q[2] - P[2] * Q[1], P[2] * Q[0] - P[0] * Q[2], P[0] * Q[1] - P[1] * Q[0])
                    forms.append((j, line))
                families = [("lines", [MultiPoly.product_of_linear(forms, 2, M)])]
                if M >= 2:
                    terms = {}
                    f = None
                    for k in range(deg):
                        i, j = k % M, (k + 1) % M
                        blk = lambda a: tuple((0, 0, 0) if q not in (i, j) else a[q == j] for q in range(M))
                        g = MultiPoly(2, M, {blk(((1, 0, 0), (0, 1, 0))): 1, blk(((0, 1, 0), (1, 0, 0))): -1})
                        f = g if f is None else _mul(f, g)
                    families.append(("diagonal", [f]))
                for kind, Z in families:
                    if contains_power_of_curve(curve, Z, M):
                        continue
                    degZ = Z[0].degree()
                    B = alon_bound(M, degC, degZ)
                    cases.append({"curve": curve, "degC": degC, "M": M, "kind": kind, "Z": Z,
                                  "degZ": degZ, "bound": B, "pool_on_Z": pool[:2 * deg]})
    return cases


def _mul(f: MultiPoly, g: MultiPoly) -> MultiPoly:
    terms = {}
    for k1, c1 in f.terms.items():
        for k2, c2 in g.terms.items():
            key = tuple(tuple(a + b for a, b in zip(b1, b2)) for b1, b2 in zip(k1, k2))
            terms[key] = terms.get(key, 0) + c1 * c2
    return MultiPoly(f.n, f.M, terms)


def sigma_for(case: Mapping, size: int) -> list[tuple]:
    """``size`` distinct curve points, those on Z first."""
    first = list(dict.fromkeys(case["pool_on_Z"]))
    rest = [p for p in curve_points(case["curve"], size + len(first)) if p not in first]
    seen = set()
    out = []
    for p in first + rest:
        key = _proj_key(p)
        if key not in seen:
            seen.add(key)
            out.append(p)
    return out[:size]


def _proj_key(p):
    g = 0
    for x in p:
        g = math.gcd(g, int(x))
    q = [int(x) // g for x in p]
    if next(x for x in q if x) < 0:
        q = [-x for x in q]
    return tuple(q)


def alon_cross_validate(max_M: int = 3, max_deg: int = 3, slack: int = 2,
                        budget: int = DEFAULT_TUPLE_BUDGET, seed: int = 0) -> dict:
    """Run alon_test at |Sigma| in [B, B + slack] on every grid instance."""
    rows, counterexamples = [], []
    for case in alon_grid(max_M, max_deg, slack, seed):
        for size in range(case["bound"], case["bound"] + slack + 1):
            sigma = sigma_for(case, size)
            ok = alon_test(sigma, case["Z"], case["M"], budget=budget)
            row = {"curve": case["curve"], "M": case["M"], "kind": case["kind"],
                   "multidegree": list(case["Z"][0].multidegree), "degZ": case["degZ"],
                   "bound": case["bound"], "size": size, "not_contained": ok}
            rows.append(row)
            if not ok:
                counterexamples.append(row)
    return {"instances": rows, "counterexamples": counterexamples}

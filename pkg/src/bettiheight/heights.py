"""Weil heights over Q and Neron-Tate heights by the Tate limit.

Heights of curve points are taken on the x-coordinate, i.e. with respect
to the degree-2 divisor 2(O).  The canonical height reported here is

    lim h(x(2^l P)) / 4^l,

twice the usual normalisation; ``HeightReport.normalization`` records
this and ``rescaled`` applies any other positive factor.

The iteration runs on coprime integer pairs (p, q) with x = p/q.  The
doubling map is a pair of binary quartic forms N, D, and for coprime
(p, q) the common factor gcd(N, D) divides their resultant R, so the
reduction only ever needs a gcd against a fixed small integer.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from fractions import Fraction
from functools import reduce
from typing import Callable, Iterable, Mapping, Sequence

import gmpy2
from gmpy2 import mpz

from .elliptic import CurvePoint, WeierstrassCurve, legendre_section
from .errors import (BettiHeightError, BudgetExceeded, MissingC2, NoConvergence,
                     NonPositive, NotOnCurve, TwoTorsion, ValidationError, ZeroPoint)

DEFAULT_MAX_DIGITS = 200_000
MIN_DOUBLINGS = 8
LOG2 = math.log(2.0)
LOG10_2 = math.log10(2.0)


def log_abs(n) -> float:
    """Natural log of |n| for arbitrarily large integers."""
    n = abs(int(n)) if not isinstance(n, type(mpz(0))) else abs(n)
    if n == 0:
        raise ValueError("log of zero")
    b = n.bit_length()
    if b <= 1000:
        return math.log(int(n))
    shift = b - 64
    return math.log(int(n >> shift)) + shift * LOG2


def digits(n) -> int:
    return int(abs(n).bit_length() * LOG10_2) + 1


class RationalProjectivePoint:
    """A point of P^n(Q) stored as coprime integers."""

    __slots__ = ("coords",)

    def __init__(self, coords: Iterable):
        vals = [Fraction(c) for c in coords]
        if not vals:
            raise ZeroPoint("empty coordinate list")
        if all(v == 0 for v in vals):
            raise ZeroPoint("all coordinates are zero")
        den = reduce(math.lcm, (v.denominator for v in vals), 1)
        ints = [int(v * den) for v in vals]
        g = reduce(math.gcd, ints, 0)
        self.coords = tuple(c // g for c in ints)

    @classmethod
    def from_rational(cls, x) -> "RationalProjectivePoint":
        x = Fraction(x)
        return cls([x.numerator, x.denominator])

    def __eq__(self, other):
        return isinstance(other, RationalProjectivePoint) and (
            self.coords == other.coords or self.coords == tuple(-c for c in other.coords))

    def __hash__(self):
        c = self.coords
        sign = -1 if next(v for v in c if v) < 0 else 1
        return hash(tuple(sign * v for v in c))

    def __repr__(self):
        return "[" + ":".join(str(c) for c in self.coords) + "]"


def weil_height(P: RationalProjectivePoint) -> float:
    """log max |x_i| over the coprime integer representative."""
    if not isinstance(P, RationalProjectivePoint):
        P = RationalProjectivePoint(P)
    return log_abs(max(abs(c) for c in P.coords))


def naive_total_height(P_fiber: RationalProjectivePoint, s_base: RationalProjectivePoint) -> float:
    return weil_height(P_fiber) + weil_height(s_base)


def x_height(P: CurvePoint) -> float:
    """Height of the projective x-coordinate [x : 1]; 0 at infinity ([1 : 0])."""
    if P.is_infinity:
        return 0.0
    return weil_height(RationalProjectivePoint.from_rational(P.x))


def base_height_of(curve: WeierstrassCurve) -> float:
    lam = curve.legendre_lambda
    if isinstance(lam, Fraction):
        return weil_height(RationalProjectivePoint.from_rational(lam))
    return 0.0


# doubling ------------------------------------------------------------------

def _b_invariants(curve: WeierstrassCurve):
    if not curve.is_rational:
        raise ValidationError("exact heights need a curve over Q")
    a2, a4, a6 = curve.a2, curve.a4, curve.a6
    return 4 * a2, 2 * a4, 4 * a6, 4 * a2 * a6 - a4 * a4


def x_duplication(curve: WeierstrassCurve, x) -> Fraction:
    """x(2P) = (x^4 - b4 x^2 - 2 b6 x - b8) / (4x^3 + b2 x^2 + 2 b4 x + b6)."""
    b2, b4, b6, b8 = _b_invariants(curve)
    x = Fraction(x)
    den = 4 * x ** 3 + b2 * x * x + 2 * b4 * x + b6
    if den == 0:
        raise TwoTorsion(f"x = {x} is the x-coordinate of a 2-torsion point")
    return (x ** 4 - b4 * x * x - 2 * b6 * x - b8) / den


def _bareiss_det(M: list[list[int]]) -> int:
    M = [row[:] for row in M]
    n = len(M)
    sign, prev = 1, 1
    for k in range(n - 1):
        if M[k][k] == 0:
            for r in range(k + 1, n):
                if M[r][k]:
                    M[k], M[r] = M[r], M[k]
                    sign = -sign
                    break
            else:
                return 0
        for i in range(k + 1, n):
            for j in range(k + 1, n):
                M[i][j] = (M[i][j] * M[k][k] - M[i][k] * M[k][j]) // prev
        prev = M[k][k]
    return sign * M[-1][-1]


@dataclass(frozen=True)
class DoublingForms:
    """Integer binary quartics with x(2P) = N(p, q) / D(p, q) for x(P) = p/q."""

    num: tuple
    den: tuple
    resultant: int

    @classmethod
    def for_curve(cls, curve: WeierstrassCurve) -> "DoublingForms":
        b2, b4, b6, b8 = _b_invariants(curve)
        # coefficients of p^4, p^3 q, p^2 q^2, p q^3, q^4
        num = [Fraction(1), Fraction(0), -b4, -2 * b6, -b8]
        den = [Fraction(0), Fraction(4), b2, 2 * b4, b6]
        L = reduce(math.lcm, (c.denominator for c in num + den), 1)
        num = tuple(int(c * L) for c in num)
        den = tuple(int(c * L) for c in den)
        syl = []
        for i in range(4):
            syl.append([0] * i + list(num) + [0] * (3 - i))
        for i in range(4):
            syl.append([0] * i + list(den) + [0] * (3 - i))
        R = abs(_bareiss_det(syl))
        if R == 0:
            raise ValidationError("doubling forms share a root; curve is singular")
        return cls(num, den, R)

    def step(self, p, q):
        p2, q2, pq = p * p, q * q, p * q
        p2q2 = p2 * q2
        terms = (p2 * p2, p2 * pq, p2q2, pq * q2, q2 * q2)
        N = sum(c * t for c, t in zip(self.num, terms) if c)
        D = sum(c * t for c, t in zip(self.den, terms) if c)
        if D == 0:
            return N, D
        R = self.resultant
        g = gmpy2.gcd(gmpy2.gcd(N % R, D % R), R)
        if g != 1:
            N, D = N // g, D // g
        if D < 0:
            N, D = -N, -D
        return N, D


# Tate limit ------------------------------------------------------------------

@dataclass
class HeightReport:
    naive: float
    canonical: float
    error_estimate: float
    iterations: int
    base_height: float
    torsion: bool = False
    sequence: list = field(default_factory=list)
    differences: list = field(default_factory=list)
    max_digits: int = 0
    normalization: str = "x-coordinate, divisor 2(O); lim h(x(2^l P))/4^l"

    def rescaled(self, factor: float) -> "HeightReport":
        if factor <= 0:
            raise NonPositive("rescale factor must be positive")
        return replace(self, naive=self.naive * factor, canonical=self.canonical * factor,
                       error_estimate=self.error_estimate * factor,
                       sequence=[t * factor for t in self.sequence],
                       differences=[d * factor for d in self.differences],
                       normalization=f"{self.normalization}; rescaled by {factor}")

    def decay_ratios(self) -> list[float]:
        d = [abs(x) for x in self.differences]
        return [d[i] / d[i + 1] if d[i + 1] else math.inf for i in range(len(d) - 1)]

    def as_dict(self) -> dict:
        return {
            "naive": self.naive,
            "canonical": self.canonical,
            "error_estimate": self.error_estimate,
            "iterations": self.iterations,
            "base_height": self.base_height,
            "torsion": self.torsion,
            "max_digits": self.max_digits,
            "normalization": self.normalization,
            "sequence": self.sequence,
            "differences": self.differences,
        }


def _torsion_report(naive, base, iterations, seq, diffs, ndig) -> HeightReport:
    return HeightReport(naive, 0.0, 0.0, iterations, base, True, seq, diffs, ndig)


def envelope(diffs: Sequence[float]) -> float:
    """max_k |d_k| 4^(k - l) over the differences d_1..d_l.

    Each d_k is a duplication defect divided by 4^k, and the defects are
    bounded by a constant of the curve; the envelope is the last difference
    with that constant replaced by the largest defect seen so far.
    """
    l = len(diffs)
    return max((abs(d) * 4.0 ** (k + 1 - l) for k, d in enumerate(diffs)), default=math.inf)


def tate_limit_height(curve: WeierstrassCurve, P: CurvePoint, tol: float = 1e-4,
                      max_digits: int = DEFAULT_MAX_DIGITS, paranoid: bool = False,
                      base_height: float | None = None, min_iterations: int = MIN_DOUBLINGS,
                      max_iterations: int = 64) -> HeightReport:
    """Canonical height as the limit of t_l = h(x(2^l P)) / 4^l.

    The tail after step l is a geometric series with ratio 1/4 whose terms
    are bounded by the defect constant, so the error estimate is 4/3 times
    the envelope of the differences (see ``envelope``), which is never
    smaller than 4/3 |t_l - t_{l-1}|.  Iteration stops once that estimate
    is below tol, but not before ``min_iterations`` doublings: a few
    defects can vanish by accident (integral multiples), and the envelope
    needs enough of them to see the defect constant.  Torsion is detected exactly, either by hitting a
    2-torsion point or by a repeated x-coordinate, and then the canonical
    height is exactly 0.  With ``paranoid`` two more iterations are run and
    NoConvergence is raised if they move the value by more than the estimate.
    """
    if tol <= 0:
        raise ValidationError("tol must be positive")
    if base_height is None:
        base_height = base_height_of(curve)
    if P.is_infinity:
        return HeightReport(0.0, 0.0, 0.0, 0, base_height, True)
    if not P.is_rational:
        raise ValidationError(f"{P} is not a rational point")
    if not curve.contains(P, rtol=0):
        raise NotOnCurve(f"{P} is not on {curve}")
    forms = DoublingForms.for_curve(curve)
    x = Fraction(P.x)
    p, q = mpz(x.numerator), mpz(x.denominator)
    h0 = log_abs(max(abs(p), q))
    seq, diffs, estimates = [h0], [], []
    seen = {(int(p), int(q))}
    ndig = max(digits(p), digits(q))
    extra = 2 if paranoid else 0
    stop_at = None
    for l in range(1, max_iterations + 1):
        if 4 * ndig > max_digits:
            est = estimates[-1] if estimates else math.inf
            err = BudgetExceeded(
                f"next iterate would have ~{4 * ndig} digits (budget {max_digits}); "
                f"error estimate so far {est:.3g}")
            err.partial = HeightReport(h0, seq[-1], est, l - 1, base_height, False,
                                       seq, diffs, ndig)
            raise err
        p, q = forms.step(p, q)
        if q == 0:
            return _torsion_report(h0, base_height, l, seq, diffs, ndig)
        ndig = max(digits(p), digits(q))
        if ndig < 200:
            key = (int(p), int(q))
            if key in seen:
                return _torsion_report(h0, base_height, l, seq, diffs, ndig)
            seen.add(key)
        seq.append(log_abs(max(abs(p), q)) / 4 ** l)
        diffs.append(seq[-1] - seq[-2])
        estimates.append((4 / 3) * envelope(diffs))
        if stop_at is None and l >= min_iterations and estimates[-1] < tol:
            stop_at = l
        if stop_at is not None and l >= stop_at + extra:
            break
    else:
        raise NoConvergence(f"no convergence within {max_iterations} doublings")
    k = stop_at
    estimate = estimates[k - 1]
    report = HeightReport(h0, seq[k], estimate, k, base_height, False,
                          seq[:k + 1], diffs[:k], ndig)
    if paranoid and abs(seq[-1] - seq[k]) > estimate:
        raise NoConvergence(
            f"error estimate {estimate:.3g} not conservative: two more doublings moved "
            f"the value by {abs(seq[-1] - seq[k]):.3g}")
    return report


def duplication_defect(curve: WeierstrassCurve, P: CurvePoint, base_height: float) -> tuple[float, float]:
    """|h(x(2P)) - 4 h(x(P))| and that value over max{1, base_height}."""
    if P.is_infinity:
        raise TwoTorsion("P is the point at infinity")
    x2 = x_duplication(curve, P.x)
    defect = abs(weil_height(RationalProjectivePoint.from_rational(x2))
                 - 4 * weil_height(RationalProjectivePoint.from_rational(P.x)))
    return defect, defect / max(1.0, base_height)


# Silverman-Tate scan --------------------------------------------------------

def lambda_grid(n: int) -> list[Fraction]:
    """n rational lambda in (0, 1), by increasing height, for which the
    const_x2 section is rational: lambda = 2 - s^2/2 with s = a/b in (sqrt 2, 2).

    grid(n) is a prefix of grid(2n).
    """
    out: list[tuple[float, Fraction]] = []
    b = 1
    while True:
        for a in range(math.isqrt(2 * b * b) + 1, 2 * b):
            if math.gcd(a, b) == 1:
                lam = Fraction(4 * b * b - a * a, 2 * b * b)
                out.append((weil_height(RationalProjectivePoint.from_rational(lam)), lam))
        # every later b gives heights >= log(2 b^2) / 2-ish; stop once the
        # n smallest are safely settled
        if len(out) >= n:
            bound = math.log(2 * (b + 1) ** 2) - math.log(4)
            settled = sorted(out, key=lambda e: (e[0], e[1]))
            if settled[n - 1][0] <= bound:
                return [lam for _, lam in settled[:n]]
        b += 1


@dataclass
class ScanSample:
    lam: Fraction
    section: str
    canonical: float | None = None
    naive: float | None = None
    base_height: float | None = None
    ratio: float | None = None
    error_estimate: float | None = None
    error: str | None = None

    def as_dict(self) -> dict:
        return {"lambda": str(self.lam), "section": self.section, "canonical": self.canonical,
                "naive": self.naive, "base_height": self.base_height, "ratio": self.ratio,
                "error_estimate": self.error_estimate, "error": self.error}


@dataclass
class ScanReport:
    samples: list
    skipped: list
    sup_ratio: float
    sup_first_half: float

    @property
    def stability(self) -> float:
        """Relative change of the supremum from the first half to the full grid."""
        if self.sup_ratio == 0:
            return 0.0
        return (self.sup_ratio - self.sup_first_half) / self.sup_ratio

    def as_dict(self) -> dict:
        return {"sup_ratio": self.sup_ratio, "sup_first_half": self.sup_first_half,
                "stability": self.stability,
                "samples": [s.as_dict() for s in self.samples],
                "skipped": self.skipped}


def _scan_one(lam: Fraction, section: str, tol: float, max_digits: int) -> ScanSample:
    sample = ScanSample(lam, section)
    curve = WeierstrassCurve.legendre(lam)
    P = legendre_section(section, lam)
    base = weil_height(RationalProjectivePoint.from_rational(lam))
    try:
        rep = tate_limit_height(curve, P, tol=tol, max_digits=max_digits, base_height=base)
    except BettiHeightError as exc:
        sample.error = f"{type(exc).__name__}: {exc}"
        return sample
    sample.canonical = rep.canonical
    sample.naive = rep.naive
    sample.base_height = base
    sample.error_estimate = rep.error_estimate
    sample.ratio = abs(rep.canonical - rep.naive) / max(1.0, base)
    return sample


def silverman_tate_scan(lams: Sequence, sections: Sequence[str] = ("const_x2", "two_torsion_0", "two_torsion_1"),
                        tol: float = 1e-3, max_digits: int = 2_000_000,
                        map_fn: Callable = map) -> ScanReport:
    """Ratios |h_hat - h| / max{1, h(lambda)} over a grid of rational lambda.

    Samples whose section is not rational are skipped and listed; errors
    are recorded per sample and the scan carries on.  ``map_fn`` may be a
    parallel map; results are merged in input order.
    """
    jobs, skipped = [], []
    for lam in lams:
        lam = Fraction(lam)
        if lam in (0, 1):
            skipped.append({"lambda": str(lam), "section": None, "reason": "singular fiber"})
            continue
        for sec in sections:
            if not legendre_section(sec, lam).is_rational:
                skipped.append({"lambda": str(lam), "section": sec, "reason": "section not rational"})
                continue
            jobs.append((lam, sec))
    samples = list(map_fn(_scan_job, [(lam, sec, tol, max_digits) for lam, sec in jobs]))
    ratios = [s.ratio for s in samples if s.ratio is not None]
    half = len(lams) // 2
    first_lams = {Fraction(l) for l in list(lams)[:half]}
    first = [s.ratio for s in samples if s.ratio is not None and s.lam in first_lams]
    return ScanReport(samples, skipped, max(ratios, default=0.0), max(first, default=0.0))


def _scan_job(args) -> ScanSample:
    return _scan_one(*args)


# constant assembly -----------------------------------------------------------

def _exact(v):
    if isinstance(v, (int, Fraction)):
        return Fraction(v)
    return v


def assemble_constants(c0, c1, c2_of_N: Mapping | Callable):
    """Least power of two N with N^2 >= 2 c0 / c1, then (N, c1/2, (c2(N) + c0)/N^2)."""
    c0, c1 = _exact(c0), _exact(c1)
    if c0 < 0:
        raise NonPositive("c0 must be nonnegative")
    if c1 <= 0:
        raise NonPositive("c1 must be positive")
    N = 1
    while N * N * c1 < 2 * c0:
        N *= 2
    try:
        c2 = c2_of_N(N) if callable(c2_of_N) else c2_of_N[N]
    except (KeyError, IndexError) as exc:
        raise MissingC2(f"c2 is not given at N = {N}") from exc
    c2 = _exact(c2)
    return N, c1 / 2, (c2 + c0) / (N * N)

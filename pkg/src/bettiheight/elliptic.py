"""Elliptic curves y^2 = x^3 + a2 x^2 + a4 x + a6 over Q or C.

Short Weierstrass (a2 = 0) and Legendre (y^2 = x(x-1)(x-lambda)) forms
are both covered.  Over Q the chord-tangent law is exact (Fraction).
Over C the curve is uniformized by z -> (x, y) with dx/y = dz; the
lattice L of that uniformization has periods computed with the AGM and
the map itself is evaluated through the q-series of the Weierstrass
function of L/2.
"""
from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from fractions import Fraction
from numbers import Number, Rational
from typing import Sequence

import numpy as np

from .errors import BranchCut, NoConvergence, NotOnCurve, ValidationError
from .siegel import BettiCoords, SiegelPoint, betti_coordinates

AGM_MAX_ITER = 64
NEAR_POLE = 1e-8


def _is_exact(v) -> bool:
    return isinstance(v, Rational)


def _coerce(v):
    if isinstance(v, Rational):
        return Fraction(v)
    if isinstance(v, str):
        return parse_number(v)
    c = complex(v)
    return c


def parse_number(text: str):
    """'3/4', '-2', '0.5+0.25i' or '0.3'.  Integers and fractions stay exact."""
    text = text.strip().replace(" ", "")
    try:
        return Fraction(text)
    except ValueError:
        pass
    t = text.replace("i", "j")
    if t.endswith("j") and (t == "j" or t[-2] in "+-"):
        t = t[:-1] + "1j"
    try:
        return complex(t)
    except ValueError as exc:
        raise ValidationError(f"cannot parse number {text!r}") from exc


@dataclass(frozen=True)
class WeierstrassCurve:
    """y^2 = x^3 + a2 x^2 + a4 x + a6."""

    a2: object = Fraction(0)
    a4: object = Fraction(0)
    a6: object = Fraction(0)
    legendre_lambda: object = None

    def __post_init__(self):
        for name in ("a2", "a4", "a6"):
            object.__setattr__(self, name, _coerce(getattr(self, name)))
        if self.discriminant == 0:
            raise ValidationError("singular curve (zero discriminant)")

    @classmethod
    def short(cls, A, B) -> "WeierstrassCurve":
        return cls(Fraction(0), A, B)

    @classmethod
    def legendre(cls, lam) -> "WeierstrassCurve":
        lam = _coerce(lam)
        if lam == 0 or lam == 1:
            raise ValidationError("Legendre parameter must avoid 0 and 1")
        return cls(-(1 + lam), lam, 0 * lam, legendre_lambda=lam)

    @property
    def is_rational(self) -> bool:
        return all(_is_exact(c) for c in (self.a2, self.a4, self.a6))

    @property
    def discriminant(self):
        b, c, d = self.a2, self.a4, self.a6
        return 18 * b * c * d - 4 * b ** 3 * d + b * b * c * c - 4 * c ** 3 - 27 * d * d

    def f(self, x):
        return ((x + self.a2) * x + self.a4) * x + self.a6

    def contains(self, P: "CurvePoint", rtol: float = 1e-10) -> bool:
        if P.is_infinity:
            return True
        lhs, rhs = P.y * P.y, self.f(P.x)
        if self.is_rational and _is_exact(P.x) and _is_exact(P.y):
            return lhs == rhs
        scale = max(1.0, abs(lhs), abs(rhs))
        return abs(lhs - rhs) <= rtol * scale

    def roots(self) -> list[complex]:
        """Roots of the cubic; for Legendre curves in the order (1, lambda, 0)."""
        if self.legendre_lambda is not None:
            return [1.0 + 0j, complex(self.legendre_lambda), 0j]
        coeffs = [1.0, complex(self.a2), complex(self.a4), complex(self.a6)]
        r = list(np.roots(coeffs))
        polished = []
        for z in r:
            for _ in range(4):
                fz = complex(self.f(z))
                dz = 3 * z * z + 2 * complex(self.a2) * z + complex(self.a4)
                if dz == 0:
                    break
                z = z - fz / dz
            polished.append(complex(z))
        if all(abs(z.imag) < 1e-12 * (1 + abs(z)) for z in polished):
            polished = sorted((complex(z.real) for z in polished), key=lambda z: -z.real)
        return polished

    def __str__(self):
        if self.legendre_lambda is not None:
            return f"y^2 = x(x-1)(x-{self.legendre_lambda})"
        out = "y^2 = x^3"
        for c, mon in ((self.a2, "x^2"), (self.a4, "x"), (self.a6, "")):
            if c == 0:
                continue
            sign = "-" if getattr(c, "real", c) < 0 else "+"
            mag = -c if sign == "-" else c
            out += f" {sign} " + (mon if mag == 1 and mon else f"{mag}{mon}")
        return out


@dataclass(frozen=True)
class CurvePoint:
    x: object = None
    y: object = None
    is_infinity: bool = False
    near_pole: bool = False

    @classmethod
    def infinity(cls, near_pole: bool = False) -> "CurvePoint":
        return cls(None, None, True, near_pole)

    @classmethod
    def affine(cls, x, y) -> "CurvePoint":
        return cls(_coerce(x), _coerce(y))

    @property
    def is_rational(self) -> bool:
        return self.is_infinity or (_is_exact(self.x) and _is_exact(self.y))

    def __str__(self):
        return "O" if self.is_infinity else f"({self.x}, {self.y})"


INFINITY = CurvePoint.infinity()


# group law -----------------------------------------------------------------

def _close(u, v, rtol=1e-12) -> bool:
    if _is_exact(u) and _is_exact(v):
        return u == v
    return abs(u - v) <= rtol * max(1.0, abs(u), abs(v))


def neg(curve: WeierstrassCurve, P: CurvePoint) -> CurvePoint:
    if P.is_infinity:
        return P
    return CurvePoint(P.x, -P.y)


def _from_slope(curve, P, Q, m) -> CurvePoint:
    x3 = m * m - curve.a2 - P.x - Q.x
    y3 = -(P.y + m * (x3 - P.x))
    return CurvePoint(x3, y3)


def dbl(curve: WeierstrassCurve, P: CurvePoint) -> CurvePoint:
    if P.is_infinity or P.y == 0:
        return INFINITY
    if not (_is_exact(P.y)) and abs(P.y) <= 1e-14 * max(1.0, abs(P.x)):
        return INFINITY
    m = (3 * P.x * P.x + 2 * curve.a2 * P.x + curve.a4) / (2 * P.y)
    return _from_slope(curve, P, P, m)


def add(curve: WeierstrassCurve, P: CurvePoint, Q: CurvePoint) -> CurvePoint:
    if P.is_infinity:
        return Q
    if Q.is_infinity:
        return P
    if _close(P.x, Q.x):
        if _close(P.y, Q.y) and not _close(P.y, -Q.y):
            return dbl(curve, P)
        if _close(P.y, -Q.y):
            return INFINITY
    m = (Q.y - P.y) / (Q.x - P.x)
    return _from_slope(curve, P, Q, m)


def sub(curve: WeierstrassCurve, P: CurvePoint, Q: CurvePoint) -> CurvePoint:
    return add(curve, P, neg(curve, Q))


def mul(curve: WeierstrassCurve, n: int, P: CurvePoint) -> CurvePoint:
    if n < 0:
        return mul(curve, -n, neg(curve, P))
    R, S = INFINITY, P
    while n:
        if n & 1:
            R = add(curve, R, S)
        S = dbl(curve, S)
        n >>= 1
    return R


def faltings_zhang(curve: WeierstrassCurve, points: Sequence[CurvePoint]) -> list[CurvePoint]:
    """(P0, P1, ..., PM) -> (P1 - P0, ..., PM - P0)."""
    if len(points) < 1:
        raise ValidationError("need at least one point")
    for P in points:
        if not curve.contains(P):
            raise NotOnCurve(f"{P} is not on {curve}")
    m0 = neg(curve, points[0])
    return [add(curve, P, m0) for P in points[1:]]


# periods -------------------------------------------------------------------

def agm(a: complex, b: complex) -> complex:
    """Arithmetic-geometric mean with the optimal choice of square roots."""
    a, b = complex(a), complex(b)
    for _ in range(AGM_MAX_ITER):
        # the next mean is exact to O(eps^2)
        if abs(a - b) <= 1e-10 * abs(a):
            return (a + b) / 2
        a, b = (a + b) / 2, cmath.sqrt(a * b)
        if abs(a - b) > abs(a + b):
            b = -b
    raise NoConvergence("AGM did not converge")


@dataclass(frozen=True)
class Lattice:
    """Periods of the uniformization with dx/y = dz.

    ``x_shift`` is a2 / -3 so that x - x_shift = wp(z/2; L/2).
    """

    omega1: complex
    omega2: complex
    x_shift: complex = 0j

    def __post_init__(self):
        if self.omega1 == 0 or (self.omega2 / self.omega1).imag <= 0:
            raise ValidationError("lattice periods must satisfy Im(omega2/omega1) > 0")

    @property
    def tau(self) -> complex:
        return self.omega2 / self.omega1

    def coordinates(self, z: complex) -> tuple[float, float]:
        """Real (s, t) with z = s omega1 + t omega2."""
        A = np.array([[self.omega1.real, self.omega2.real], [self.omega1.imag, self.omega2.imag]])
        s, t = np.linalg.solve(A, [z.real, z.imag])
        return float(s), float(t)

    def reduce(self, z: complex) -> complex:
        s, t = self.coordinates(z)
        s, t = s - math.floor(s), t - math.floor(t)
        return s * self.omega1 + t * self.omega2

    def distance_to_lattice(self, z: complex) -> float:
        s, t = self.coordinates(z)
        return abs(z - (round(s) * self.omega1 + round(t) * self.omega2))


def _reduced_basis(w1: complex, w2: complex) -> tuple[complex, complex]:
    """Gauss reduction keeping Im(w2/w1) > 0."""
    for _ in range(200):
        n = round((w2 / w1).real)
        w2 = w2 - n * w1
        if abs(w2) < abs(w1) * (1 - 1e-15):
            w1, w2 = w2, -w1
        else:
            return w1, w2
    raise NoConvergence("lattice reduction did not terminate")


def _eisenstein_g2_g3(w1: complex, w2: complex) -> tuple[complex, complex]:
    w1, w2 = _reduced_basis(w1, w2)
    q = cmath.exp(2j * math.pi * (w2 / w1))
    s3 = s5 = 0j
    qn = q
    for n in range(1, 200):
        d3 = sum(k ** 3 for k in range(1, n + 1) if n % k == 0)
        d5 = sum(k ** 5 for k in range(1, n + 1) if n % k == 0)
        s3 += d3 * qn
        s5 += d5 * qn
        if abs(qn) * n ** 6 < 1e-18:
            break
        qn *= q
    c = 2 * math.pi / w1
    return c ** 4 * (1 + 240 * s3) / 12, c ** 6 * (1 - 504 * s5) / 216


def _period_candidates(e1, e2, e3):
    a = cmath.sqrt(e1 - e3)
    b = cmath.sqrt(e1 - e2)
    c = cmath.sqrt(e2 - e3)
    w1 = 2 * math.pi / agm(a, b)
    w2 = 2j * math.pi / agm(a, c)
    if (w2 / w1).imag < 0:
        w2 = -w2
    return w1, w2


def periods(curve: WeierstrassCurve, rtol: float = 1e-8) -> Lattice:
    """AGM periods, checked against the curve's invariants g2, g3.

    The root order from ``curve.roots()`` is tried first so that the
    basis varies continuously along Legendre paths; other orders are
    fallbacks.
    """
    roots = curve.roots()
    s = sum(roots) / 3
    shifted = [e - s for e in roots]
    A = shifted[0] * shifted[1] + shifted[0] * shifted[2] + shifted[1] * shifted[2]
    B = -shifted[0] * shifted[1] * shifted[2]
    # the lattice L/2 carries wp with g2 = -4A, g3 = -4B
    target = (-4 * A, -4 * B)
    scale = max(abs(target[0]) ** 0.5, abs(target[1]) ** (1 / 3), 1e-300)
    orders = [(0, 1, 2), (0, 2, 1), (1, 0, 2), (1, 2, 0), (2, 0, 1), (2, 1, 0)]
    for i, j, k in orders:
        w1, w2 = _period_candidates(roots[i], roots[j], roots[k])
        g2, g3 = _eisenstein_g2_g3(w1 / 2, w2 / 2)
        err = max(abs(g2 - target[0]) / scale ** 2, abs(g3 - target[1]) / scale ** 3)
        if err <= rtol:
            return Lattice(w1, w2, s)
    raise NoConvergence("AGM periods failed the invariant check for every root order")


def check_legendre_parameter(lam) -> complex:
    lam_c = complex(lam)
    if lam_c == 0 or lam_c == 1:
        raise ValidationError("Legendre parameter must avoid 0 and 1")
    if abs(lam_c.imag) <= 1e-14 and not (0 < lam_c.real < 1):
        raise BranchCut(f"lambda = {lam} lies on the excluded cut (real axis outside (0, 1))")
    return lam_c


def periods_legendre(lam) -> Lattice:
    check_legendre_parameter(lam)
    return periods(WeierstrassCurve.legendre(complex(lam)))


# Weierstrass functions via q-series ----------------------------------------

def _wp_pair(u: complex, W1: complex, W2: complex) -> tuple[complex, complex]:
    """(wp(u), wp'(u)) for the lattice Z W1 + Z W2 (basis already reduced)."""
    tau = W2 / W1
    v = u / W1
    k = round(v.imag / tau.imag)
    v -= k * tau
    v -= round(v.real)
    q = cmath.exp(2j * math.pi * tau)
    zeta = cmath.exp(2j * math.pi * v)
    p = 1 / 12 + zeta / (1 - zeta) ** 2
    dp = zeta * (1 + zeta) / (1 - zeta) ** 3
    qn = q
    for n in range(1, 80):
        t, s = qn * zeta, qn / zeta
        term = t / (1 - t) ** 2 + s / (1 - s) ** 2 - 2 * n * qn / (1 - qn)
        dterm = t * (1 + t) / (1 - t) ** 3 - s * (1 + s) / (1 - s) ** 3
        p += term
        dp += dterm
        if abs(term) + abs(dterm) < 1e-17 * (abs(p) + abs(dp)):
            break
        qn *= q
    c = 2j * math.pi / W1
    return c * c * p, c ** 3 * dp


def _half_lattice(L: Lattice) -> tuple[complex, complex]:
    return _reduced_basis(L.omega1 / 2, L.omega2 / 2)


def elliptic_exp(L: Lattice, z: complex) -> CurvePoint:
    """z -> (x, y) with dx/y = dz; lattice points (within 1e-8) go to O."""
    z = L.reduce(complex(z))
    if L.distance_to_lattice(z) <= NEAR_POLE * abs(L.omega1):
        return CurvePoint.infinity(near_pole=z != 0)
    W1, W2 = _half_lattice(L)
    p, dp = _wp_pair(z / 2, W1, W2)
    return CurvePoint(p + L.x_shift, dp / 2)


def _newton_wp(X: complex, u: complex, W1: complex, W2: complex, maxit: int = 60) -> complex:
    for _ in range(maxit):
        p, dp = _wp_pair(u, W1, W2)
        if dp == 0:
            break
        step = (p - X) / dp
        # damp wild steps on the first iterations
        lim = 0.25 * abs(W1)
        if abs(step) > lim:
            step *= lim / abs(step)
        u -= step
        if abs(step) <= 1e-16 * abs(W1):
            break
    return u


def elliptic_log(curve: WeierstrassCurve, P: CurvePoint, L: Lattice | None = None,
                 grid: int = 24) -> complex:
    """z in the fundamental parallelogram of L with elliptic_exp(L, z) = P."""
    if P.is_infinity:
        raise ValidationError("elliptic log of the point at infinity is the lattice")
    if not curve.contains(P):
        raise NotOnCurve(f"{P} is not on {curve}")
    if L is None:
        L = periods(curve)
    W1, W2 = _half_lattice(L)
    X = complex(P.x) - L.x_shift
    y = complex(P.y)
    if y == 0:
        halves = [W1 / 2, W2 / 2, (W1 + W2) / 2]
        u = min(halves, key=lambda h: abs(_wp_pair(h, W1, W2)[0] - X))
        return L.reduce(2 * u)
    # seeds: best points of a coarse grid plus the pole asymptotics wp ~ 1/u^2
    ts = (np.arange(grid) + 0.5) / grid
    seeds = sorted(((abs(_wp_pair(s * W1 + t * W2, W1, W2)[0] - X), s * W1 + t * W2)
                    for s in ts for t in ts), key=lambda e: e[0])[:3]
    candidates = [u for _, u in seeds]
    if X != 0:
        candidates.insert(0, 1 / cmath.sqrt(X))
    scale = max(1.0, abs(X))
    residual = math.inf
    for u0 in candidates:
        u = _newton_wp(X, u0, W1, W2)
        p, dp = _wp_pair(u, W1, W2)
        residual = abs(p - X)
        if residual <= 1e-9 * scale:
            break
    else:
        raise NoConvergence(f"elliptic log did not converge (residual {residual:.3g})")
    if abs(dp / 2 + y) < abs(dp / 2 - y):
        u = -u
    return L.reduce(2 * u)


def betti_of_point(curve: WeierstrassCurve, P: CurvePoint, L: Lattice | None = None) -> BettiCoords:
    """Betti coordinates of P for Z = [tau], w = z / omega1."""
    if P.is_infinity:
        return BettiCoords(np.zeros(1), np.zeros(1))
    if L is None:
        L = periods(curve)
    z = elliptic_log(curve, P, L)
    return betti_coordinates(SiegelPoint([[L.tau]]), [z / L.omega1])


# Legendre sections ----------------------------------------------------------

SECTIONS = ("const_x2", "two_torsion_0", "two_torsion_1")


def rational_sqrt(q: Fraction) -> Fraction | None:
    q = Fraction(q)
    if q < 0:
        return None
    n, d = math.isqrt(q.numerator), math.isqrt(q.denominator)
    if n * n == q.numerator and d * d == q.denominator:
        return Fraction(n, d)
    return None


def legendre_section(name: str, lam) -> CurvePoint:
    """Built-in sections of y^2 = x(x-1)(x-lambda).

    const_x2 has x = 2, y = sqrt(2(2 - lambda)) on the principal branch; it
    is exact when lambda is rational and 2(2 - lambda) is a rational square.
    """
    lam = _coerce(lam)
    if name == "two_torsion_0":
        return CurvePoint(0 * lam, 0 * lam)
    if name == "two_torsion_1":
        return CurvePoint(0 * lam + 1, 0 * lam)
    if name == "const_x2":
        rhs = 2 * (2 - lam)
        if _is_exact(rhs):
            r = rational_sqrt(rhs)
            if r is not None:
                return CurvePoint(Fraction(2), r)
        rhs = complex(rhs)
        if abs(rhs.imag) <= 1e-14 * max(1.0, abs(rhs)) and rhs.real < 0:
            raise BranchCut("const_x2: 2(2 - lambda) on the negative real axis")
        return CurvePoint(2 + 0j, cmath.sqrt(rhs))
    raise ValidationError(f"unknown section {name!r}; expected one of {SECTIONS}")


def legendre_chart(section: str):
    """Chart t = (Re lambda, Im lambda) -> (Z = [tau], w = z / omega1)."""
    def chart(t):
        lam = complex(t[0], t[1] if len(t) > 1 else 0.0)
        check_legendre_parameter(lam)
        curve = WeierstrassCurve.legendre(lam)
        L = periods(curve)
        P = legendre_section(section, lam)
        if P.is_infinity:
            z = 0j
        else:
            z = elliptic_log(curve, P, L)
        return SiegelPoint([[L.tau]]), np.array([z / L.omega1])
    return chart

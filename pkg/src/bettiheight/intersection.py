"""Intersection numbers on products of projective spaces.

The Chow ring of P^{n_1} x ... x P^{n_r} is Z[H_1, ..., H_r] / (H_i^{n_i+1}),
so a class is a dict from exponent tuples to integers and the degree of a
top-dimensional class is its coefficient at (n_1, ..., n_r).  Everything
here is exact.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction
from math import factorial
from typing import Iterable, Mapping

from .errors import BadIndexing, NonPositive, SpaceMismatch, ValidationError


@dataclass(frozen=True)
class MultiProjSpace:
    dims: tuple

    def __post_init__(self):
        dims = tuple(int(n) for n in self.dims)
        if not dims or any(n < 1 for n in dims):
            raise ValidationError(f"need r >= 1 factors of dimension >= 1, got {dims}")
        object.__setattr__(self, "dims", dims)

    @property
    def r(self) -> int:
        return len(self.dims)

    @property
    def dim(self) -> int:
        return sum(self.dims)

    def __repr__(self):
        return " x ".join(f"P^{n}" for n in self.dims)


class MultiClass:
    """An element of the Chow ring, truncated eagerly."""

    __slots__ = ("space", "coeffs")

    def __init__(self, space: MultiProjSpace, coeffs: Mapping | None = None):
        if not isinstance(space, MultiProjSpace):
            space = MultiProjSpace(tuple(space))
        self.space = space
        clean = {}
        for e, c in (coeffs or {}).items():
            e = tuple(int(x) for x in e)
            if len(e) != space.r or any(x < 0 for x in e):
                raise ValidationError(f"bad exponent tuple {e} for {space}")
            c = int(c)
            if c and all(x <= n for x, n in zip(e, space.dims)):
                clean[e] = clean.get(e, 0) + c
        self.coeffs = {e: c for e, c in clean.items() if c}

    @classmethod
    def one(cls, space) -> "MultiClass":
        space = space if isinstance(space, MultiProjSpace) else MultiProjSpace(tuple(space))
        return cls(space, {(0,) * space.r: 1})

    @classmethod
    def hyperplane(cls, space, i: int) -> "MultiClass":
        space = space if isinstance(space, MultiProjSpace) else MultiProjSpace(tuple(space))
        e = [0] * space.r
        e[i] = 1
        return cls(space, {tuple(e): 1})

    @classmethod
    def divisor(cls, space, degrees: Iterable[int]) -> "MultiClass":
        """First Chern class of O(a_1, ..., a_r), i.e. sum a_i H_i."""
        space = space if isinstance(space, MultiProjSpace) else MultiProjSpace(tuple(space))
        degrees = list(degrees)
        if len(degrees) != space.r:
            raise SpaceMismatch(f"{len(degrees)} degrees for {space}")
        out = {}
        for i, a in enumerate(degrees):
            e = [0] * space.r
            e[i] = 1
            out[tuple(e)] = a
        return cls(space, out)

    @classmethod
    def monomial(cls, space, exponents: Iterable[int], coeff: int = 1) -> "MultiClass":
        space = space if isinstance(space, MultiProjSpace) else MultiProjSpace(tuple(space))
        return cls(space, {tuple(exponents): coeff})

    def __add__(self, other: "MultiClass") -> "MultiClass":
        _same_space(self, other)
        out = dict(self.coeffs)
        for e, c in other.coeffs.items():
            out[e] = out.get(e, 0) + c
        return MultiClass(self.space, out)

    def __neg__(self):
        return MultiClass(self.space, {e: -c for e, c in self.coeffs.items()})

    def __sub__(self, other):
        return self + (-other)

    def __mul__(self, other):
        if isinstance(other, int):
            return MultiClass(self.space, {e: other * c for e, c in self.coeffs.items()})
        return mc_mul(self, other)

    __rmul__ = __mul__

    def __pow__(self, k: int) -> "MultiClass":
        out = MultiClass.one(self.space)
        for _ in range(k):
            out = mc_mul(out, self)
        return out

    def __eq__(self, other):
        return isinstance(other, MultiClass) and self.space == other.space and self.coeffs == other.coeffs

    def __repr__(self):
        if not self.coeffs:
            return "0"
        terms = []
        for e in sorted(self.coeffs):
            mon = "*".join(f"H{i + 1}^{x}" if x > 1 else f"H{i + 1}" for i, x in enumerate(e) if x)
            terms.append(f"{self.coeffs[e]}" + (f"*{mon}" if mon else ""))
        return " + ".join(terms)


def _same_space(u: MultiClass, v: MultiClass):
    if u.space != v.space:
        raise SpaceMismatch(f"{u.space} vs {v.space}")


def mc_mul(u: MultiClass, v: MultiClass) -> MultiClass:
    _same_space(u, v)
    dims = u.space.dims
    out: dict = {}
    for e1, c1 in u.coeffs.items():
        for e2, c2 in v.coeffs.items():
            e = tuple(a + b for a, b in zip(e1, e2))
            if all(x <= n for x, n in zip(e, dims)):
                out[e] = out.get(e, 0) + c1 * c2
    return MultiClass(u.space, out)


def intersection_number(v: MultiClass) -> int:
    """Coefficient of H_1^{n_1} ... H_r^{n_r}."""
    return v.coeffs.get(v.space.dims, 0)


# graph construction ---------------------------------------------------------

def graph_degree_recurrence(l: int, Dprime: int) -> tuple[int, int]:
    """(D_l, D'_l) from D_{l+1} = 4 D_l, D'_{l+1} = D' + 4 D'_l, (D_1, D'_1) = (4, D')."""
    if l < 1:
        raise ValidationError("l must be >= 1")
    if Dprime < 0:
        raise ValidationError("D' must be nonnegative")
    D, Dp = 4, Dprime
    for _ in range(l - 1):
        D, Dp = 4 * D, Dprime + 4 * Dp
    assert D == 4 ** l and 3 * Dp == (4 ** l - 1) * Dprime
    return D, Dp


def multinomial(n: int, *ks: int) -> int:
    if any(k < 0 for k in ks) or sum(ks) != n:
        return 0
    out = factorial(n)
    for k in ks:
        out //= factorial(k)
    return out


def _check_a(a_coeffs: Mapping, total: int) -> dict:
    out = {}
    for key, val in a_coeffs.items():
        i, p = (int(x) for x in key)
        if i < 0 or p < 0 or i + p != total:
            raise BadIndexing(f"a_{{{i},{p}}} violates i + p = {total}")
        if val < 0:
            raise ValidationError(f"a_{{{i},{p}}} = {val} is negative")
        out[(i, p)] = int(val)
    return out


def mf_upper_bound(d: int, n: int, m: int, l: int, Dprime: int, a_coeffs: Mapping) -> tuple[int, int]:
    """Exact multinomial sum bounding (M . F^{d-1}) on the graph, and its simplification.

    The exact sum runs over i + p = n + m - d, i + i'' = n, j' + j'' = n,
    j' + p' = d - 1, i'' + j'' + p'' = n, p + p' + p'' = m - 1 of
    a_ip (d-1; j', p') (n; i'', j'', p'') D_l^{i''} D'_l^{p''}.
    The simplified bound is (4^l D')^{d-1} 2^{d-1} 3^n sum a_ip.
    """
    if d < 1 or n < 1 or m < 1:
        raise ValidationError("d, n, m must be positive")
    a = _check_a(a_coeffs, n + m - d)
    Dl, Dpl = graph_degree_recurrence(l, Dprime)
    exact = 0
    for (i, p), aip in a.items():
        if not aip:
            continue
        i2 = n - i
        if i2 < 0:
            continue
        for j1 in range(0, d):
            p1 = d - 1 - j1
            j2 = n - j1
            p2 = n - i2 - j2
            if j2 < 0 or p2 < 0 or p + p1 + p2 != m - 1:
                continue
            exact += aip * multinomial(d - 1, j1, p1) * multinomial(n, i2, j2, p2) * Dl ** i2 * Dpl ** p2
    simplified = (4 ** l * Dprime) ** (d - 1) * 2 ** (d - 1) * 3 ** n * sum(a.values())
    return exact, simplified


def mf_intersection(d: int, n: int, m: int, l: int, Dprime: int, a_coeffs: Mapping) -> int:
    """The same bound computed in the Chow ring of P^n x P^n x P^m:
    O(0,0,1) O(0,1,1)^{d-1} O(D_l,1,D'_l)^n sum a_ip H_1^i H_3^p."""
    a = _check_a(a_coeffs, n + m - d)
    Dl, Dpl = graph_degree_recurrence(l, Dprime)
    S = MultiProjSpace((n, n, m))
    cyc = MultiClass(S, {(i, 0, p): c for (i, p), c in a.items()})
    M = MultiClass.divisor(S, (0, 0, 1))
    F = MultiClass.divisor(S, (0, 1, 1))
    G = MultiClass.divisor(S, (Dl, 1, Dpl))
    return intersection_number(M * F ** (d - 1) * G ** n * cyc)


# Siu ----------------------------------------------------------------------------

def siu_bigness_check(Fd: int, MFd1: int, d: int, c1, N: int) -> bool:
    """Fd > d c1 N^2 MFd1, exactly."""
    if d < 1 or N < 1:
        raise ValidationError("d and N must be positive")
    return Fraction(Fd) > d * Fraction(c1) * N * N * Fraction(MFd1)


def admissible_c1(kappa, c, d: int) -> Fraction:
    """kappa / (2 c d), the midpoint of the admissible interval (0, kappa/(c d))."""
    kappa, c = Fraction(kappa), Fraction(c)
    if kappa <= 0 or c <= 0:
        raise NonPositive("kappa and c must be positive")
    if d < 1:
        raise ValidationError("d must be positive")
    return kappa / (2 * c * d)


def induced_scale(kappa, c, d: int, N: int) -> tuple[Fraction, Fraction]:
    """Intersection numbers (Fd, MFd1) = (kappa N^{2d}, c N^{2(d-1)})."""
    return Fraction(kappa) * N ** (2 * d), Fraction(c) * N ** (2 * (d - 1))

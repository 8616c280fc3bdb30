"""Betti coordinates and the Betti form on C^g x (Siegel upper half space).

Coordinates on the universal covering are (w, Z) with Z symmetric and
Im Z positive definite.  The real coordinates (a, b) are defined by
w = D a + Z b, where D is the diagonal polarization type (all ones for a
principal polarization).  The Betti form is evaluated through its
Hermitian form

    H(xi, eta) = (xi_Z Y^-1 Im w - xi_w)^T Y^-1 conj(eta_Z Y^-1 Im w - eta_w)

and the real 2-form is omega(xi, eta) = -2 Im H(xi, eta), which in the
(a, b) coordinates reads 2 (da)^T ^ db.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import BranchJump, DegenerateDirection, SingularY, ValidationError

MAX_COND_Y = 1e12


def _as_complex_vector(w, g: int) -> np.ndarray:
    w = np.atleast_1d(np.asarray(w, dtype=complex))
    if w.shape != (g,):
        raise ValidationError(f"expected a complex vector of length {g}, got shape {w.shape}")
    return w


@dataclass(frozen=True)
class SiegelPoint:
    """A period matrix Z in the Siegel upper half space.

    Only the upper triangle of the input is read; the stored matrix is
    its exact symmetrization.
    """

    Z: np.ndarray
    g: int = field(init=False)

    def __post_init__(self):
        Z = np.atleast_2d(np.asarray(self.Z, dtype=complex))
        if Z.ndim != 2 or Z.shape[0] != Z.shape[1] or Z.shape[0] == 0:
            raise ValidationError(f"period matrix must be square, got shape {Z.shape}")
        upper = np.triu(Z)
        Z = upper + np.triu(Z, 1).T
        Z.setflags(write=False)
        object.__setattr__(self, "Z", Z)
        object.__setattr__(self, "g", Z.shape[0])
        eig = np.linalg.eigvalsh(Z.imag)
        if not np.all(np.isfinite(Z)) or eig[0] <= 0:
            raise SingularY("Im Z is not positive definite")
        if eig[-1] / eig[0] > MAX_COND_Y:
            raise SingularY(f"Im Z is too ill-conditioned (cond {eig[-1] / eig[0]:.3g})")

    @property
    def X(self) -> np.ndarray:
        return self.Z.real

    @property
    def Y(self) -> np.ndarray:
        return self.Z.imag

    @property
    def Y_inv(self) -> np.ndarray:
        return np.linalg.inv(self.Z.imag)


@dataclass(frozen=True)
class PolarizationType:
    D: tuple

    def __post_init__(self):
        D = tuple(int(d) for d in self.D)
        if not D or any(d <= 0 for d in D):
            raise ValidationError("polarization type needs positive integers")
        if any(D[i + 1] % D[i] for i in range(len(D) - 1)):
            raise ValidationError(f"polarization type {D} violates d_1 | d_2 | ... | d_g")
        object.__setattr__(self, "D", D)

    @classmethod
    def principal(cls, g: int) -> "PolarizationType":
        return cls((1,) * g)

    @property
    def g(self) -> int:
        return len(self.D)

    @property
    def matrix(self) -> np.ndarray:
        return np.diag(np.asarray(self.D, dtype=float))


def reduce_mod_one(x: np.ndarray) -> np.ndarray:
    r = np.asarray(x, dtype=float) - np.floor(x)
    r[r >= 1.0] = 0.0
    return r


@dataclass(frozen=True)
class BettiCoords:
    """Real coordinates (a, b); ``a``, ``b`` are reduced to [0,1)^g and
    ``a_raw``, ``b_raw`` keep the unreduced solution."""

    a_raw: np.ndarray
    b_raw: np.ndarray

    @property
    def a(self) -> np.ndarray:
        return reduce_mod_one(self.a_raw)

    @property
    def b(self) -> np.ndarray:
        return reduce_mod_one(self.b_raw)

    @property
    def raw(self) -> np.ndarray:
        return np.concatenate([self.a_raw, self.b_raw])

    @property
    def reduced(self) -> np.ndarray:
        return np.concatenate([self.a, self.b])

    @classmethod
    def from_raw(cls, ab: np.ndarray) -> "BettiCoords":
        ab = np.asarray(ab, dtype=float)
        g = ab.size // 2
        return cls(ab[:g].copy(), ab[g:].copy())


@dataclass(frozen=True)
class TangentVector:
    xi_w: np.ndarray
    xi_Z: np.ndarray

    def __post_init__(self):
        xi_w = np.atleast_1d(np.asarray(self.xi_w, dtype=complex))
        xi_Z = np.atleast_2d(np.asarray(self.xi_Z, dtype=complex))
        g = xi_w.shape[0]
        if xi_Z.shape != (g, g):
            raise ValidationError(f"xi_Z must be {g}x{g}, got {xi_Z.shape}")
        if not np.allclose(xi_Z, xi_Z.T, rtol=0, atol=1e-14 * (1 + np.abs(xi_Z).max())):
            raise ValidationError("xi_Z must be symmetric")
        object.__setattr__(self, "xi_w", xi_w)
        object.__setattr__(self, "xi_Z", (xi_Z + xi_Z.T) / 2)

    def __mul__(self, s) -> "TangentVector":
        return TangentVector(s * self.xi_w, s * self.xi_Z)

    __rmul__ = __mul__

    def norm(self) -> float:
        return float(np.sqrt(np.sum(np.abs(self.xi_w) ** 2) + np.sum(np.abs(self.xi_Z) ** 2)))


def _check_D(Z: SiegelPoint, D: PolarizationType | None) -> PolarizationType:
    if D is None:
        return PolarizationType.principal(Z.g)
    if D.g != Z.g:
        raise ValidationError(f"polarization has length {D.g}, expected {Z.g}")
    return D


def betti_coordinates(Z: SiegelPoint, w, D: PolarizationType | None = None) -> BettiCoords:
    """Solve w = D a + Z b for real (a, b).

    The real system is [Re w; Im w] = [[D, X], [0, Y]] [a; b], solved by a
    pivoted LU factorization.
    """
    D = _check_D(Z, D)
    g = Z.g
    w = _as_complex_vector(w, g)
    A = np.zeros((2 * g, 2 * g))
    A[:g, :g] = D.matrix
    A[:g, g:] = Z.X
    A[g:, g:] = Z.Y
    sol = np.linalg.solve(A, np.concatenate([w.real, w.imag]))
    return BettiCoords(sol[:g], sol[g:])


def betti_to_fiber(Z: SiegelPoint, c: BettiCoords, D: PolarizationType | None = None) -> np.ndarray:
    D = _check_D(Z, D)
    return D.matrix @ c.a_raw + Z.Z @ c.b_raw


def _defect_vector(Z: SiegelPoint, w: np.ndarray, t: TangentVector) -> np.ndarray:
    # v = xi_Z Y^-1 Im(w) - xi_w
    return t.xi_Z @ (Z.Y_inv @ w.imag) - t.xi_w


def betti_form_hermitian(Z: SiegelPoint, w, xi: TangentVector, eta: TangentVector) -> complex:
    w = _as_complex_vector(w, Z.g)
    u = _defect_vector(Z, w, xi)
    v = _defect_vector(Z, w, eta)
    return complex(u @ Z.Y_inv @ np.conj(v))


def betti_form_value(Z: SiegelPoint, w, xi: TangentVector, eta: TangentVector) -> float:
    """The real 2-form omega(xi, eta) = -2 Im H(xi, eta)."""
    return -2.0 * betti_form_hermitian(Z, w, xi, eta).imag


def push_to_ab(Z: SiegelPoint, w, xi: TangentVector, D: PolarizationType | None = None) -> np.ndarray:
    """Differential of (w, Z) -> (a, b) applied to a tangent vector."""
    D = _check_D(Z, D)
    w = _as_complex_vector(w, Z.g)
    Yinv = Z.Y_inv
    b = Yinv @ w.imag
    db = Yinv @ (xi.xi_w.imag - xi.xi_Z.imag @ b)
    da = (xi.xi_w.real - xi.xi_Z.real @ b - Z.X @ db) / np.asarray(D.D, dtype=float)
    return np.concatenate([da, db])


def betti_form_flat(xi_ab, eta_ab) -> float:
    xi_ab = np.asarray(xi_ab, dtype=float)
    eta_ab = np.asarray(eta_ab, dtype=float)
    if xi_ab.shape != eta_ab.shape or xi_ab.size % 2:
        raise ValidationError("flat form needs two real vectors of equal even length")
    g = xi_ab.size // 2
    return float(2.0 * (xi_ab[:g] @ eta_ab[g:] - eta_ab[:g] @ xi_ab[g:]))


def pullback_scaling(Z: SiegelPoint, w, xi: TangentVector, N: int, tol: float = 1e-14) -> float:
    """Ratio H(Nw; (N xi_w, xi_Z)) / H(w; xi), which should be N^2."""
    if N == 0:
        raise ValidationError("N must be nonzero")
    w = _as_complex_vector(w, Z.g)
    base = betti_form_hermitian(Z, w, xi, xi).real
    if base <= tol * max(xi.norm(), 1.0) ** 2:
        raise DegenerateDirection("H(xi, xi) vanishes; scaling ratio undefined")
    scaled = TangentVector(N * xi.xi_w, xi.xi_Z)
    return betti_form_hermitian(Z, N * w, scaled, scaled).real / base


def kernel_directions(Z: SiegelPoint, w) -> list[TangentVector]:
    """Basis of the kernel {xi_w = xi_Z Y^-1 Im w}, one vector per E_ij, i <= j."""
    g = Z.g
    w = _as_complex_vector(w, g)
    m = Z.Y_inv @ w.imag
    out = []
    for i in range(g):
        for j in range(i, g):
            E = np.zeros((g, g), dtype=complex)
            E[i, j] = E[j, i] = 1.0
            out.append(TangentVector(E @ m, E))
    return out


def hermitian_gram(Z: SiegelPoint, w, frame: Sequence[TangentVector]) -> np.ndarray:
    return np.array([[betti_form_hermitian(Z, w, s, t) for t in frame] for s in frame])


# charts -------------------------------------------------------------------

Chart = Callable[[np.ndarray], "tuple[SiegelPoint, np.ndarray]"]


def _unwrap(samples: list[np.ndarray], center: np.ndarray, max_residual: float) -> list[np.ndarray]:
    out = []
    for s in samples:
        d = s - center
        k = np.round(d)
        if np.any(np.abs(d - k) > max_residual):
            raise BranchJump("Betti coordinates jump between samples; reduce the step")
        out.append(s - k)
    return out


@dataclass
class RankReport:
    rank: int
    singular_values: list
    jacobian: np.ndarray
    step: float
    stable: bool = True
    rank_half_step: int | None = None

    @property
    def ratio(self) -> float:
        s = self.singular_values
        if len(s) < 2 or s[0] == 0:
            return 0.0
        return s[1] / s[0]


def betti_jacobian(chart: Chart, t0, step: float, D: PolarizationType | None = None,
                   max_residual: float = 0.25) -> np.ndarray:
    """Central-difference Jacobian of t -> unreduced (a, b), with samples
    shifted by integers onto the branch of the centre sample."""
    if step <= 0:
        raise ValidationError("step must be positive")
    t0 = np.atleast_1d(np.asarray(t0, dtype=float))
    Z0, w0 = chart(t0)
    center = betti_coordinates(Z0, w0, D).raw
    cols = []
    for i in range(t0.size):
        e = np.zeros_like(t0)
        e[i] = step
        plus, minus = (betti_coordinates(*chart(t0 + s * e), D).raw for s in (1, -1))
        plus, minus = _unwrap([plus, minus], center, max_residual)
        cols.append((plus - minus) / (2 * step))
    return np.column_stack(cols)


def _rank_from_jacobian(J: np.ndarray, rank_tol: float, abs_tol: float) -> tuple[int, np.ndarray]:
    s = np.linalg.svd(J, compute_uv=False)
    if s.size == 0 or s[0] <= abs_tol:
        return 0, s
    return int(np.sum(s > max(rank_tol * s[0], abs_tol))), s


def numerical_betti_rank(chart: Chart, t0, step: float = 1e-4, rank_tol: float = 1e-6,
                         abs_tol: float = 1e-6, D: PolarizationType | None = None,
                         check_half_step: bool = True) -> RankReport:
    """Real rank of the Betti map's differential along a chart.

    A singular value counts when it exceeds both ``rank_tol * sigma_max``
    and the absolute floor ``abs_tol``; the floor absorbs solver noise
    divided by the step.  With ``check_half_step`` the rank is recomputed
    at step/2 and ``stable`` records whether it agrees.
    """
    J = betti_jacobian(chart, t0, step, D)
    rank, s = _rank_from_jacobian(J, rank_tol, abs_tol)
    report = RankReport(rank, [float(x) for x in s], J, step)
    if check_half_step:
        J2 = betti_jacobian(chart, t0, step / 2, D)
        r2, _ = _rank_from_jacobian(J2, rank_tol, abs_tol)
        report.rank_half_step = r2
        report.stable = r2 == rank
    return report


def chart_tangents(chart: Chart, t0, step: float = 1e-4,
                   D: PolarizationType | None = None) -> tuple[SiegelPoint, np.ndarray, list[TangentVector]]:
    """Tangent vectors (xi_w, xi_Z) of a chart by central differences.

    w is rebuilt from branch-tracked Betti coordinates so that lattice
    reductions inside the chart do not leak into the derivative.
    """
    t0 = np.atleast_1d(np.asarray(t0, dtype=float))
    Z0, w0 = chart(t0)
    D = _check_D(Z0, D)
    center = betti_coordinates(Z0, w0, D).raw
    w0 = betti_to_fiber(Z0, BettiCoords.from_raw(center), D)
    tangents = []
    for i in range(t0.size):
        e = np.zeros_like(t0)
        e[i] = step
        pts = []
        for s in (1, -1):
            Zs, ws = chart(t0 + s * e)
            ab = betti_coordinates(Zs, ws, D).raw
            (ab,) = _unwrap([ab], center, 0.25)
            pts.append((Zs, betti_to_fiber(Zs, BettiCoords.from_raw(ab), D)))
        (Zp, wp), (Zm, wm) = pts
        tangents.append(TangentVector((wp - wm) / (2 * step), (Zp.Z - Zm.Z) / (2 * step)))
    return Z0, w0, tangents


def chart_form_value(chart: Chart, t0, step: float = 1e-4, D: PolarizationType | None = None) -> float:
    """omega on the coordinate 2-frame of a 2-real-parameter chart."""
    Z0, w0, tangents = chart_tangents(chart, t0, step, D)
    if len(tangents) != 2:
        raise ValidationError("chart_form_value needs a chart with exactly two real parameters")
    return betti_form_value(Z0, w0, tangents[0], tangents[1])

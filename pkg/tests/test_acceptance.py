"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line."""
import json
import subprocess
import sys
import time
from fractions import Fraction as F
from pathlib import Path

import numpy as np
import pytest

from bettiheight.counting import (MWLattice, alon_cross_validate, covering_bound, greedy_cover,
                                  hurwitz_packet_bound, nt_norm)
from bettiheight.elliptic import (CurvePoint, WeierstrassCurve, add, betti_of_point, dbl,
                                  elliptic_exp, legendre_chart, periods, sub)
from bettiheight.heights import (assemble_constants, lambda_grid, silverman_tate_scan,
                                 tate_limit_height)
from bettiheight.intersection import (admissible_c1, graph_degree_recurrence, induced_scale,
                                      mf_upper_bound, siu_bigness_check)
from bettiheight.siegel import (BettiCoords, PolarizationType, SiegelPoint, TangentVector,
                                betti_coordinates, betti_form_flat, betti_form_value, betti_to_fiber,
                                hermitian_gram, kernel_directions, numerical_betti_rank,
                                pullback_scaling, push_to_ab)

BIG = 10 ** 8


@pytest.fixture
def verdict(capsys):
    def report(n: int, ok: bool, detail: str):
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {n:2d}: {detail}")
        assert ok, detail
    return report


def random_siegel(rng, g):
    X = rng.normal(size=(g, g))
    A = rng.normal(size=(g, g))
    return SiegelPoint(X + X.T + 1j * (A @ A.T + 0.5 * np.eye(g)))


def random_tangent(rng, g):
    B = rng.normal(size=(g, g)) + 1j * rng.normal(size=(g, g))
    return TangentVector(rng.normal(size=g) + 1j * rng.normal(size=g), B + B.T)


def random_w(rng, g):
    return 2 * rng.normal(size=g) + 2j * rng.normal(size=g)


def test_01_dual_formula(verdict):
    rng = np.random.default_rng(101)
    t0 = time.perf_counter()
    worst = 0.0
    for k in range(200):
        g = 1 + k % 3
        Z, w = random_siegel(rng, g), random_w(rng, g)
        xi, eta = random_tangent(rng, g), random_tangent(rng, g)
        v = betti_form_value(Z, w, xi, eta)
        f = betti_form_flat(push_to_ab(Z, w, xi), push_to_ab(Z, w, eta))
        worst = max(worst, abs(v - f) / max(abs(v), abs(f)))
    dt = time.perf_counter() - t0
    verdict(1, worst <= 1e-9 and dt < 10, f"max relative gap {worst:.2e} (<= 1e-9), {dt:.2f} s (< 10 s)")


def test_02_scaling(verdict):
    rng = np.random.default_rng(102)
    worst = 0.0
    for k in range(100):
        g = 1 + k % 3
        Z, w, xi = random_siegel(rng, g), random_w(rng, g), random_tangent(rng, g)
        for N in (2, 3, 5):
            worst = max(worst, abs(pullback_scaling(Z, w, xi, N) / N ** 2 - 1))
    verdict(2, worst <= 1e-10, f"max |ratio/N^2 - 1| = {worst:.2e} (<= 1e-10)")


def test_03_semi_positivity(verdict):
    rng = np.random.default_rng(103)
    worst = -np.inf
    for k in range(500):
        g = 1 + k % 3
        Z, w = random_siegel(rng, g), random_w(rng, g)
        frame = [random_tangent(rng, g) for _ in range(4)] + kernel_directions(Z, w)
        ev = np.linalg.eigvalsh(hermitian_gram(Z, w, frame))
        worst = max(worst, -ev[0] / ev[-1])
    verdict(3, worst <= 1e-10, f"max -min_eig/max_eig = {worst:.2e} (<= 1e-10)")


def test_04_round_trips(verdict):
    rng = np.random.default_rng(104)
    worst = 0.0
    for D in (None, (1, 2), (2, 4)):
        for _ in range(100):
            g = 2 if D else int(rng.integers(1, 4))
            pol = PolarizationType(D) if D else None
            Z, w = random_siegel(rng, g), random_w(rng, g)
            back = betti_to_fiber(Z, betti_coordinates(Z, w, pol), pol)
            worst = max(worst, np.max(np.abs(back - w)))
            c = BettiCoords(rng.uniform(-2, 2, g), rng.uniform(-2, 2, g))
            again = betti_coordinates(Z, betti_to_fiber(Z, c, pol), pol)
            worst = max(worst, np.max(np.abs(again.a_raw - c.a_raw)), np.max(np.abs(again.b_raw - c.b_raw)))
    verdict(4, worst <= 1e-12, f"max round-trip error {worst:.2e} (<= 1e-12), D in {{1, (1,2), (2,4)}}")


def test_05_homomorphism(verdict):
    rng = np.random.default_rng(105)
    lams = [0.1, 0.3, 0.5, 0.7, 0.9, 0.5 + 0.5j, -0.5 + 0.3j, 2 + 1j, 0.3 - 0.8j, -1 - 1j]
    worst = 0.0
    for lam in lams:
        curve = WeierstrassCurve.legendre(lam)
        L = periods(curve)
        for _ in range(100):
            P = elliptic_exp(L, rng.uniform() * L.omega1 + rng.uniform() * L.omega2)
            Q = elliptic_exp(L, rng.uniform() * L.omega1 + rng.uniform() * L.omega2)
            d = (betti_of_point(curve, add(curve, P, Q), L).raw - betti_of_point(curve, P, L).raw
                 - betti_of_point(curve, Q, L).raw)
            worst = max(worst, float(np.max(np.abs(d - np.round(d)))))
    verdict(5, worst <= 1e-8, f"max torus distance {worst:.2e} (<= 1e-8) over 10 lambdas x 100 pairs")


def test_06_nondegeneracy(verdict):
    t0 = time.perf_counter()
    ok, worst_ratio = True, np.inf
    for lam in (0.3, 0.6, 0.4 + 0.2j, -0.5 + 0.5j):
        t = (lam.real, lam.imag) if isinstance(lam, complex) else (lam, 0.0)
        for name in ("two_torsion_0", "two_torsion_1"):
            rep = numerical_betti_rank(legendre_chart(name), t)
            ok &= rep.rank == 0 and rep.stable
        rep = numerical_betti_rank(legendre_chart("const_x2"), t)
        ok &= rep.rank == 2 and rep.stable and rep.ratio > 1e-3
        worst_ratio = min(worst_ratio, rep.ratio)
    dt = time.perf_counter() - t0
    verdict(6, ok and dt < 30, f"torsion rank 0, const_x2 rank 2 (min sigma2/sigma1 {worst_ratio:.3f}), "
                               f"stable under halving; {dt:.2f} s (< 30 s)")


# Tate limit ---------------------------------------------------------------------------

PARALLELOGRAM = {
    (0, 17): [(-2, 3), (-1, 4), (2, 5), (4, 9), (8, 23)],
    (-1, 1): [(-1, 1), (0, 1), (1, 1), (3, 5), (5, 11)],
    (-4, 4): [(-2, 2), (0, 2), (1, 1), (2, 2), (6, 14)],
    (-4, 1): [(-2, 1), (-1, 2), (0, 1), (2, 1), (3, 4)],
    (2, 4): [(-1, 1), (0, 2), (2, 4), (7, 19)],
}
PAIRS = [(0, 1), (0, 2), (1, 2), (1, 3)]


def test_07_tate_limit(verdict):
    E, P = WeierstrassCurve.short(0, -2), CurvePoint(F(3), F(5))
    h1 = tate_limit_height(E, P, tol=2e-7, max_digits=BIG)
    h2 = tate_limit_height(E, dbl(E, P), tol=2e-7, max_digits=BIG)
    quad = abs(h2.canonical - 4 * h1.canonical)

    diffs = np.abs(h1.differences)
    ratios = diffs[2:-1] / np.where(diffs[3:] > 0, diffs[3:], np.nan)  # |d_l / d_{l+1}| for l >= 3
    decay_ok = bool(np.all((ratios >= 3) & (ratios <= 5)))

    cache = {}

    def h(curve, Q):
        key = (curve.a4, curve.a6, None if Q.is_infinity else (Q.x, Q.y))
        if key not in cache:
            cache[key] = tate_limit_height(curve, Q, tol=1e-6, max_digits=BIG).canonical
        return cache[key]

    residuals = []
    for (A, B), raw in PARALLELOGRAM.items():
        curve = WeierstrassCurve.short(A, B)
        pts = [CurvePoint(F(x), F(y)) for x, y in raw]
        for i, j in PAIRS:
            Pi, Pj = pts[i], pts[j]
            r = h(curve, add(curve, Pi, Pj)) + h(curve, sub(curve, Pi, Pj)) - 2 * h(curve, Pi) - 2 * h(curve, Pj)
            residuals.append(abs(r))
    par = max(residuals)

    tors = [tate_limit_height(WeierstrassCurve.short(-1, 0), CurvePoint(F(0), F(0))).canonical,
            tate_limit_height(WeierstrassCurve.short(0, 1), CurvePoint(F(2), F(3))).canonical,
            tate_limit_height(WeierstrassCurve.short(0, 1), CurvePoint(F(0), F(1))).canonical]
    tors_ok = all(t == 0.0 for t in tors)

    ok = decay_ok and quad <= 1e-6 and par <= 1e-6 and len(residuals) == 20 and tors_ok
    shown = ", ".join(f"{x:.3g}" for x in ratios)
    verdict(7, ok, f"h(P) = {h1.canonical:.9f}; decay ratios l>=3 in [3,5]: {decay_ok} ({shown}); "
                   f"|h(2P) - 4h(P)| = {quad:.2e} (<= 1e-6); parallelogram max {par:.2e} over "
                   f"{len(residuals)} pairs (<= 1e-6); torsion exactly 0: {tors_ok}")


def test_08_silverman_tate(verdict):
    half = silverman_tate_scan(lambda_grid(50), tol=1e-3)
    full = silverman_tate_scan(lambda_grid(100), tol=1e-3)
    s50, s100 = half.sup_ratio, full.sup_ratio
    change = abs(s100 - s50) / s50
    errors = sum(1 for s in full.samples if s.error)
    ok = np.isfinite(s50) and np.isfinite(s100) and change < 0.2 and errors == 0
    verdict(8, ok, f"sup ratio {s50:.6f} (50 lambdas) vs {s100:.6f} (100 lambdas), change {change:.2%} "
                   f"(< 20%), {errors} sample errors")


def test_09_degree_recurrences(verdict):
    rec_ok = all(graph_degree_recurrence(l, Dp) == (4 ** l, (4 ** l - 1) // 3 * Dp)
                 for l in range(1, 13) for Dp in range(0, 20))
    rng = np.random.default_rng(109)
    bound_ok = True
    for _ in range(100):
        d, n, m, l = (int(x) for x in rng.integers(1, [4, 4, 4, 5]))
        Dp = int(rng.integers(1, 8))
        k = n + m - d
        a = {(i, k - i): int(rng.integers(0, 6)) for i in range(k + 1)}
        exact, simplified = mf_upper_bound(d, n, m, l, Dp, a)
        bound_ok &= exact <= simplified
    verdict(9, rec_ok and bound_ok, f"recurrences exact for l <= 12: {rec_ok}; exact_sum <= simplified on "
                                    f"100 draws: {bound_ok}")


def test_10_siu(verdict):
    rng = np.random.default_rng(110)
    ok = True
    for _ in range(200):
        kappa = F(int(rng.integers(1, 1000)), int(rng.integers(1, 100)))
        c = F(int(rng.integers(1, 1000)), int(rng.integers(1, 100)))
        d, N = int(rng.integers(1, 6)), int(rng.integers(1, 9))
        Fd, MF = induced_scale(kappa, c, d, N)
        ok &= siu_bigness_check(Fd, MF, d, admissible_c1(kappa, c, d), N)
        ok &= not siu_bigness_check(Fd, MF, d, kappa / (c * d), N)
    verdict(10, ok, "kappa/(2cd) passes and kappa/(cd) fails on 200 random (kappa, c, d, N)")


def test_11_covering(verdict):
    rng = np.random.default_rng(111)
    t0 = time.perf_counter()
    worst = 0.0
    for k in range(500):
        rho = 1 + k % 3
        A = rng.normal(size=(rho, rho))
        lat = MWLattice(A @ A.T + 0.05 * np.eye(rho))
        R = rng.uniform(0.5, 5)
        r = rng.uniform(0.1, 2) * R
        pts = []
        for _ in range(int(rng.integers(1, 150))):
            v = rng.normal(size=rho)
            pts.append(v * R * rng.uniform() ** (1 / rho) / nt_norm(lat, v))
        worst = max(worst, len(greedy_cover(pts, lat, r)) / covering_bound(R, r, rho))
    dt = time.perf_counter() - t0
    verdict(11, worst <= 1 and dt < 10, f"max count/bound {worst:.3f} (<= 1) on 500 configs, {dt:.2f} s (< 10 s)")


def test_12_alon(verdict):
    out = alon_cross_validate()
    n, bad = len(out["instances"]), len(out["counterexamples"])
    verdict(12, bad == 0 and n > 0, f"{bad} counterexamples over {n} (instance, |Sigma|) runs")


def test_13_assemble(verdict):
    got = assemble_constants(8, 1, {4: 8})
    verdict(13, got == (4, F(1, 2), 1), f"assemble_constants(8, 1, c2(4) = 8) -> {got}")


def test_14_hurwitz(verdict):
    got = (hurwitz_packet_bound(2), hurwitz_packet_bound(3))
    verdict(14, got == (84, 168), f"(g=2, g=3) -> {got}")


def test_15_cli_determinism(verdict):
    from test_cli import CASES, GOLDEN, close

    def body(argv):
        proc = subprocess.run([sys.executable, "-m", "bettiheight", *argv], capture_output=True, text=True)
        rep = json.loads(proc.stdout)
        rep.pop("meta")
        return json.dumps(rep, sort_keys=True, indent=2)

    mismatched, golden_bad = [], []
    for name, argv in sorted(CASES.items()):
        b1, b2 = body(argv), body(argv)
        if b1 != b2:
            mismatched.append(name)
        try:
            close(json.loads(b1), json.loads((GOLDEN / f"{name}.json").read_text()))
        except (AssertionError, OSError):
            golden_bad.append(name)
    verdict(15, not mismatched and not golden_bad,
            f"{len(CASES)} commands: byte-identical reruns except {mismatched}; golden mismatches {golden_bad}")

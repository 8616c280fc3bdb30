import math
from fractions import Fraction as F

import pytest
from hypothesis import given, settings, strategies as st

from bettiheight.elliptic import CurvePoint, WeierstrassCurve, add, dbl, legendre_section, neg, sub
from bettiheight.errors import (BudgetExceeded, MissingC2, NonPositive, NotOnCurve, TwoTorsion,
                                ZeroPoint)
from bettiheight.heights import (DoublingForms, HeightReport, RationalProjectivePoint,
                                 assemble_constants, duplication_defect, envelope, lambda_grid,
                                 log_abs, naive_total_height, silverman_tate_scan,
                                 tate_limit_height, weil_height, x_duplication)

E2 = WeierstrassCurve.short(0, -2)
P35 = CurvePoint(F(3), F(5))
BIG = 10 ** 7

# small points on a few curves, used for the quadratic-form checks
CURVE_POINTS = {
    (0, 17): [(-2, 3), (-1, 4), (2, 5), (4, 9), (8, 23)],
    (-1, 1): [(-1, 1), (0, 1), (1, 1), (3, 5), (5, 11)],
    (-4, 4): [(-2, 2), (0, 2), (1, 1), (2, 2), (6, 14)],
    (0, -11): [(3, 4), (15, 58)],
    (-4, 1): [(-2, 1), (-1, 2), (0, 1)],
    (0, -2): [(3, 5)],
}


def points():
    for (A, B), pts in CURVE_POINTS.items():
        E = WeierstrassCurve.short(A, B)
        for x, y in pts:
            yield E, CurvePoint(F(x), F(y))


def test_weil_height_examples():
    assert weil_height(RationalProjectivePoint([2, 4])) == pytest.approx(math.log(2))
    assert RationalProjectivePoint([2, 4]).coords == (1, 2)
    assert weil_height(RationalProjectivePoint([1, 1, 1])) == 0
    assert weil_height(RationalProjectivePoint([3, 5])) == pytest.approx(math.log(5))
    assert RationalProjectivePoint([F(1, 2), F(1, 3)]).coords == (3, 2)
    with pytest.raises(ZeroPoint):
        RationalProjectivePoint([0, 0])


def test_projective_equality():
    assert RationalProjectivePoint([1, 2]) == RationalProjectivePoint([-2, -4])
    assert hash(RationalProjectivePoint([1, 2])) == hash(RationalProjectivePoint([-1, -2]))


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(-10 ** 30, 10 ** 30), min_size=2, max_size=4).filter(any),
       st.integers(1, 10 ** 6))
def test_weil_height_scale_invariant(coords, k):
    P = RationalProjectivePoint(coords)
    Q = RationalProjectivePoint([k * c for c in coords])
    assert P == Q
    assert weil_height(P) >= 0
    assert math.gcd(*P.coords) == 1


def test_log_abs_large():
    n = 7 ** 5000
    assert log_abs(n) == pytest.approx(5000 * math.log(7), rel=1e-14)


def test_naive_total_height():
    R = RationalProjectivePoint
    assert naive_total_height(R([1, 2]), R([1, 1])) == pytest.approx(math.log(2))
    assert naive_total_height(R([1, 1]), R([1, 1])) == 0
    assert naive_total_height(R([1, 2]), R([1, 3])) == pytest.approx(math.log(6))


def test_x_duplication():
    assert x_duplication(E2, 3) == dbl(E2, P35).x
    assert x_duplication(E2, 3) == F(129, 100)
    with pytest.raises(TwoTorsion):
        x_duplication(WeierstrassCurve.short(-1, 0), 0)


@pytest.mark.parametrize("E,P", list(points())[:10])
def test_x_duplication_matches_group_law(E, P):
    assert x_duplication(E, P.x) == dbl(E, P).x
    assert x_duplication(E, P.x) == dbl(E, neg(E, P)).x


def test_resultant_known_value():
    assert DoublingForms.for_curve(E2).resultant == 2985984


@settings(max_examples=60, deadline=None)
@given(st.sampled_from(list(CURVE_POINTS)), st.integers(-10 ** 12, 10 ** 12), st.integers(1, 10 ** 12))
def test_forms_step_matches_fractions(ab, p, q):
    E = WeierstrassCurve.short(*ab)
    forms = DoublingForms.for_curve(E)
    g = math.gcd(p, q)
    p, q = p // g, q // g
    N, D = forms.step(p, q)
    try:
        x2 = x_duplication(E, F(p, q))
    except TwoTorsion:
        assert D == 0
        return
    assert F(int(N), int(D)) == x2
    assert (int(N), int(D)) == (x2.numerator, x2.denominator)
    # any common factor of the unreduced values divides the resultant
    raw_N = sum(c * p ** (4 - i) * q ** i for i, c in enumerate(forms.num))
    raw_D = sum(c * p ** (4 - i) * q ** i for i, c in enumerate(forms.den))
    assert forms.resultant % math.gcd(raw_N, raw_D) == 0


def test_torsion_points():
    rep = tate_limit_height(WeierstrassCurve.short(-1, 0), CurvePoint(F(0), F(0)))
    assert rep.canonical == 0 and rep.torsion
    E = WeierstrassCurve.short(0, 1)
    for P in [CurvePoint(F(2), F(3)), CurvePoint(F(0), F(1)), CurvePoint(F(-1), F(0))]:
        rep = tate_limit_height(E, P)
        assert rep.canonical == 0.0 and rep.torsion and rep.error_estimate == 0
    assert tate_limit_height(E, CurvePoint.infinity()).canonical == 0


def test_tate_limit_basic():
    rep = tate_limit_height(E2, P35, tol=1e-5, max_digits=BIG)
    assert rep.canonical == pytest.approx(1.3495768, abs=1e-5)
    assert rep.error_estimate < 1e-5
    assert rep.canonical >= -rep.error_estimate
    assert rep.naive == pytest.approx(math.log(3))
    assert rep.error_estimate >= (4 / 3) * abs(rep.differences[-1])
    assert "2(O)" in rep.normalization


def test_envelope():
    assert envelope([1.0]) == 1.0
    assert envelope([1.0, 0.0]) == 0.25
    assert envelope([1e-9, 1.0, 1e-9]) == pytest.approx(0.25)


def test_off_curve():
    with pytest.raises(NotOnCurve):
        tate_limit_height(E2, CurvePoint(F(1), F(1)))


def test_budget_exceeded_carries_partial():
    with pytest.raises(BudgetExceeded) as info:
        tate_limit_height(E2, P35, tol=1e-10)
    part = info.value.partial
    assert isinstance(part, HeightReport)
    assert part.canonical == pytest.approx(1.34957, abs=1e-4)


def test_paranoid_mode():
    rep = tate_limit_height(E2, P35, tol=1e-4, paranoid=True, max_digits=BIG)
    assert rep.error_estimate < 1e-4


def test_rescaled():
    rep = tate_limit_height(E2, P35, tol=1e-4)
    half = rep.rescaled(0.5)
    assert half.canonical == pytest.approx(rep.canonical / 2)
    with pytest.raises(NonPositive):
        rep.rescaled(0)


def test_error_estimate_shrinks_with_tol():
    tols = (1e-3, 1e-4, 1e-5, 1e-6)
    est = [tate_limit_height(E2, P35, tol=t, max_digits=BIG).error_estimate for t in tols]
    assert all(e < t for e, t in zip(est, tols))
    assert est[0] >= est[1] >= est[2] >= est[3] and est[0] > est[3]


def test_quadraticity_on_test_points():
    pts = list(points())
    assert len(pts) >= 20
    for E, P in pts:
        h1 = tate_limit_height(E, P, tol=1e-4, max_digits=BIG)
        h2 = tate_limit_height(E, dbl(E, P), tol=1e-4, max_digits=BIG)
        assert abs(h2.canonical - 4 * h1.canonical) <= 10 * (h2.error_estimate + 4 * h1.error_estimate)


def test_parallelogram_law():
    cache = {}

    def h(E, Q):
        key = (E.a4, E.a6, None if Q.is_infinity else (Q.x, Q.y))
        if key not in cache:
            cache[key] = tate_limit_height(E, Q, tol=1e-4, max_digits=BIG)
        return cache[key]

    for (A, B), raw in CURVE_POINTS.items():
        E = WeierstrassCurve.short(A, B)
        P = [CurvePoint(F(x), F(y)) for x, y in raw[:3]]
        for i in range(len(P)):
            for j in range(i + 1, len(P)):
                r = [h(E, add(E, P[i], P[j])), h(E, sub(E, P[i], P[j])), h(E, P[i]), h(E, P[j])]
                res = r[0].canonical + r[1].canonical - 2 * r[2].canonical - 2 * r[3].canonical
                bound = r[0].error_estimate + r[1].error_estimate + 2 * r[2].error_estimate + 2 * r[3].error_estimate
                assert abs(res) <= 10 * bound


def test_duplication_defect():
    d, ratio = duplication_defect(E2, P35, 0.0)
    assert d == pytest.approx(abs(math.log(129) - 4 * math.log(3)))
    assert ratio == d
    assert duplication_defect(E2, neg(E2, P35), 5.0) == (d, d / 5)
    E = WeierstrassCurve.short(-1, 1)
    P = CurvePoint(F(1), F(1))  # h(x(P)) = 0
    x2 = x_duplication(E, 1)
    assert duplication_defect(E, P, 0)[0] == pytest.approx(weil_height(RationalProjectivePoint.from_rational(x2)))


def test_lambda_grid():
    g10, g20 = lambda_grid(10), lambda_grid(20)
    assert g20[:10] == g10
    assert len(set(g20)) == 20
    for lam in g20:
        assert 0 < lam < 1
        assert legendre_section("const_x2", lam).is_rational


def test_scan_small():
    lams = lambda_grid(6) + [F(1, 2)]
    rep = silverman_tate_scan(lams, tol=1e-3)
    torsion = [s for s in rep.samples if s.section != "const_x2"]
    assert torsion and all(s.ratio == 0 for s in torsion)
    assert any(s["lambda"] == "1/2" and s["section"] == "const_x2" for s in rep.skipped)
    assert math.isfinite(rep.sup_ratio) and rep.sup_ratio > 0


def test_scan_records_errors():
    rep = silverman_tate_scan([F(7, 8)], ["const_x2"], tol=1e-9, max_digits=1000)
    (s,) = rep.samples
    assert s.error.startswith("BudgetExceeded") and s.ratio is None


def test_assemble_constants():
    assert assemble_constants(8, 1, {4: 8}) == (4, F(1, 2), 1)
    N, c1, c2 = assemble_constants(0, 3, {1: 5})
    assert (N, c1, c2) == (1, F(3, 2), 5)
    assert assemble_constants(8, 1, lambda N: 8)[0] == 4
    assert assemble_constants(9, 1, {8: 0})[0] == 8  # 4^2 = 16 < 18
    with pytest.raises(MissingC2):
        assemble_constants(8, 1, {2: 1})
    with pytest.raises(NonPositive):
        assemble_constants(1, 0, {1: 0})


@settings(max_examples=100, deadline=None)
@given(st.fractions(0, 1000), st.fractions(F(1, 1000), 100))
def test_assemble_least_power_of_two(c0, c1):
    N, _, _ = assemble_constants(c0, c1, lambda N: 0)
    assert N & (N - 1) == 0
    assert N * N * c1 >= 2 * c0
    assert N == 1 or (N // 2) ** 2 * c1 < 2 * c0

import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from affinekg import approx as ap
from affinekg.subspace import AffineSubspace, Ball

ZETA3 = 1.2020569031595942


def test_psi_validation():
    with pytest.raises(ValueError):
        ap.PsiFunction("power", c=2, a=2)
    with pytest.raises(ValueError):
        ap.PsiFunction("power", c=1, a=0.5)
    with pytest.raises(ValueError):
        ap.PsiFunction("table", knots=(1, 2), values=(0.5, 0.6))
    with pytest.raises(ValueError):  # chord above 1/x between the knots
        ap.PsiFunction("table", knots=(1, 2), values=(1, 0.5))
    with pytest.raises(ValueError):
        ap.PsiFunction("spline")


@settings(max_examples=60, deadline=None)
@given(st.sampled_from([ap.PsiFunction("power", 1, 2), ap.PsiFunction("power", 0.5, 1),
                        ap.PsiFunction("powerLog", 1, b=2),
                        ap.PsiFunction("table", knots=(1, 3, 8), values=(0.5, 0.2, 0.1))]),
       st.floats(1, 1e6), st.floats(0, 10))
def test_psi_bounded_and_non_increasing(psi, x, dx):
    assert psi(x) <= 1 / x + 1e-15
    assert psi(x + dx) <= psi(x) + 1e-15


def test_scalar_sum_zeta2():
    S = ap.sum_psi_scalar(ap.PsiFunction("power", 1, 2))
    assert S.lower <= math.pi ** 2 / 6 <= S.upper
    assert abs(S.value - math.pi ** 2 / 6) < 1e-8


def test_lattice_sum_two_dim_inverse_square():
    # sum over q in Z^2 \\ 0 of ||q||^-4 is sum_k 8k * k^-4 = 8 zeta(3)
    S = ap.sum_psi_lattice(ap.PsiFunction("power", 1, 2), 2)
    assert S.lower <= 8 * ZETA3 <= S.upper
    assert abs(S.value - 8 * ZETA3) < 1e-8


def test_divergent_sums_raise():
    with pytest.raises(ap.DivergentSeries):
        ap.sum_psi_scalar(ap.PsiFunction("power", 1, 1))
    with pytest.raises(ap.DivergentSeries):
        ap.sum_psi_lattice(ap.PsiFunction("power", 1, 1), 2)
    with pytest.raises(ap.DivergentSeries):
        ap.sum_psi_scalar(ap.PsiFunction("powerLog", 1, b=1))


def test_powerlog_enclosure_brackets_a_long_partial_sum():
    psi = ap.PsiFunction("powerLog", 1, b=2)
    S = ap.sum_psi_lattice(psi, 2)
    ks = np.arange(1, 20001, dtype=float)
    partial = float(np.sum(ap.shell_count(ks, 2) * psi(ks ** 2)))
    assert partial < S.upper and S.width < 1e-6


def test_table_sums_are_finite():
    psi = ap.PsiFunction("table", knots=(1, 4), values=(0.25, 0.25))
    assert ap.sum_psi_scalar(psi).value == pytest.approx(1.0)
    # k = 1, 2 have k^2 <= 4: shells 8 and 16
    assert ap.sum_psi_lattice(psi, 2).value == pytest.approx(0.25 * 8 + 0.25 * 16)


@pytest.mark.parametrize("n", [1, 2, 3, 4])
def test_shells(n):
    for k in range(1, 6):
        coeffs = ap.shell_coefficients(n)
        assert sum(c * k ** j for j, c in coeffs.items()) == ap.shell_count(k, n)
        assert all(c >= 0 for c in coeffs.values())
    Q = 4
    assert len(ap.q_half_box(n, Q)) * 2 == (2 * Q + 1) ** n - 1


def test_kappa1_exact_and_float(desk_H):
    psi = ap.PsiFunction("power", 1, 2)
    H = AffineSubspace.from_matrix([["1/2"], ["1/3"]])
    # x = 0: f.q = q2/2; q = (0, 2) gives an integer
    assert not ap.kappa1_holds(H, [Fraction(0)], [0, 2], psi, 0.1)
    assert ap.kappa1_holds(H, [Fraction(0)], [0, 1], psi, 0.1)
    assert ap.kappa1_holds(desk_H, [0.1], [1, 1], psi, 1e-6)
    with pytest.raises(ValueError):
        ap.kappa1_holds(H, [0], [0, 0], psi, 0.1)


def test_classify_q(desk_H, desk_U):
    # gradient of q = (q1, q2) is q1 + (sqrt3 - 1) q2; threshold sqrt(2 h) / (2 r)
    assert ap.classify_q(desk_H, desk_U, [5, 0]) == "large"
    assert ap.classify_q(desk_H, desk_U, [-3, 4]) == "small"  # 4*0.732 - 3 = -0.07


@settings(max_examples=40, deadline=None)
@given(st.integers(-20, 20), st.integers(-20, 20), st.floats(1e-4, 0.2))
def test_grid_L_measure_matches_exact(q1, q2, thr):
    if q1 == 0 and q2 == 0:
        return
    H = AffineSubspace.from_matrix([["sqrt2 - 1"], ["sqrt3 - 1"]])
    U = Ball((0.1,), 0.4)
    exact = ap.L_measure_exact_1d(H, U, [q1, q2], thr)
    X, w = U.grid(20000)
    F = H.parametrize_grid(X) @ np.array([q1, q2], dtype=float)
    grid = float((np.abs(F - np.round(F)) < thr).sum() * w)
    slope = abs(q1 + (math.sqrt(3) - 1) * q2)
    intervals = slope * 0.8 + 2
    assert abs(grid - exact) <= 2 * intervals * w + 1e-12


def test_large_gradient_total_and_per_q(desk_H, desk_U):
    psi = ap.PsiFunction("power", 1, 2)
    rep = ap.measure_L_large_total(desk_H, desk_U, psi, 1e-3, 16, grid=4000)
    assert rep.passed and rep.violations == 0
    assert rep.total <= rep.total_bound


def test_bad_set_monotone_in_kappa_and_Q(desk_H, desk_U):
    psi = ap.PsiFunction("power", 1, 2)
    f = [ap.measure_bad_set(desk_H, desk_U, psi, k, 16, 2000).fraction_bad for k in (1e-3, 1e-2, 1e-1)]
    assert f == sorted(f)
    g = [ap.measure_bad_set(desk_H, desk_U, psi, 1e-2, Q, 2000).fraction_bad for Q in (4, 8, 16)]
    assert g == sorted(g)


def test_bad_set_union_splits(desk_H, desk_U):
    psi = ap.PsiFunction("power", 1, 2)
    X, _ = desk_U.grid(3000)
    m = ap.bad_set_masks(desk_H, desk_U, psi, 0.05, 12, X)
    np.testing.assert_array_equal(m["hit"], m["small"] | m["largeHit"])


def test_bad_set_excludes_exact_hits():
    H = AffineSubspace.from_matrix([["1/2"], ["1/4"]])
    rep = ap.measure_bad_set(H, Ball((0.0,), 0.5), ap.PsiFunction("power", 1, 2), 1e-3, 8, 1000)
    assert rep.exact_hits > 0
    lo, hi = rep.confidence
    assert lo <= rep.fraction_bad <= hi


def test_dirichlet_small(desk_H, desk_U):
    rep = ap.measure_bad_set(desk_H, desk_U, ap.PsiFunction("power", 1, 1), 1.0, 16, 2000)
    assert rep.fraction_bad >= 0.99


def test_tail_bounds_shrink_with_Q(desk_H, desk_U):
    from affinekg import constants as cst
    rep = cst.evaluate(1, 2, desk_U, 0.9, 0.3, 0.8, xi=0.5, sum_psi=8 * ZETA3)
    psi = ap.PsiFunction("power", 1, 2)
    a = ap.tail_bounds(rep, psi, rep.kappa, 16, 8 * ZETA3)
    b = ap.tail_bounds(rep, psi, rep.kappa, 64, 8 * ZETA3)
    assert b["total"] < a["total"] and b["tStart"] == 6


def test_main_theorem_refuses_rational():
    H = AffineSubspace.from_matrix([["1/2"], ["1/3"]])
    with pytest.raises(ap.PreconditionError) as err:
        ap.main_theorem_experiment(H, Ball((0.0,), 0.5), ap.PsiFunction("power", 1, 2), 0.5,
                                   Q=8, grid=100, t_max=1, height=5, exponent_Q=50)
    assert err.value.report.verdict == "fail"

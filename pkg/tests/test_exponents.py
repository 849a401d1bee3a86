import math

import pytest

from affinekg import exponents as ex
from affinekg.subspace import AffineSubspace


def test_rational_matrix_has_infinite_exponent():
    est = ex.omega([["1/3"]], 50)
    assert est.infinite and est.exact_regime
    assert est.witnesses[0][1] == 3


def test_golden_ratio_exponent_near_one():
    est = ex.omega([["phi"]], 2000)
    assert not est.infinite
    assert 0.9 <= est.value <= 1.1


def test_witnesses_are_honest():
    est = ex.omega([["sqrt2"]], 500)
    for q, h, d, v in est.witnesses:
        assert abs(q[0]) == h
        assert abs(math.sqrt(2) * q[0] - round(math.sqrt(2) * q[0])) == pytest.approx(d, rel=1e-9)
        assert v >= 0


def test_omega_rejects_bad_bounds():
    with pytest.raises(ValueError):
        ex.omega([["sqrt2"]], 0)


def test_omega_1_agrees_with_omega_for_two_by_one():
    H = AffineSubspace.from_matrix([["sqrt2"], ["sqrt3"]])
    a = ex.omega(H.A, 20)
    b = ex.omega_j(H, 1, 20)
    assert not a.infinite and not b.infinite
    assert abs(a.value - b.value) <= 0.1


def test_omega_j_detects_rational_relation():
    H = AffineSubspace.from_matrix([["1/2"], ["1/3"]])
    assert ex.omega_j(H, 1, 10).infinite


def test_higher_map_on_desk_subspace(desk_H):
    hm = ex.higher_map(desk_H, 1)
    assert len(hm.keys) == 3 and hm.bullet == (2,)
    # R_A c(e2) is the last column of R_A
    assert [row[2] for row in hm.matrix] == [r[2] for r in desk_H.r_matrix()]


def test_condition_passes_on_desk_subspace(desk_H):
    rep = ex.check_condition(desk_H, 200, 12)
    assert rep.verdict == "pass"
    assert 0 < rep.empirical_theta < desk_H.n - rep.max_omega
    assert rep.empirical_K4 > 0 and 0 < rep.empirical_K3 <= 1
    assert rep.to_dict()["searchBounds"] == {"Q": 200, "height": 12}


def test_condition_fails_on_rational_subspace():
    H = AffineSubspace.from_matrix([["1/2"], ["1/3"]])
    rep = ex.check_condition(H, 50, 6)
    assert rep.verdict == "fail" and rep.failing_j() == [1]


def test_theta_fit_monotone():
    profiles = {1: [math.inf, 0.5, 0.2, 0.1, 0.05]}
    theta, k4, sweep = ex.fit_theta_k4(profiles, 2, 1.0)
    assert theta == max(r["theta"] for r in sweep)
    k4s = [r["K4"] for r in sweep]
    assert k4s == sorted(k4s, reverse=True)  # P^e with P >= 1 shrinks as theta grows


def test_hyperplane_check_verdicts():
    # q = 1 always meets the threshold |q|^{-n+delta} = 1
    rep = ex.hyperplane_check(["sqrt2", "sqrt3"], 0.5, 200)
    assert rep.verdict == "pass-with-exceptions"
    assert all(v["q"] <= 100 for v in rep.violations)
    assert ex.hyperplane_check(["1/2", "1/3"], 0.5, 200).verdict == "fail"

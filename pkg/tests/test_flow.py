import math
from fractions import Fraction
from itertools import product

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from affinekg import exterior as ext
from affinekg import flow
from affinekg.subspace import AffineSubspace, Ball

rationals = st.fractions(min_value=-3, max_value=3, max_denominator=9)


def params(t=2, kappa=0.25, r=0.5, beta=1 / 12, s=1, n=2):
    return flow.FlowParameters(t, kappa, r, beta, s, n)


def test_parameters():
    p = params(t=3)
    assert p.delta == 0.25 / 2 ** 6 and p.T == 16
    assert p.K == pytest.approx(math.sqrt(2 / 0.5) * 2 ** 1.5)
    assert p.eps_prime == pytest.approx((p.delta * p.K * p.T) ** (1 / 3))
    assert p.eps == pytest.approx(2 ** 0.25 * p.eps_prime)
    assert p.diagonal() == pytest.approx([p.eps / p.delta, p.eps / p.K, p.eps / p.T, p.eps / p.T])
    for bad in (dict(t=-1), dict(kappa=0), dict(kappa=2), dict(r=0), dict(beta=1 / 6)):
        with pytest.raises(ValueError):
            params(**bad)


@settings(max_examples=40, deadline=None)
@given(st.lists(rationals, min_size=2, max_size=2), st.lists(rationals, min_size=2, max_size=2),
       rationals, st.integers(0, 6))
def test_basis_action_exact(a0, ap, x, t):
    H = AffineSubspace(1, 3, a0, [ap])
    res = flow.basis_action_check(H, [x], params(t=t, n=3, beta=1 / 16))
    assert res["pass"] and res["detU"] == 1


def test_basis_action_two_dimensional():
    H = AffineSubspace(2, 4, ["1/2", "1/3"], [["2", "-1"], ["1/5", "0"]])
    res = flow.basis_action_check(H, [Fraction(1, 3), Fraction(-2, 7)],
                                  flow.FlowParameters(1, 0.5, 1.0, 0.05, 2, 4))
    assert res["pass"]


def test_h_matrices_match_exact(desk_H):
    p = params(t=4)
    X = np.array([[0.125], [-0.375]])
    M = flow.h_matrices(desk_H, X, p)
    for x, m in zip(X, M):
        ref = np.array([[float(v) for v in row] for row in flow.h_matrix(desk_H, [Fraction(x[0])], p)])
        np.testing.assert_allclose(m, ref, rtol=1e-12, atol=1e-12)


def test_lambda_embedding():
    assert flow.embed((3, 1, -2), 1) == (3, 0, 1, -2)
    assert flow.in_lambda((3, 0, 1, -2), 1) and not flow.in_lambda((3, 1, 1, -2), 1)
    assert flow.lambda_basis(1, 2).rank == 3


def test_planted_witnesses_satisfy_inclusion():
    H = AffineSubspace.from_matrix([["2/7"], ["3/11"]])
    U = Ball((0.0,), 0.5)
    rng = np.random.default_rng(1)
    for t in range(6):
        p = params(t=t)
        w = flow.plant_a_t(H, U, p, rng)
        assert w is not None
        x, (pp, q) = w
        assert flow.lattice_image_sup_norm(H, x, p, flow.embed((pp,) + q, 1)) < Fraction(p.eps)


def test_a_t_inside_a_tilde(desk_H, desk_U):
    for t in range(5):
        p = params(t=t)
        At = flow.measure_A_t(desk_H, desk_U, p, 500)
        Atil = flow.measure_A_tilde(desk_H, desk_U, p, 500)
        assert At.members <= Atil.members


def test_in_a_tilde_agrees_with_generic_search(desk_H):
    p = params(t=2)
    for x in (0.1, -0.27, 0.33):
        a = flow.in_A_tilde(desk_H, [x], p)
        b, cert = flow.in_A_tilde_generic(desk_H, [x], p)
        assert cert
        assert (a is None) == (b is None)
        if a is not None:
            assert flow.lattice_image_sup_norm(desk_H, [Fraction(x)], p, a) < Fraction(p.eps)


def test_shortest_vector_oracle():
    B = np.array([[1.0, 0.0], [0.5, 2.0]])
    sv = flow.shortest_vector(B)
    assert sv.norm == pytest.approx(1.0) and sv.certified
    B = np.array([[3.0, 1.0], [2.0, 1.0]])  # unimodular image of Z^2
    sv = flow.shortest_vector(B)
    assert sv.norm == pytest.approx(1.0) and sv.certified
    with pytest.raises(ValueError):
        flow.shortest_vector(np.array([[1.0, 2.0], [2.0, 4.0]]))


def test_coefficient_bounds_cover_short_vectors():
    rng = np.random.default_rng(2)
    B = rng.normal(size=(3, 3))
    bounds = flow.coefficient_bounds(B, 2.0)
    for c in product(range(-4, 5), repeat=3):
        if np.linalg.norm(np.array(c) @ B) <= 2.0:
            assert all(abs(ci) <= bi for ci, bi in zip(c, bounds))


def _count_primitive_vectors(d, h):
    n = 0
    for v in product(range(-h, h + 1), repeat=d):
        nz = [x for x in v if x]
        if nz and nz[0] > 0 and math.gcd(*v) == 1:
            n += 1
    return n


@pytest.mark.parametrize("h", [1, 2, 3])
def test_rank_one_enumeration_counts(h):
    got = flow.primitive_bases_array(0, 2, 1, h)
    assert len(got) == _count_primitive_vectors(3, h)


def test_enumerations_agree_and_are_primitive():
    arr = flow.primitive_bases_array(1, 2, 2, 2)
    lst = flow.enumerate_primitive_subgroups(1, 2, 2, 2)
    assert len(arr) == len(lst)
    reps = set()
    for b in lst:
        assert b.is_primitive() and flow.is_primitive_by_span(b, 1)
        w = ext.represent(b)
        reps.add(min(w, -w, key=lambda m: sorted(m.terms.items())))
    assert len(reps) == len(lst)  # one Hermite form per subgroup
    assert len(flow.primitive_bases_array(1, 2, 3, 5)) == 1


def test_nu_orbit_matches_vectorised(desk_H):
    p = params(t=2)
    bases = flow.enumerate_primitive_subgroups(1, 2, 2, 1)[:10]
    arr = np.array([[[v[0]] + list(v[2:]) for v in b.vectors] for b in bases])
    vals = flow.nu_values(desk_H, np.array([[0.2]]), p, arr)[:, 0]
    for b, v in zip(bases, vals):
        assert flow.nu_orbit(desk_H, [0.2], p, b) == pytest.approx(v, rel=1e-9)


def test_km2_rank_bounds():
    b = flow.km2_rank_bounds(0.5, 1.0, 0.47, 1, 2, 0.5)
    assert b[3] == 0.5 and b[2] == pytest.approx(0.5 * math.sqrt(2) / (2 ** 2 * 0.5))
    assert b[1] == pytest.approx(0.47 / 2 ** 1.5)


def test_verify_km2_small(desk_H, desk_U):
    rep = flow.verify_km2(desk_H, desk_U, params(t=2), grid=41, height=3, rho=0.1)
    assert rep.passed and rep.empirical_rho >= 0.1
    assert [r["rank"] for r in rep.per_rank] == [1, 2, 3]


def test_verify_km1_small(desk_H, desk_U):
    bases = {k: flow.primitive_bases_array(1, 2, k, 2) for k in (1, 2, 3)}
    rep = flow.verify_km1(desk_H, desk_U, params(t=3), bases, per_rank=5)
    assert rep.passed and rep.checked == 11


def test_nondivergence_small(desk_H, desk_U):
    p = params(t=4)
    m = flow.measure_nondivergence(desk_H, desk_U, p, 0.05, grid=101)
    rhs = flow.nondivergence_rhs(16, 1, 0.3, 0.05, 3, 1, 2, desk_U.measure())
    assert 0 <= m.measured <= rhs
    with pytest.raises(ValueError):
        flow.nondivergence_rhs(16, 1, 1.5, 0.05, 3, 1, 2, 1.0)


def test_tilde_lower_bound(desk_H, desk_U):
    w = ext.Multivector.blade(ext.E0, ext.e(2))
    res = flow.tilde_lower_bound(desk_H, desk_U, params(t=2), w, K2=0.5, grid=51)
    assert res["holds"]


def test_flow_trace_rows(desk_H):
    rows = flow.flow_trace(desk_H, [Fraction(1, 7)], 0.25, 0.5, 1 / 12, 3)
    assert [r["t"] for r in rows] == [0, 1, 2, 3]
    for r in rows:
        if r["inAt"] is not None:
            assert r["inAtilde"] is not None


int_rows = st.lists(st.lists(st.integers(-30, 30), min_size=4, max_size=4), min_size=3, max_size=3)


@settings(max_examples=60, deadline=None)
@given(int_rows)
def test_lll_is_reduced_and_spans_same_lattice(rows):
    if ext.exact_rank(rows) < 3:
        return
    R = flow.lll_reduce(rows)
    norms, mu = flow._gram_schmidt(R)
    assert all(abs(mu[i][j]) <= Fraction(1, 2) for i in range(3) for j in range(i))
    assert all(norms[k] >= (Fraction(3, 4) - mu[k][k - 1] ** 2) * norms[k - 1] for k in (1, 2))
    # same Gram determinant and integer change of basis both ways
    gram = lambda B: [[flow._dot(u, v) for v in B] for u in B]
    assert ext.exact_det(gram(R)) == ext.exact_det(gram(rows))
    coords = np.linalg.lstsq(np.array(rows, float).T, np.array(R, float).T, rcond=None)[0]
    assert np.allclose(coords, np.round(coords), atol=1e-6)


@settings(max_examples=40, deadline=None)
@given(int_rows, st.integers(1, 40))
def test_short_vector_exact_matches_brute_force(rows, radius):
    if ext.exact_rank(rows) < 3:
        return
    B = np.array(rows)
    best = min(np.linalg.norm(np.array(c) @ B) for c in product(range(-6, 7), repeat=3) if any(c))
    R = flow.lll_reduce(rows)
    c = flow.short_vector_exact(R, radius)
    if c is not None:
        v = [sum(ci * row[j] for ci, row in zip(c, R)) for j in range(4)]
        assert flow._dot(v, v) < radius ** 2
    else:
        assert best >= radius - 1e-9


@pytest.mark.parametrize("t,kappa,eps2", [(3, 0.9, 0.6), (4, 0.5, 0.4), (6, 0.9, 0.45)])
def test_nondivergence_methods_agree(desk_H, desk_U, t, kappa, eps2):
    p = params(t=t, kappa=kappa)
    a = flow.measure_nondivergence(desk_H, desk_U, p, eps2, 101, method="box")
    b = flow.measure_nondivergence(desk_H, desk_U, p, eps2, 101, method="lll")
    assert a.members == b.members > 0


def test_nondivergence_member_is_a_witness(desk_H):
    p = params(t=4, kappa=0.5)
    lam = flow.nondivergence_member(desk_H, [Fraction(-1, 4)], p, 0.6)
    assert lam is not None and flow.in_lambda(lam, 1) and any(lam)
    M = flow.h_matrix(desk_H, [Fraction(-1, 4)], p)
    v = [sum((r * x for r, x in zip(row, lam)), Fraction(0)) for row in M]
    assert sum(x * x for x in v) < Fraction(0.6) ** 2

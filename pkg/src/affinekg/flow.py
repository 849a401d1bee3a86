"""The lattice flow ``H(x) = g_t u_x`` acting on ``Lambda`` and its diagnostics.

Coordinates of W = R^{1+s+n} are ordered ``e0, e*1..e*s, e1..en``. The
lattice ``Lambda`` is spanned by ``e0, e1..en`` (zero star coordinates), so a
lattice vector is ``lambda = (p, 0, q)`` and

    H(x) lambda = (g0 (p + f(x).q),  gK [I_s A'] q,  gT q)

with ``f(x) = (x, x~A)`` and ``g = diag(g0, gK.., gT..)``. Only the first
coordinate depends on ``x``. Membership questions about short vectors are
therefore decided by enumerating the finitely many ``q`` allowed by the last
two blocks (independent of ``x``) and taking the nearest integer ``p``; the
enumeration box comes from the same bounds a certified coefficient search
would use. Sets are measured on a deterministic grid of U (or a seeded
Monte Carlo sample).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations, product
from typing import Sequence

import numpy as np

from . import exterior as ext
from .constants import kappa_max, km1_constants, unit_ball_volume
from .goodness import check_good
from .kernels import box_shortest, linear_form_hits, nu_sup
from .subspace import AffineSubspace, Ball

# cap on enumerated q candidates for one structural search
MAX_CANDIDATES = 5 * 10**6


@dataclass(frozen=True)
class FlowParameters:
    t: int
    kappa: float
    r: float
    beta: float
    s: int
    n: int

    def __post_init__(self):
        if int(self.t) != self.t or self.t < 0:
            raise ValueError("t must be a nonnegative integer")
        if not 0 < self.kappa <= 1:
            raise ValueError("kappa must lie in (0, 1]")
        if not self.r > 0:
            raise ValueError("r must be positive")
        if not 0 < self.beta < 1 / (2 * (self.n + 1)):
            raise ValueError("beta must lie in (0, 1/(2(n+1)))")

    @property
    def delta(self) -> float:
        return self.kappa / 2 ** (self.n * self.t)

    @property
    def K(self) -> float:
        return math.sqrt(self.n * self.s / (2 * self.r ** 2)) * 2 ** (self.t / 2)

    @property
    def T(self) -> float:
        return 2.0 ** (self.t + 1)

    @property
    def eps_prime(self) -> float:
        return (self.delta * self.K * self.T ** (self.n - 1)) ** (1 / (self.n + 1))

    @property
    def eps(self) -> float:
        return 2 ** (self.beta * self.t) * self.eps_prime

    def diagonal(self) -> list[float]:
        e = self.eps
        return [e / self.delta] + [e / self.K] * self.s + [e / self.T] * self.n

    def with_t(self, t: int) -> "FlowParameters":
        return FlowParameters(t, self.kappa, self.r, self.beta, self.s, self.n)

    def to_dict(self) -> dict:
        return {"t": self.t, "kappa": self.kappa, "r": self.r, "beta": self.beta,
                "delta": self.delta, "K": self.K, "T": self.T,
                "epsPrime": self.eps_prime, "eps": self.eps}


def _is_exact_seq(x) -> bool:
    return all(isinstance(v, (int, Fraction)) for v in x)


def u_matrix(H: AffineSubspace, x: Sequence):
    """``u_x``; a list of Fraction rows for rational ``x``, else a float array.

    Row blocks: ``[1 | 0 | x | xA' + a0]``, ``[0 | I_s | I_s | A']``,
    ``[0 | 0 | I_n]``; column blocks have widths 1, s, s, n-s.
    """
    s, n = H.s, H.n
    x = list(x)
    if len(x) != s:
        raise ValueError(f"x must have length {s}")
    exact = _is_exact_seq(x)
    one = Fraction(1) if exact else 1.0
    zero = one * 0
    D = 1 + s + n
    M = [[zero] * D for _ in range(D)]
    conv = Fraction if exact else float
    M[0][0] = one
    tail = H.parametrize([Fraction(v) for v in x])
    for i in range(s):
        M[0][1 + s + i] = conv(x[i])
    for j in range(n - s):
        M[0][1 + 2 * s + j] = conv(tail[s + j])
    for i in range(s):
        M[1 + i][1 + i] = one
        M[1 + i][1 + s + i] = one
        for j in range(n - s):
            M[1 + i][1 + 2 * s + j] = conv(H.Aprime[i][j])
    for i in range(n):
        M[1 + s + i][1 + s + i] = one
    return M if exact else np.array(M, dtype=float)


def g_matrix(params: FlowParameters, exact: bool = False):
    """``g_t``; with ``exact`` the float diagonal is converted to Fractions."""
    diag = params.diagonal()
    if exact:
        D = len(diag)
        return [[Fraction(diag[i]) if i == j else Fraction(0) for j in range(D)] for i in range(D)]
    return np.diag(diag)


def _matmul(A, B):
    return [[sum((a * b for a, b in zip(row, col)), A[0][0] * 0) for col in zip(*B)] for row in A]


def h_matrix(H: AffineSubspace, x: Sequence, params: FlowParameters):
    """``g_t u_x``; exact for rational ``x``."""
    U = u_matrix(H, x)
    if isinstance(U, np.ndarray):
        return np.diag(params.diagonal()) @ U
    return _matmul(g_matrix(params, exact=True), U)


def h_matrices(H: AffineSubspace, X: np.ndarray, params: FlowParameters) -> np.ndarray:
    """Float ``g_t u_x`` stacked over the rows of ``X`` (N x s)."""
    s, n = H.s, H.n
    X = np.asarray(X, dtype=float).reshape(-1, s)
    D = 1 + s + n
    base = np.eye(D)
    Ap = H.A_float()[1:]
    for i in range(s):
        base[1 + i, 1 + s + i] = 1.0
        base[1 + i, 1 + 2 * s:] = Ap[i]
    out = np.repeat(base[None], X.shape[0], axis=0)
    out[:, 0, 1 + s:] = H.parametrize_grid(X)
    return np.array(params.diagonal())[None, :, None] * out


def lambda_basis(s: int, n: int) -> ext.SubgroupBasis:
    """Generators ``e0, e1..en`` of ``Lambda`` inside Z^{1+s+n}."""
    frame = ext.Frame(s, n)
    vecs = []
    for i in [0] + list(range(1 + s, 1 + s + n)):
        v = [0] * frame.dim
        v[i] = 1
        vecs.append(tuple(v))
    return ext.SubgroupBasis(tuple(vecs), frame)


def in_lambda(v: Sequence, s: int) -> bool:
    return all(float(x).is_integer() for x in v) and all(v[1 + i] == 0 for i in range(s))


def embed(pq: Sequence, s: int) -> tuple:
    """``(p, q)`` in Z^{n+1} to ``(p, 0_s, q)`` in Z^{1+s+n}."""
    return (int(pq[0]),) + (0,) * s + tuple(int(v) for v in pq[1:])


def basis_action_check(H: AffineSubspace, x: Sequence, params: FlowParameters) -> dict:
    """Compare ``H(x)`` on ``e0, e*i, ei`` with the closed-form images,
    exactly in rationals (``x`` rational, diagonal taken as exact binary)."""
    s, n = H.s, H.n
    x = [Fraction(v) for v in x]
    M = h_matrix(H, x, params)
    g = [Fraction(v) for v in params.diagonal()]
    g0, gK, gT = g[0], g[1] if s else None, g[1 + s]
    f = H.parametrize(x)
    grad = H.gradient_matrix()  # s x n, grad[j][i] = d f_i / d x_j
    D = 1 + s + n
    col = lambda j: [M[r][j] for r in range(D)]
    unit = lambda i, c: [c if r == i else Fraction(0) for r in range(D)]
    item1 = col(0) == unit(0, g0)
    item2 = all(col(1 + i) == unit(1 + i, gK) for i in range(s))
    item3 = True
    for i in range(n):
        want = [Fraction(0)] * D
        want[0] = g0 * f[i]
        for j in range(s):
            want[1 + j] = gK * grad[j][i]
        want[1 + s + i] += gT
        item3 &= col(1 + s + i) == want
    det_u = ext.exact_det(u_matrix(H, x))
    return {"item1": item1, "item2": item2, "item3": item3, "detU": det_u,
            "pass": bool(item1 and item2 and item3 and det_u == 1)}


# ---------------------------------------------------------------------------
# shortest vectors
# ---------------------------------------------------------------------------


@dataclass
class ShortestVector:
    coeffs: tuple
    vector: np.ndarray
    norm: float
    certified: bool
    bound: int


def coefficient_bounds(B: np.ndarray, radius: float, sup_norm: bool = False) -> np.ndarray:
    """``|c_i|`` bounds for every ``c`` with ``||c B|| <= radius``.

    With ``P`` a right inverse of the row basis ``B`` (``B P = I``),
    ``c_i = (cB) . P[:, i]``, so ``|c_i| <= radius * ||P[:, i]||_*`` with the
    dual norm (l1 for the sup-norm, l2 for the Euclidean norm).
    """
    B = np.asarray(B, dtype=float)
    P = np.linalg.pinv(B)
    dual = np.abs(P).sum(axis=0) if sup_norm else np.sqrt((P * P).sum(axis=0))
    return np.floor(radius * dual * (1 + 1e-9)).astype(np.int64)


def shortest_vector(B, coeff_bound: int | None = None, sup_norm: bool = False,
                    max_bound: int = 60, backend=None) -> ShortestVector:
    """Exhaustive shortest nonzero vector of the lattice spanned by rows of ``B``.

    Without ``coeff_bound`` the box is derived from the shortest basis row
    (an upper bound for the minimum), which certifies the result; when that
    box exceeds ``max_bound`` the search is truncated and flagged.
    """
    B = np.asarray(B, dtype=float)
    if B.ndim != 2 or np.linalg.matrix_rank(B) < B.shape[0]:
        raise ValueError("basis rows must be linearly independent")
    if coeff_bound is None:
        norms = np.abs(B).max(axis=1) if sup_norm else np.linalg.norm(B, axis=1)
        need = int(coefficient_bounds(B, float(norms.min()), sup_norm).max())
        bound, certified = min(max(need, 1), max_bound), need <= max_bound
    else:
        if coeff_bound < 1:
            raise ValueError("coeff_bound must be >= 1")
        bound, certified = int(coeff_bound), False
    c, v = box_shortest(B, bound, sup_norm=sup_norm, backend=backend)
    if coeff_bound is not None:
        need = int(coefficient_bounds(B, v, sup_norm).max())
        certified = need <= bound
    return ShortestVector(tuple(int(x) for x in c), np.asarray(c) @ B, v, certified, bound)


# ---------------------------------------------------------------------------
# the sets A_t and A~_t
# ---------------------------------------------------------------------------


def _q_box(n: int, bound: float) -> np.ndarray:
    """Integer ``q`` with ``|q_i| < bound`` whose first nonzero entry is positive."""
    b = int(math.ceil(bound)) - 1
    if b < 0:
        return np.zeros((0, n), dtype=np.int64)
    total = (2 * b + 1) ** n
    if total > 4 * MAX_CANDIDATES:
        raise OverflowError(f"q box of size {total} exceeds the candidate cap")
    axes = [np.arange(-b, b + 1)] * n
    Q = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, n)
    nz = Q != 0
    first = np.where(nz.any(axis=1), Q[np.arange(len(Q)), nz.argmax(axis=1)], 0)
    return Q[first > 0]


def _grad(H: AffineSubspace) -> np.ndarray:
    return np.array([[float(v) for v in row] for row in H.gradient_matrix()])


def a_t_candidates(H: AffineSubspace, t: int) -> np.ndarray:
    """``q`` with ``2^t <= ||q|| < 2^{t+1}`` and ``||[I A']q||_2 < sqrt(ns/2r^2) 2^{t/2}``
    (radius-free part; the gradient bound is applied by the caller)."""
    Q = _q_box(H.n, 2 ** (t + 1))
    h = np.abs(Q).max(axis=1)
    return Q[h >= 2 ** t]


def a_tilde_candidates(H: AffineSubspace, params: FlowParameters) -> np.ndarray:
    """``q != 0`` with ``gT|q_i| < eps`` and ``gK|([I A']q)_j| < eps`` (sup-norm)."""
    Q = _q_box(H.n, params.T)
    if len(Q):
        G = np.abs(Q @ _grad(H).T).max(axis=1) if H.s else np.zeros(len(Q))
        Q = Q[G < params.K]
    return Q


def _witness_first(H, X, Q, thr, backend):
    F = H.parametrize_grid(X)
    hit, exact, first, per_q = linear_form_hits(F, Q.astype(float), thr, backend=backend)
    return hit, exact, first, per_q


def in_A_t(H: AffineSubspace, x: Sequence, t: int, kappa: float, r: float,
           backend=None) -> tuple | None:
    """A witness ``(p, q)`` of ``x`` in ``A_t``, or ``None``."""
    s, n = H.s, H.n
    Q = a_t_candidates(H, t)
    Kb = math.sqrt(n * s / (2 * r ** 2)) * 2 ** (t / 2)
    if len(Q):
        Q = Q[np.linalg.norm(Q @ _grad(H).T, axis=1) < Kb]
    if not len(Q):
        return None
    X = np.array([[float(v) for v in x]])
    thr = np.full(len(Q), kappa / 2 ** (n * t))
    hit, _, first, _ = _witness_first(H, X, Q, thr, backend)
    if not hit[0]:
        return None
    q = Q[first[0]]
    fx = H.parametrize_grid(X)[0]
    p = -int(np.floor(fx @ q + 0.5))
    return p, tuple(int(v) for v in q)


def in_A_tilde(H: AffineSubspace, x: Sequence, params: FlowParameters,
               backend=None) -> tuple | None:
    """A lattice vector ``lambda = (p, 0, q)`` with ``||H(x) lambda||_inf < eps``."""
    Q = a_tilde_candidates(H, params)
    if not len(Q):
        return None
    X = np.array([[float(v) for v in x]])
    hit, _, first, _ = _witness_first(H, X, Q, np.full(len(Q), params.delta), backend)
    if not hit[0]:
        return None
    q = Q[first[0]]
    p = -int(np.floor(H.parametrize_grid(X)[0] @ q + 0.5))
    return embed((p,) + tuple(int(v) for v in q), H.s)


def in_A_tilde_generic(H: AffineSubspace, x: Sequence, params: FlowParameters,
                       max_bound: int = 40, backend=None) -> tuple[tuple | None, bool]:
    """Same question answered by a certified coefficient-box search on the
    basis ``H(x) e0, H(x) e1..en``; returns ``(witness, certified)``."""
    s = H.s
    M = h_matrices(H, np.array([[float(v) for v in x]]), params)[0]
    cols = [0] + list(range(1 + s, 1 + s + H.n))
    B = M[:, cols].T
    need = int(coefficient_bounds(B, params.eps, sup_norm=True).max())
    bound = max(1, min(need, max_bound))
    c, v = box_shortest(B, bound, sup_norm=True, backend=backend)
    certified = need <= max_bound
    if v < params.eps:
        return embed(c, s), certified
    return None, certified


def plant_a_t(H: AffineSubspace, U: Ball, params: FlowParameters, rng: np.random.Generator,
              tries: int = 200) -> tuple[tuple, tuple] | None:
    """A rational ``x`` in ``U`` and ``(p, q)`` witnessing ``x in A_t``:
    ``2^t <= ||q|| < 2^{t+1}``, ``||[I A']q|| < K`` and ``|p + f(x).q| < delta``
    (checked exactly). Returns ``None`` if no admissible ``q`` turns up."""
    s, t = H.s, params.t
    G = [[Fraction(v) for v in row] for row in H.gradient_matrix()]
    c0 = [Fraction(v) for v in H.a0]
    center = [Fraction(v) for v in U.center]
    r = Fraction(U.radius)
    delta = Fraction(params.delta)
    for _ in range(tries):
        h = 2 ** t
        q = [int(v) for v in rng.integers(-(2 * h - 1), 2 * h, size=H.n)]
        if not h <= max(abs(v) for v in q) < 2 * h:
            continue
        g = [sum((G[i][j] * q[j] for j in range(H.n)), Fraction(0)) for i in range(s)]
        gg = sum(v * v for v in g)
        if gg == 0 or float(gg) >= params.K ** 2:
            continue
        c = sum((c0[j] * q[s + j] for j in range(H.n - s)), Fraction(0))
        d = rng.normal(size=s)
        d *= float(rng.uniform()) ** (1 / s) / np.linalg.norm(d)
        x0 = [center[i] + r * Fraction(float(d[i])).limit_denominator(10**6) for i in range(s)]
        v = sum((g[i] * x0[i] for i in range(s)), Fraction(0)) + c
        p = -round(v)
        u = Fraction(float(rng.uniform(-0.9, 0.9))).limit_denominator(10**6)
        shift = (-(v + p) + u * delta) / gg
        x = [x0[i] + shift * g[i] for i in range(s)]
        if sum((x[i] - center[i]) ** 2 for i in range(s)) >= r * r:
            continue
        f = H.parametrize(x)
        if abs(p + sum((f[j] * q[j] for j in range(H.n)), Fraction(0))) < delta:
            return tuple(x), (p, tuple(q))
    return None


def lattice_image_sup_norm(H: AffineSubspace, x: Sequence, params: FlowParameters,
                           lam: Sequence) -> Fraction:
    """Exact ``||H(x) lambda||_inf`` for rational ``x``."""
    M = h_matrix(H, [Fraction(v) for v in x], params)
    lam = [Fraction(v) for v in lam]
    return max(abs(sum((a * b for a, b in zip(row, lam)), Fraction(0))) for row in M)


# ---------------------------------------------------------------------------
# sampling U
# ---------------------------------------------------------------------------


def sample_ball(U: Ball, points: int, mode: str = "grid", seed: int = 0) -> tuple[np.ndarray, float]:
    """Points of U and the weight (volume) each represents.

    ``grid``: cell centres of a cubic grid with about ``points`` cells inside
    the ball. ``mc``: ``points`` seeded uniform samples.
    """
    s = U.dim
    if mode == "grid":
        per_axis = max(1, round((points / (unit_ball_volume(s) / 2 ** s)) ** (1 / s)))
        if s == 1:
            per_axis = int(points)
        X, cell = U.grid(per_axis)
        return X, cell
    if mode == "mc":
        rng = np.random.default_rng(seed)
        d = rng.normal(size=(points, s))
        d /= np.linalg.norm(d, axis=1, keepdims=True)
        rad = float(U.radius) * rng.uniform(size=points) ** (1 / s)
        X = np.array([float(c) for c in U.center]) + d * rad[:, None]
        return X, U.measure() / points
    raise ValueError(f"unknown sampling mode {mode!r}")


@dataclass
class SetMeasure:
    measured: float
    fraction: float
    members: int
    points: int
    bound: float | None = None
    uncertified: int = 0
    candidates: int = 0
    extra: dict = field(default_factory=dict)

    @property
    def within_bound(self) -> bool | None:
        return None if self.bound is None else self.measured <= self.bound

    def to_dict(self) -> dict:
        return {"measured": self.measured, "fraction": self.fraction, "members": self.members,
                "points": self.points, "bound": self.bound, "withinBound": self.within_bound,
                "uncertified": self.uncertified, "candidates": self.candidates, **self.extra}


def smderef_bound(K0: float, params: FlowParameters, U: Ball) -> float:
    gap = 1 / (2 * (params.n + 1)) - params.beta
    return (K0 * params.kappa ** (1 / (params.s * (params.n + 1)))
            * 2 ** (-(gap / params.s) * params.t) * U.measure())


def measure_A_tilde(H: AffineSubspace, U: Ball, params: FlowParameters, grid: int = 10**4,
                    K0: float | None = None, mode: str = "grid", seed: int = 0,
                    backend=None) -> SetMeasure:
    X, w = sample_ball(U, grid, mode, seed)
    try:
        Q = a_tilde_candidates(H, params)
    except OverflowError:
        # the candidate set is too large to certify; count every point
        return SetMeasure(U.measure(), 1.0, len(X), len(X),
                          None if K0 is None else smderef_bound(K0, params, U), len(X))
    members = 0
    if len(Q):
        hit, _, _, _ = _witness_first(H, X, Q, np.full(len(Q), params.delta), backend)
        members = int(hit.sum())
    frac = members / len(X)
    return SetMeasure(frac * U.measure(), frac, members, len(X),
                      None if K0 is None else smderef_bound(K0, params, U), 0, len(Q))


def measure_A_t(H: AffineSubspace, U: Ball, params: FlowParameters, grid: int = 10**4,
                mode: str = "grid", seed: int = 0, backend=None) -> SetMeasure:
    s, n, t = H.s, H.n, params.t
    X, _ = sample_ball(U, grid, mode, seed)
    Q = a_t_candidates(H, t)
    if len(Q):
        Q = Q[np.linalg.norm(Q @ _grad(H).T, axis=1) < params.K]
    members = 0
    if len(Q):
        hit, _, _, _ = _witness_first(H, X, Q, np.full(len(Q), params.delta), backend)
        members = int(hit.sum())
    frac = members / len(X)
    return SetMeasure(frac * U.measure(), frac, members, len(X), candidates=len(Q))


# ---------------------------------------------------------------------------
# nondivergence
# ---------------------------------------------------------------------------


def nondivergence_rhs(C: float, alpha: float, rho: float, eps2: float, k: int, s: int,
                      Ns: float, ball_measure: float) -> float:
    if not 0 < rho < 1 or not eps2 > 0:
        raise ValueError("need 0 < rho < 1 and eps'' > 0")
    return k * (3 ** s * Ns) ** k * C * (eps2 / rho) ** alpha * ball_measure


def _dot(u, v):
    return sum((a * b for a, b in zip(u, v)), Fraction(0))


def _gram_schmidt(B):
    Bs, mu = [], [[Fraction(0)] * len(B) for _ in B]
    for i, b in enumerate(B):
        v = list(b)
        for j in range(i):
            mu[i][j] = _dot(b, Bs[j]) / _dot(Bs[j], Bs[j])
            v = [x - mu[i][j] * y for x, y in zip(v, Bs[j])]
        Bs.append(v)
    return [_dot(v, v) for v in Bs], mu


def lll_reduce(B: Sequence[Sequence], delta: Fraction = Fraction(3, 4)) -> list[list[Fraction]]:
    """Exact LLL reduction of the lattice spanned by the rows of ``B``
    (Gram-Schmidt data updated in place on size reduction and swaps)."""
    B = [[Fraction(x) for x in row] for row in B]
    norms, mu = _gram_schmidt(B)
    d = len(B)

    def reduce(k, j):
        r = round(mu[k][j])
        if r:
            B[k] = [x - r * y for x, y in zip(B[k], B[j])]
            for i in range(j):
                mu[k][i] -= r * mu[j][i]
            mu[k][j] -= r

    k = 1
    while k < d:
        reduce(k, k - 1)
        m = mu[k][k - 1]
        if norms[k] < (delta - m * m) * norms[k - 1]:
            big = norms[k] + m * m * norms[k - 1]
            mu[k][k - 1] = m * norms[k - 1] / big
            norms[k] = norms[k - 1] * norms[k] / big
            norms[k - 1] = big
            B[k], B[k - 1] = B[k - 1], B[k]
            for j in range(k - 1):
                mu[k][j], mu[k - 1][j] = mu[k - 1][j], mu[k][j]
            for i in range(k + 1, d):
                t = mu[i][k]
                mu[i][k] = mu[i][k - 1] - m * t
                mu[i][k - 1] = t + mu[k][k - 1] * mu[i][k]
            k = max(k - 1, 1)
        else:
            for j in range(k - 2, -1, -1):
                reduce(k, j)
            k += 1
    return B


def short_vector_exact(B: Sequence[Sequence], radius) -> tuple | None:
    """Integer coefficients ``c != 0`` with ``||c B|| < radius``, or ``None``.

    Fincke-Pohst enumeration on the exact Gram-Schmidt data of ``B``
    (reduce ``B`` first for a small tree).
    """
    B = [[Fraction(x) for x in row] for row in B]
    norms, mu = _gram_schmidt(B)
    R2 = Fraction(radius) ** 2
    d = len(B)
    c = [0] * d

    def search(i, rest):
        if i < 0:
            return tuple(c) if any(c) and rest > 0 else None
        centre = -sum((mu[j][i] * c[j] for j in range(i + 1, d)), Fraction(0))
        half = math.sqrt(float(rest / norms[i])) + 1
        for v in range(math.floor(float(centre) - half), math.ceil(float(centre) + half) + 1):
            left = rest - norms[i] * (v - centre) ** 2
            if left <= 0:
                continue
            c[i] = v
            found = search(i - 1, left)
            if found:
                return found
        c[i] = 0
        return None

    return search(d - 1, R2)


def nondivergence_member(H: AffineSubspace, x: Sequence, params: FlowParameters,
                         eps2: float) -> tuple | None:
    """A ``lambda = (p, 0, q) != 0`` with ``||H(x) lambda|| < eps''`` (exact)."""
    M = h_matrix(H, [Fraction(v) for v in x], params)
    cols = [0] + list(range(1 + H.s, 1 + H.s + H.n))
    B = [[M[r][c] for r in range(len(M))] for c in cols]
    R = lll_reduce(B)
    c = short_vector_exact(R, eps2)
    if c is None:
        return None
    # undo g_t u_x on the image vector to read off (p, q)
    v = [sum((ci * row[j] for ci, row in zip(c, R)), Fraction(0)) for j in range(len(M))]
    g = [Fraction(d) for d in params.diagonal()]
    q = [v[1 + H.s + i] / g[1 + H.s] for i in range(H.n)]
    p = v[0] / g[0] - _dot(H.parametrize([Fraction(t) for t in x]), q)
    assert p.denominator == 1 and all(a.denominator == 1 for a in q)
    return embed((p, *q), H.s)


def measure_nondivergence(H: AffineSubspace, U: Ball, params: FlowParameters, eps2: float,
                          grid: int = 201, mode: str = "grid", seed: int = 0,
                          backend=None, method: str = "auto") -> SetMeasure:
    """Measure of ``{x in U : nu(H(x) lambda) < eps'' for some lambda != 0}``.

    On vectors ``nu`` is the Euclidean norm. ``method="box"`` scans the
    ``q`` with ``gK^2 |[I A']q|^2 + gT^2 |q|^2 < eps''^2`` and then needs
    ``|p + f(x).q| < sqrt(eps''^2 - rest) / g0``; ``method="lll"`` runs an
    exact reduced-basis search per point. ``auto`` picks the box unless it
    exceeds the candidate cap.
    """
    X, _ = sample_ball(U, grid, mode, seed)
    g = params.diagonal()
    g0, gK, gT = g[0], g[1], g[1 + H.s]
    if g0 < eps2:  # lambda = (+-1, 0, 0) is short everywhere
        return SetMeasure(U.measure(), 1.0, len(X), len(X), extra={"qZero": True})
    if method == "auto":
        b = int(math.ceil(eps2 / gT)) - 1
        method = "box" if (2 * b + 1) ** H.n <= 4 * MAX_CANDIDATES else "lll"
    if method == "lll":
        members = sum(nondivergence_member(H, x, params, eps2) is not None for x in X)
        frac = members / len(X)
        return SetMeasure(frac * U.measure(), frac, members, len(X), extra={"method": "lll"})
    Q = _q_box(H.n, eps2 / gT)
    if len(Q):
        rest = gT ** 2 * (Q.astype(float) ** 2).sum(axis=1)
        if H.s:
            rest += gK ** 2 * ((Q @ _grad(H).T) ** 2).sum(axis=1)
        keep = rest < eps2 ** 2
        Q, rest = Q[keep], rest[keep]
    members = 0
    if len(Q):
        thr = np.sqrt(eps2 ** 2 - rest) / g0
        hit, _, _, _ = _witness_first(H, X, Q, thr, backend)
        members = int(hit.sum())
    frac = members / len(X)
    return SetMeasure(frac * U.measure(), frac, members, len(X), candidates=len(Q),
                      extra={"method": "box"})


# ---------------------------------------------------------------------------
# primitive subgroups of Lambda ~ Z^{n+1}
# ---------------------------------------------------------------------------


def _minors_gcd(rows: np.ndarray) -> int:
    k, d = rows.shape
    g = 0
    for cols in combinations(range(d), k):
        det = int(round(np.linalg.det(rows[:, cols].astype(float)))) if k > 1 else int(rows[0, cols[0]])
        g = math.gcd(g, det)
        if g == 1:
            return 1
    return g


def _hnf_shapes(d: int, k: int, h: int):
    """Row Hermite normal forms of rank ``k`` in Z^d with pivots in
    ``[1, h]``, entries above pivots in ``[0, pivot)`` and the remaining free
    entries in ``[-h, h]``."""
    if k == d:
        # the only minor is the product of the pivots, so primitivity forces
        # unit pivots and zero entries above them
        yield np.eye(d, dtype=np.int64), []
        return
    for pivots in combinations(range(d), k):
        free = []  # (row, col) with range [-h, h]
        for r, pc in enumerate(pivots):
            for c in range(pc + 1, d):
                if c not in pivots:
                    free.append((r, c))
        for piv_vals in product(range(1, h + 1), repeat=k):
            above = [(r, rr) for rr in range(k) for r in range(rr)]
            above_ranges = [range(piv_vals[rr]) for (_, rr) in above]
            for above_vals in product(*above_ranges):
                base = np.zeros((k, d), dtype=np.int64)
                for r, pc in enumerate(pivots):
                    base[r, pc] = piv_vals[r]
                for (r, rr), v in zip(above, above_vals):
                    base[r, pivots[rr]] = v
                yield base, free


def enumerate_primitive_subgroups(s: int, n: int, k: int, height: int,
                                  cap: int = 2 * 10**6) -> list[ext.SubgroupBasis]:
    """Rank-``k`` primitive subgroups of ``Lambda`` with Hermite-form entries
    bounded by ``height``; returned embedded in Z^{1+s+n}.

    Hermite forms are unique per subgroup, so no deduplication is needed.
    """
    d = n + 1
    if not 1 <= k <= d:
        raise ValueError(f"rank must be in 1..{d}")
    frame = ext.Frame(s, n)
    out = []
    for base, free in _hnf_shapes(d, k, height):
        if not free:
            mats = base[None]
        else:
            vals = np.arange(-height, height + 1)
            grids = np.stack(np.meshgrid(*([vals] * len(free)), indexing="ij"), axis=-1)
            grids = grids.reshape(-1, len(free))
            mats = np.repeat(base[None], len(grids), axis=0)
            for i, (r, c) in enumerate(free):
                mats[:, r, c] = grids[:, i]
        for M in mats:
            if _minors_gcd(M) != 1:
                continue
            out.append(ext.SubgroupBasis(tuple(embed(row, s) for row in M), frame))
            if len(out) > cap:
                raise OverflowError(f"more than {cap} primitive subgroups; lower the height")
    return out


def primitive_bases_array(s: int, n: int, k: int, height: int, cap: int = 2 * 10**6) -> np.ndarray:
    """Like :func:`enumerate_primitive_subgroups` but as a (G, k, n+1) array,
    vectorised over the free entries (the fast path for surveys)."""
    d = n + 1
    chunks, total = [], 0
    for base, free in _hnf_shapes(d, k, height):
        if free:
            vals = np.arange(-height, height + 1)
            grids = np.stack(np.meshgrid(*([vals] * len(free)), indexing="ij"), axis=-1)
            grids = grids.reshape(-1, len(free))
            mats = np.repeat(base[None], len(grids), axis=0)
            for i, (r, c) in enumerate(free):
                mats[:, r, c] = grids[:, i]
        else:
            mats = base[None]
        mats = mats[_gcd_of_minors(mats) == 1]
        chunks.append(mats)
        total += len(mats)
        if total > cap:
            raise OverflowError(f"more than {cap} primitive subgroups; lower the height")
    return np.concatenate(chunks) if chunks else np.zeros((0, k, d), dtype=np.int64)


def _gcd_of_minors(mats: np.ndarray) -> np.ndarray:
    G, k, d = mats.shape
    g = np.zeros(G, dtype=np.int64)
    for cols in combinations(range(d), k):
        sub = mats[:, :, cols]
        if k == 1:
            det = sub[:, 0, 0]
        else:
            det = np.rint(np.linalg.det(sub.astype(float))).astype(np.int64)
        g = np.gcd(g, det)
    return g


def is_primitive_by_span(basis: ext.SubgroupBasis, s: int, box: int = 3) -> bool:
    """Independent check of ``Gamma = span_R(Gamma) cap Lambda``: every
    lattice point ``sum c_i b_i / m`` with small ``m`` that is integral must
    already have integral ``c_i``."""
    B = np.array([[v[0]] + list(v[1 + s:]) for v in basis.vectors], dtype=float)
    k = B.shape[0]
    for m in range(2, box + 1):
        for c in product(range(m), repeat=k):
            if not any(c):
                continue
            v = np.array(c, dtype=float) @ B / m
            if np.allclose(v, np.round(v), atol=1e-9):
                return False
    return True


# ---------------------------------------------------------------------------
# nu along the orbit
# ---------------------------------------------------------------------------


def star_subsets(s: int, n: int, k: int) -> np.ndarray:
    """Row subsets of size ``k`` of W containing at most one star index."""
    D = 1 + s + n
    keep = [S for S in combinations(range(D), k) if sum(1 <= i <= s for i in S) <= 1]
    return np.array(keep, dtype=np.int64).reshape(-1, k)


def nu_orbit(H: AffineSubspace, x: Sequence, params: FlowParameters,
             gamma: ext.SubgroupBasis) -> float:
    """``nu(H(x) Gamma)`` through the exterior algebra (reference path)."""
    frame = gamma.frame
    M = h_matrix(H, x, params)
    if isinstance(M, np.ndarray):
        M = M.tolist()
    w = ext.represent(gamma)
    return ext.nu(ext.push_forward(M, w, frame))


def nu_values(H: AffineSubspace, X: np.ndarray, params: FlowParameters,
              bases: np.ndarray) -> np.ndarray:
    """``nu(H(x) Gamma)`` for bases (G, k, n+1) in Lambda coordinates and
    every row of ``X``; returns a (G, len(X)) array."""
    s, n = H.s, H.n
    maps = h_matrices(H, X, params)[:, :, [0] + list(range(1 + s, 1 + s + n))]
    k = bases.shape[1]
    V = np.einsum("xdl,gkl->gxdk", maps, bases.astype(float))
    tot = np.zeros(V.shape[:2])
    for S in star_subsets(s, n, k):
        tot += np.linalg.det(V[:, :, S, :]) ** 2
    return np.sqrt(tot)


def nu_sup_over(H: AffineSubspace, X: np.ndarray, params: FlowParameters,
                bases: np.ndarray, backend=None) -> np.ndarray:
    """``max_x nu(H(x) Gamma)`` for each basis, through the kernel."""
    s, n = H.s, H.n
    maps = h_matrices(H, X, params)[:, :, [0] + list(range(1 + s, 1 + s + n))]
    return nu_sup(bases, maps, star_subsets(s, n, bases.shape[1]), backend=backend)


@dataclass
class KM2Report:
    t: int
    empirical_rho: float
    formula_rho: float | None
    worst: dict
    per_rank: list
    passed: bool | None

    def to_dict(self) -> dict:
        return {"t": self.t, "empiricalRho": self.empirical_rho, "formulaRho": self.formula_rho,
                "pass": self.passed, "worst": self.worst, "perRank": self.per_rank}


def km2_rank_bounds(K2: float, K3: float, K5: float, s: int, n: int, r: float) -> dict:
    """Lower bounds for ``sup_x nu(H(x) Gamma)`` by rank."""
    out = {n + 1: 0.5}
    for k in range(n - s + 1, n + 1):
        out[k] = K2 * K3 * math.sqrt(n * s) / (2 ** (n / 2 + 1) * r)
    for k in range(1, n - s + 1):
        out[k] = K5 / 2 ** ((n + 1) / 2)
    return out


def verify_km2(H: AffineSubspace, U: Ball, params: FlowParameters, grid: int = 201,
               height: int = 10, rho: float | None = None, rank_bounds: dict | None = None,
               backend=None) -> KM2Report:
    """Minimum over enumerated primitive ``Gamma`` of the grid sup of
    ``nu(H(x) Gamma)``, compared with ``rho`` (and per-rank bounds)."""
    X, _ = sample_ball(U, grid)
    per_rank, worst = [], None
    for k in range(1, H.n + 2):
        bases = primitive_bases_array(H.s, H.n, k, height)
        sups = nu_sup_over(H, X, params, bases, backend=backend)
        i = int(np.argmin(sups))
        row = {"rank": k, "subgroups": int(len(bases)), "minSup": float(sups[i]),
               "argmin": bases[i].tolist()}
        if rank_bounds is not None:
            row["bound"] = rank_bounds[k]
            row["pass"] = bool(sups[i] >= rank_bounds[k])
        per_rank.append(row)
        if worst is None or row["minSup"] < worst["minSup"]:
            worst = row
    emp = worst["minSup"]
    passed = None if rho is None else bool(emp >= rho)
    if passed is not None and rank_bounds is not None:
        passed = passed and all(r["pass"] for r in per_rank)
    return KM2Report(params.t, emp, rho, worst, per_rank, passed)


@dataclass
class KM1Report:
    checked: int
    failures: list
    C: float
    alpha: float

    @property
    def passed(self) -> bool:
        return not self.failures

    def to_dict(self) -> dict:
        return {"checked": self.checked, "pass": self.passed, "C": self.C,
                "alpha": self.alpha, "failures": self.failures[:50]}


def verify_km1(H: AffineSubspace, ball: Ball, params: FlowParameters, bases_by_rank: dict,
               per_rank: int = 70, seed: int = 0, grid: int | None = None) -> KM1Report:
    """``x -> nu(H(x) Gamma)`` is (C, alpha)-good on ``ball`` with the KM1
    pair, for a sample of subgroups from each rank."""
    C, alpha = km1_constants(H.s, H.n)
    rng = np.random.default_rng(seed)
    grid = grid or (401 if H.s == 1 else None)
    Xg, _ = ball.grid(grid)
    failures, checked = [], 0
    for k, bases in bases_by_rank.items():
        take = bases if len(bases) <= per_rank else bases[rng.choice(len(bases), per_rank, replace=False)]
        vals = nu_values(H, Xg, params, take)
        for b, v in zip(take, vals):
            sup = float(v.max())
            if H.s == 1:
                # nu^2 is a convex quadratic in x: the sup sits at an endpoint
                ends = np.array([[float(ball.center[0]) - float(ball.radius)],
                                 [float(ball.center[0]) + float(ball.radius)]])
                sup = max(sup, float(nu_values(H, ends, params, b[None]).max()))
            fn = lambda X, b=b: nu_values(H, X, params, b[None])[0]
            eps = [sup * f for f in (1e-3, 1e-2, 0.1, 0.3, 0.6, 1.0)]
            res = check_good(fn, C, alpha, ball, eps, grid=grid, sup=sup)
            checked += 1
            if not res.passed:
                failures.append({"rank": k, "basis": b.tolist(), "worstRatio": res.worst_ratio})
    return KM1Report(checked, failures, C, alpha)


# ---------------------------------------------------------------------------
# the comparison with the lower bound format
# ---------------------------------------------------------------------------


def tilde_lower_bound(H: AffineSubspace, U: Ball, params: FlowParameters, w: ext.Multivector,
                      K2: float, grid: int = 201) -> dict:
    """Right side of the lower bound for ``sup_x ||g~ u~_x w||`` and the
    directly measured grid sup (sup-norms), for ``w`` over ``e0..en``."""
    from .exponents import higher_map

    s, n, k = H.s, H.n, w.grade
    if not 1 <= k <= n:
        raise ValueError("grade must be in 1..n")
    e, d, T = params.eps, params.delta, params.T
    hm = higher_map(H, k)
    coords = [w.coeff(*key) for key in hm.keys]
    rac = max((abs(float(v)) for v in hm.apply_exact(coords)), default=0.0)
    pi_w = ext.project_pi(w).sup_norm()
    term1 = (e ** k / (d * T ** (k - 1))) * K2 * rac
    term2 = (e / T) ** k * float(pi_w)
    bound = max(term1, term2)
    X, _ = sample_ball(U, grid)
    frame = ext.Frame(0, n)
    wf = w.to_float()
    direct = 0.0
    F = H.parametrize_grid(X)
    for f in F:
        ut = np.eye(n + 1)
        ut[0, 1:] = f
        gt = np.diag([e / d] + [e / T] * n)
        direct = max(direct, float(ext.push_forward((gt @ ut).tolist(), wf, frame).sup_norm()))
    return {"bound": bound, "term1": term1, "term2": term2, "direct": direct,
            "scaledBound": bound / 2 ** ((n + 1) / 2),
            "holds": direct >= bound / 2 ** ((n + 1) / 2) * (1 - 1e-12)}


# ---------------------------------------------------------------------------
# one point across t
# ---------------------------------------------------------------------------


def flow_trace(H: AffineSubspace, x: Sequence, kappa: float, r: float, beta: float,
               t_max: int, backend=None) -> list[dict]:
    rows = []
    for t in range(t_max + 1):
        p = FlowParameters(t, kappa, r, beta, H.s, H.n)
        M = h_matrices(H, np.array([[float(v) for v in x]]), p)[0]
        cols = [0] + list(range(1 + H.s, 1 + H.s + H.n))
        B = M[:, cols].T
        wa = in_A_t(H, x, t, kappa, r, backend=backend)
        wt = in_A_tilde(H, x, p, backend=backend)
        try:
            sv = shortest_vector(B, sup_norm=True, max_bound=12, backend=backend)
            sv_row = {"norm": sv.norm, "coeffs": list(sv.coeffs), "certified": sv.certified}
        except ValueError:
            sv_row = None
        rows.append({**p.to_dict(), "inAt": None if wa is None else {"p": wa[0], "q": list(wa[1])},
                     "inAtilde": None if wt is None else list(wt), "shortest": sv_row})
    return rows

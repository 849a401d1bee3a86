"""Approximation functions, their lattice sums, and the bad-set experiment.

A point ``x`` of U is bad for ``q`` when ``|p + f(x).q| < kappa psi(||q||^n)``
for some integer ``p`` (``f(x) = (x, x~A)``, sup-norm on ``q``); the bad set
is the union over ``q`` of these sets ``L(q)``. Each ``L(q)`` is routed to the
small- or large-gradient case by the size of ``[I_s A'] q``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from math import comb
from typing import Sequence

import numpy as np

from . import constants as cst
from .exponents import check_condition
from .flow import FlowParameters, measure_A_t, measure_A_tilde, sample_ball
from .kernels import linear_form_hits
from .subspace import AffineSubspace, Ball

# ---------------------------------------------------------------------------
# approximation functions
# ---------------------------------------------------------------------------


class DivergentSeries(ValueError):
    pass


@dataclass(frozen=True)
class PsiFunction:
    """``power``: ``c x^-a``; ``powerLog``: ``c / (x (1 + log x)^b)``;
    ``table``: linear interpolation through ``knots``/``values`` (constant
    before the first knot, zero after the last)."""

    form: str
    c: float = 1.0
    a: float = 2.0
    b: float = 2.0
    knots: tuple = ()
    values: tuple = ()

    def __post_init__(self):
        if self.form == "power":
            if not (0 <= self.c <= 1 and self.a >= 1):
                raise ValueError("power form needs 0 <= c <= 1 and a >= 1 for psi(x) <= 1/x")
        elif self.form == "powerLog":
            if not (0 <= self.c <= 1 and self.b >= 0):
                raise ValueError("powerLog form needs 0 <= c <= 1 and b >= 0")
        elif self.form == "table":
            k, v = tuple(map(float, self.knots)), tuple(map(float, self.values))
            object.__setattr__(self, "knots", k)
            object.__setattr__(self, "values", v)
            if len(k) == 0 or len(k) != len(v):
                raise ValueError("table needs equally many knots and values")
            if k[0] < 1 or any(b <= a for a, b in zip(k, k[1:])):
                raise ValueError("knots must start at >= 1 and increase strictly")
            if any(x < 0 for x in v) or any(b > a for a, b in zip(v, v[1:])):
                raise ValueError("table values must be nonnegative and non-increasing")
            self._check_table()
        else:
            raise ValueError(f"unknown psi form {self.form!r}")

    def _check_table(self):
        k, v = self.knots, self.values
        if v[0] > 1 / 1.0 or any(vi * ki > 1 + 1e-15 for ki, vi in zip(k, v)):
            raise ValueError("table violates psi(x) <= 1/x at a knot")
        # x * line(x) is quadratic on each segment; check its vertex too
        for (x0, y0), (x1, y1) in zip(zip(k, v), zip(k[1:], v[1:])):
            m = (y1 - y0) / (x1 - x0)
            if m < 0:
                xv = -(y0 - m * x0) / (2 * m)
                if x0 < xv < x1 and xv * (y0 + m * (xv - x0)) > 1 + 1e-15:
                    raise ValueError("table violates psi(x) <= 1/x between knots")

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.form == "power":
            return self.c * x ** (-self.a)
        if self.form == "powerLog":
            return self.c / (x * (1 + np.log(x)) ** self.b)
        k, v = np.array(self.knots), np.array(self.values)
        out = np.interp(x, k, v, left=v[0], right=0.0)
        return np.where(x > k[-1], 0.0, out)

    @property
    def support_end(self) -> float:
        return self.knots[-1] if self.form == "table" else math.inf

    def to_dict(self) -> dict:
        if self.form == "table":
            return {"form": "table", "knots": list(self.knots), "values": list(self.values)}
        if self.form == "power":
            return {"form": "power", "c": self.c, "a": self.a}
        return {"form": "powerLog", "c": self.c, "b": self.b}


@dataclass
class SeriesSum:
    """Certified enclosure ``lower <= sum <= upper``; ``value`` is the upper end."""

    lower: float
    upper: float
    terms: int

    @property
    def value(self) -> float:
        return self.upper

    @property
    def width(self) -> float:
        return self.upper - self.lower


def _power_tail(c, e, N):
    """``int_N^inf c x^-e dx`` for ``e > 1``."""
    return c * N ** (1 - e) / (e - 1)


def _scalar_tail(psi: PsiFunction, N: float) -> float:
    if psi.form == "power":
        return _power_tail(psi.c, psi.a, N)
    return psi.c * (1 + math.log(N)) ** (1 - psi.b) / (psi.b - 1)


def _check_convergent(psi: PsiFunction):
    if psi.form == "power" and psi.a <= 1:
        raise DivergentSeries("sum of c k^-a diverges for a <= 1")
    if psi.form == "powerLog" and psi.b <= 1:
        raise DivergentSeries("sum of c/(k (1+log k)^b) diverges for b <= 1")


def _choose_terms(term_at, tol, cap=10**7) -> int:
    N = 16
    while N < cap and term_at(N) > tol:
        N *= 2
    return min(N, cap)


def sum_psi_scalar(psi: PsiFunction, tail_tolerance: float = 1e-9) -> SeriesSum:
    """Enclosure of ``sum_{k>=1} psi(k)`` by a partial sum and integral tails."""
    if psi.form == "table":
        ks = np.arange(1, int(math.floor(psi.support_end)) + 1)
        total = float(psi(ks).sum()) if len(ks) else 0.0
        return SeriesSum(total, total, len(ks))
    _check_convergent(psi)
    N = _choose_terms(lambda N: float(psi(N)), tail_tolerance)
    partial = float(math.fsum(psi(np.arange(1, N + 1, dtype=float))))
    return SeriesSum(partial + _scalar_tail(psi, N + 1), partial + _scalar_tail(psi, N), N)


def shell_count(k, n: int):
    """``#{q in Z^n : ||q||_inf = k}`` for ``k >= 1``."""
    return (2 * k + 1) ** n - (2 * k - 1) ** n


def shell_coefficients(n: int) -> dict[int, int]:
    """``shell_count(k, n) = sum_j coef[j] k^j`` (all coefficients >= 0)."""
    out = {}
    for i in range(1, n + 1, 2):
        out[n - i] = out.get(n - i, 0) + 2 * comb(n, i) * 2 ** (n - i)
    return out


def _lattice_tail(psi: PsiFunction, n: int, N: float) -> tuple[float, float]:
    """Bounds for ``sum_{k>N} shell_count(k) psi(k^n)`` from the monomial
    expansion; each ``k^j psi(k^n)`` is decreasing, so
    ``int_{N+1}^inf <= sum_{k>N} <= int_N^inf``."""
    lo = hi = 0.0
    for j, cj in shell_coefficients(n).items():
        if psi.form == "power":
            e = psi.a * n - j
            if e <= 1:
                raise DivergentSeries("lattice sum diverges")
            lo += cj * _power_tail(psi.c, e, N + 1)
            hi += cj * _power_tail(psi.c, e, N)
        else:
            if j == n - 1:
                if psi.b <= 1:
                    raise DivergentSeries("lattice sum diverges")
                f = lambda M: psi.c * (1 + n * math.log(M)) ** (1 - psi.b) / (n * (psi.b - 1))
                lo += cj * f(N + 1)
                hi += cj * f(N)
            else:
                # (1 + n log x)^-b <= (1 + n log N)^-b on [N, inf)
                hi += cj * psi.c * (1 + n * math.log(N)) ** (-psi.b) * _power_tail(1.0, n - j, N)
    return lo, hi


def sum_psi_lattice(psi: PsiFunction, n: int, tail_tolerance: float = 1e-9) -> SeriesSum:
    """Enclosure of ``sum_{q != 0} psi(||q||_inf^n)`` by shells."""
    if psi.form == "table":
        K = int(math.floor(psi.support_end ** (1 / n) + 1e-12))
        while (K + 1) ** n <= psi.support_end:
            K += 1
        ks = np.arange(1, K + 1, dtype=float)
        total = float(math.fsum(shell_count(ks, n) * psi(ks ** n))) if K else 0.0
        return SeriesSum(total, total, K)
    _check_convergent(psi)

    def width(N):
        lo, hi = _lattice_tail(psi, n, N)
        return hi - lo

    N = _choose_terms(width, tail_tolerance, cap=10**6)
    ks = np.arange(1, N + 1, dtype=float)
    partial = float(math.fsum(shell_count(ks, n) * psi(ks ** n)))
    lo, hi = _lattice_tail(psi, n, N)
    return SeriesSum(partial + lo, partial + hi, N)


def lattice_partial(psi: PsiFunction, n: int, Q: int) -> float:
    """``sum_{0 < ||q|| <= Q} psi(||q||^n)``."""
    ks = np.arange(1, Q + 1, dtype=float)
    return float(math.fsum(shell_count(ks, n) * psi(ks ** n)))


# ---------------------------------------------------------------------------
# points and q
# ---------------------------------------------------------------------------


def kappa1_holds(H: AffineSubspace, x: Sequence, q: Sequence, psi: PsiFunction,
                 kappa: float) -> bool:
    """``min_p |p + f(x).q| >= kappa psi(||q||^n)``; exact for rational data."""
    if not any(q):
        raise ValueError("q must be nonzero")
    h = max(abs(int(v)) for v in q)
    rhs = kappa * float(psi(float(h) ** H.n))
    if H.exact and all(isinstance(v, (int, Fraction)) for v in x):
        f = H.parametrize([Fraction(v) for v in x])
        v = sum((a * int(b) for a, b in zip(f, q)), Fraction(0))
        d = abs(v - round(v))
        return d >= Fraction(rhs) if rhs == rhs else True
    f = H.parametrize_grid(np.array([[float(v) for v in x]]))[0]
    v = float(f @ np.asarray(q, dtype=float))
    return abs(v - math.floor(v + 0.5)) >= rhs


def gradient_norm(H: AffineSubspace, q: Sequence) -> float:
    G = np.array([[float(v) for v in row] for row in H.gradient_matrix()])
    return float(np.linalg.norm(G @ np.asarray(q, dtype=float)))


def classify_q(H: AffineSubspace, U: Ball, q: Sequence) -> str:
    """``small`` iff ``||[I A']q||_2 < sqrt(n s ||q||_inf) / (2r)``."""
    h = max(abs(int(v)) for v in q)
    if h == 0:
        raise ValueError("q must be nonzero")
    thr = math.sqrt(H.n * H.s * h) / (2 * float(U.radius))
    return "small" if gradient_norm(H, q) < thr else "large"


def q_half_box(n: int, Q: int) -> np.ndarray:
    """Nonzero ``q`` with ``||q||_inf <= Q``, one of each ``+-q`` pair."""
    axes = [np.arange(-Q, Q + 1)] * n
    Qs = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, n)
    nz = Qs != 0
    first = np.where(nz.any(axis=1), Qs[np.arange(len(Qs)), nz.argmax(axis=1)], 0)
    return Qs[first > 0]


def L_measure_exact_1d(H: AffineSubspace, U: Ball, q: Sequence, threshold: float) -> float:
    """Exact ``|{x in U : dist(f(x).q, Z) < threshold}|`` for ``s = 1``."""
    if H.s != 1:
        raise ValueError("exact L(q) measure is one-dimensional")
    A = H.A_float()
    q = np.asarray(q, dtype=float)
    slope = q[0] + float(A[1] @ q[1:])
    icpt = float(A[0] @ q[1:])
    lo, hi = float(U.center[0]) - float(U.radius), float(U.center[0]) + float(U.radius)
    if threshold <= 0:
        return 0.0
    if threshold >= 0.5:
        return hi - lo
    if slope == 0:
        d = abs(icpt - math.floor(icpt + 0.5))
        return hi - lo if d < threshold else 0.0
    y0, y1 = sorted((slope * lo + icpt, slope * hi + icpt))
    total = 0.0
    for p in range(math.floor(y0 - threshold), math.ceil(y1 + threshold) + 1):
        a, b = max(y0, p - threshold), min(y1, p + threshold)
        if b > a:
            total += b - a
    return total / abs(slope)


# ---------------------------------------------------------------------------
# measurements
# ---------------------------------------------------------------------------


@dataclass
class LargeGradientReport:
    kappa: float
    Q: int
    total: float
    total_bound: float
    per_q: list
    violations: int
    Ks: float
    exact_hits: int = 0

    @property
    def passed(self) -> bool:
        return self.total <= self.total_bound

    def to_dict(self) -> dict:
        return {"kappa": self.kappa, "Q": self.Q, "total": self.total,
                "totalBound": self.total_bound, "pass": self.passed,
                "perQViolations": self.violations, "Ks": self.Ks, "exactHits": self.exact_hits}


def _grid(U: Ball, grid: int, mode: str, seed: int):
    X, w = sample_ball(U, grid, mode, seed)
    return X, w


def _hits(H, X, Qs, thr, backend):
    return linear_form_hits(H.parametrize_grid(X), Qs.astype(float), thr, backend=backend)


def measure_L_large_total(H: AffineSubspace, U: Ball, psi: PsiFunction, kappa: float, Q: int,
                          grid: int = 10**4, sum_psi: float | None = None, Ks: float | None = None,
                          mode: str = "grid", seed: int = 0, backend=None) -> LargeGradientReport:
    """Sum over large-gradient ``q`` of the measured ``|L(q)|`` with per-q
    bounds ``K_s kappa psi(||q||^n) |U|`` and the total bound
    ``K_s kappa Sigma_psi |U|``.

    Per-q comparisons allow one grid cell per interval of ``L(q)`` (s = 1) as
    the declared discretisation error; the total is compared as measured.
    """
    Ks = cst.k_s_constant(H.s) if Ks is None else Ks
    X, w = _grid(U, grid, mode, seed)
    Qs = q_half_box(H.n, Q)
    large = np.array([classify_q(H, U, q) == "large" for q in Qs], dtype=bool)
    QL = Qs[large]
    h = np.abs(QL).max(axis=1).astype(float)
    thr = kappa * psi(h ** H.n)
    _, exact, _, _ = _hits(H, X, QL, thr, backend)
    _, _, _, per_q = _hits(H, X[~exact], QL, thr, backend)  # exact zeros have measure 0
    per_meas = 2 * per_q * w  # +-q give the same set
    Um = U.measure()
    rows, viol = [], 0
    for q, m, t in zip(QL, per_meas, thr):
        bound = Ks * t * Um
        slack = 0.0
        if H.s == 1:
            slope = abs(gradient_norm(H, q))
            slack = w * (slope * 2 * float(U.radius) + 2)
        bad = m > bound + slack
        viol += int(bad)
        rows.append({"q": q.tolist(), "measure": float(m), "bound": float(bound), "pass": not bad})
    total = float(per_meas.sum())
    if sum_psi is None:
        sum_psi = sum_psi_lattice(psi, H.n).value
    return LargeGradientReport(kappa, Q, total, Ks * kappa * sum_psi * Um, rows, viol, Ks,
                               int(exact.sum()))


@dataclass
class BadSetReport:
    kappa: float
    fraction_bad: float
    confidence: tuple
    Q: int
    grid: dict
    exact_hits: int
    per_q: list
    small_fraction: float
    large_fraction: float
    tails: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"kappa": self.kappa, "fractionBad": self.fraction_bad,
                "confidence95": list(self.confidence),
                # Wilson interval; on a deterministic grid it is only indicative
                "confidenceMethod": "wilson" if self.grid.get("mode") == "mc" else "wilson-heuristic",
                "Q": self.Q, "grid": self.grid,
                "exactHits": self.exact_hits, "smallUnionFraction": self.small_fraction,
                "largeUnionFraction": self.large_fraction, "tails": self.tails}


def _wilson(k: int, N: int, z: float = 1.96) -> tuple[float, float]:
    if N == 0:
        return 0.0, 1.0
    p = k / N
    den = 1 + z * z / N
    mid = (p + z * z / (2 * N)) / den
    half = z * math.sqrt(p * (1 - p) / N + z * z / (4 * N * N)) / den
    # endpoints are exact at p = 0 and p = 1; rounding would otherwise exclude p
    lo = 0.0 if k == 0 else max(0.0, min(p, mid - half))
    hi = 1.0 if k == N else min(1.0, max(p, mid + half))
    return lo, hi


def bad_set_masks(H: AffineSubspace, U: Ball, psi: PsiFunction, kappa: float, Q: int,
                  X: np.ndarray, backend=None) -> dict:
    """Per-point membership in the bad set and in the small/large unions."""
    Qs = q_half_box(H.n, Q)
    h = np.abs(Qs).max(axis=1).astype(float)
    thr = kappa * psi(h ** H.n)
    large = np.array([classify_q(H, U, q) == "large" for q in Qs], dtype=bool)
    hit, exact, first, per_q = _hits(H, X, Qs, thr, backend)
    hs, _, _, _ = _hits(H, X, Qs[~large], thr[~large], backend)
    hl, _, _, _ = _hits(H, X, Qs[large], thr[large], backend)
    return {"q": Qs, "large": large, "thr": thr, "hit": hit, "exact": exact,
            "first": first, "perQ": per_q, "small": hs, "largeHit": hl}


def measure_bad_set(H: AffineSubspace, U: Ball, psi: PsiFunction, kappa: float, Q: int,
                    grid: int = 10**4, mode: str = "grid", seed: int = 0,
                    tails: dict | None = None, backend=None) -> BadSetReport:
    """Fraction of sample points failing the inequality for some
    ``0 < ||q||_inf <= Q``; exact zeros are excluded and counted."""
    if Q < 1:
        raise ValueError("Q must be >= 1")
    X, w = _grid(U, grid, mode, seed)
    m = bad_set_masks(H, U, psi, kappa, Q, X, backend)
    keep = ~m["exact"]
    N = int(keep.sum())
    bad = int((m["hit"] & keep).sum())
    frac = bad / N if N else 0.0
    per_q = [{"q": q.tolist(), "class": "large" if L else "small",
              "measureFraction": float(2 * c / len(X))}
             for q, L, c in zip(m["q"], m["large"], m["perQ"]) if c]
    return BadSetReport(
        kappa, frac, _wilson(bad, N), Q,
        {"mode": mode, "points": int(len(X)), "seed": seed if mode == "mc" else None},
        int((~keep).sum()), per_q,
        float((m["small"] & keep).sum() / max(N, 1)), float((m["largeHit"] & keep).sum() / max(N, 1)),
        dict(tails or {}),
    )


# ---------------------------------------------------------------------------
# the full pipeline
# ---------------------------------------------------------------------------


class PreconditionError(RuntimeError):
    def __init__(self, message: str, report):
        super().__init__(message)
        self.report = report


def tail_bounds(consts: cst.ConstantsReport, psi: PsiFunction, kappa: float, Q: int,
                sum_psi: float) -> dict:
    """Bounds (as fractions of |U|) for what a search up to ``Q`` misses."""
    s, n = consts.s, consts.n
    large = consts.Ks * kappa * max(0.0, sum_psi - lattice_partial(psi, n, Q))
    gamma = (1 / (2 * (n + 1)) - consts.beta) / s
    t0 = int(math.floor(math.log2(Q + 1)))
    small = consts.K0 * kappa ** (1 / (s * (n + 1))) * 2 ** (-gamma * t0) / (1 - 2 ** (-gamma))
    return {"largeTail": large, "smallTail": small, "tStart": t0, "total": large + small}


def main_theorem_experiment(H: AffineSubspace, U: Ball, psi: PsiFunction, xi: float,
                            Q: int = 64, grid: int = 10**4, t_max: int = 8, height: int = 20,
                            exponent_Q: int = 1000, overrides: dict | None = None,
                            mode: str = "grid", seed: int = 0, backend=None) -> dict:
    """Exponents -> constants -> kappa -> measured bad set plus tails."""
    cond = check_condition(H, exponent_Q, height, backend=backend)
    if cond.verdict != "pass":
        bad = cond.failing_j()
        raise PreconditionError(
            f"exponent condition {cond.verdict}: omega_j too large for j in {bad or 'n/a'}", cond)
    S = sum_psi_lattice(psi, H.n)
    consts = cst.from_condition(H, U, cond, xi=xi, sum_psi=S.value, overrides=overrides)
    kappa = consts.kappa
    half = cst.from_condition(H, U, cond, xi=xi / 2, sum_psi=S.value, overrides=overrides)
    large = measure_L_large_total(H, U, psi, kappa, Q, grid, S.value, consts.Ks, mode, seed, backend)
    tails = tail_bounds(consts, psi, kappa, Q, S.value)
    bad = measure_bad_set(H, U, psi, kappa, Q, grid, mode, seed, tails, backend)
    per_t = []
    for t in range(t_max + 1):
        p = FlowParameters(t, kappa, float(U.radius), consts.beta, H.s, H.n)
        mt = measure_A_tilde(H, U, p, grid, consts.K0, mode, seed, backend)
        ma = measure_A_t(H, U, p, grid, mode, seed, backend)
        per_t.append({"t": t, "Atilde": mt.to_dict(), "At": ma.to_dict(), **p.to_dict()})
    total = bad.fraction_bad + tails["total"]
    return {
        "condition": cond.to_dict(),
        "constants": consts.to_dict(),
        "sumPsi": {"lower": S.lower, "upper": S.upper, "terms": S.terms},
        "kappa": kappa,
        "kappaHalfXi": half.kappa,
        "largeGradient": large.to_dict(),
        "largeGradientPerQ": large.per_q,
        "badSet": bad.to_dict(),
        "badSetPerQ": bad.per_q,
        "perT": per_t,
        "budget": {"fractionBad": bad.fraction_bad, **tails, "sum": total, "xi": xi},
        "verdict": "pass" if total <= xi and large.passed else "fail",
    }

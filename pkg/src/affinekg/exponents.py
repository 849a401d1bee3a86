"""Bounded-search estimates of the Diophantine exponents of ``A``.

Distances use the sup-norm throughout. For a finite search the point
estimate is *anchored* at height one: with ``d(h)`` the best distance at
height ``h``,

    v(h) = log(d(1) / d(h)) / log h,

which has the same limsup as ``-log d(h) / log h`` (the anchor is a fixed
constant) but does not reward the trivially good approximations at tiny
heights. The estimate is the maximum of ``v`` over the search and is therefore
non-decreasing in the bound. A least-squares slope of ``-log d`` against
``log h`` over the best-approximation records is reported alongside it.

Exact annihilation (an infinite exponent) is decided in rational arithmetic
and reported as a flag, never as a large float.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations
from typing import Sequence

import numpy as np

from . import exterior as ext
from .kernels import multivector_profile, omega_profile
from .subspace import AffineSubspace, parse_scalar

# float distances below this are re-examined in exact arithmetic
_ZERO_TOL = 1e-9
# hard cap on the number of lattice points a single scan may visit
MAX_SCAN = 2 * 10**8


@dataclass
class ExponentEstimate:
    value: float
    infinite: bool
    search_bound: int
    witnesses: list = field(default_factory=list)
    slope: float | None = None
    exact_regime: bool = True
    kind: str = "omega"

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "value": "inf" if self.infinite else self.value,
            "infinite": self.infinite,
            "searchBound": self.search_bound,
            "slope": self.slope,
            "exactRegime": self.exact_regime,
            "witnesses": [
                {"vector": list(map(int, w)), "height": int(h), "distance": d,
                 "exponent": "inf" if math.isinf(v) else v}
                for w, h, d, v in self.witnesses
            ],
        }


def _entries(A) -> tuple[tuple[tuple[Fraction, ...], ...], bool]:
    if isinstance(A, AffineSubspace):
        return A.A, A.exact
    rows, exact = [], True
    for row in A:
        out = []
        for x in (row if isinstance(row, (list, tuple, np.ndarray)) else [row]):
            v, ex = parse_scalar(x.item() if isinstance(x, np.generic) else x)
            out.append(v)
            exact &= ex
        rows.append(tuple(out))
    if len({len(r) for r in rows}) != 1:
        raise ValueError("ragged matrix")
    return tuple(rows), exact


def _log_ratio(num, den) -> float:
    """log(num/den) for positive Fractions/floats without underflow."""
    num, den = Fraction(num), Fraction(den)
    return (math.log(num.numerator) - math.log(num.denominator)
            - math.log(den.numerator) + math.log(den.denominator))


def _exact_dist(A, q) -> Fraction:
    worst = Fraction(0)
    for row in A:
        v = sum((a * int(qi) for a, qi in zip(row, q)), Fraction(0))
        worst = max(worst, abs(v - round(v)))
    return worst


def _records(best) -> list[int]:
    out, run = [], math.inf
    for h in range(1, len(best)):
        if best[h] < run:
            run = best[h]
            out.append(h)
    return out


def _slope(heights, dists) -> float | None:
    pts = [(math.log(h), -math.log(d)) for h, d in zip(heights, dists) if d > 0]
    if len(pts) < 2:
        return None
    x, y = np.array(pts).T
    if np.ptp(x) == 0:
        return None
    return float(np.polyfit(x, y, 1)[0])


def omega(A, Q: int, backend=None) -> ExponentEstimate:
    """Estimate ``omega(A)`` over integer ``q`` with ``1 <= ||q|| <= Q``."""
    Q = int(Q)
    if Q < 1:
        raise ValueError("Q must be >= 1")
    rows, exact = _entries(A)
    m, c = len(rows), len(rows[0])
    if (2 * Q + 1) ** c > 2 * MAX_SCAN:
        raise ValueError(f"search box (2Q+1)^{c} too large for Q={Q}")
    Af = np.array([[float(v) for v in r] for r in rows])
    best, arg = omega_profile(Af, Q, backend=backend)
    dist: list = [math.inf] + [float(d) for d in best[1:]]
    # re-examine tiny distances exactly
    for h in range(1, Q + 1):
        if dist[h] < _ZERO_TOL:
            d = _exact_dist(rows, arg[h])
            if d == 0 and exact:
                w = (tuple(arg[h]), h, 0.0, math.inf)
                return ExponentEstimate(math.inf, True, Q, [w], None, exact)
            dist[h] = d if d > 0 else dist[h]
    return _finish(dist, arg, Q, exact, j=1, kind="omega")


def _finish(dist, arg, bound, exact, j, kind) -> ExponentEstimate:
    recs = [h for h in _records(dist) if dist[h] > 0 and math.isfinite(float(dist[h]))]
    witnesses = []
    anchor = dist[1] if len(dist) > 1 else math.inf
    if math.isfinite(float(anchor)) and anchor > 0:
        for h in recs:
            if h < 2:
                continue
            v = j * _log_ratio(anchor, dist[h]) / math.log(h) + j - 1
            witnesses.append((tuple(int(x) for x in arg[h]), h, float(dist[h]), v))
    witnesses.sort(key=lambda w: -w[3])
    value = witnesses[0][3] if witnesses else max(0.0, j - 1.0)
    sl = _slope(recs, [float(dist[h]) for h in recs])
    if sl is not None and j != 1:
        sl = j * sl + j - 1
    return ExponentEstimate(value, False, bound, witnesses, sl, exact, kind)


# ---------------------------------------------------------------------------
# higher exponents
# ---------------------------------------------------------------------------


def blade_keys(n: int, j: int) -> list[tuple]:
    """Grade-``j`` blades over ``e0..en`` in lexicographic order."""
    return [tuple(ext.e(i) for i in sub) for sub in combinations(range(n + 1), j)]


@dataclass(frozen=True)
class HigherMap:
    """``w -> R_A c(w)`` on integer coordinates of grade-``j`` multivectors."""

    j: int
    keys: tuple
    matrix: tuple  # exact rows
    bullet: tuple  # coordinate positions kept by the bullet projection

    def float_matrix(self) -> np.ndarray:
        return np.array([[float(v) for v in row] for row in self.matrix]).reshape(-1, len(self.keys))

    def apply_exact(self, w) -> list:
        return [sum((a * int(x) for a, x in zip(row, w)), Fraction(0)) for row in self.matrix]

    def multivector(self, w) -> ext.Multivector:
        return ext.Multivector(self.j, {k: int(x) for k, x in zip(self.keys, w)})


def higher_map(H: AffineSubspace, j: int) -> HigherMap:
    n, s = H.n, H.s
    if not 1 <= j <= n + 1:
        raise ValueError(f"grade must be in 1..{n + 1}")
    R = H.r_matrix()
    keys = blade_keys(n, j)
    codomain = [tuple(ext.e(i) for i in sub) for sub in combinations(range(1, n + 1), j - 1)]

    def image(w):
        c = ext.c_map(w, n)
        return [sum((R[r][i] * c[i] for i in range(n + 1)), ext.Multivector(j - 1))
                for r in range(s + 1)]

    M = ext.linear_matrix(image, keys, codomain)
    bullet = tuple(
        pos for pos, k in enumerate(keys) if all(l.kind == 2 and l.index > s for l in k)
    )
    return HigherMap(j, tuple(keys), tuple(tuple(r) for r in M), bullet)


def _scan_profile(H: AffineSubspace, j: int, height: int, backend=None):
    hm = higher_map(H, j)
    if (2 * height + 1) ** len(hm.keys) > 2 * MAX_SCAN:
        raise ValueError(f"coefficient box too large: grade {j}, height {height}")
    best, arg = multivector_profile(hm.float_matrix(), np.array(hm.bullet, dtype=np.int64),
                                    height, backend=backend)
    return hm, best, arg


def omega_j(A, j: int, height: int, backend=None) -> ExponentEstimate:
    """Estimate ``omega_j(A)`` over integer ``w`` with coefficients in
    ``[-height, height]`` and nonzero bullet part.

    The achieved exponent of ``w`` solves
    ``||R_A c(w)|| = ||pi_bullet(w)||^{-(v+1-j)/j}``; it is anchored at
    bullet height one like :func:`omega`.
    """
    H = A if isinstance(A, AffineSubspace) else AffineSubspace.from_matrix(A)
    m = H.n - H.s
    if not 1 <= j <= m:
        raise ValueError(f"j must be in 1..{m}")
    if height < 1:
        raise ValueError("height must be >= 1")
    hm, best, arg = _scan_profile(H, j, height, backend)
    dist: list = [math.inf] + [float(d) for d in best[1:]]
    for P in range(1, height + 1):
        if dist[P] < _ZERO_TOL:
            vals = hm.apply_exact(arg[P])
            d = max((abs(v) for v in vals), default=Fraction(0))
            if d == 0 and H.exact:
                w = (tuple(int(x) for x in arg[P]), P, 0.0, math.inf)
                return ExponentEstimate(math.inf, True, height, [w], None, True, f"omega_{j}")
            if d > 0:
                dist[P] = d
    return _finish(dist, arg, height, H.exact, j=j, kind=f"omega_{j}")


# ---------------------------------------------------------------------------
# the condition and the constants it induces
# ---------------------------------------------------------------------------


@dataclass
class ExponentConditionReport:
    per_j: list
    verdict: str
    empirical_theta: float
    empirical_K4: float
    empirical_K3: float
    K3_min: float
    exceptions: list
    theta_sweep: list
    height: int
    Q: int
    n: int
    omega: ExponentEstimate | None = None
    notes: list = field(default_factory=list)

    @property
    def max_omega(self) -> float:
        return max((e.value for e in self.per_j), default=0.0)

    def failing_j(self) -> list[int]:
        """Grades whose estimate is infinite or reaches ``n``."""
        return [i + 1 for i, e in enumerate(self.per_j) if e.infinite or e.value >= self.n]

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict,
            "perJ": [
                {"j": i + 1, "estimate": e.to_dict(),
                 "margin": None if e.infinite else self.n - e.value}
                for i, e in enumerate(self.per_j)
            ],
            "omega": self.omega.to_dict() if self.omega else None,
            "empiricalTheta": self.empirical_theta,
            "empiricalK4": self.empirical_K4,
            "empiricalK3": self.empirical_K3,
            "K3Minimum": self.K3_min,
            "exceptionCandidates": self.exceptions,
            "thetaSweep": self.theta_sweep,
            "searchBounds": {"Q": self.Q, "height": self.height},
            "notes": self.notes,
        }


def _collect_below(hm: HigherMap, height: int, threshold: float, cap: int = 1000) -> list:
    """All ``w`` (one of each +-pair) with ``||R_A c(w)|| < threshold``."""
    from .kernels import _decode, _half_box_size

    M = hm.float_matrix()
    C = len(hm.keys)
    total, start = _half_box_size(height, C)
    out = []
    step = 1 << 20
    for lo in range(start, total, step):
        idx = np.arange(lo, min(lo + step, total), dtype=np.int64)
        w = _decode(idx, height, C)
        d = np.abs(w @ M.T).max(axis=1)
        for i in np.nonzero(d < threshold)[0]:
            out.append({"w": [int(x) for x in w[i]], "norm": float(d[i])})
            if len(out) >= cap:
                return out
    return out


def fit_theta_k4(profiles: dict, n: int, max_omega: float, step: float = 0.1):
    """Sweep ``theta`` over ``step, 2 step, ... < n - max_omega``; for each
    ``K4(theta) = min_k min_P d_k(P) P^{((n-theta)+1-k)/k}``. Returns the
    largest ``theta`` with positive ``K4``, its ``K4`` and the sweep."""
    top = n - max_omega
    grid = []
    i = 1
    while i * step < top - 1e-12:
        grid.append(round(i * step, 10))
        i += 1
    if not grid and top > 0:
        grid = [top / 2]
    sweep = []
    for theta in grid:
        k4 = math.inf
        for k, best in profiles.items():
            e = ((n - theta) + 1 - k) / k
            for P in range(1, len(best)):
                if math.isfinite(best[P]):
                    k4 = min(k4, float(best[P]) * P ** e)
        sweep.append({"theta": theta, "K4": k4})
    ok = [row for row in sweep if 0 < row["K4"] < math.inf]
    if not ok:
        return 0.0, 0.0, sweep
    pick = max(ok, key=lambda row: row["theta"])
    return pick["theta"], pick["K4"], sweep


def check_condition(H: AffineSubspace, Q: int, height: int, backend=None,
                    theta_step: float = 0.1) -> ExponentConditionReport:
    """Estimate every ``omega_j`` and the constants ``theta, K4, K3``."""
    n, s = H.n, H.s
    per_j, profiles = [], {}
    for j in range(1, n - s + 1):
        per_j.append(omega_j(H, j, height, backend=backend))
        if not per_j[-1].infinite:
            _, best, _ = _scan_profile(H, j, height, backend)
            profiles[j] = [float(b) for b in best]
    om = omega(H, Q, backend=backend)
    notes = []
    if any(e.infinite for e in per_j) or om.infinite:
        verdict = "fail"
    elif any(e.value >= n for e in per_j):
        verdict = "fail"
    else:
        verdict = "pass"
        if not H.exact:
            notes.append("estimates are witnessed lower bounds of suprema; no counter-witness "
                         f"up to height {height}")
    max_om = max((e.value for e in per_j if not e.infinite), default=0.0)
    if verdict == "fail":
        theta, k4, sweep = 0.0, 0.0, []
    else:
        theta, k4, sweep = fit_theta_k4(profiles, n, max_om, theta_step)
        if k4 <= 0:
            verdict = "inconclusive"
    # K3 over grades n-s < k <= n
    k3_min, exceptions = math.inf, []
    for k in range(n - s + 1, n + 1):
        hm, best, arg = _scan_profile(H, k, height, backend)
        b = float(best.min())
        if b < k3_min:
            k3_min = b
        if b < 1:
            exceptions.extend({"grade": k, **row} for row in _collect_below(hm, height, 1.0))
    k3 = min(1.0, k3_min) if math.isfinite(k3_min) else 1.0
    if exceptions:
        notes.append(f"{len(exceptions)} exception candidates with ||R_A c(w)|| < 1; "
                     "K3 absorbs them as the minimum over the search")
    if k3 <= 0:
        verdict = "fail" if verdict == "pass" else verdict
    return ExponentConditionReport(per_j, verdict, theta, k4, k3, k3_min, exceptions, sweep,
                                   height, Q, n, om, notes)


# ---------------------------------------------------------------------------
# the hyperplane form of the condition
# ---------------------------------------------------------------------------


@dataclass
class HyperplaneReport:
    violations: list
    verdict: str
    Q: int
    delta: float

    def to_dict(self) -> dict:
        return {"verdict": self.verdict, "Q": self.Q, "delta": self.delta,
                "violationCount": len(self.violations), "violations": self.violations[:200]}


def hyperplane_check(a: Sequence, delta: float, Q: int) -> HyperplaneReport:
    """Check ``max_i |p_i + a_i q| > |q|^{-n+delta}`` for ``0 < |q| <= Q``.

    Verdict ``pass`` with no violations, ``pass-with-exceptions`` when every
    violation has ``|q| <= Q/2`` (consistent with finitely many), ``fail``
    otherwise.
    """
    vals = [parse_scalar(x) for x in a]
    exact = all(ex for _, ex in vals)
    coeffs = [v for v, _ in vals]
    n = len(coeffs)
    qs = np.arange(1, Q + 1)
    af = np.array([float(c) for c in coeffs])
    V = np.outer(qs, af)
    d = np.abs(V - np.floor(V + 0.5)).max(axis=1)
    thr = qs.astype(float) ** (-n + float(delta))
    violations = []
    for i in np.nonzero(d <= thr * (1 + 1e-9))[0]:
        q = int(qs[i])
        if exact:
            dq = _exact_dist([[c] for c in coeffs], [q])
            if float(delta).is_integer():
                if dq > Fraction(q) ** (int(delta) - n):
                    continue
            elif float(dq) > thr[i]:
                continue
            dist = float(dq)
        else:
            if d[i] > thr[i]:
                continue
            dist = float(d[i])
        violations.append({"q": q, "distance": dist, "threshold": float(thr[i])})
    if not violations:
        verdict = "pass"
    elif max(v["q"] for v in violations) <= Q // 2:
        verdict = "pass-with-exceptions"
    else:
        verdict = "fail"
    return HyperplaneReport(violations, verdict, int(Q), float(delta))

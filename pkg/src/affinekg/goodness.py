"""Empirical checks of the (C, alpha)-good property on Euclidean balls.

``f`` is (C, alpha)-good on a ball ``B`` when for every ``eps > 0``

    |{x in B : |f(x)| < eps}| <= C (eps / sup_B |f|)^alpha |B|.

Measures come from a deterministic cubic grid of cell centres. Sups are exact
for affine functions and for one-variable polynomials (critical points), grid
maxima otherwise. A verdict passes when the measured sublevel set exceeds
the bound by at most ``budget * |B|``, the declared grid error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .subspace import Ball

DEFAULT_BUDGET = 0.05


def default_grid(s: int) -> int:
    return int(min(401, math.ceil(10 ** (6 / s))))


class Polynomial:
    """Real polynomial in ``s`` variables, ``{exponent tuple: coefficient}``."""

    def __init__(self, s: int, terms: Mapping[tuple, float]):
        self.s = int(s)
        clean = {}
        for exps, c in terms.items():
            exps = tuple(int(e) for e in exps)
            if len(exps) != self.s or any(e < 0 for e in exps):
                raise ValueError(f"bad exponent tuple {exps!r}")
            if c != 0:
                clean[exps] = clean.get(exps, 0.0) + float(c)
        self.terms = clean

    @classmethod
    def univariate(cls, coeffs: Sequence[float]) -> "Polynomial":
        """``coeffs[i]`` multiplies ``x^i``."""
        return cls(1, {(i,): c for i, c in enumerate(coeffs)})

    @classmethod
    def affine(cls, c0: float, c: Sequence[float]) -> "Polynomial":
        s = len(c)
        terms = {(0,) * s: c0}
        for i, ci in enumerate(c):
            terms[tuple(int(k == i) for k in range(s))] = ci
        return cls(s, terms)

    @property
    def degree(self) -> int:
        return max((sum(e) for e in self.terms), default=0)

    def is_zero(self) -> bool:
        return not self.terms

    def is_affine(self) -> bool:
        return self.degree <= 1

    def affine_parts(self) -> tuple[float, np.ndarray]:
        if not self.is_affine():
            raise ValueError("polynomial is not affine")
        c = np.zeros(self.s)
        for e, v in self.terms.items():
            if sum(e) == 1:
                c[e.index(1)] = v
        return self.terms.get((0,) * self.s, 0.0), c

    def __call__(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float).reshape(-1, self.s)
        out = np.zeros(X.shape[0])
        for e, c in self.terms.items():
            term = np.full(X.shape[0], c)
            for i, k in enumerate(e):
                if k:
                    term = term * X[:, i] ** k
            out += term
        return out

    def scaled(self, lam: float) -> "Polynomial":
        return Polynomial(self.s, {e: lam * c for e, c in self.terms.items()})

    def univariate_coeffs(self) -> np.ndarray:
        if self.s != 1:
            raise ValueError("not a one-variable polynomial")
        out = np.zeros(self.degree + 1)
        for (k,), c in self.terms.items():
            out[k] += c
        return out

    def __repr__(self) -> str:
        return f"Polynomial(s={self.s}, {self.terms})"


def _as_func(f) -> Callable:
    return f if callable(f) else Polynomial.univariate(f)


def sup_on_ball(f, B: Ball, method: str = "auto", grid: int | None = None) -> float:
    """``sup_B |f|``; ``method`` is ``exact``, ``grid`` or ``auto``.

    ``exact`` handles affine polynomials (``|c0 + c.x0| + r|c|``) and
    one-variable polynomials (endpoints and critical points). Grid maxima
    under-estimate the sup.
    """
    f = _as_func(f)
    if method not in ("auto", "exact", "grid"):
        raise ValueError(f"unknown method {method!r}")
    if isinstance(f, Polynomial) and method != "grid":
        x0 = np.array([float(v) for v in B.center])
        r = float(B.radius)
        if f.is_affine():
            c0, c = f.affine_parts()
            return abs(c0 + float(c @ x0)) + r * float(np.linalg.norm(c))
        if f.s == 1:
            coeffs = _effective_coeffs(f.univariate_coeffs(), abs(x0[0]) + r)
            pts = [x0[0] - r, x0[0] + r]
            if len(coeffs) > 2:
                crit = np.roots(np.polynomial.polynomial.polyder(coeffs)[::-1])
                pts += [z.real for z in crit if abs(z.imag) < 1e-12 and abs(z.real - x0[0]) < r]
            return float(np.abs(f(np.array(pts))).max())
    if method == "exact":
        raise ValueError("no exact sup formula for this function")
    X, _ = B.grid(grid or default_grid(B.dim))
    return float(np.abs(np.asarray(f(X))).max()) if len(X) else 0.0


def sublevel_measure(f, B: Ball, epsilon: float, grid: int | None = None) -> float:
    """Grid estimate of ``|{x in B : |f(x)| < epsilon}|``."""
    f = _as_func(f)
    X, cell = B.grid(grid or default_grid(B.dim))
    vals = np.abs(np.asarray(f(X)))
    return float((vals < epsilon).sum() * cell)


def _effective_coeffs(coeffs: np.ndarray, reach: float) -> np.ndarray:
    """Drop top-degree terms too small to matter on ``|x| <= reach``;
    they only make the companion-matrix roots meaningless."""
    c = np.asarray(coeffs, dtype=float)
    scale = np.abs(c) * max(reach, 1.0) ** np.arange(len(c))
    keep = len(c)
    while keep > 1 and scale[keep - 1] <= 1e-14 * scale.max():
        keep -= 1
    return c[:keep]


def sublevel_measure_exact_1d(f: Polynomial, B: Ball, epsilon: float) -> float:
    """Exact sublevel length for a one-variable polynomial on an interval."""
    if f.s != 1:
        raise ValueError("one-variable polynomials only")
    lo, hi = float(B.center[0]) - float(B.radius), float(B.center[0]) + float(B.radius)
    coeffs = _effective_coeffs(f.univariate_coeffs(), max(abs(lo), abs(hi)))
    cuts = [lo, hi]
    for shift in (-epsilon, epsilon):
        c = coeffs.copy()
        c[0] -= shift
        if len(c) > 1 and np.any(c[1:] != 0):
            for z in np.roots(np.trim_zeros(c[::-1], "f")):
                if abs(z.imag) < 1e-9 and lo < z.real < hi:
                    cuts.append(z.real)
    cuts = np.sort(np.array(cuts))
    mids = (cuts[:-1] + cuts[1:]) / 2
    inside = np.abs(f(mids)) < epsilon
    return float(np.diff(cuts)[inside].sum())


@dataclass
class GoodCheckSample:
    epsilon: float
    measured: float
    sup: float
    rhs: float
    ball_measure: float

    @property
    def ok(self) -> bool:
        return self.measured <= self.rhs

    def to_dict(self) -> dict:
        return {"epsilon": self.epsilon, "measuredSublevel": self.measured,
                "supEstimate": self.sup, "boundRHS": self.rhs}


@dataclass
class GoodCheckResult:
    samples: list
    verdict: str
    worst_ratio: float
    budget: float
    skipped: bool = False
    grid: int = 0

    @property
    def passed(self) -> bool:
        return self.verdict == "pass"

    def to_dict(self) -> dict:
        return {"verdict": self.verdict, "worstRatio": self.worst_ratio,
                "budget": self.budget, "skipped": self.skipped, "grid": self.grid,
                "samples": [s.to_dict() for s in self.samples]}


def check_good(f, C: float, alpha: float, B: Ball, epsilons: Sequence[float],
               grid: int | None = None, budget: float = DEFAULT_BUDGET,
               sup: float | None = None, measure=None) -> GoodCheckResult:
    """Test the good inequality at each ``epsilon``.

    ``measure(f, B, eps)`` replaces the grid measurement when given (the
    exact one-variable measure, say). Verdict ``pass`` needs
    ``measured <= rhs + budget |B|`` at every epsilon.
    """
    if not C > 0 or not alpha > 0:
        raise ValueError("C and alpha must be positive")
    f = _as_func(f)
    grid = grid or default_grid(B.dim)
    sup_val = sup_on_ball(f, B, grid=grid) if sup is None else float(sup)
    vol = B.measure()
    if sup_val == 0:
        return GoodCheckResult([], "skipped", 0.0, budget, skipped=True, grid=grid)
    samples, worst, ok = [], 0.0, True
    for eps in epsilons:
        if measure is None:
            m = sublevel_measure(f, B, eps, grid)
        else:
            m = measure(f, B, eps)
        rhs = C * (eps / sup_val) ** alpha * vol
        samples.append(GoodCheckSample(float(eps), m, sup_val, rhs, vol))
        worst = max(worst, m / rhs if rhs > 0 else math.inf)
        ok &= m <= rhs + budget * vol
    return GoodCheckResult(samples, "pass" if ok else "fail", worst, budget, grid=grid)


# ---------------------------------------------------------------------------
# elementary properties G1-G4
# ---------------------------------------------------------------------------


@dataclass
class PropertySuiteReport:
    results: dict = field(default_factory=dict)

    @property
    def verdict(self) -> str:
        return "pass" if all(self.results.values()) else "fail"

    def to_dict(self) -> dict:
        return {"verdict": self.verdict, **self.results}


def random_polynomial(s: int, l: int, rng: np.random.Generator, scale: float = 3.0) -> Polynomial:
    """Polynomial of degree <= ``l`` in ``s`` variables, uniform coefficients."""
    terms = {}
    for e in np.ndindex(*([l + 1] * s)):
        if sum(e) <= l:
            terms[tuple(int(v) for v in e)] = float(rng.uniform(-scale, scale))
    return Polynomial(s, terms)


def _eps_ladder(sup: float) -> list[float]:
    return [sup * t for t in (1e-3, 1e-2, 0.05, 0.1, 0.25, 0.5, 1.0, 1.5)]


def property_suite(seed: int = 0, trials: int = 20, grid: int | None = None) -> PropertySuiteReport:
    """Spot-check G1 (scaling), G2 (sup of a family), G3 (sandwich) and G4
    (monotonicity in C, alpha and the ball) on generated examples."""
    from .constants import good_constant

    rng = np.random.default_rng(seed)
    out = PropertySuiteReport()
    C1, a1 = good_constant(1, 1)
    C2, a2 = good_constant(1, 2)

    g1 = True
    for _ in range(trials):
        f = Polynomial.univariate(rng.uniform(-2, 2, size=3))
        B = Ball((rng.uniform(-1, 1),), rng.uniform(0.1, 2))
        base = check_good(f, C2, a2, B, _eps_ladder(sup_on_ball(f, B)), grid=grid)
        for lam in (7.0, -0.5, 1e3):
            g = f.scaled(lam)
            res = check_good(g, C2, a2, B, _eps_ladder(sup_on_ball(g, B)), grid=grid)
            same = [abs(x.measured - y.measured) <= 1e-12 * B.measure()
                    for x, y in zip(base.samples, res.samples)]
            g1 &= res.verdict == base.verdict and all(same)
    out.results["G1"] = bool(g1)

    # G2: max(|x|, |1-x|) on B(0, 2) and random pairs of linear functions
    g2 = True
    cases = [([0, 1], [1, -1], Ball((0.0,), 2.0))]
    for _ in range(trials):
        cases.append((rng.uniform(-2, 2, 2), rng.uniform(-2, 2, 2),
                      Ball((rng.uniform(-1, 1),), rng.uniform(0.1, 2))))
    for c1, c2, B in cases:
        fs = [Polynomial.univariate(c1), Polynomial.univariate(c2)]
        if not all(check_good(f, C1, a1, B, _eps_ladder(sup_on_ball(f, B)), grid=grid).passed
                   for f in fs):
            continue
        h = lambda X, fs=fs: np.maximum(np.abs(fs[0](X)), np.abs(fs[1](X)))
        sup = max(sup_on_ball(f, B) for f in fs)
        g2 &= check_good(h, C1, a1, B, _eps_ladder(sup), grid=grid, sup=sup).passed
    out.results["G2"] = bool(g2)

    # G3: g = f * m(x) with 1/2 <= |f/g| <= 1 passes with C (c2/c1)^alpha
    g3 = True
    for _ in range(trials):
        f = Polynomial.univariate(rng.uniform(-2, 2, size=2))
        B = Ball((rng.uniform(-1, 1),), rng.uniform(0.1, 2))
        if not check_good(f, C1, a1, B, _eps_ladder(sup_on_ball(f, B)), grid=grid).passed:
            continue
        g = lambda X, f=f: f(X) * (1.5 + 0.5 * np.sin(3 * np.asarray(X)[:, 0]))
        g3 &= check_good(g, C1 * 2 ** a1, a1, B, _eps_ladder(sup_on_ball(g, B, grid=grid)),
                         grid=grid).passed
    out.results["G3"] = bool(g3)

    # G4: passing at (C, alpha) on B implies passing at (2C, alpha/2) and on sub-balls
    g4 = True
    for _ in range(trials):
        f = Polynomial.univariate(rng.uniform(-2, 2, size=3))
        B = Ball((rng.uniform(-1, 1),), rng.uniform(0.1, 2))
        eps = _eps_ladder(sup_on_ball(f, B))
        if not check_good(f, C2, a2, B, eps, grid=grid).passed:
            continue
        g4 &= check_good(f, 2 * C2, a2 / 2, B, eps, grid=grid).passed
        sub = Ball(B.center, B.radius / 2)
        g4 &= check_good(f, C2, a2, sub, _eps_ladder(sup_on_ball(f, sub)), grid=grid).passed
    out.results["G4"] = bool(g4)
    return out

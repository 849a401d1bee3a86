"""Explicit constants of the measure bound, with provenance flags.

Every constant is tagged ``exact`` (closed form), ``table`` (shipped upper
bound, overridable) or ``empirical`` (from a bounded exponent search). The
empirical ones carry the search bounds that produced them.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Mapping

from .subspace import Ball

EXACT, TABLE, EMPIRICAL = "exact", "table", "empirical"

# Upper bounds for the Besicovitch covering constant of balls in R^s.
# s=1: any family of intervals with no interval containing another's centre
# splits into two families of pairwise disjoint intervals (order the centres
# and alternate). s=2: the planar constant for Euclidean discs is 19.
BESICOVITCH_TABLE: dict[int, float] = {1: 2.0, 2: 19.0}

# Safety factor turning the non-strict minimum into the strict inequality.
KAPPA_SAFETY = 1 - 1e-6


def unit_ball_volume(s: int) -> float:
    if s < 1:
        raise ValueError("s must be >= 1")
    return math.pi ** (s / 2) / math.gamma(s / 2 + 1)


def besicovitch(s: int, overrides: Mapping | None = None) -> float:
    """Tabulated (or overridden) upper bound for ``N_s``."""
    table = dict(BESICOVITCH_TABLE)
    for k, v in (overrides or {}).items():
        table[int(k)] = float(v)
    if s not in table:
        raise KeyError(f"no Besicovitch constant for s={s}; supply an override")
    v = table[s]
    if not v > 0:
        raise ValueError(f"Besicovitch constant must be positive, got {v}")
    return v


def load_overrides(path) -> dict:
    """Read ``{"Ns": {"2": 19}, "K3": ..., ...}`` from a JSON file."""
    data = json.loads(Path(path).read_text())
    if not isinstance(data, dict):
        raise ValueError("override file must hold a JSON object")
    return data


def k_s_constant(s: int, Ns: float | None = None) -> float:
    Ns = besicovitch(s) if Ns is None else Ns
    return 4 ** (2 * s + 1) * s ** (s / 2) * Ns / unit_ball_volume(s)


def good_constant(s: int, l: int) -> tuple[float, float]:
    """``(C_{s,l}, 1/(sl))``: polynomials of degree <= l are good with these."""
    if s < 1 or l < 1:
        raise ValueError("s and l must be >= 1")
    return 2 ** (s + 1) * s * l * (l + 1) ** (1 / l) / unit_ball_volume(s), 1 / (s * l)


def linear_good_constant(s: int) -> tuple[float, float]:
    """The degree-one constant written directly: ``(2^{s+2} s / V_s, 1/s)``."""
    return 2 ** (s + 2) * s / unit_ball_volume(s), 1 / s


def km1_constants(s: int, n: int) -> tuple[float, float]:
    C = max(2 ** (s + 2 + (1 + s + n) / (2 * s)) * s / unit_ball_volume(s), 1.0)
    return C, 1 / s


def k2_constant(U: Ball) -> float:
    """``min(1, r / sqrt(1 + |x0|^2))``.

    This is the exact minimum of ``|v0 + v.x0| + r|v|`` over unit
    ``(v0, v)``: it is attained at ``v = 0`` or at ``v0 = -v.x0`` with ``v``
    parallel to ``x0``, and the triangle inequality
    ``|(v0, v)| <= |v0 + v.x0| + sqrt(1+|x0|^2)|v|`` gives the lower bound.
    """
    c2 = sum(float(x) ** 2 for x in U.center)
    return min(1.0, float(U.radius) / math.sqrt(1 + c2))


def k2_numeric(U: Ball, samples: int = 200001) -> float:
    """Brute-force minimum over unit vectors (s = 1 only); a test oracle."""
    if U.dim != 1:
        raise ValueError("numeric K2 oracle is one-dimensional")
    import numpy as np

    phi = np.linspace(0, np.pi, samples)
    v0, v1 = np.cos(phi), np.sin(phi)
    x0, r = float(U.center[0]), float(U.radius)
    return float((np.abs(v0 + v1 * x0) + r * np.abs(v1)).min())


def beta_choice(n: int, theta: float) -> float:
    """Midpoint of ``[max(0, 1/(2(n+1)) - theta/(n-theta+1)), 1/(2(n+1)))``."""
    if not theta > 0:
        raise ValueError("theta must be > 0; at theta = 0 the admissible interval is empty")
    hi = 1 / (2 * (n + 1))
    lo = max(0.0, hi - theta / (n - theta + 1))
    return (lo + hi) / 2


def _scale(s: int, n: int, r: float) -> float:
    return 2 ** (n - 1.5) * math.sqrt(n * s) / r


def k5_constant(K2: float, K4: float, theta: float, s: int, n: int, r: float) -> float:
    base = _scale(s, n, r)
    return min(
        (K2 * K4) ** (k / (n - theta + 1)) * base ** (k / (n + 1))
        * 2 ** ((1 / (n - theta + 1) - 1) * k)
        for k in range(1, n - s + 1)
    )


def rho_constant(K2: float, K3: float, K5: float, s: int, n: int, r: float) -> float:
    return min(0.5, K2 * K3 * math.sqrt(n * s) / (2 ** (n / 2 + 1) * r), K5 / 2 ** ((n + 1) / 2))


def k1_constant(s: int, n: int, beta: float) -> float:
    gap = 1 / (2 * (n + 1)) - beta
    if gap <= 0:
        raise ValueError("beta must be < 1/(2(n+1)) for the series to converge")
    return 1 / (1 - 2 ** (-gap / s))


def k0_constant(s: int, n: int, r: float, C: float, rho: float, Ns: float) -> float:
    return ((n + 1) * (3 ** s * Ns) ** (n + 1) * C * (1 + s + n) ** (1 / (2 * s))
            * rho ** (-1 / s) * _scale(s, n, r) ** (1 / (s * (n + 1))))


def kappa_max(s: int, n: int, r: float) -> float:
    """Largest ``kappa`` allowed independently of ``xi``."""
    return min(1.0, r / (2 ** (n - 1.5) * math.sqrt(n * s)))


def kappa_terms(xi, s, n, r, Ks, sum_psi, K0, K1) -> dict:
    return {
        "one": 1.0,
        "largeGradient": xi / (2 * Ks * sum_psi),
        "radius": r / (2 ** (n - 1.5) * math.sqrt(n * s)),
        "smallGradient": (xi / (2 * K0 * K1)) ** (s * (n + 1)),
    }


def kappa_for_xi(xi: float, s: int, n: int, r: float, Ks: float, sum_psi: float,
                 K0: float, K1: float) -> float:
    if not 0 < xi < 1:
        raise ValueError("xi must lie in (0, 1)")
    return min(kappa_terms(xi, s, n, r, Ks, sum_psi, K0, K1).values()) * KAPPA_SAFETY


@dataclass
class ConstantsReport:
    s: int
    n: int
    r: float
    ball_center: tuple
    Vs: float
    Ns: float
    Ks: float
    C: float
    alpha: float
    K2: float
    K3: float
    K4: float
    theta: float
    K5: float
    beta: float
    rho: float
    K1: float
    K0: float
    xi: float | None = None
    sum_psi: float | None = None
    kappa: float | None = None
    kappa_terms: dict | None = None
    flags: dict = field(default_factory=dict)
    search_bounds: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["ball_center"] = [float(x) for x in self.ball_center]
        return d


def evaluate(s: int, n: int, U: Ball, K3: float, K4: float, theta: float,
             xi: float | None = None, sum_psi: float | None = None,
             overrides: Mapping | None = None, search_bounds: Mapping | None = None,
             empirical: bool = True) -> ConstantsReport:
    """Evaluate the whole chain from ``(K3, K4, theta)``.

    ``overrides`` may replace ``Ns`` (a table ``{s: value}``) and any of
    ``K2, K3, K4, theta, beta``; overridden constants are flagged as such.
    """
    overrides = dict(overrides or {})
    flags = {"Vs": EXACT, "Ns": TABLE, "Ks": TABLE, "C": EXACT, "alpha": EXACT, "K2": EXACT}
    r = float(U.radius)
    Vs = unit_ball_volume(s)
    Ns = besicovitch(s, overrides.get("Ns"))
    if "Ns" in overrides and str(s) in {str(k) for k in overrides["Ns"]}:
        flags["Ns"] = flags["Ks"] = "override"
    Ks = k_s_constant(s, Ns)
    C, alpha = km1_constants(s, n)
    K2 = k2_constant(U)
    emp = EMPIRICAL if empirical else EXACT
    for name in ("K3", "K4", "theta"):
        flags[name] = emp
    if "K2" in overrides:
        K2, flags["K2"] = float(overrides["K2"]), "override"
    if "K3" in overrides:
        K3, flags["K3"] = float(overrides["K3"]), "override"
    if "K4" in overrides:
        K4, flags["K4"] = float(overrides["K4"]), "override"
    if "theta" in overrides:
        theta, flags["theta"] = float(overrides["theta"]), "override"
    derived = "override" if any(flags[k] == "override" for k in ("K2", "K3", "K4", "theta")) else emp
    beta = beta_choice(n, theta)
    flags["beta"] = derived
    if "beta" in overrides:
        beta, flags["beta"] = float(overrides["beta"]), "override"
    K5 = k5_constant(K2, K4, theta, s, n, r)
    rho = rho_constant(K2, K3, K5, s, n, r)
    K1 = k1_constant(s, n, beta)
    K0 = k0_constant(s, n, r, C, rho, Ns)
    for name in ("K5", "rho", "K0"):
        flags[name] = derived
    flags["K1"] = flags["beta"]
    rep = ConstantsReport(s, n, r, tuple(U.center), Vs, Ns, Ks, C, alpha, K2, K3, K4, theta,
                          K5, beta, rho, K1, K0, flags=flags,
                          search_bounds=dict(search_bounds or {}))
    if xi is not None:
        if sum_psi is None:
            raise ValueError("kappa needs the lattice sum of psi")
        rep.xi, rep.sum_psi = float(xi), float(sum_psi)
        rep.kappa_terms = kappa_terms(xi, s, n, r, Ks, sum_psi, K0, K1)
        rep.kappa = kappa_for_xi(xi, s, n, r, Ks, sum_psi, K0, K1)
        flags["kappa"] = derived
    return rep


def from_condition(H, U: Ball, report, xi=None, sum_psi=None, overrides=None) -> ConstantsReport:
    """Constants driven by an :class:`~affinekg.exponents.ExponentConditionReport`."""
    return evaluate(
        H.s, H.n, U, report.empirical_K3, report.empirical_K4, report.empirical_theta,
        xi=xi, sum_psi=sum_psi, overrides=overrides,
        search_bounds={"Q": report.Q, "height": report.height},
    )

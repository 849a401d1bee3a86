"""Affine subspaces in standard form and balls in parameter space.

The subspace is ``x -> (x, x~ A)`` with ``x~ = (1, x)`` and ``A = (a0; A')``.
Entries are stored as :class:`~fractions.Fraction`; quadratic irrationals are
expanded to a fixed number of decimal digits and the subspace is then marked
inexact so that exact-zero tests are never trusted for it.
"""

from __future__ import annotations

import ast
import math
import re
from dataclasses import dataclass
from decimal import Decimal, localcontext
from fractions import Fraction
from typing import Sequence

import numpy as np

DEFAULT_DIGITS = 60

_IRRATIONAL_NAMES = {
    "sqrt2": 2,
    "sqrt3": 3,
    "sqrt5": 5,
}
_GOLDEN_NAMES = ("phi", "golden")


class ScalarParseError(ValueError):
    pass


def _as_decimal(x, digits):
    if isinstance(x, Decimal):
        return x
    if isinstance(x, Fraction):
        with localcontext() as ctx:
            ctx.prec = digits
            return Decimal(x.numerator) / Decimal(x.denominator)
    return Decimal(x)


def _normalise(text: str) -> str:
    text = text.strip().replace("φ", "phi").replace("ϕ", "phi")
    text = re.sub(r"√\s*\(", "sqrt(", text)
    text = re.sub(r"√\s*(\d+)", r"sqrt(\1)", text)
    text = text.replace("^", "**")
    return text


def parse_scalar(value, digits: int = DEFAULT_DIGITS) -> tuple[Fraction, bool]:
    """Parse a matrix entry; returns ``(value, exact)``.

    Accepts ints, Fractions, floats (taken as their exact binary value),
    decimal strings, ``"p/q"``, and arithmetic over the tags ``sqrt2``,
    ``sqrt3``, ``sqrt5``, ``phi`` and ``sqrt(k)``, e.g. ``"sqrt2 - 1"``.
    """
    if isinstance(value, bool):
        raise ScalarParseError(f"not a number: {value!r}")
    if isinstance(value, (int, Fraction)):
        return Fraction(value), True
    if isinstance(value, float):
        if not math.isfinite(value):
            raise ScalarParseError(f"not a finite number: {value!r}")
        return Fraction(value), True
    if not isinstance(value, str):
        raise ScalarParseError(f"unsupported entry type {type(value).__name__}")
    text = _normalise(value)
    if not text:
        raise ScalarParseError("empty entry")
    try:
        tree = ast.parse(text, mode="eval")
    except SyntaxError as exc:
        raise ScalarParseError(f"cannot parse {value!r}") from exc
    work = digits + 10
    inexact = [False]

    def ev(node):
        if isinstance(node, ast.Expression):
            return ev(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) and not isinstance(node.value, bool):
            # decimal literals are exact: 0.1 means 1/10
            src = ast.get_source_segment(text, node) or repr(node.value)
            return Fraction(src)
        if isinstance(node, ast.Name):
            name = node.id.lower()
            if name in _IRRATIONAL_NAMES:
                return root(_IRRATIONAL_NAMES[name])
            if name in _GOLDEN_NAMES:
                inexact[0] = True
                with localcontext() as ctx:
                    ctx.prec = work
                    return (1 + Decimal(5).sqrt()) / 2
            raise ScalarParseError(f"unknown symbol {node.id!r} in {value!r}")
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.UAdd, ast.USub)):
            v = ev(node.operand)
            return -v if isinstance(node.op, ast.USub) else v
        if isinstance(node, ast.BinOp) and isinstance(node.op, (ast.Add, ast.Sub, ast.Mult, ast.Div, ast.Pow)):
            a, b = ev(node.left), ev(node.right)
            if isinstance(node.op, ast.Pow):
                if not (isinstance(b, Fraction) and b.denominator == 1):
                    raise ScalarParseError(f"only integer powers are supported in {value!r}")
                if isinstance(a, Fraction):
                    return a ** int(b)
            if isinstance(a, Fraction) and isinstance(b, Fraction):
                if isinstance(node.op, ast.Div) and b == 0:
                    raise ScalarParseError(f"division by zero in {value!r}")
                return {ast.Add: a.__add__, ast.Sub: a.__sub__, ast.Mult: a.__mul__,
                        ast.Div: a.__truediv__}[type(node.op)](b)
            with localcontext() as ctx:
                ctx.prec = work
                a, b = _as_decimal(a, work), _as_decimal(b, work)
                if isinstance(node.op, ast.Div) and b == 0:
                    raise ScalarParseError(f"division by zero in {value!r}")
                if isinstance(node.op, ast.Pow):
                    return a ** int(b)
                return {ast.Add: a + b, ast.Sub: a - b, ast.Mult: a * b,
                        ast.Div: a / b}[type(node.op)]
        if (isinstance(node, ast.Call) and isinstance(node.func, ast.Name)
                and node.func.id == "sqrt" and len(node.args) == 1 and not node.keywords):
            arg = ev(node.args[0])
            if not (isinstance(arg, Fraction) and arg >= 0):
                raise ScalarParseError(f"sqrt needs a nonnegative rational in {value!r}")
            return root(arg)
        raise ScalarParseError(f"unsupported expression {value!r}")

    def root(k):
        k = Fraction(k)
        num, den = math.isqrt(k.numerator), math.isqrt(k.denominator)
        if num * num == k.numerator and den * den == k.denominator:
            return Fraction(num, den)
        inexact[0] = True
        with localcontext() as ctx:
            ctx.prec = work
            return (Decimal(k.numerator) / Decimal(k.denominator)).sqrt()

    out = ev(tree)
    if isinstance(out, Decimal):
        with localcontext() as ctx:
            ctx.prec = digits
            out = Fraction(+out)
    return out, not inexact[0]


def _matrix(rows, digits):
    vals, exact = [], True
    for row in rows:
        out = []
        for entry in row:
            v, ex = parse_scalar(entry, digits)
            out.append(v)
            exact &= ex
        vals.append(tuple(out))
    return tuple(vals), exact


@dataclass(frozen=True)
class AffineSubspace:
    """``{(x, x~A)}`` in R^n with ``x`` in R^s; ``A`` is (s+1) x (n-s)."""

    s: int
    n: int
    a0: tuple
    Aprime: tuple
    exact: bool = True
    digits: int = DEFAULT_DIGITS

    def __init__(self, s: int, n: int, a0: Sequence, Aprime: Sequence[Sequence],
                 digits: int = DEFAULT_DIGITS):
        if not (1 <= s <= n - 1):
            raise ValueError(f"need 1 <= s <= n-1, got s={s}, n={n}")
        m = n - s
        a0 = list(a0)
        Aprime = [list(r) for r in Aprime]
        if len(a0) != m:
            raise ValueError(f"a0 must have length n-s = {m}")
        if len(Aprime) != s or any(len(r) != m for r in Aprime):
            raise ValueError(f"A' must be {s}x{m}")
        (a0v,), ex0 = _matrix([a0], digits)
        Ap, ex1 = _matrix(Aprime, digits)
        object.__setattr__(self, "s", int(s))
        object.__setattr__(self, "n", int(n))
        object.__setattr__(self, "a0", a0v)
        object.__setattr__(self, "Aprime", Ap)
        object.__setattr__(self, "exact", ex0 and ex1)
        object.__setattr__(self, "digits", digits)

    @classmethod
    def from_matrix(cls, A: Sequence[Sequence], digits: int = DEFAULT_DIGITS) -> "AffineSubspace":
        """Build from the stacked (s+1) x (n-s) matrix ``A``."""
        A = [list(r) for r in A]
        s = len(A) - 1
        return cls(s, s + len(A[0]), A[0], A[1:], digits=digits)

    @property
    def A(self) -> tuple:
        return (self.a0,) + self.Aprime

    def A_float(self) -> np.ndarray:
        return np.array([[float(v) for v in row] for row in self.A])

    def parametrize(self, x: Sequence):
        """``(x, x~A)``; exact when ``x`` and the subspace are exact."""
        x = list(x)
        if len(x) != self.s:
            raise ValueError(f"x must have length s = {self.s}")
        xt = [1] + x
        tail = [sum(xt[i] * self.A[i][j] for i in range(self.s + 1)) for j in range(self.n - self.s)]
        return tuple(x) + tuple(tail)

    def parametrize_grid(self, X: np.ndarray) -> np.ndarray:
        """Vectorised float parametrization of the rows of ``X`` (N x s)."""
        X = np.asarray(X, dtype=float).reshape(-1, self.s)
        A = self.A_float()
        return np.hstack([X, A[0][None, :] + X @ A[1:]])

    def gradient_matrix(self) -> tuple:
        """``[I_s | A']`` (s x n); independent of x."""
        return tuple(
            tuple(Fraction(int(i == j)) for j in range(self.s)) + self.Aprime[i]
            for i in range(self.s)
        )

    def r_matrix(self) -> tuple:
        """``R_A = [I_{s+1} | A]`` ((s+1) x (n+1))."""
        return tuple(
            tuple(Fraction(int(i == j)) for j in range(self.s + 1)) + self.A[i]
            for i in range(self.s + 1)
        )

    def to_config(self) -> dict:
        return {
            "s": self.s, "n": self.n,
            "a0": [str(v) for v in self.a0],
            "Aprime": [[str(v) for v in row] for row in self.Aprime],
        }


@dataclass(frozen=True)
class Ball:
    """Euclidean ball ``B(center, radius)`` in R^s."""

    center: tuple
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(self.center))
        if not self.center:
            raise ValueError("ball center must have at least one coordinate")
        if not self.radius > 0:
            raise ValueError("ball radius must be positive")

    @property
    def dim(self) -> int:
        return len(self.center)

    def measure(self) -> float:
        s = self.dim
        return math.pi ** (s / 2) / math.gamma(s / 2 + 1) * float(self.radius) ** s

    def scaled(self, factor: float) -> "Ball":
        return Ball(self.center, self.radius * factor)

    def contains(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float).reshape(-1, self.dim)
        c = np.array([float(v) for v in self.center])
        return ((X - c) ** 2).sum(axis=1) < float(self.radius) ** 2

    def grid(self, per_axis: int) -> tuple[np.ndarray, float]:
        """Cell centres of a cubic grid on the bounding box that fall inside
        the ball, and the volume of one cell."""
        per_axis = int(per_axis)
        if per_axis < 1:
            raise ValueError("grid needs at least one point per axis")
        r = float(self.radius)
        h = 2 * r / per_axis
        axis = -r + h * (np.arange(per_axis) + 0.5)
        mesh = np.stack(np.meshgrid(*([axis] * self.dim), indexing="ij"), axis=-1).reshape(-1, self.dim)
        inside = (mesh ** 2).sum(axis=1) < r * r
        c = np.array([float(v) for v in self.center])
        return mesh[inside] + c, h ** self.dim

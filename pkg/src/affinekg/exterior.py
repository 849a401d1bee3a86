"""Sparse exterior algebra over W = R^{1+s+n}.

The basis of W is ``e0, e*1..e*s, e1..en`` in that order. A
:class:`Multivector` stores only nonzero coefficients of one grade, keyed by
strictly increasing tuples of :class:`BasisLabel`. Coefficients are exact
(``int``/``Fraction``) whenever the inputs are, floats otherwise.

The subspace spanned by ``e0, e1..en`` (no star labels) is identified with
R^{n+1}; that is where :func:`c_map` and :func:`project_bullet` live.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from itertools import combinations
from numbers import Rational
from types import MappingProxyType
from typing import Iterable, Mapping, NamedTuple, Sequence


class BasisLabel(NamedTuple):
    """``kind`` 0 is e0, 1 a star label, 2 an ordinary label; tuple order
    gives ``e0 < e*1 < ... < e*s < e1 < ... < en``."""

    kind: int
    index: int

    def __repr__(self) -> str:
        if self.kind == 0:
            return "e0"
        return f"e*{self.index}" if self.kind == 1 else f"e{self.index}"


E0 = BasisLabel(0, 0)


def star(i: int) -> BasisLabel:
    if i < 1:
        raise ValueError("star labels are 1-based")
    return BasisLabel(1, i)


def e(i: int) -> BasisLabel:
    """``e(0)`` is ``e0``; ``e(i)`` for ``i >= 1`` is the i-th ordinary label."""
    if i < 0:
        raise ValueError("label index must be >= 0")
    return E0 if i == 0 else BasisLabel(2, i)


@dataclass(frozen=True)
class Frame:
    """Coordinates for W = R^{1+s+n}; ``s = 0`` gives R^{n+1} = W_{0->n}."""

    s: int
    n: int

    def __post_init__(self):
        if self.s < 0 or self.n < 0:
            raise ValueError("frame dimensions must be nonnegative")

    @property
    def dim(self) -> int:
        return 1 + self.s + self.n

    @property
    def labels(self) -> tuple[BasisLabel, ...]:
        return (E0,) + tuple(star(i) for i in range(1, self.s + 1)) + tuple(
            e(i) for i in range(1, self.n + 1)
        )

    def index(self, label: BasisLabel) -> int:
        if label.kind == 0:
            return 0
        if label.kind == 1 and label.index <= self.s:
            return label.index
        if label.kind == 2 and label.index <= self.n:
            return self.s + label.index
        raise ValueError(f"{label!r} is not a basis label of {self}")

    def vector(self, coords: Sequence) -> "Multivector":
        if len(coords) != self.dim:
            raise ValueError(f"expected {self.dim} coordinates, got {len(coords)}")
        return Multivector(1, {(lab,): c for lab, c in zip(self.labels, coords)})


def _is_exact(c) -> bool:
    return isinstance(c, Rational)


def _merge_sign(a: tuple, b: tuple):
    """Sorted union of ``a`` and ``b`` with the sign of the shuffle, or
    ``None`` when they share a label."""
    inversions = 0
    i = j = 0
    out = []
    while i < len(a) and j < len(b):
        if a[i] < b[j]:
            out.append(a[i])
            i += 1
        elif a[i] > b[j]:
            out.append(b[j])
            inversions += len(a) - i
            j += 1
        else:
            return None
    out.extend(a[i:])
    out.extend(b[j:])
    return tuple(out), (-1 if inversions & 1 else 1)


def _sort_sign(labels: Sequence[BasisLabel]):
    labels = list(labels)
    if len(set(labels)) != len(labels):
        return None
    sign = 1
    for i in range(len(labels)):
        for j in range(len(labels) - 1 - i):
            if labels[j] > labels[j + 1]:
                labels[j], labels[j + 1] = labels[j + 1], labels[j]
                sign = -sign
    return tuple(labels), sign


class Multivector:
    """Immutable homogeneous element of the exterior algebra."""

    __slots__ = ("_grade", "_terms")

    def __init__(self, grade: int, terms: Mapping[tuple, object] | None = None):
        if grade < 0:
            raise ValueError("grade must be nonnegative")
        clean = {}
        for key, c in (terms or {}).items():
            key = tuple(key)
            if len(key) != grade:
                raise ValueError(f"term {key!r} does not have grade {grade}")
            if any(key[i] >= key[i + 1] for i in range(len(key) - 1)):
                raise ValueError(f"term {key!r} is not strictly increasing")
            if c != 0:
                clean[key] = clean.get(key, 0) + c
        self._grade = grade
        self._terms = MappingProxyType({k: v for k, v in clean.items() if v != 0})

    # construction -------------------------------------------------------
    @classmethod
    def scalar(cls, c=1) -> "Multivector":
        return cls(0, {(): c})

    @classmethod
    def blade(cls, *labels: BasisLabel, coeff=1) -> "Multivector":
        """``coeff * l1 ^ l2 ^ ...`` with the labels in any order."""
        res = _sort_sign(labels)
        if res is None:
            return cls(len(labels))
        key, sign = res
        return cls(len(labels), {key: sign * coeff})

    @classmethod
    def from_dict(cls, terms: Mapping[tuple, object]) -> "Multivector":
        grades = {len(k) for k in terms}
        if len(grades) > 1:
            raise ValueError("mixed grades")
        acc: dict = {}
        for key, c in terms.items():
            res = _sort_sign(key)
            if res is None:
                continue
            k, sign = res
            acc[k] = acc.get(k, 0) + sign * c
        return cls(grades.pop() if grades else 0, acc)

    # inspection ---------------------------------------------------------
    @property
    def grade(self) -> int:
        return self._grade

    @property
    def terms(self) -> Mapping[tuple, object]:
        return self._terms

    @property
    def exact(self) -> bool:
        return all(_is_exact(c) for c in self._terms.values())

    def coeff(self, *labels: BasisLabel):
        res = _sort_sign(labels)
        if res is None:
            return 0
        key, sign = res
        return sign * self._terms.get(key, 0)

    def is_zero(self) -> bool:
        return not self._terms

    def labels(self) -> set:
        return {lab for key in self._terms for lab in key}

    # arithmetic ---------------------------------------------------------
    def _check(self, other: "Multivector"):
        if not isinstance(other, Multivector):
            return NotImplemented
        if other._grade != self._grade and not (self.is_zero() or other.is_zero()):
            raise ValueError("cannot add multivectors of different grades")
        return None

    def __add__(self, other):
        if self._check(other) is NotImplemented:
            return NotImplemented
        grade = self._grade if not self.is_zero() else other._grade
        acc = dict(self._terms)
        for k, v in other._terms.items():
            acc[k] = acc.get(k, 0) + v
        return Multivector(grade, acc)

    def __neg__(self):
        return Multivector(self._grade, {k: -v for k, v in self._terms.items()})

    def __sub__(self, other):
        return self + (-other)

    def __mul__(self, t):
        if isinstance(t, Multivector):
            return NotImplemented
        return Multivector(self._grade, {k: t * v for k, v in self._terms.items()})

    __rmul__ = __mul__

    def __xor__(self, other):
        return wedge(self, other)

    def __eq__(self, other):
        if not isinstance(other, Multivector):
            return NotImplemented
        if self.is_zero() and other.is_zero():
            return True
        return self._grade == other._grade and dict(self._terms) == dict(other._terms)

    def __hash__(self):
        return hash((self._grade, frozenset(self._terms.items())))

    def __repr__(self):
        if self.is_zero():
            return f"Multivector(grade={self._grade}, 0)"
        parts = []
        for key, c in sorted(self._terms.items()):
            blade = "^".join(repr(l) for l in key) or "1"
            parts.append(f"{c}*{blade}")
        return " + ".join(parts)

    # norms --------------------------------------------------------------
    def norm_squared(self):
        """Exact when the coefficients are."""
        return sum((c * c for c in self._terms.values()), 0)

    def norm(self) -> float:
        return math.sqrt(self.norm_squared())

    def sup_norm(self):
        return max((abs(c) for c in self._terms.values()), default=0)

    def map_coeffs(self, fn) -> "Multivector":
        return Multivector(self._grade, {k: fn(v) for k, v in self._terms.items()})

    def to_float(self) -> "Multivector":
        return self.map_coeffs(float)


def wedge(u: Multivector, w: Multivector, dim: int | None = None) -> Multivector:
    """Exterior product; ``dim`` (if given) rejects grades beyond dim W."""
    grade = u.grade + w.grade
    if dim is not None and grade > dim:
        raise ValueError(f"grade {grade} exceeds dim W = {dim}")
    acc: dict = {}
    for ka, ca in u.terms.items():
        for kb, cb in w.terms.items():
            res = _merge_sign(ka, kb)
            if res is None:
                continue
            key, sign = res
            acc[key] = acc.get(key, 0) + sign * ca * cb
    return Multivector(grade, acc)


def wedge_all(vectors: Iterable[Multivector]) -> Multivector:
    out = Multivector.scalar(1)
    for v in vectors:
        out = wedge(out, v)
    return out


# ---------------------------------------------------------------------------
# subgroups and their representatives
# ---------------------------------------------------------------------------


def exact_rank(rows: Sequence[Sequence]) -> int:
    """Rank by fraction-exact elimination (float rows are converted exactly)."""
    m = [[Fraction(x) for x in row] for row in rows]
    rank = 0
    ncols = len(m[0]) if m else 0
    for col in range(ncols):
        piv = next((r for r in range(rank, len(m)) if m[r][col] != 0), None)
        if piv is None:
            continue
        m[rank], m[piv] = m[piv], m[rank]
        for r in range(len(m)):
            if r != rank and m[r][col] != 0:
                f = m[r][col] / m[rank][col]
                m[r] = [a - f * b for a, b in zip(m[r], m[rank])]
        rank += 1
    return rank


def exact_det(rows: Sequence[Sequence]):
    """Determinant by fraction-exact elimination."""
    m = [[Fraction(x) for x in row] for row in rows]
    k = len(m)
    det = Fraction(1)
    for col in range(k):
        piv = next((r for r in range(col, k) if m[r][col] != 0), None)
        if piv is None:
            return Fraction(0)
        if piv != col:
            m[col], m[piv] = m[piv], m[col]
            det = -det
        det *= m[col][col]
        for r in range(col + 1, k):
            f = m[r][col] / m[col][col]
            m[r] = [a - f * b for a, b in zip(m[r], m[col])]
    return det


@dataclass(frozen=True)
class SubgroupBasis:
    """``k`` integer vectors spanning a subgroup of Z^{dim frame}."""

    vectors: tuple[tuple[int, ...], ...]
    frame: Frame

    def __post_init__(self):
        vecs = tuple(tuple(int(x) for x in v) for v in self.vectors)
        object.__setattr__(self, "vectors", vecs)
        for v in vecs:
            if len(v) != self.frame.dim:
                raise ValueError("vector length does not match the frame")
        if vecs and exact_rank(vecs) != len(vecs):
            raise ValueError("subgroup basis vectors are linearly dependent")

    @property
    def rank(self) -> int:
        return len(self.vectors)

    def is_primitive(self) -> bool:
        """Gamma = span_R(Gamma) cap Z^d iff the maximal minors have gcd 1."""
        if not self.vectors:
            return True
        k = len(self.vectors)
        g = 0
        for cols in combinations(range(self.frame.dim), k):
            minor = exact_det([[v[c] for c in cols] for v in self.vectors])
            g = math.gcd(g, int(minor))
            if g == 1:
                return True
        return g == 1


def represent(basis: SubgroupBasis) -> Multivector:
    """Wedge of the basis vectors (1 for rank 0); unique up to sign."""
    if basis.rank == 0:
        return Multivector.scalar(1)
    w = wedge_all(basis.frame.vector(v) for v in basis.vectors)
    if w.is_zero():
        raise ValueError("dependent vectors do not represent a subgroup")
    return w


# ---------------------------------------------------------------------------
# the c-map and projections
# ---------------------------------------------------------------------------


def c_map(w: Multivector, n: int) -> tuple[Multivector, ...]:
    """``c(w)_i = sum_J <e_i ^ e_J, w> e_J`` over ``J`` in {1..n}, ``#J = j-1``.

    ``w`` has grade ``j >= 1`` over ``e0, e1..en``; the basis blades are
    orthonormal for the pairing.
    """
    j = w.grade
    if j < 1:
        raise ValueError("c is only defined on grades >= 1")
    for lab in w.labels():
        if lab.kind == 1:
            raise ValueError("c is defined on W_{0->n}; star labels present")
        if lab.index > n:
            raise ValueError(f"{lab!r} is outside W_{{0->{n}}}")
    out = []
    for i in range(n + 1):
        lead = e(i)
        acc = {}
        for J in combinations(range(1, n + 1), j - 1):
            if i in J:
                continue
            coeff = w.coeff(lead, *(e(x) for x in J))
            if coeff != 0:
                acc[tuple(e(x) for x in J)] = coeff
        out.append(Multivector(j - 1, acc))
    return tuple(out)


def project_bullet(w: Multivector, s: int) -> Multivector:
    """Keep the terms built only from ``e_{s+1}, ..., e_n``."""
    keep = {k: c for k, c in w.terms.items() if all(l.kind == 2 and l.index > s for l in k)}
    return Multivector(w.grade, keep)


def project_pi(w: Multivector) -> Multivector:
    """Keep the terms built only from ``e_1, ..., e_n`` (drop e0 and stars)."""
    keep = {k: c for k, c in w.terms.items() if all(l.kind == 2 for l in k)}
    return Multivector(w.grade, keep)


def project_star(w: Multivector) -> Multivector:
    """Drop every term containing two or more star labels."""
    keep = {k: c for k, c in w.terms.items() if sum(l.kind == 1 for l in k) < 2}
    return Multivector(w.grade, keep)


def nu_squared(w: Multivector):
    """Exact square of :func:`nu` for exact input."""
    return project_star(w).norm_squared()


def nu(w: Multivector) -> float:
    """Euclidean norm after :func:`project_star`; on W it is the Euclidean norm."""
    return math.sqrt(nu_squared(w))


def push_forward(M: Sequence[Sequence], w: Multivector, frame: Frame) -> Multivector:
    """Apply ``wedge^k(M)`` to ``w``; ``M`` acts on column vectors of the frame."""
    rows = [list(r) for r in M]
    if len(rows) != frame.dim or any(len(r) != frame.dim for r in rows):
        raise ValueError(f"M must be {frame.dim}x{frame.dim}")
    labels = frame.labels
    for lab in w.labels():
        frame.index(lab)
    if w.grade == 0:
        return w
    cols = {}

    def image(lab):
        if lab not in cols:
            i = frame.index(lab)
            cols[lab] = Multivector(1, {(labels[r],): rows[r][i] for r in range(frame.dim)})
        return cols[lab]

    acc = Multivector(w.grade)
    for key, c in w.terms.items():
        acc = acc + c * wedge_all(image(lab) for lab in key)
    return acc


def linear_matrix(fn, domain: Sequence[tuple], codomain: Sequence[tuple]):
    """Matrix of a linear map on multivectors between two coordinate lists.

    ``fn`` takes a basis blade and returns a multivector or a sequence of
    multivectors (stacked in order). Entries are kept exact.
    """
    cols = []
    for key in domain:
        img = fn(Multivector(len(key), {key: 1}))
        blocks = img if isinstance(img, (tuple, list)) else (img,)
        col = []
        for b, block in enumerate(blocks):
            for ck in codomain:
                col.append(block.terms.get(ck, 0))
        cols.append(col)
    return [list(r) for r in zip(*cols)] if cols else []

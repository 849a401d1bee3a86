"""Hot numeric loops, each in a numba flavour and a pure-numpy flavour.

Every public function takes ``backend=None`` (environment default, see
:mod:`affinekg._backend`) and returns identical results on both paths; the
test-suite checks that, and ``benchmarks/bench_kernels.py`` times them.

Integer boxes are walked in lexicographic order. For a box ``[-H, H]^C`` the
lexicographic index of ``w`` and of ``-w`` sum to ``(2H+1)^C - 1``, so the
indices above the midpoint are exactly the vectors whose first nonzero
coordinate is positive; kernels that only need one of ``+-w`` walk that half.
"""

from itertools import combinations

import numpy as np

from ._backend import njit, resolve

# Elements per numpy chunk; keeps temporaries in the tens of MB.
_CHUNK = 1 << 21


def _half_box_size(bound, dim):
    total = (2 * bound + 1) ** dim
    return total, (total - 1) // 2 + 1


def _decode(indices, bound, dim):
    """Mixed-radix decode of lexicographic box indices into vectors."""
    radix = 2 * bound + 1
    out = np.empty((indices.shape[0], dim), dtype=np.int64)
    rem = indices.copy()
    for col in range(dim - 1, -1, -1):
        out[:, col] = rem % radix - bound
        rem //= radix
    return out


# ---------------------------------------------------------------------------
# nearest-integer distance of linear forms against per-form thresholds
# ---------------------------------------------------------------------------


@njit
def _linear_form_hits_numba(F, Qc, thr):
    N = F.shape[0]
    M = Qc.shape[0]
    n = F.shape[1]
    hit = np.zeros(N, dtype=np.bool_)
    exact = np.zeros(N, dtype=np.bool_)
    first = np.full(N, -1, dtype=np.int64)
    per_q = np.zeros(M, dtype=np.int64)
    for i in range(N):
        for j in range(M):
            v = 0.0
            for k in range(n):
                v += F[i, k] * Qc[j, k]
            d = abs(v - np.floor(v + 0.5))
            if d < thr[j]:
                per_q[j] += 1
                if not hit[i]:
                    hit[i] = True
                    first[i] = j
                if d == 0.0:
                    exact[i] = True
    return hit, exact, first, per_q


def _linear_form_hits_numpy(F, Qc, thr):
    N, M = F.shape[0], Qc.shape[0]
    hit = np.zeros(N, dtype=bool)
    exact = np.zeros(N, dtype=bool)
    first = np.full(N, -1, dtype=np.int64)
    per_q = np.zeros(M, dtype=np.int64)
    step = max(1, _CHUNK // max(M, 1))
    for lo in range(0, N, step):
        V = F[lo : lo + step] @ Qc.T
        D = np.abs(V - np.floor(V + 0.5))
        H = D < thr[None, :]
        per_q += H.sum(axis=0)
        any_hit = H.any(axis=1)
        hit[lo : lo + step] = any_hit
        first[lo : lo + step] = np.where(any_hit, H.argmax(axis=1), -1)
        exact[lo : lo + step] = (H & (D == 0.0)).any(axis=1)
    return hit, exact, first, per_q


def linear_form_hits(F, Qc, thr, backend=None):
    """For every row ``f`` of ``F`` and row ``q`` of ``Qc`` test
    ``min_p |p + f.q| < thr[q]``.

    Returns ``(hit, exact, first, per_q)``: whether each ``f`` has a hit,
    whether one of its hits is an exact zero, the index of its first hitting
    ``q`` (or -1), and the number of hitting ``f`` per ``q``.
    """
    F = np.ascontiguousarray(F, dtype=np.float64)
    Qc = np.ascontiguousarray(Qc, dtype=np.float64).reshape(-1, F.shape[1])
    thr = np.ascontiguousarray(thr, dtype=np.float64).reshape(-1)
    if Qc.shape[0] == 0:
        N = F.shape[0]
        return (np.zeros(N, bool), np.zeros(N, bool),
                np.full(N, -1, np.int64), np.zeros(0, np.int64))
    if resolve(backend) == "numba":
        return _linear_form_hits_numba(F, Qc, thr)
    return _linear_form_hits_numpy(F, Qc, thr)


# ---------------------------------------------------------------------------
# per-height best simultaneous approximation, for omega(A)
# ---------------------------------------------------------------------------


@njit
def _omega_profile_numba(A, Q):
    m, c = A.shape
    best = np.full(Q + 1, np.inf)
    arg = np.zeros((Q + 1, c), dtype=np.int64)
    radix = 2 * Q + 1
    total = radix ** c
    q = np.empty(c, dtype=np.int64)
    for idx in range((total - 1) // 2 + 1, total):
        rem = idx
        h = 0
        for col in range(c - 1, -1, -1):
            q[col] = rem % radix - Q
            rem //= radix
            if abs(q[col]) > h:
                h = abs(q[col])
        d = 0.0
        for i in range(m):
            v = 0.0
            for k in range(c):
                v += A[i, k] * q[k]
            r = abs(v - np.floor(v + 0.5))
            if r > d:
                d = r
        if d < best[h]:
            best[h] = d
            for k in range(c):
                arg[h, k] = q[k]
    return best, arg


def _omega_profile_numpy(A, Q):
    m, c = A.shape
    best = np.full(Q + 1, np.inf)
    arg = np.zeros((Q + 1, c), dtype=np.int64)
    total, start = _half_box_size(Q, c)
    for lo in range(start, total, _CHUNK):
        idx = np.arange(lo, min(lo + _CHUNK, total), dtype=np.int64)
        q = _decode(idx, Q, c)
        h = np.abs(q).max(axis=1)
        V = q @ A.T
        d = np.abs(V - np.floor(V + 0.5)).max(axis=1)
        order = np.lexsort((d, h))
        hs, first = np.unique(h[order], return_index=True)
        sel = order[first]
        better = d[sel] < best[hs]
        best[hs[better]] = d[sel][better]
        arg[hs[better]] = q[sel][better]
    return best, arg


def omega_profile(A, Q, backend=None):
    """Per sup-norm height ``h = 1..Q``: smallest ``max_i dist(A_i.q, Z)``
    over ``||q|| = h`` and a minimising ``q``. Index 0 is unused (inf)."""
    A = np.ascontiguousarray(A, dtype=np.float64)
    if A.ndim != 2:
        raise ValueError("A must be a matrix")
    if resolve(backend) == "numba":
        return _omega_profile_numba(A, int(Q))
    return _omega_profile_numpy(A, int(Q))


# ---------------------------------------------------------------------------
# integer multivector scan, for omega_j and the K3/K4 constants
# ---------------------------------------------------------------------------


@njit
def _multivector_profile_numba(M, bullet, H, max_height):
    r, C = M.shape
    nb = bullet.shape[0]
    best = np.full(max_height + 1, np.inf)
    arg = np.zeros((max_height + 1, C), dtype=np.int64)
    radix = 2 * H + 1
    total = radix ** C
    w = np.empty(C, dtype=np.int64)
    for idx in range((total - 1) // 2 + 1, total):
        rem = idx
        for col in range(C - 1, -1, -1):
            w[col] = rem % radix - H
            rem //= radix
        P = 0
        for b in range(nb):
            a = abs(w[bullet[b]])
            if a > P:
                P = a
        d = 0.0
        for i in range(r):
            v = 0.0
            for k in range(C):
                v += M[i, k] * w[k]
            if abs(v) > d:
                d = abs(v)
        if d < best[P]:
            best[P] = d
            for k in range(C):
                arg[P, k] = w[k]
    return best, arg


def _multivector_profile_numpy(M, bullet, H, max_height):
    r, C = M.shape
    best = np.full(max_height + 1, np.inf)
    arg = np.zeros((max_height + 1, C), dtype=np.int64)
    total, start = _half_box_size(H, C)
    for lo in range(start, total, _CHUNK):
        idx = np.arange(lo, min(lo + _CHUNK, total), dtype=np.int64)
        w = _decode(idx, H, C)
        if bullet.shape[0]:
            P = np.abs(w[:, bullet]).max(axis=1)
        else:
            P = np.zeros(w.shape[0], dtype=np.int64)
        d = np.abs(w @ M.T).max(axis=1) if r else np.zeros(w.shape[0])
        order = np.lexsort((d, P))
        ps, first = np.unique(P[order], return_index=True)
        sel = order[first]
        better = d[sel] < best[ps]
        best[ps[better]] = d[sel][better]
        arg[ps[better]] = w[sel][better]
    return best, arg


def multivector_profile(M, bullet, H, backend=None):
    """Scan integer coefficient vectors ``w`` in ``[-H, H]^C`` (one of each
    ``+-w`` pair, zero excluded).

    ``M`` maps coefficients to the coordinates whose sup-norm is minimised;
    ``bullet`` lists the coefficient positions whose sup-norm ``P`` buckets
    the result. Returns per-``P`` (``0..H``) minima and minimisers.
    """
    M = np.ascontiguousarray(M, dtype=np.float64)
    bullet = np.ascontiguousarray(bullet, dtype=np.int64).reshape(-1)
    if resolve(backend) == "numba":
        return _multivector_profile_numba(M, bullet, int(H), int(H))
    return _multivector_profile_numpy(M, bullet, int(H), int(H))


# ---------------------------------------------------------------------------
# sup over a grid of the nu-norm of pushed-forward subgroups
# ---------------------------------------------------------------------------


@njit
def _nu_sup_numba(P, packed, ia, ib):
    # packed[x, t] = w_t gram[x, ia[t], ib[t]] over a <= b, w_t = 2 off the diagonal;
    # subgroups are processed in blocks so the innermost loop runs over g
    G = P.shape[0]
    X, T = packed.shape
    out = np.empty(G)
    blk = 256
    pp = np.empty((T, blk))
    acc = np.empty(blk)
    top = np.empty(blk)
    for lo in range(0, G, blk):
        nb = min(blk, G - lo)
        for t in range(T):
            for j in range(nb):
                pp[t, j] = P[lo + j, ia[t]] * P[lo + j, ib[t]]
        top[:nb] = 0.0
        for x in range(X):
            acc[:nb] = 0.0
            for t in range(T):
                c = packed[x, t]
                for j in range(nb):
                    acc[j] += c * pp[t, j]
            for j in range(nb):
                if acc[j] > top[j]:
                    top[j] = acc[j]
        for j in range(nb):
            out[lo + j] = np.sqrt(top[j])
    return out


def _nu_sup_numpy(P, gram):
    G = P.shape[0]
    out = np.zeros(G)
    step = max(1, _CHUNK // max(gram.shape[0] * gram.shape[1], 1))
    for lo in range(0, G, step):
        Pc = P[lo : lo + step]
        tot = np.einsum("ga,xab,gb->gx", Pc, gram, Pc, optimize=True)
        out[lo : lo + step] = np.sqrt(np.maximum(tot.max(axis=1), 0.0))
    return out


def _compound_gram(maps, subsets, k):
    """Gram matrices of the ``k``-th compounds of ``maps`` restricted to
    the row subsets; shape (X, m, m) with ``m = C(L, k)``."""
    L = maps.shape[2]
    cols = list(combinations(range(L), k))
    C = np.empty((maps.shape[0], len(subsets), len(cols)))
    for i, S in enumerate(subsets):
        rows = maps[:, S, :]
        for j, T in enumerate(cols):
            C[:, i, j] = np.linalg.det(rows[:, :, list(T)]) if k > 1 else rows[:, 0, T[0]]
    return np.einsum("xsa,xsb->xab", C, C)


def _plucker(bases):
    """Maximal minors of each (k, L) basis, in lexicographic column order."""
    G, k, L = bases.shape
    cols = list(combinations(range(L), k))
    P = np.empty((G, len(cols)))
    for j, T in enumerate(cols):
        P[:, j] = np.round(np.linalg.det(bases[:, :, list(T)])) if k > 1 else bases[:, 0, T[0]]
    return P


def nu_sup(bases, maps, subsets, backend=None):
    """``max_x sqrt(sum_S det(maps[x] @ B.T)[S]^2)`` for every basis ``B``.

    ``bases``: (G, k, L) integer bases; ``maps``: (X, D, L) linear maps, one per
    grid point; ``subsets``: (S, k) row subsets kept by the projection. By
    Cauchy-Binet each minor is linear in the Pluecker coordinates of ``B``,
    so the sum is a quadratic form in them.
    """
    bases = np.ascontiguousarray(bases, dtype=np.float64)
    maps = np.ascontiguousarray(maps, dtype=np.float64)
    subsets = np.ascontiguousarray(subsets, dtype=np.int64)
    if bases.shape[0] == 0:
        return np.zeros(0)
    k = bases.shape[1]
    P = np.ascontiguousarray(_plucker(bases))
    gram = np.ascontiguousarray(_compound_gram(maps, subsets, k))
    if resolve(backend) == "numba":
        ia, ib = np.triu_indices(gram.shape[1])
        w = np.where(ia == ib, 1.0, 2.0)
        packed = np.ascontiguousarray(gram[:, ia, ib] * w)
        return _nu_sup_numba(P, packed, ia.astype(np.int64), ib.astype(np.int64))
    return _nu_sup_numpy(P, gram)


# ---------------------------------------------------------------------------
# exhaustive short-vector search in a coefficient box
# ---------------------------------------------------------------------------


@njit
def _box_shortest_numba(B, bound, sup_norm):
    k, D = B.shape
    radix = 2 * bound + 1
    total = radix ** k
    c = np.empty(k, dtype=np.int64)
    best = np.inf
    best_c = np.zeros(k, dtype=np.int64)
    for idx in range((total - 1) // 2 + 1, total):
        rem = idx
        for col in range(k - 1, -1, -1):
            c[col] = rem % radix - bound
            rem //= radix
        acc = 0.0
        for d in range(D):
            v = 0.0
            for i in range(k):
                v += c[i] * B[i, d]
            if sup_norm:
                if abs(v) > acc:
                    acc = abs(v)
            else:
                acc += v * v
        if not sup_norm:
            acc = np.sqrt(acc)
        if acc < best:
            best = acc
            for i in range(k):
                best_c[i] = c[i]
    return best_c, best


def _box_shortest_numpy(B, bound, sup_norm):
    k, D = B.shape
    total, start = _half_box_size(bound, k)
    best = np.inf
    best_c = np.zeros(k, dtype=np.int64)
    for lo in range(start, total, _CHUNK):
        idx = np.arange(lo, min(lo + _CHUNK, total), dtype=np.int64)
        c = _decode(idx, bound, k)
        V = c @ B
        norms = np.abs(V).max(axis=1) if sup_norm else np.sqrt((V * V).sum(axis=1))
        j = int(np.argmin(norms))
        if norms[j] < best:
            best = float(norms[j])
            best_c = c[j].copy()
    return best_c, best


def box_shortest(B, bound, sup_norm=False, backend=None):
    """Shortest nonzero ``c @ B`` with integer ``|c_i| <= bound``.

    ``B`` holds basis vectors as rows. Returns ``(coefficients, norm)``.
    """
    B = np.ascontiguousarray(B, dtype=np.float64)
    if resolve(backend) == "numba":
        c, v = _box_shortest_numba(B, int(bound), bool(sup_norm))
    else:
        c, v = _box_shortest_numpy(B, int(bound), bool(sup_norm))
    return c, float(v)

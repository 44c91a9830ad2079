"""Hot loops, in two flavours.

Every public kernel here exists as a numba ``@njit`` function (``*_nb``) and
as a numpy / pure-python twin (``*_np``).  The module-level names bind to the
numba flavour unless ``SLABCOVER_DISABLE_NUMBA`` is set; both flavours are
importable directly so tests and the benchmark can compare them.
"""
from bisect import bisect_right

import numpy as np

from ._jit import HAS_NUMBA, njit, prange

# ---------------------------------------------------------------------------
# dominance DP (any dimension)
# ---------------------------------------------------------------------------


@njit(cache=True)
def levels_dp_nb(X, j):
    """Mirsky levels of rows of X, which must be sorted by column j."""
    m, n = X.shape
    levels = np.ones(m, dtype=np.int64)
    for t in range(m):
        best = 0
        for s in range(t):
            dj = X[t, j] - X[s, j]
            if dj < 0.0 or levels[s] <= best:
                continue
            if n == 2:
                o = 1 - j
                ok = dj >= abs(X[t, o] - X[s, o])
            else:
                acc = 0.0
                for c in range(n):
                    if c != j:
                        d = X[t, c] - X[s, c]
                        acc += d * d
                ok = dj >= np.sqrt(acc)
            if ok:
                best = levels[s]
        levels[t] = best + 1
    return levels


def levels_dp_np(X, j):
    m, n = X.shape
    levels = np.ones(m, dtype=np.int64)
    other = [c for c in range(n) if c != j]
    for t in range(1, m):
        dj = X[t, j] - X[:t, j]
        dh = X[t, other] - X[:t][:, other]
        if n == 2:
            ok = dj >= np.abs(dh[:, 0])
        else:
            ok = dj >= np.sqrt(np.sum(dh * dh, axis=1))
        ok &= dj >= 0.0
        if ok.any():
            levels[t] = levels[:t][ok].max() + 1
    return levels


# ---------------------------------------------------------------------------
# 2D sheared-order kernels (input is already sorted by (a, b))
# ---------------------------------------------------------------------------


@njit(cache=True)
def levels_sheared_nb(branks, nranks):
    """Longest non-decreasing-b chain ending at each element (Fenwick max)."""
    m = branks.shape[0]
    tree = np.zeros(nranks + 1, dtype=np.int64)
    out = np.empty(m, dtype=np.int64)
    for t in range(m):
        i = branks[t] + 1
        best = 0
        while i > 0:
            if tree[i] > best:
                best = tree[i]
            i -= i & (-i)
        lev = best + 1
        out[t] = lev
        i = branks[t] + 1
        while i <= nranks:
            if tree[i] < lev:
                tree[i] = lev
            i += i & (-i)
    return out


def levels_sheared_np(branks, nranks):
    # patience sorting; tails[r] = smallest last b of a chain of length r+1
    tails = []
    out = np.empty(len(branks), dtype=np.int64)
    for t, b in enumerate(branks.tolist()):
        r = bisect_right(tails, b)
        if r == len(tails):
            tails.append(b)
        else:
            tails[r] = b
        out[t] = r + 1
    return out


@njit(cache=True)
def max_antichain_sheared_nb(branks, nranks, weights):
    """Heaviest strictly-decreasing-b subsequence; returns chosen positions."""
    m = branks.shape[0]
    tree_v = np.full(nranks + 1, -1.0)
    tree_i = np.full(nranks + 1, -1, dtype=np.int64)
    best = np.empty(m)
    prev = np.full(m, -1, dtype=np.int64)
    for t in range(m):
        # reversed rank: b_s > b_t  <=>  rr_s < rr_t
        i = nranks - 1 - branks[t]
        bv = 0.0
        bi = -1
        while i > 0:
            if tree_v[i] > bv or (tree_v[i] == bv and bi >= 0 and 0 <= tree_i[i] < bi):
                bv = tree_v[i]
                bi = tree_i[i]
            i -= i & (-i)
        best[t] = bv + weights[t]
        prev[t] = bi
        i = nranks - branks[t]
        while i <= nranks:
            if best[t] > tree_v[i]:
                tree_v[i] = best[t]
                tree_i[i] = t
            i += i & (-i)
    end = 0
    for t in range(1, m):
        if best[t] > best[end]:
            end = t
    count = 0
    t = end
    while t >= 0:
        count += 1
        t = prev[t]
    out = np.empty(count, dtype=np.int64)
    t = end
    for c in range(count - 1, -1, -1):
        out[c] = t
        t = prev[t]
    return out


def max_antichain_sheared_np(branks, nranks, weights):
    m = len(branks)
    best = np.empty(m)
    prev = np.full(m, -1, dtype=np.int64)
    for t in range(m):
        ok = branks[:t] > branks[t]
        if ok.any():
            cand = np.flatnonzero(ok)
            k = cand[np.argmax(best[cand])]
            best[t] = best[k] + weights[t]
            prev[t] = k
        else:
            best[t] = weights[t]
    end = int(np.argmax(best))
    chosen = []
    while end >= 0:
        chosen.append(end)
        end = prev[end]
    return np.array(chosen[::-1], dtype=np.int64)


# ---------------------------------------------------------------------------
# McShane extensions: f(p) = min_q value(q) + lip * |p - q|
# ---------------------------------------------------------------------------


@njit(cache=True, parallel=True)
def graphs_brute_nb(AP, Av, offs, lip, P):
    """Evaluate every stacked graph at every row of P; returns (m, N)."""
    m = P.shape[0]
    d = P.shape[1]
    N = offs.shape[0] - 1
    out = np.empty((m, N))
    for r in prange(m):
        for g in range(N):
            best = np.inf
            for a in range(offs[g], offs[g + 1]):
                acc = 0.0
                for c in range(d):
                    x = P[r, c] - AP[a, c]
                    acc += x * x
                val = Av[a] + lip[g] * np.sqrt(acc)
                if val < best:
                    best = val
            out[r, g] = best
    return out


def graphs_brute_np(AP, Av, offs, lip, P, chunk=4096):
    m = P.shape[0]
    N = len(offs) - 1
    out = np.empty((m, N))
    for g in range(N):
        ap = AP[offs[g]:offs[g + 1]]
        av = Av[offs[g]:offs[g + 1]]
        for lo in range(0, m, chunk):
            diff = P[lo:lo + chunk, None, :] - ap[None, :, :]
            dist = np.sqrt(np.sum(diff * diff, axis=2))
            out[lo:lo + chunk, g] = np.min(av[None, :] + lip[g] * dist, axis=1)
    return out


def envelope_tables(q, v, lip):
    """Argmin tables that turn a 1D McShane min into two lookups.

    ``q`` must be sorted ascending.  left[i] indexes the anchor minimising
    v_r - lip*q_r over r <= i, right[i] the one minimising v_r + lip*q_r over
    r >= i.  Values are then formed as v_r + lip*|p - q_r|, the same
    expression the brute-force kernel uses.
    """
    m = len(q)
    a = v - lip * q
    b = v + lip * q
    left = np.empty(m, dtype=np.int64)
    right = np.empty(m, dtype=np.int64)
    best = 0
    for i in range(m):
        if a[i] <= a[best]:
            best = i
        left[i] = best
    best = m - 1
    for i in range(m - 1, -1, -1):
        if b[i] <= b[best]:
            best = i
        right[i] = best
    return left, right


@njit(cache=True, parallel=True)
def graphs_envelope_nb(Q, V, Li, Ri, offs, lip, p):
    m = p.shape[0]
    N = offs.shape[0] - 1
    out = np.empty((m, N))
    for r in prange(m):
        x = p[r]
        for g in range(N):
            lo = offs[g]
            hi = offs[g + 1]
            # first index in [lo, hi) with Q > x
            a = lo
            b = hi
            while a < b:
                mid = (a + b) >> 1
                if Q[mid] <= x:
                    a = mid + 1
                else:
                    b = mid
            best = np.inf
            if a > lo:
                k = Li[a - 1]
                best = V[k] + lip[g] * (x - Q[k])
            if a < hi:
                k = Ri[a]
                val = V[k] + lip[g] * (Q[k] - x)
                if val < best:
                    best = val
            out[r, g] = best
    return out


def graphs_envelope_np(Q, V, Li, Ri, offs, lip, p):
    m = p.shape[0]
    N = len(offs) - 1
    out = np.empty((m, N))
    for g in range(N):
        lo, hi = offs[g], offs[g + 1]
        a = np.searchsorted(Q[lo:hi], p, side="right")
        kl = Li[lo + np.maximum(a - 1, 0)]
        kr = Ri[lo + np.minimum(a, hi - lo - 1)]
        left = np.where(a > 0, V[kl] + lip[g] * (p - Q[kl]), np.inf)
        right = np.where(a < hi - lo, V[kr] + lip[g] * (Q[kr] - p), np.inf)
        out[:, g] = np.minimum(left, right)
    return out


# ---------------------------------------------------------------------------
# separation recursion and collapse along fibers
# ---------------------------------------------------------------------------


@njit(cache=True)
def _clear(prev, c, gap, w):
    # nudge up by ulps until both separation tests hold as evaluated in floats
    while c - prev < gap or prev + w > c - w:
        c = np.nextafter(c, np.inf)
    return c


@njit(cache=True)
def separate_rows_nb(C, gap):
    """b_1 = c_1, b_i = max(b_{i-1} + gap, c_i) on each (sorted) row.

    The result satisfies b_i - b_{i-1} >= gap and b_{i-1} + gap/2 <= b_i - gap/2
    exactly in floating point (a few ulps above the real-arithmetic value at most).
    """
    out = C.copy()
    m, N = C.shape
    w = 0.5 * gap
    for r in range(m):
        for i in range(1, N):
            prev = out[r, i - 1]
            c = max(prev + gap, out[r, i])
            out[r, i] = _clear(prev, c, gap, w)
    return out


def separate_rows_np(C, gap):
    out = C.copy()
    w = 0.5 * gap
    for i in range(1, C.shape[1]):
        prev = out[:, i - 1]
        c = np.maximum(prev + gap, out[:, i])
        bad = (c - prev < gap) | (prev + w > c - w)
        while bad.any():
            c[bad] = np.nextafter(c[bad], np.inf)
            bad = (c - prev < gap) | (prev + w > c - w)
        out[:, i] = c
    return out


@njit(cache=True)
def collapse_rows_nb(C, zj, w):
    """Collapse value and deficit for sorted, separated slab centres C."""
    m, N = C.shape
    tw = 2.0 * w
    f = np.empty(m)
    d = np.empty(m)
    for r in range(m):
        z = zj[r]
        below = 0
        inside = -1
        for i in range(N):
            hi = C[r, i] + w
            if hi <= z:
                below += 1
            elif C[r, i] - w < z:
                inside = i
        full = below * tw
        if inside >= 0:
            lo = C[r, inside] - w
            f[r] = lo - full
            d[r] = full + (z - lo)
        else:
            f[r] = z - full
            d[r] = full
    return f, d


def collapse_rows_np(C, zj, w):
    tw = 2.0 * w
    z = zj[:, None]
    below = np.sum(C + w <= z, axis=1)
    ins = (C - w < z) & (C + w > z)
    has = ins.any(axis=1)
    idx = np.argmax(ins, axis=1)
    lo = C[np.arange(len(zj)), idx] - w
    full = below * tw
    f = np.where(has, lo - full, zj - full)
    d = np.where(has, full + (zj - lo), full)
    return f, d


@njit(cache=True)
def max_lip_excess_nb(P, v):
    """max over anchor pairs of |dv| - |dp|; positive means not 1-Lipschitz."""
    m, d = P.shape
    worst = -np.inf
    for a in range(m):
        for b in range(a + 1, m):
            acc = 0.0
            for c in range(d):
                x = P[a, c] - P[b, c]
                acc += x * x
            e = abs(v[a] - v[b]) - np.sqrt(acc)
            if e > worst:
                worst = e
    return worst


def max_lip_excess_np(P, v):
    m = len(v)
    worst = -np.inf
    for a in range(m - 1):
        dp = np.sqrt(np.sum((P[a + 1:] - P[a]) ** 2, axis=1))
        worst = max(worst, float(np.max(np.abs(v[a + 1:] - v[a]) - dp)))
    return worst


_NAMES = (
    "levels_dp",
    "levels_sheared",
    "max_antichain_sheared",
    "graphs_brute",
    "graphs_envelope",
    "separate_rows",
    "collapse_rows",
    "max_lip_excess",
)

BACKEND = "numba" if HAS_NUMBA else "numpy"


def backend(name):
    """Kernel table for ``"numba"`` or ``"numpy"``."""
    if name == "numba" and not HAS_NUMBA:
        raise RuntimeError("numba backend requested but numba is disabled")
    suffix = "_nb" if name == "numba" else "_np"
    g = globals()
    return {k: g[k + suffix] for k in _NAMES}


globals().update(backend(BACKEND))

"""Grid snapshots, Mirsky levels and longest chains for the cone order.

For a direction j the relation ``s <= t  iff  t - s in C_j^+`` is a partial
order on any finite point set.  ``l(s)``, the length of the longest chain
with top element s, splits the set into ``max l`` antichains, and no
partition into fewer antichains exists.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K
from .geometry import check_direction


@dataclass
class GridSnapshot:
    k: int
    cells: np.ndarray         # (M, n) int64, unique, lexicographically sorted
    centers: np.ndarray       # (M, n) float, (cells + 1/2) / k
    atom_to_cell: np.ndarray  # (m,) index into cells

    @property
    def dimension(self) -> int:
        return self.cells.shape[1]

    def exact_coords(self) -> np.ndarray:
        """Integer-valued stand-ins for the centres (2*index + 1).

        They are an affine image of the centres with positive scale, so the
        cone order is the same, and every comparison on them is exact.
        """
        return (2 * self.cells + 1).astype(float)


def snap_to_grid(mu, k: int) -> GridSnapshot:
    """Cells of the k x ... x k grid on [0,1]^n hit by the atoms of ``mu``."""
    if k < 1:
        raise ValueError("k must be >= 1")
    idx = np.floor(mu.points * k).astype(np.int64)
    np.clip(idx, 0, k - 1, out=idx)
    cells, inverse = np.unique(idx, axis=0, return_inverse=True)
    centers = (cells + 0.5) / k
    return GridSnapshot(int(k), cells, centers, inverse.reshape(-1))


@dataclass
class LevelAssignment:
    direction: int
    levels: np.ndarray  # (m,) level of each input point, 1-based
    max_level: int
    chain: np.ndarray = field(repr=False)  # indices of a longest chain, bottom to top

    def level_sets(self):
        """Indices of the antichains A_1, ..., A_L."""
        order = np.argsort(self.levels, kind="stable")
        cuts = np.searchsorted(self.levels[order], np.arange(1, self.max_level + 2))
        return [order[cuts[r]:cuts[r + 1]] for r in range(self.max_level)]


def _as_points(points) -> np.ndarray:
    X = np.ascontiguousarray(np.asarray(points, dtype=float))
    if X.ndim != 2 or X.shape[1] < 2:
        raise ValueError("points must be an (m, n) array with n >= 2")
    return X


def _lex_rank(X):
    order = np.lexsort(X.T[::-1])
    rank = np.empty(len(X), dtype=np.int64)
    rank[order] = np.arange(len(X))
    return rank


def _dominated_mask(X, cand, t, c):
    """Which rows ``cand`` are dominated by row ``t`` (same formula as the kernels)."""
    d = X[t] - X[cand]
    rest = np.delete(d, c, axis=1)
    if rest.shape[1] == 1:
        norm = np.abs(rest[:, 0])
    else:
        norm = np.sqrt(np.sum(rest * rest, axis=1))
    return (d[:, c] >= norm) & (d[:, c] >= 0.0)


def _certificate(X, c, levels, max_level):
    """A longest chain, built top-down, always taking the lexicographically
    smallest admissible point."""
    if len(X) == 0:
        return np.empty(0, dtype=np.int64)
    rank = _lex_rank(X)
    order = np.argsort(levels, kind="stable")
    cuts = np.searchsorted(levels[order], np.arange(1, max_level + 2))
    top = order[cuts[max_level - 1]:cuts[max_level]]
    cur = top[np.argmin(rank[top])]
    chain = [cur]
    for lev in range(max_level - 1, 0, -1):
        cand = order[cuts[lev - 1]:cuts[lev]]
        ok = cand[_dominated_mask(X, cand, cur, c)]
        cur = ok[np.argmin(rank[ok])]
        chain.append(cur)
    return np.array(chain[::-1], dtype=np.int64)


def _check_distinct(X):
    if len(np.unique(X, axis=0)) != len(X):
        raise ValueError("points must be distinct")


def mirsky_levels(points, j: int, *, kernels=None) -> LevelAssignment:
    """Levels by the quadratic dynamic programme (any dimension)."""
    X = _as_points(points)
    c = check_direction(j, X.shape[1])
    _check_distinct(X)
    kern = kernels or K.backend(K.BACKEND)
    if len(X) == 0:
        return LevelAssignment(j, np.empty(0, dtype=np.int64), 0, np.empty(0, dtype=np.int64))
    keys = [X[:, i] for i in range(X.shape[1] - 1, -1, -1) if i != c] + [X[:, c]]
    order = np.lexsort(keys)
    lev_sorted = kern["levels_dp"](np.ascontiguousarray(X[order]), c)
    levels = np.empty(len(X), dtype=np.int64)
    levels[order] = lev_sorted
    L = int(levels.max())
    return LevelAssignment(j, levels, L, _certificate(X, c, levels, L))


def _sheared(X, c):
    o = 1 - c
    a = X[:, c] - X[:, o]
    b = X[:, c] + X[:, o]
    order = np.lexsort((b, a))
    _, branks = np.unique(b[order], return_inverse=True)
    return order, np.ascontiguousarray(branks.reshape(-1).astype(np.int64)), a, b


def mirsky_levels_2d_fast(points, j: int, *, kernels=None, check=True) -> LevelAssignment:
    """Planar levels in O(m log m).

    With a = x_j - x_o and b = x_j + x_o the cone order becomes the
    componentwise order on (a, b); after sorting by (a, b) a point's level is
    one plus the best level among earlier points with b no larger, which a
    prefix-maximum Fenwick tree answers.
    """
    X = _as_points(points)
    if X.shape[1] != 2:
        raise ValueError("the fast path needs n = 2")
    c = check_direction(j, 2)
    kern = kernels or K.backend(K.BACKEND)
    if len(X) == 0:
        return LevelAssignment(j, np.empty(0, dtype=np.int64), 0, np.empty(0, dtype=np.int64))
    order, branks, a, b = _sheared(X, c)
    if check:
        sa, sb = a[order], b[order]
        if np.any((np.diff(sa) == 0) & (np.diff(sb) == 0)):
            raise ValueError("points must be distinct")
    lev_sorted = kern["levels_sheared"](branks, int(branks.max()) + 1)
    levels = np.empty(len(X), dtype=np.int64)
    levels[order] = lev_sorted
    L = int(levels.max())
    return LevelAssignment(j, levels, L, _certificate(X, c, levels, L))


def levels_auto(points, j: int, **kw) -> LevelAssignment:
    X = _as_points(points)
    if X.shape[1] == 2:
        return mirsky_levels_2d_fast(X, j, **kw)
    return mirsky_levels(X, j, **kw)


def longest_chain(points, j: int) -> np.ndarray:
    """A chain of maximal length, as an array of points from bottom to top."""
    X = _as_points(points)
    la = levels_auto(X, j)
    return X[la.chain]


def snapshot_levels(snap: GridSnapshot, j: int) -> LevelAssignment:
    """Levels of the occupied cell centres, computed on exact integer coordinates."""
    return levels_auto(snap.exact_coords(), j)


def max_weight_antichain(points, weights, j: int, *, kernels=None) -> np.ndarray:
    """Indices of a heaviest antichain.

    Exact in the plane (a heaviest strictly decreasing-b run in sheared
    coordinates); in higher dimension the heaviest Mirsky level is returned.
    """
    X = _as_points(points)
    w = np.asarray(weights, dtype=float)
    c = check_direction(j, X.shape[1])
    if len(X) == 0:
        return np.empty(0, dtype=np.int64)
    if X.shape[1] != 2:
        la = mirsky_levels(X, j, kernels=kernels)
        sets = la.level_sets()
        mass = [w[s].sum() for s in sets]
        return np.sort(sets[int(np.argmax(mass))])
    kern = kernels or K.backend(K.BACKEND)
    order, branks, _, _ = _sheared(X, c)
    pos = kern["max_antichain_sheared"](branks, int(branks.max()) + 1, np.ascontiguousarray(w[order]))
    return np.sort(order[pos])


@dataclass
class ChainProfile:
    direction: int
    rows: list  # (k, ell_k, ell_k / k)
    slope: float | None

    def to_json(self):
        return {
            "direction": self.direction,
            "rows": [{"k": k, "ell": ell, "ratio": r} for k, ell, r in self.rows],
            "slope": self.slope,
        }


def loglog_slope(ks, ells):
    ks = np.asarray(ks, dtype=float)
    if len(np.unique(ks)) < 2:
        return None
    return float(np.polyfit(np.log(ks), np.log(np.asarray(ells, dtype=float)), 1)[0])


def chain_ratio_profile(mu, j: int, ks) -> ChainProfile:
    """ell_k, the longest chain among occupied cell centres, for each k."""
    ks = [int(k) for k in ks]
    if ks != sorted(ks):
        raise ValueError("ks must be ascending")
    check_direction(j, mu.dimension)
    rows = []
    for k in ks:
        ell = snapshot_levels(snap_to_grid(mu, k), j).max_level
        rows.append((k, ell, ell / k))
    return ChainProfile(j, rows, loglog_slope([r[0] for r in rows], [r[1] for r in rows]))

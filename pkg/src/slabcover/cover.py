"""Slab covers built from antichains.

An antichain for the direction-j cone order is the graph of a 1-Lipschitz
function over the hyperplane {x_j = 0}.  Extending each Mirsky level with the
McShane formula and thickening it gives one slab per level; at grid size k
the slabs have width 2*sqrt(n)/k each, so the family has total width
``2 * ell_k * sqrt(n) / k``.

Discrete measures cannot tell a Cantor set from a fine grid once the grid is
finer than the atoms, so grids past ``mu.resolution`` are only used for a
direction whose chain profile up to that resolution grows sublinearly
(log-log slope <= ``null_slope``); the absolutely continuous controls fail
that test and their covers are reported as budget failures.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K
from .geometry import check_direction
from .poset import (
    ChainProfile, LevelAssignment, loglog_slope, max_weight_antichain,
    snap_to_grid, snapshot_levels,
)


class ContractError(ValueError):
    """Input violates an operation's precondition (e.g. not an antichain)."""


@dataclass
class LipschitzGraph:
    direction: int
    points: np.ndarray  # (A, n-1) anchor positions in the hyperplane
    values: np.ndarray  # (A,)
    lip: float = 1.0

    def __post_init__(self):
        self.values = np.ascontiguousarray(np.asarray(self.values, dtype=float).reshape(-1))
        P = np.asarray(self.points, dtype=float)
        if P.ndim != 2:
            P = P.reshape(len(self.values), -1)
        if P.shape[0] != len(self.values):
            raise ValueError("one value per anchor is required")
        self.points = np.ascontiguousarray(P)

    def __len__(self):
        return len(self.values)

    def __call__(self, P):
        P = np.asarray(P, dtype=float)
        single = P.ndim == 1
        out = GraphStack([self]).evaluate(np.atleast_2d(P) if not single else P[None, :])[:, 0]
        return out[0] if single else out

    def to_json(self):
        return [list(p) + [v] for p, v in zip(self.points.tolist(), self.values.tolist())]


def mcshane_eval(g: LipschitzGraph, p) -> float:
    """min over anchors of value(q) + L * |p - q| (the largest L-Lipschitz extension)."""
    if len(g) == 0:
        raise ContractError("cannot extend an empty graph")
    p = np.asarray(p, dtype=float).reshape(-1)
    dist = np.sqrt(np.sum((g.points - p[None, :]) ** 2, axis=1))
    return float(np.min(g.values + g.lip * dist))


class GraphStack:
    """Many graphs packed for batch evaluation by the kernels."""

    def __init__(self, graphs, kernels=None):
        self.graphs = list(graphs)
        self.kern = kernels or K.backend(K.BACKEND)
        if any(len(g) == 0 for g in self.graphs):
            raise ContractError("cannot extend an empty graph")
        sizes = [len(g) for g in self.graphs]
        self.offs = np.zeros(len(sizes) + 1, dtype=np.int64)
        np.cumsum(sizes, out=self.offs[1:])
        self.lip = np.array([g.lip for g in self.graphs], dtype=float)
        self.dim = self.graphs[0].points.shape[1] if self.graphs else 0
        if self.dim == 1:
            qs, vs, ls, rs = [], [], [], []
            for g, lo in zip(self.graphs, self.offs[:-1]):
                o = np.argsort(g.points[:, 0], kind="stable")
                q = g.points[o, 0]
                left, right = K.envelope_tables(q, g.values[o], g.lip)
                qs.append(q)
                vs.append(g.values[o])
                ls.append(left + lo)
                rs.append(right + lo)
            self.Q = np.concatenate(qs)
            self.V = np.concatenate(vs)
            self.L = np.concatenate(ls)
            self.R = np.concatenate(rs)
        elif self.graphs:
            self.AP = np.ascontiguousarray(np.concatenate([g.points for g in self.graphs]))
            self.Av = np.concatenate([g.values for g in self.graphs])

    def __len__(self):
        return len(self.graphs)

    def evaluate(self, P) -> np.ndarray:
        """Values of every graph at every hyperplane point; shape (m, N)."""
        P = np.ascontiguousarray(np.asarray(P, dtype=float))
        if not self.graphs:
            return np.empty((P.shape[0], 0))
        if P.shape[1] != self.dim:
            raise ValueError(f"hyperplane points must have {self.dim} coordinates")
        if self.dim == 1:
            return self.kern["graphs_envelope"](self.Q, self.V, self.L, self.R, self.offs, self.lip,
                                                np.ascontiguousarray(P[:, 0]))
        return self.kern["graphs_brute"](self.AP, self.Av, self.offs, self.lip, P)


def antichain_to_graph(points, j: int, check: bool = True) -> LipschitzGraph:
    """Read an antichain as anchors (x_hat_j -> x_j) of a 1-Lipschitz function."""
    X = np.asarray(points, dtype=float)
    if X.ndim != 2:
        raise ValueError("points must be an (m, n) array")
    c = check_direction(j, X.shape[1])
    P = np.ascontiguousarray(np.delete(X, c, axis=1))
    v = np.ascontiguousarray(X[:, c])
    if check and len(v) > 1:
        excess = K.max_lip_excess(P, v)
        if excess > 0:
            raise ContractError(
                f"points are not an antichain for direction {j}: anchor data is not 1-Lipschitz "
                f"(excess {excess:.3g})"
            )
    return LipschitzGraph(j, P, v)


@dataclass
class Slab:
    graph: LipschitzGraph
    width: float

    def __post_init__(self):
        if not self.width > 0:
            raise ValueError("slab width must be positive")

    @property
    def direction(self):
        return self.graph.direction

    def contains(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        c = self.direction - 1
        f = self.graph(np.delete(X, c, axis=1))
        return np.abs(X[:, c] - f) < self.width

    def to_json(self):
        return {"direction": self.direction, "width": self.width, "anchors": self.graph.to_json()}

    @classmethod
    def from_json(cls, d):
        a = np.asarray(d["anchors"], dtype=float)
        return cls(LipschitzGraph(int(d["direction"]), a[:, :-1], a[:, -1]), float(d["width"]))


@dataclass
class SlabFamily:
    direction: int
    slabs: list
    k: int | None = None
    levels: LevelAssignment | None = field(default=None, repr=False)

    def __post_init__(self):
        if any(s.direction != self.direction for s in self.slabs):
            raise ContractError("all slabs of a family must share its direction")
        self._stack = None

    def __len__(self):
        return len(self.slabs)

    @property
    def total_width(self) -> float:
        return math.fsum(s.width for s in self.slabs)

    @property
    def widths(self) -> np.ndarray:
        return np.array([s.width for s in self.slabs], dtype=float)

    @property
    def stack(self) -> GraphStack:
        if self._stack is None:
            self._stack = GraphStack([s.graph for s in self.slabs])
        return self._stack

    def evaluate(self, P) -> np.ndarray:
        return self.stack.evaluate(P)

    def to_json(self):
        return {
            "direction": self.direction,
            "k": self.k,
            "count": len(self.slabs),
            "total_width": self.total_width,
            "slabs": [s.to_json() for s in self.slabs],
        }

    @classmethod
    def from_json(cls, d):
        return cls(int(d["direction"]), [Slab.from_json(s) for s in d["slabs"]], d.get("k"))


def slab_width(k: int, n: int) -> float:
    """Per-slab width that swallows every grid cell a graph passes through."""
    return 2.0 * math.sqrt(n) / k


def build_cover(snapshot, j: int, levels: LevelAssignment | None = None, check: bool = True) -> SlabFamily:
    """One slab per Mirsky level of the occupied cell centres."""
    n = snapshot.dimension
    check_direction(j, n)
    if levels is None:
        levels = snapshot_levels(snapshot, j)
    width = slab_width(snapshot.k, n)
    slabs = [Slab(antichain_to_graph(snapshot.centers[idx], j, check=check), width) for idx in levels.level_sets()]
    return SlabFamily(j, slabs, snapshot.k, levels)


@dataclass
class CoverCheck:
    covered: np.ndarray  # (m,) bool
    covered_mass: float
    uncovered_mass: float
    boundary: np.ndarray  # indices of uncovered atoms sitting exactly on a slab boundary

    @property
    def uncovered(self) -> np.ndarray:
        return np.flatnonzero(~self.covered)


def verify_cover(families, mu) -> CoverCheck:
    """An atom is covered iff |x_j - f(x_hat_j)| < width for some slab."""
    if isinstance(families, SlabFamily):
        families = [families]
    X = mu.points
    covered = np.zeros(mu.count, dtype=bool)
    on_edge = np.zeros(mu.count, dtype=bool)
    for fam in families:
        if not len(fam):
            continue
        c = fam.direction - 1
        vals = fam.evaluate(np.delete(X, c, axis=1))
        gap = np.abs(X[:, c:c + 1] - vals)
        w = fam.widths[None, :]
        covered |= np.any(gap < w, axis=1)
        on_edge |= np.any(gap == w, axis=1)
    cm = math.fsum(mu.weights[covered].tolist())
    um = math.fsum(mu.weights[~covered].tolist())
    return CoverCheck(covered, cm, um, np.flatnonzero(on_edge & ~covered))


# ---------------------------------------------------------------------------
# planning
# ---------------------------------------------------------------------------


@dataclass
class CoverReport:
    success: bool
    strategy: str
    delta: float
    k: int | None
    families: dict             # direction -> SlabFamily
    assignment: np.ndarray     # direction whose slab covers each atom (0 = none)
    covered_mass: float
    total_mass: float
    uncovered: np.ndarray
    profiles: dict             # direction -> ChainProfile
    message: str = ""
    boundary: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))

    @property
    def total_width(self) -> float:
        return math.fsum(f.total_width for f in self.families.values())

    @property
    def ell_k(self) -> dict:
        return {j: len(f) for j, f in self.families.items()}

    def to_json(self, include_slabs: bool = True):
        out = {
            "success": self.success,
            "strategy": self.strategy,
            "delta": self.delta,
            "k": self.k,
            "total_width": self.total_width,
            "ell_k": {str(j): v for j, v in self.ell_k.items()},
            "covered_mass": self.covered_mass,
            "total_mass": self.total_mass,
            "uncovered_count": int(len(self.uncovered)),
            "boundary_count": int(len(self.boundary)),
            "message": self.message,
            "profiles": {str(j): p.to_json() for j, p in self.profiles.items()},
        }
        if include_slabs:
            out["families"] = [f.to_json() for f in self.families.values()]
        return out


def k_schedule(mu, k_max: int, base: int | None = None):
    base = base or mu.k_base
    if base < 2:
        raise ValueError("k schedule base must be >= 2")
    ks, k = [], 1
    while k <= k_max:
        ks.append(k)
        k *= base
    return ks


def parse_strategy(strategy, n: int):
    """``"single:J"``, ``"greedy"`` or ``("partition", labels)`` -> (name, arg)."""
    if isinstance(strategy, tuple):
        name, arg = strategy
        if name != "partition":
            raise ValueError(f"unknown strategy {strategy!r}")
        labels = np.asarray(arg, dtype=np.int64)
        if labels.size and (labels.min() < 1 or labels.max() > n):
            raise ValueError(f"partition labels must be directions in 1..{n}")
        return name, labels
    if strategy == "greedy":
        return "greedy", None
    if isinstance(strategy, str) and strategy.startswith("single"):
        _, _, j = strategy.partition(":")
        j = int(j) if j else 1
        check_direction(j, n)
        return "single", j
    raise ValueError(f"unknown strategy {strategy!r}")


def _single_class_family(mu, mask, j, k):
    sub = mu.subset(mask)
    snap = snap_to_grid(sub, k)
    return build_cover(snap, j)


def _greedy_at_k(mu, k, delta, mass_tol, max_rounds=None):
    n = mu.dimension
    snap = snap_to_grid(mu, k)
    cell_mass = np.bincount(snap.atom_to_cell, weights=mu.weights, minlength=len(snap.cells))
    alive = np.ones(len(snap.cells), dtype=bool)
    exact = snap.exact_coords()
    width = slab_width(k, n)
    chosen = {j: [] for j in range(1, n + 1)}
    cell_dir = np.zeros(len(snap.cells), dtype=np.int64)
    used = 0.0
    residual = math.fsum(cell_mass.tolist())
    rounds = 0
    max_rounds = max_rounds or len(snap.cells)
    while residual > mass_tol and rounds < max_rounds:
        idx = np.flatnonzero(alive)
        best = None
        for j in range(1, n + 1):
            sel = idx[max_weight_antichain(exact[idx], cell_mass[idx], j)]
            m = math.fsum(cell_mass[sel].tolist())
            if best is None or m > best[2]:
                best = (j, sel, m)
        j, sel, m = best
        chosen[j].append(sel)
        cell_dir[sel] = j
        alive[sel] = False
        residual -= m
        used += width
        rounds += 1
        if used > delta:
            break
    families = {}
    for j, sets in chosen.items():
        if sets:
            slabs = [Slab(antichain_to_graph(snap.centers[s], j), width) for s in sets]
            families[j] = SlabFamily(j, slabs, k)
    return families, cell_dir[snap.atom_to_cell], residual <= mass_tol


def plan_cover(
    mu,
    delta: float,
    strategy="single:1",
    k_max: int = 2**20,
    mass_tol: float = 1e-12,
    ks=None,
    null_slope: float = 0.9,
) -> CoverReport:
    """Refine the grid until a slab cover of total width <= delta covers mu.

    Never raises on an infeasible budget: the returned report has
    ``success=False`` and carries the chain profiles that explain why.
    """
    if not delta > 0:
        raise ValueError("delta must be positive")
    n = mu.dimension
    name, arg = parse_strategy(strategy, n)
    label = strategy if isinstance(strategy, str) else "partition"
    ks = [int(k) for k in ks] if ks is not None else k_schedule(mu, k_max)
    res = mu.resolution or max(ks)
    total = mu.total_mass
    all_atoms = np.ones(mu.count, dtype=bool)

    if name == "single":
        classes = {arg: all_atoms}
    elif name == "partition":
        if arg.shape != (mu.count,):
            raise ValueError("partition needs one direction per atom")
        classes = {j: arg == j for j in range(1, n + 1) if np.any(arg == j)}
    else:
        classes = None

    rows = {j: [] for j in (classes or range(1, n + 1))}
    gate_cache = {}

    def gate(j, mask):
        key = (j, mask.tobytes())
        if key not in gate_cache:
            small = [k for k in ks if k <= res]
            sub = mu.subset(mask)
            ells = [snapshot_levels(snap_to_grid(sub, k), j).max_level for k in small]
            slope = loglog_slope(small, ells)
            gate_cache[key] = slope is not None and slope <= null_slope
        return gate_cache[key]

    last = None
    message = "width budget not met up to k_max"
    for k in ks:
        complete = True
        if name == "greedy":
            families, assign, complete = _greedy_at_k(mu, k, delta, mass_tol * total)
            masks = {j: assign == j for j in families}
            for j in rows:
                ell = snapshot_levels(snap_to_grid(mu, k), j).max_level
                rows[j].append((k, ell, ell / k))
        else:
            families, masks = {}, classes
            assign = np.zeros(mu.count, dtype=np.int64)
            for j, mask in classes.items():
                families[j] = _single_class_family(mu, mask, j, k)
                assign[mask] = j
                ell = len(families[j])
                rows[j].append((k, ell, ell / k))
        if k > res:
            if not complete:
                # budget ran out before every atom was assigned; nothing to certify yet
                continue
            bad = [j for j, mask in masks.items() if mask.any() and not gate(j, mask)]
            if bad:
                rows = {j: [x for x in r if x[0] <= res] for j, r in rows.items()}
                message = (
                    f"direction(s) {bad} show no sublinear chain growth up to the measure's "
                    f"resolution k={res}; refusing finer grids"
                )
                break
        width = math.fsum(f.total_width for f in families.values())
        last = (k, families, assign)
        if width <= delta:
            check = verify_cover(list(families.values()), mu)
            if check.uncovered_mass <= mass_tol * total:
                assign = np.where(check.covered, assign, 0)
                return CoverReport(
                    True, label, delta, k, families, assign, check.covered_mass, total,
                    check.uncovered, _profiles(rows), "ok", check.boundary,
                )
    k, families, assign = last if last else (None, {}, np.zeros(mu.count, dtype=np.int64))
    return CoverReport(
        False, label, delta, k, families, assign, 0.0, total,
        np.arange(mu.count), _profiles(rows), message,
    )


def _profiles(rows):
    return {
        j: ChainProfile(j, r, loglog_slope([x[0] for x in r], [x[1] for x in r]))
        for j, r in rows.items()
    }

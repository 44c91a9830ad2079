"""Turn an overlapping slab family into a sorted, then pairwise disjoint one.

Step 1 replaces f_1..f_N by their pointwise order statistics, which leaves
the union of slabs unchanged.  Step 2 pushes each sorted function up until
it clears its predecessor by 2*eps/N:

    f2_1 = f1_1,    f2_i = max(f2_{i-1} + 2*eps/N, f1_i).

Both steps are kept as evaluation composites over the original McShane
graphs, so every inequality is checked on exact function values.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .cover import ContractError, GraphStack, LipschitzGraph, SlabFamily


class OrderedFamily:
    """Pointwise order statistics of a slab family's graphs."""

    def __init__(self, direction: int, stack: GraphStack, widths):
        self.direction = direction
        self.stack = stack
        self.widths = np.asarray(widths, dtype=float)

    @property
    def N(self) -> int:
        return len(self.stack)

    @property
    def total_width(self) -> float:
        return math.fsum(self.widths.tolist())

    def evaluate(self, P) -> np.ndarray:
        """Row r holds f1_1(p_r) <= ... <= f1_N(p_r)."""
        return np.sort(self.stack.evaluate(P), axis=1, kind="stable")


def order_slabs(family) -> OrderedFamily:
    """Step 1.  Accepts a SlabFamily or a plain list of slabs."""
    if isinstance(family, SlabFamily):
        slabs, direction = family.slabs, family.direction
    else:
        slabs = list(family)
        dirs = {s.direction for s in slabs}
        if len(dirs) > 1:
            raise ContractError(f"slabs mix directions {sorted(dirs)}")
        direction = dirs.pop() if dirs else 1
    return OrderedFamily(direction, GraphStack([s.graph for s in slabs]), [s.width for s in slabs])


class SeparatedFamily:
    """Step 2 output: N graphs at mutual vertical distance >= 2*eps/N."""

    def __init__(self, ordered: OrderedFamily, epsilon: float):
        if not epsilon > 0:
            raise ValueError("epsilon must be positive")
        self.ordered = ordered
        self.epsilon = float(epsilon)
        self.kern = ordered.stack.kern

    @property
    def direction(self) -> int:
        return self.ordered.direction

    @property
    def N(self) -> int:
        return self.ordered.N

    @property
    def half_width(self) -> float:
        return self.epsilon / self.N

    @property
    def gap(self) -> float:
        return 2.0 * self.epsilon / self.N

    def evaluate(self, P) -> np.ndarray:
        return self.separate(self.ordered.evaluate(P))

    def separate(self, sorted_values) -> np.ndarray:
        return self.kern["separate_rows"](np.ascontiguousarray(sorted_values), self.gap)

    def to_json(self):
        return {
            "direction": self.direction,
            "epsilon": self.epsilon,
            "N": self.N,
            "half_width": self.half_width,
            "graphs": [g.to_json() for g in self.ordered.stack.graphs],
        }

    @classmethod
    def from_json(cls, d):
        graphs = []
        for anchors in d["graphs"]:
            a = np.asarray(anchors, dtype=float)
            graphs.append(LipschitzGraph(int(d["direction"]), a[:, :-1], a[:, -1]))
        widths = np.full(len(graphs), float(d["epsilon"]) / max(1, len(graphs)))
        return cls(OrderedFamily(int(d["direction"]), GraphStack(graphs), widths), float(d["epsilon"]))


def separate_slabs(ordered: OrderedFamily, epsilon: float) -> SeparatedFamily:
    return SeparatedFamily(ordered, epsilon)


def _widest_gap_midpoint(bad, lo, hi):
    pts = np.unique(np.concatenate([[lo, hi], bad[(bad > lo) & (bad < hi)]]))
    gaps = np.diff(pts)
    i = int(np.argmax(gaps))
    return 0.5 * (pts[i] + pts[i + 1])


def _covered_by(values, xj, half):
    return np.any(np.abs(xj[:, None] - values) < half, axis=1)


def choose_epsilon(ordered: OrderedFamily, mu, delta: float, max_rounds: int = 25) -> float:
    """Pick eps in [delta, 2*delta] so that no atom lands on an edge of the
    separated slabs.

    First pass: an atom x excludes the N values eps = N*(x_j - f1_i(x_hat)),
    at which it would sit on a shifted graph f1_i + eps/N.  The midpoint of
    the widest surviving gap is then tried; atoms that the original family
    covered but the separated family misses (they sit on a junction between
    two pushed-up slabs) contribute their junction values
    eps = N*(x_j - f1_s)/(2t+1) and the choice is repeated.
    """
    if not delta > 0:
        raise ValueError("delta must be positive")
    lo, hi = float(delta), 2.0 * float(delta)
    N = ordered.N
    if N == 0 or mu.count == 0:
        return 1.5 * delta
    c = ordered.direction - 1
    X = mu.points
    xj = X[:, c]
    vals = ordered.evaluate(np.delete(X, c, axis=1))
    bad = (N * (xj[:, None] - vals)).reshape(-1)
    was_covered = np.any(np.abs(xj[:, None] - vals) < ordered.widths.max(), axis=1)
    t = 2.0 * np.arange(N) + 1.0
    eps = _widest_gap_midpoint(bad, lo, hi)
    for _ in range(max_rounds):
        sep = SeparatedFamily(ordered, eps).separate(vals)
        lost = np.flatnonzero(was_covered & ~_covered_by(sep, xj, eps / N))
        if lost.size == 0:
            break
        extra = (N * (xj[lost, None, None] - vals[lost, :, None]) / t[None, None, :]).reshape(-1)
        bad = np.concatenate([bad, extra])
        eps = _widest_gap_midpoint(bad, lo, hi)
    return float(eps)


@dataclass
class DisjointReport:
    sorted_ok: bool
    min_separation_excess: float   # min over samples of (f2_{i+1} - f2_i) - 2eps/N
    disjoint_violations: int
    residual_mass: float
    residual: np.ndarray            # atoms outside every separated slab
    displaced: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))
    samples: int = 0

    @property
    def ok(self) -> bool:
        return self.sorted_ok and self.disjoint_violations == 0 and self.min_separation_excess >= -1e-12

    def to_json(self):
        return {
            "sorted_ok": self.sorted_ok,
            "min_separation_excess": self.min_separation_excess,
            "disjoint_violations": self.disjoint_violations,
            "residual_mass": self.residual_mass,
            "residual_count": int(len(self.residual)),
            "displaced_count": int(len(self.displaced)),
            "samples": self.samples,
        }


def hyperplane_samples(d: int, count: int, seed: int = 0) -> np.ndarray:
    """Scrambled Halton points in [0, 1]^d."""
    from scipy.stats import qmc

    if d == 0:
        return np.empty((count, 0))
    return qmc.Halton(d=d, scramble=True, seed=seed).random(count)


def verify_disjoint_cover(sep: SeparatedFamily, mu, samples: int = 10_000, seed: int = 0,
                          tol: float = 1e-12) -> DisjointReport:
    """Check sortedness, separation and disjointness on the atoms' projections
    plus quasi-random hyperplane points, and account for uncovered mass."""
    c = sep.direction - 1
    X = mu.points
    P_atoms = np.delete(X, c, axis=1)
    P = np.vstack([P_atoms, hyperplane_samples(X.shape[1] - 1, samples, seed)])
    s1 = sep.ordered.evaluate(P)
    s2 = sep.separate(s1)
    sorted_ok = bool(np.all(np.diff(s1, axis=1) >= 0))
    e = sep.half_width
    if sep.N > 1:
        excess = float(np.min(np.diff(s2, axis=1) - sep.gap))
        viol = int(np.sum((s2[:, :-1] + e) > (s2[:, 1:] - e) + tol))
    else:
        excess, viol = math.inf, 0
    xj = X[:, c]
    atoms2 = s2[: len(X)]
    inside = _covered_by(atoms2, xj, e)
    before = _covered_by(s1[: len(X)], xj, sep.ordered.widths.max()) if sep.N else np.zeros(len(X), bool)
    residual = np.flatnonzero(~inside)
    displaced = np.flatnonzero(before & ~inside)
    return DisjointReport(
        sorted_ok, excess, viol, math.fsum(mu.weights[residual].tolist()), residual, displaced, len(P),
    )

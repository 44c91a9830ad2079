"""Collapse maps over disjoint slab unions and their Jacobian integral.

For a union A_j of N disjoint open slabs of half-thickness w around sorted
centres c_1 < ... < c_N (functions of z_hat_j),

    f_j(z) = z_j - |{x in A_j : x_hat_j = z_hat_j, x_j <= z_j}|
           = z_j - sum_i clamp(z_j - (c_i - w), 0, 2w).

f_j squeezes each slab to a point along e_j, so it is constant in z_j inside
A_j.  Averaging with a radial bump of radius eta gives g_j; inactive
directions keep g_i(z) = z_i.  Wherever g_j is constant along e_j the
Jacobian has a zero column and its determinant vanishes.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .cover import CoverReport, plan_cover
from .disjoint import SeparatedFamily, choose_epsilon, order_slabs, separate_slabs

# FD probes sit at distance <= radius + h = radius * (1 + 1/FD_FRACTION) from z
FD_FRACTION = 20


class SlabUnion:
    def __init__(self, sep: SeparatedFamily):
        self.sep = sep

    @property
    def direction(self) -> int:
        return self.sep.direction

    @property
    def N(self) -> int:
        return self.sep.N

    @property
    def w(self) -> float:
        return self.sep.half_width

    @property
    def epsilon(self) -> float:
        return self.sep.epsilon

    @property
    def thickness(self) -> float:
        """Fibre length of A_j, i.e. 2*eps up to rounding."""
        return self.N * (2.0 * self.w)

    def centers(self, Z) -> np.ndarray:
        Z = np.atleast_2d(np.asarray(Z, dtype=float))
        return self.sep.evaluate(np.delete(Z, self.direction - 1, axis=1))

    def _collapse(self, Z):
        Z = np.atleast_2d(np.asarray(Z, dtype=float))
        C = self.centers(Z)
        zj = np.ascontiguousarray(Z[:, self.direction - 1])
        return self.sep.kern["collapse_rows"](C, zj, self.w)

    def margin(self, Z) -> np.ndarray:
        """w - distance along e_j to the nearest centre (> 0 iff inside A_j)."""
        Z = np.atleast_2d(np.asarray(Z, dtype=float))
        C = self.centers(Z)
        zj = Z[:, self.direction - 1]
        return self.w - np.min(np.abs(zj[:, None] - C), axis=1)


def collapse_eval(A: SlabUnion, Z) -> np.ndarray:
    """f_j at each row of Z (a scalar for a single point)."""
    single = np.asarray(Z).ndim == 1
    f, _ = A._collapse(Z)
    return f[0] if single else f


def collapse_deficit(A: SlabUnion, Z) -> np.ndarray:
    """z_j - f_j(z): the length of A_j's fibre below z."""
    _, d = A._collapse(Z)
    return d


def collapse_deficit_sweep(A: SlabUnion, z) -> float:
    """Fibre length below z by merging the slab intervals (no clamp formula,
    no disjointness assumption)."""
    z = np.asarray(z, dtype=float)
    C = np.sort(A.centers(z[None, :])[0])
    top = z[A.direction - 1]
    total, reach = 0.0, -math.inf
    for c in C:
        lo, hi = max(c - A.w, reach), min(c + A.w, top)
        if hi > lo:
            total += hi - lo
        reach = max(reach, c + A.w)
    return total


def collapse_deficit_trapezoid(A: SlabUnion, z, nodes: int = 200_001) -> float:
    """Trapezoid rule on the fibre indicator; accurate to about N/nodes."""
    z = np.asarray(z, dtype=float)
    C = A.centers(z[None, :])[0]
    j = A.direction - 1
    t = np.linspace(min(C.min() - A.w, z[j]) - A.w, z[j], nodes)
    ind = np.any(np.abs(t[:, None] - C[None, :]) < A.w, axis=1).astype(float)
    return float(np.trapezoid(ind, t))


def mollifier_radius(A: SlabUnion, F) -> float:
    """Lower bound for dist(F, complement of A): min vertical margin / sqrt(2).

    Slab edges are 1-Lipschitz graphs, so a point at vertical distance m
    from an edge is at Euclidean distance >= m / sqrt(2) from it.
    """
    F = np.atleast_2d(np.asarray(F, dtype=float))
    if len(F) == 0:
        return math.inf
    m = A.margin(F)
    bad = np.flatnonzero(m <= 0)
    if bad.size:
        raise ValueError(f"atoms not strictly inside the slab union: {bad.tolist()[:20]}")
    return float(np.min(m) / math.sqrt(2.0))


def radial_stencil(n: int, order: int | None = None, min_nodes: int | None = None):
    """Nodes and weights of a symmetric quadrature for the bump (1 - r^2)^3 on
    the unit ball: tensor Gauss-Legendre nodes of the cube, weights scaled by
    the bump and zero outside the ball.  Sign-flip and permutation symmetry
    make the first moments vanish exactly, so affine functions are
    reproduced.

    Without an explicit ``order`` the smallest odd order >= 7 leaving at least
    ``min_nodes`` (default 5**n) nodes inside the ball is used.
    """
    if order is None:
        need = 5**n if min_nodes is None else min_nodes
        order = 7
        while len(_stencil(n, order)[1]) < need:
            order += 2
    return _stencil(n, order)


def _stencil(n, order):
    x, wx = np.polynomial.legendre.leggauss(order)
    x = 0.5 * (x - x[::-1])
    wx = 0.5 * (wx + wx[::-1])
    grids = np.meshgrid(*([x] * n), indexing="ij")
    Y = np.stack([g.reshape(-1) for g in grids], axis=1)
    W = np.prod(np.stack(np.meshgrid(*([wx] * n), indexing="ij"), axis=0).reshape(n, -1), axis=0)
    r2 = np.sum(Y * Y, axis=1)
    keep = r2 < 1.0
    Y, W = Y[keep], W[keep] * (1.0 - r2[keep]) ** 3
    return Y, W / math.fsum(W.tolist())


@dataclass
class CollapseMap:
    n: int
    unions: dict           # direction -> SlabUnion
    eta: float             # certified distance of every F_j from the complement of A_j
    stencil: np.ndarray    # (S, n) offsets of norm < radius
    weights: np.ndarray    # (S,)
    radius: float
    h: float

    @property
    def active(self):
        return sorted(self.unions)


def make_collapse_map(unions: dict, n: int, eta: float, order: int | None = None,
                      fd_step: float | None = None) -> CollapseMap:
    if not eta > 0:
        raise ValueError("eta must be positive")
    radius = eta / (1.0 + 1.0 / FD_FRACTION) if math.isfinite(eta) else 1e-3
    h = fd_step if fd_step is not None else radius / FD_FRACTION
    Y, W = radial_stencil(n, order)
    return CollapseMap(n, dict(unions), eta, Y * radius, W, radius, h)


def _g_component(cmap: CollapseMap, A: SlabUnion, Z, chunk: int = 4096):
    S = len(cmap.weights)
    out = np.empty(len(Z))
    for lo in range(0, len(Z), chunk):
        z = Z[lo:lo + chunk]
        pts = (z[:, None, :] - cmap.stencil[None, :, :]).reshape(-1, cmap.n)
        f = collapse_eval(A, pts).reshape(len(z), S)
        out[lo:lo + chunk] = np.sum(f * cmap.weights[None, :], axis=1)
    return out


def mollified_eval(cmap: CollapseMap, Z) -> np.ndarray:
    """g(z) = (g_1(z), ..., g_n(z)); identity in inactive directions."""
    Z = np.asarray(Z, dtype=float)
    single = Z.ndim == 1
    Z = np.atleast_2d(Z)
    G = Z.copy()
    for j, A in cmap.unions.items():
        G[:, j - 1] = _g_component(cmap, A, Z)
    return G[0] if single else G


def kernel_weight_sum(cmap: CollapseMap) -> float:
    return math.fsum(cmap.weights.tolist())


def jacobian_fd(cmap: CollapseMap, Z) -> np.ndarray:
    """Central differences with step h; rows of inactive directions are e_i."""
    Z = np.asarray(Z, dtype=float)
    single = Z.ndim == 1
    Z = np.atleast_2d(Z)
    m, n = Z.shape
    J = np.zeros((m, n, n))
    J[:, np.arange(n), np.arange(n)] = 1.0
    h = cmap.h
    for j, A in cmap.unions.items():
        for col in range(n):
            e = np.zeros(n)
            e[col] = h
            J[:, j - 1, col] = (_g_component(cmap, A, Z + e) - _g_component(cmap, A, Z - e)) / (2.0 * h)
    return J[0] if single else J


@dataclass
class DetReport:
    integral: float
    dets: np.ndarray
    max_abs_det: float
    bound: float

    @property
    def within_bound(self) -> bool:
        return self.max_abs_det <= self.bound * (1.0 + 1e-9)


def det_integral(cmap: CollapseMap, mu) -> DetReport:
    """sum_x w(x) det(grad g(x)), plus the Hadamard-type bound (2n)^n."""
    J = jacobian_fd(cmap, mu.points)
    dets = np.linalg.det(J) if len(J) else np.empty(0)
    integral = math.fsum((mu.weights * dets).tolist())
    return DetReport(integral, dets, float(np.max(np.abs(dets))) if len(dets) else 0.0, float((2 * cmap.n) ** cmap.n))


# ---------------------------------------------------------------------------
# analytic derivatives (used to validate the finite differences)
# ---------------------------------------------------------------------------


def _graph_values_and_grads(stack, P):
    """Brute-force values, gradients and active anchors of every graph."""
    m, d = P.shape
    N = len(stack.graphs)
    vals = np.empty((m, N))
    grads = np.zeros((m, N, d))
    arg = np.empty((m, N), dtype=np.int64)
    kink = np.zeros((m, N), dtype=bool)
    side = np.zeros((m, N, d), dtype=np.int8)
    for g, G in enumerate(stack.graphs):
        diff = P[:, None, :] - G.points[None, :, :]
        dist = np.sqrt(np.sum(diff * diff, axis=2))
        tot = G.values[None, :] + G.lip * dist
        a = np.argmin(tot, axis=1)
        srt = np.sort(tot, axis=1)
        vals[:, g] = srt[:, 0]
        arg[:, g] = a
        dd = dist[np.arange(m), a]
        kink[:, g] = (dd == 0) | ((srt[:, 1] - srt[:, 0] < 1e-14) if tot.shape[1] > 1 else False)
        safe = np.where(dd > 0, dd, 1.0)
        grads[:, g, :] = G.lip * diff[np.arange(m), a, :] / safe[:, None]
        # which side of the active cone's apex; a flip means a kink was crossed
        side[:, g, :] = np.sign(diff[np.arange(m), a, :])
    return vals, grads, arg, kink, side


def collapse_grad(A: SlabUnion, Z):
    """Analytic gradient of f_j and a signature of the affine piece at each z.

    Points whose signature is unchanged across a neighbourhood lie in a
    region where f_j is affine.
    """
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    m, n = Z.shape
    c = A.direction - 1
    P = np.delete(Z, c, axis=1)
    vals, grads, arg, kink, side = _graph_values_and_grads(A.sep.ordered.stack, P)
    perm = np.argsort(vals, axis=1, kind="stable")
    rows = np.arange(m)[:, None]
    s = vals[rows, perm]
    sg = grads[rows, perm]
    gap = A.sep.gap
    N = A.N
    b = s.copy()
    bg = sg.copy()
    branch = np.zeros((m, N), dtype=bool)
    for i in range(1, N):
        push = b[:, i - 1] + gap > s[:, i]
        branch[:, i] = push
        b[:, i] = np.where(push, b[:, i - 1] + gap, s[:, i])
        bg[:, i] = np.where(push[:, None], bg[:, i - 1], sg[:, i])
    zj = Z[:, c]
    w = A.w
    inside = (b - w < zj[:, None]) & (b + w > zj[:, None])
    below = np.sum(b + w <= zj[:, None], axis=1)
    grad = np.zeros((m, n))
    other = [k for k in range(n) if k != c]
    sig = []
    for r in range(m):
        hit = np.flatnonzero(inside[r])
        if hit.size:
            i = hit[0]
            grad[r, other] = bg[r, i]
            sig.append(("in", int(i), tuple(perm[r]), tuple(branch[r]), tuple(arg[r]),
                        side[r].tobytes(), bool(kink[r].any())))
        else:
            grad[r, c] = 1.0
            sig.append(("out", int(below[r])))
    return grad, sig


def mollified_grad_analytic(cmap: CollapseMap, Z, check_h: float | None = None):
    """Analytic Jacobian of g and a mask of points where FD should be exact:
    every stencil node and its +-h probes share one affine piece."""
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    m, n = Z.shape
    S = len(cmap.weights)
    h = cmap.h if check_h is None else check_h
    J = np.zeros((m, n, n))
    J[:, np.arange(n), np.arange(n)] = 1.0
    smooth = np.ones(m, dtype=bool)
    for j, A in cmap.unions.items():
        base = (Z[:, None, :] - cmap.stencil[None, :, :]).reshape(-1, n)
        gr, sig = collapse_grad(A, base)
        J[:, j - 1, :] = np.einsum("msn,s->mn", gr.reshape(m, S, n), cmap.weights)
        for col in range(n):
            for sgn in (1.0, -1.0):
                shifted = base.copy()
                shifted[:, col] += sgn * h
                _, sig2 = collapse_grad(A, shifted)
                same = np.array([a == b and not (a[0] == "in" and a[-1]) for a, b in zip(sig, sig2)])
                smooth &= same.reshape(m, S).all(axis=1)
    return J, smooth


# ---------------------------------------------------------------------------
# property checks
# ---------------------------------------------------------------------------


@dataclass
class PropsDiagnostics:
    max_deficit: float
    min_deficit: float
    thickness: float
    constancy_error: float
    lip_estimate: float
    violations: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations


def _rounding_slack(Z):
    return 8.0 * np.finfo(float).eps * max(1.0, float(np.max(np.abs(Z))))


def random_pairs(rng, count, n, scale_lo, scale_hi, lo=-0.05, hi=1.05):
    z = rng.uniform(lo, hi, size=(count, n))
    u = rng.standard_normal((count, n))
    u /= np.linalg.norm(u, axis=1)[:, None]
    r = np.exp(rng.uniform(math.log(scale_lo), math.log(scale_hi), size=count))
    return z, z + r[:, None] * u


def collapse_props_check(A: SlabUnion, sample, delta: float, n: int, pairs: int = 10_000,
                         seed: int = 0) -> PropsDiagnostics:
    """Deficit bounds, constancy along e_j inside A_j and a sampled Lipschitz
    constant (which must stay <= 2)."""
    sample = np.atleast_2d(np.asarray(sample, dtype=float))
    rng = np.random.default_rng(seed)
    viol = []
    d = collapse_deficit(A, sample)
    slack = _rounding_slack(sample)
    two_eps = A.thickness
    if np.min(d) < -slack:
        i = int(np.argmin(d))
        viol.append(f"deficit {d[i]!r} < 0 at {sample[i].tolist()}")
    if np.max(d) > two_eps + slack:
        i = int(np.argmax(d))
        viol.append(f"deficit {d[i]!r} > 2eps={two_eps!r} at {sample[i].tolist()}")
    if two_eps > delta / n + slack:
        viol.append(f"fibre length 2eps={two_eps!r} exceeds delta/n={delta / n!r}")

    # constancy: move each inside point along e_j without leaving its slab
    c = A.direction - 1
    marg = A.margin(sample)
    inside = np.flatnonzero(marg > 0)
    const_err = 0.0
    if inside.size:
        z = sample[inside]
        C = A.centers(z)
        zj = z[:, c]
        k = np.argmin(np.abs(zj[:, None] - C), axis=1)
        ctr = C[np.arange(len(z)), k]
        frac = rng.uniform(-0.999, 0.999, size=len(z))
        z2 = z.copy()
        z2[:, c] = ctr + frac * A.w
        ok = np.abs(z2[:, c] - ctr) < A.w
        diff = np.abs(collapse_eval(A, z[ok]) - collapse_eval(A, z2[ok]))
        if diff.size:
            const_err = float(diff.max())
            if const_err > 1e-15:
                i = int(np.argmax(diff))
                viol.append(f"f_j not constant along e_j: {z[ok][i].tolist()} vs {z2[ok][i].tolist()}")

    z1, z2 = random_pairs(rng, pairs, n, max(A.w * 1e-2, 1e-9), 0.5)
    num = np.abs(collapse_eval(A, z1) - collapse_eval(A, z2))
    den = np.linalg.norm(z1 - z2, axis=1)
    q = num / den
    lip = float(q.max())
    if lip > 2.0 + 1e-6:
        i = int(np.argmax(q))
        viol.append(f"Lipschitz quotient {lip!r} > 2 between {z1[i].tolist()} and {z2[i].tolist()}")
    return PropsDiagnostics(float(np.max(d)), float(np.min(d)), two_eps, const_err, lip, viol)


# ---------------------------------------------------------------------------
# the experiment
# ---------------------------------------------------------------------------


@dataclass
class DirectionSummary:
    direction: int
    slabs: int
    cover_width: float
    epsilon: float
    half_width: float
    atoms: int
    inside_atoms: int
    residual_mass: float

    def to_json(self):
        return {
            "direction": self.direction, "slabs": self.slabs, "cover_width": self.cover_width,
            "epsilon": self.epsilon, "half_width": self.half_width, "atoms": self.atoms,
            "inside_atoms": self.inside_atoms, "residual_mass": self.residual_mass,
        }


@dataclass
class ExperimentReport:
    delta: float
    passed: bool
    message: str
    total_mass: float
    cover: CoverReport
    directions: list = field(default_factory=list)
    eta: float | None = None
    radius: float | None = None
    h: float | None = None
    sup_g_minus_id: float | None = None
    lip_g: float | None = None
    det_integral: float | None = None
    max_abs_det: float | None = None
    det_bound: float | None = None
    dropped_mass: float | None = None
    dropped_budget: float | None = None
    params: dict = field(default_factory=dict)
    separated: dict = field(default_factory=dict, repr=False)
    cmap: CollapseMap | None = field(default=None, repr=False)

    def to_json(self):
        return {
            "passed": self.passed,
            "message": self.message,
            "delta": self.delta,
            "total_mass": self.total_mass,
            "det_integral": self.det_integral,
            "sup_g_minus_id": self.sup_g_minus_id,
            "lip_g": self.lip_g,
            "max_abs_det": self.max_abs_det,
            "det_bound": self.det_bound,
            "eta": self.eta,
            "mollifier_radius": self.radius,
            "fd_step": self.h,
            "dropped_mass": self.dropped_mass,
            "dropped_budget": self.dropped_budget,
            "widths": {str(d.direction): d.cover_width for d in self.directions},
            "directions": [d.to_json() for d in self.directions],
            "params": self.params,
            "cover": self.cover.to_json(include_slabs=False),
            "separated": [s.to_json() for s in self.separated.values()],
        }


def run_experiment(mu, delta: float, strategy="greedy", k_max: int = 2**20, mass_tol: float = 1e-12,
                   margin_floor: float = 1e-6, samples: int = 10_000, seed: int = 0,
                   fd_step: float | None = None, stencil_order: int | None = None) -> ExperimentReport:
    """Cover, disjointify, collapse, mollify and integrate det(grad g) against mu.

    The cover budget per direction is delta/(4n): the disjoint step may double
    it to eps <= delta/(2n), so every fibre of A_j has length 2*eps <= delta/n.
    """
    if not delta > 0:
        raise ValueError("delta must be positive")
    n = mu.dimension
    params = {
        "strategy": strategy if isinstance(strategy, str) else "partition", "k_max": k_max,
        "mass_tol": mass_tol, "margin_floor": margin_floor, "samples": samples, "seed": seed,
        "fd_step": fd_step, "stencil_order": stencil_order, "cover_budget": delta / (4 * n),
    }
    total = mu.total_mass
    cover = plan_cover(mu, delta / (4 * n), strategy, k_max=k_max, mass_tol=mass_tol)
    if not cover.success:
        return ExperimentReport(delta, False, "cover failed: " + cover.message, total, cover, params=params)

    unions, summaries, separated = {}, [], {}
    F_mask = {}
    for j, fam in cover.families.items():
        cls = cover.assignment == j
        sub = mu.subset(cls)
        ordered = order_slabs(fam)
        eps = choose_epsilon(ordered, sub, fam.total_width)
        sep = separate_slabs(ordered, eps)
        A = SlabUnion(sep)
        unions[j], separated[j] = A, sep
        marg = np.full(mu.count, -np.inf)
        if cls.any():
            marg[cls] = A.margin(mu.points[cls])
        F_mask[j] = cls & (marg >= margin_floor)
        summaries.append(DirectionSummary(
            j, len(fam), fam.total_width, eps, sep.half_width, int(cls.sum()), int(F_mask[j].sum()),
            math.fsum(mu.weights[cls & ~(marg > 0)].tolist()),
        ))
    in_F = np.zeros(mu.count, dtype=bool)
    for msk in F_mask.values():
        in_F |= msk
    dropped = math.fsum(mu.weights[~in_F].tolist())
    eta = min((mollifier_radius(unions[j], mu.points[F_mask[j]]) for j in unions), default=math.inf)
    if not math.isfinite(eta):
        return ExperimentReport(delta, False, "no atom lies strictly inside the slab unions", total, cover,
                                summaries, params=params)
    cmap = make_collapse_map(unions, n, eta, order=stencil_order, fd_step=fd_step)

    det = det_integral(cmap, mu)
    rng = np.random.default_rng(seed)
    probe = np.vstack([mu.points, rng.uniform(0.0, 1.0, size=(samples, n))])
    sup = float(np.max(np.linalg.norm(mollified_eval(cmap, probe) - probe, axis=1)))
    z1, z2 = random_pairs(rng, max(1, samples // 10), n, max(cmap.radius * 1e-2, 1e-9), 0.5, 0.0, 1.0)
    q = np.linalg.norm(mollified_eval(cmap, z1) - mollified_eval(cmap, z2), axis=1) / np.linalg.norm(z1 - z2, axis=1)
    lip = float(q.max())

    passed = det.integral <= delta and sup <= delta
    msg = "pass" if passed else (
        f"integral {det.integral:.4g} > delta" if det.integral > delta else f"sup|g-Id| {sup:.4g} > delta"
    )
    return ExperimentReport(
        delta, bool(passed), msg, total, cover, summaries, eta, cmap.radius, cmap.h, sup, lip,
        det.integral, det.max_abs_det, det.bound, dropped, delta / (2 * (2 * n) ** n), params,
        separated, cmap,
    )

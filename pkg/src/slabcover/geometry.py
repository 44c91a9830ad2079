"""Coordinate cones, the cone-dominance order, rotations and tangency.

Directions are 1-based throughout the public API (``j`` in ``1..n``), the
way they are written mathematically; arrays are indexed with ``j - 1``.
"""
from __future__ import annotations

import numpy as np


def check_direction(j: int, n: int) -> int:
    """Validate a 1-based direction and return the 0-based column."""
    if isinstance(j, bool) or int(j) != j or not 1 <= j <= n:
        raise ValueError(f"direction must be in 1..{n}, got {j!r}")
    return int(j) - 1


def drop(x, j: int):
    """Project onto the hyperplane {x_j = 0} by deleting coordinate j."""
    x = np.asarray(x, dtype=float)
    return np.delete(x, j - 1, axis=-1)


def in_cone(v, j: int, positive_only: bool = True) -> bool:
    """Membership in the closed 45 degree cone around e_j (or +-e_j).

    Uses ``v_j >= |v_hat|``, which is the same set as ``v_j >= |v| / sqrt(2)``.
    """
    v = np.asarray(v, dtype=float)
    c = check_direction(j, v.shape[-1])
    vj = v[c] if positive_only else abs(v[c])
    return bool(vj >= np.linalg.norm(np.delete(v, c)))


def in_cone_norm_form(v, j: int, positive_only: bool = True) -> bool:
    """The textbook form ``v_j >= 2**-0.5 * |v|``; kept as an oracle."""
    v = np.asarray(v, dtype=float)
    c = check_direction(j, v.shape[-1])
    vj = v[c] if positive_only else abs(v[c])
    return bool(vj >= np.linalg.norm(v) / np.sqrt(2.0))


def dominates(s, t, j: int) -> bool:
    """True iff ``t - s`` lies in the closed cone C_j^+ (so s <= t)."""
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    if s.shape != t.shape:
        raise ValueError(f"dimension mismatch: {s.shape} vs {t.shape}")
    c = check_direction(j, s.shape[-1])
    d = t - s
    rest = np.delete(d, c)
    if rest.shape[0] == 1:
        return bool(d[c] >= abs(rest[0]))
    return bool(d[c] >= np.sqrt(np.sum(rest * rest)))


def dominance_matrix(X, j: int) -> np.ndarray:
    """``D[s, t]`` is True iff row s is dominated by row t (vectorised)."""
    X = np.asarray(X, dtype=float)
    c = check_direction(j, X.shape[1])
    diff = X[None, :, :] - X[:, None, :]
    rest = np.delete(diff, c, axis=2)
    if rest.shape[2] == 1:
        norm = np.abs(rest[:, :, 0])
    else:
        norm = np.sqrt(np.sum(rest * rest, axis=2))
    return diff[:, :, c] >= norm


def random_rotation(seed: int, n: int) -> np.ndarray:
    """Haar-distributed element of SO(n), deterministic in ``seed``."""
    if n < 2:
        raise ValueError("rotations need n >= 2")
    rng = np.random.default_rng(seed)
    q, r = np.linalg.qr(rng.standard_normal((n, n)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


def is_rotation(R, tol: float = 1e-12) -> bool:
    R = np.asarray(R, dtype=float)
    if R.ndim != 2 or R.shape[0] != R.shape[1]:
        return False
    err = np.max(np.abs(R.T @ R - np.eye(R.shape[0])))
    return bool(err <= tol and abs(np.linalg.det(R) - 1.0) <= tol)


def is_tangent(normal, j: int, tol: float = 1e-12) -> bool:
    """Does the hyperplane with this unit normal touch dC_j along a ruling?"""
    nu = np.asarray(normal, dtype=float)
    n = nu.shape[0]
    if n < 3:
        raise ValueError("tangency is only defined for n >= 3")
    if abs(np.linalg.norm(nu) - 1.0) > 1e-12:
        raise ValueError("hyperplane normal must be a unit vector")
    c = check_direction(j, n)
    return bool(abs(abs(nu[c]) - np.linalg.norm(np.delete(nu, c))) <= tol)


def apply_rotation(R, measure):
    """Push a discrete measure forward through x -> R x."""
    from .measures import DiscreteMeasure

    R = np.asarray(R, dtype=float)
    if R.shape != (measure.dimension, measure.dimension):
        raise ValueError(f"rotation is {R.shape}, measure has dimension {measure.dimension}")
    return DiscreteMeasure(
        measure.points @ R.T,
        measure.weights.copy(),
        spec=dict(measure.spec),
        check_box=False,
    )

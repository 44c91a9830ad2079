"""Finite atomic stand-ins for the measures the covering pipeline runs on.

Each generator records, in ``spec``, everything needed to rebuild it plus
three pieces of trusted metadata:

``resolution``
    the grid size k at which one atom stands for one cell of the limiting
    measure.  Grids finer than this only resolve individual atoms.
``k_base``
    the natural refinement factor (3 for middle thirds, 2 otherwise).
``singular`` / ``null_directions``
    the class of the limiting measure and the directions j for which its
    support is C_j-null.  These are known analytically for every generator:

    * cantor_product: the support is N^n with N a Lebesgue-null Cantor set;
      a C_j-curve is a 1-Lipschitz graph over the x_j axis, so it meets the
      support in a set whose x_j-projection lies in N, hence H^1-null.
    * cantor_lebesgue: x_1 lives on N, so the same argument gives C_1-null;
      the vertical fibres are C_2-curves of positive length, so not C_2-null.
    * segment: null for every j whose cone does not contain the direction
      of the segment.
    * lebesgue_grid: absolutely continuous, null in no direction.
"""
from __future__ import annotations

import itertools
import json
import math
import os
import tempfile
from dataclasses import dataclass, field

import numpy as np

from .geometry import in_cone


class MeasureFormatError(ValueError):
    """Malformed measure file; ``line`` is 1-based within the file."""

    def __init__(self, message, line=None, field=None):
        self.line = line
        self.field = field
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field {field}")
        super().__init__(f"{', '.join(where)}: {message}" if where else message)


class MeasureValidationError(ValueError):
    pass


@dataclass(eq=False)
class DiscreteMeasure:
    points: np.ndarray
    weights: np.ndarray
    spec: dict = field(default_factory=dict)
    check_box: bool = True

    def __post_init__(self):
        self.points = np.ascontiguousarray(np.asarray(self.points, dtype=float))
        self.weights = np.ascontiguousarray(np.asarray(self.weights, dtype=float))
        if self.points.ndim != 2 or self.points.shape[1] < 2:
            raise MeasureValidationError("points must be an (m, n) array with n >= 2")
        if self.weights.shape != (self.points.shape[0],):
            raise MeasureValidationError("one weight per atom is required")
        if not np.all(np.isfinite(self.points)) or not np.all(np.isfinite(self.weights)):
            raise MeasureValidationError("non-finite coordinate or weight")
        bad = np.flatnonzero(self.weights <= 0)
        if bad.size:
            raise MeasureValidationError(
                f"weights must be positive; atom {bad[0]} has weight {self.weights[bad[0]]!r}"
            )
        if self.check_box and self.points.size:
            if self.points.min() < 0.0 or self.points.max() > 1.0:
                raise MeasureValidationError("atoms must lie in [0, 1]^n")

    @property
    def dimension(self) -> int:
        return self.points.shape[1]

    @property
    def count(self) -> int:
        return self.points.shape[0]

    @property
    def total_mass(self) -> float:
        return math.fsum(self.weights.tolist())

    @property
    def resolution(self):
        r = self.spec.get("resolution")
        return None if r is None else int(r)

    @property
    def k_base(self) -> int:
        return int(self.spec.get("k_base", 2))

    def subset(self, mask):
        return DiscreteMeasure(self.points[mask], self.weights[mask], dict(self.spec), check_box=False)

    def __eq__(self, other):
        if not isinstance(other, DiscreteMeasure):
            return NotImplemented
        return (
            self.points.shape == other.points.shape
            and np.array_equal(self.points, other.points)
            and np.array_equal(self.weights, other.weights)
        )

    def __repr__(self):
        return f"DiscreteMeasure(n={self.dimension}, atoms={self.count}, mass={self.total_mass:.6g})"


# ---------------------------------------------------------------------------
# generators
# ---------------------------------------------------------------------------


def _check_ratio_depth(ratio, depth):
    if not 0.0 < ratio < 0.5:
        raise ValueError(f"ratio must be in (0, 1/2), got {ratio}")
    if int(depth) != depth or depth < 1:
        raise ValueError(f"depth must be a positive integer, got {depth}")


def _natural_base(ratio):
    inv = 1.0 / ratio
    return int(round(inv)) if abs(inv - round(inv)) < 1e-9 else 2


def _cells_per_side(scale):
    inv = 1.0 / scale
    return int(round(inv)) if abs(inv - round(inv)) < 1e-6 * inv else int(math.ceil(inv))


def cantor_centers(ratio: float, depth: int) -> np.ndarray:
    """Centres of the 2**depth intervals of the depth-level Cantor construction."""
    _check_ratio_depth(ratio, depth)
    lefts = np.zeros(1)
    length = 1.0
    for _ in range(depth):
        lefts = np.concatenate([lefts, lefts + (1.0 - ratio) * length])
        lefts.sort()
        length *= ratio
    return lefts + length / 2.0


def gen_cantor_product(ratio: float, depth: int, n: int = 2, seed: int = 0) -> DiscreteMeasure:
    """Uniform measure on the level-``depth`` cells of the n-fold Cantor product."""
    if n < 2:
        raise ValueError("dimension must be >= 2")
    c = cantor_centers(ratio, depth)
    pts = np.array(list(itertools.product(c, repeat=n)))
    w = np.full(len(pts), 2.0 ** (-n * depth))
    spec = {
        "kind": "cantor_product", "ratio": ratio, "depth": depth, "n": n, "seed": seed,
        "resolution": _cells_per_side(ratio**depth), "k_base": _natural_base(ratio),
        "singular": True, "null_directions": list(range(1, n + 1)),
    }
    return DiscreteMeasure(pts, w, spec)


def gen_cantor_lebesgue(ratio: float, depth: int, samples_per_fiber: int, seed: int = 0) -> DiscreteMeasure:
    """Cantor measure in x_1 times a uniform discretisation of Lebesgue in x_2."""
    if samples_per_fiber < 1:
        raise ValueError("samples_per_fiber must be >= 1")
    c = cantor_centers(ratio, depth)
    y = (np.arange(samples_per_fiber) + 0.5) / samples_per_fiber
    pts = np.array(list(itertools.product(c, y)))
    w = np.full(len(pts), 1.0 / (len(c) * samples_per_fiber))
    spec = {
        "kind": "cantor_lebesgue", "ratio": ratio, "depth": depth,
        "samples_per_fiber": samples_per_fiber, "seed": seed,
        "resolution": min(_cells_per_side(ratio**depth), samples_per_fiber),
        "k_base": _natural_base(ratio), "singular": True, "null_directions": [1],
    }
    return DiscreteMeasure(pts, w, spec)


def gen_segment(a, b, count: int, seed: int = 0) -> DiscreteMeasure:
    """H^1 on [a, b]: ``count`` atoms at the midpoints of equal sub-segments."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 1 or a.shape[0] < 2:
        raise ValueError("endpoints must be points of the same dimension >= 2")
    if np.array_equal(a, b):
        raise ValueError("segment endpoints must differ")
    if count < 1:
        raise ValueError("count must be >= 1")
    length = float(np.linalg.norm(b - a))
    s = (np.arange(count) + 0.5) / count
    pts = a[None, :] + s[:, None] * (b - a)[None, :]
    n = a.shape[0]
    null = [j for j in range(1, n + 1) if not in_cone(b - a, j, positive_only=False)]
    spec = {
        "kind": "segment", "a": a.tolist(), "b": b.tolist(), "count": count, "seed": seed,
        "resolution": count, "k_base": 2, "singular": True, "null_directions": null,
    }
    inside = bool(np.all((a >= 0) & (a <= 1) & (b >= 0) & (b <= 1)))
    return DiscreteMeasure(pts, np.full(count, length / count), spec, check_box=inside)


def gen_lebesgue_grid(k: int, n: int = 2, seed: int = 0) -> DiscreteMeasure:
    """Absolutely continuous control: k**n atoms at the cell centres."""
    if k < 1:
        raise ValueError("k must be >= 1")
    c = (np.arange(k) + 0.5) / k
    pts = np.array(list(itertools.product(c, repeat=n)))
    spec = {
        "kind": "lebesgue_grid", "k": k, "n": n, "seed": seed,
        "resolution": k, "k_base": 2, "singular": False, "null_directions": [],
    }
    return DiscreteMeasure(pts, np.full(len(pts), float(k) ** (-n)), spec)


def gen_ifs(scales, offsets, probabilities, depth: int, seed: int = 0) -> DiscreteMeasure:
    """Self-similar measure of the IFS x -> s_i x + t_i on [0, 1]^n.

    One atom per depth-``depth`` word, placed at the image of the cube's
    centre and weighted by the product of the word's probabilities.
    """
    scales = np.asarray(scales, dtype=float)
    offsets = np.asarray(offsets, dtype=float)
    probs = np.asarray(probabilities, dtype=float)
    if offsets.ndim != 2 or len(scales) != len(offsets) or len(probs) != len(scales):
        raise ValueError("need one scale, offset row and probability per map")
    if np.any(scales <= 0) or np.any(scales >= 1):
        raise ValueError("contraction factors must lie in (0, 1)")
    if np.any(probs <= 0) or abs(probs.sum() - 1.0) > 1e-12:
        raise ValueError("probabilities must be positive and sum to 1")
    if depth < 1:
        raise ValueError("depth must be >= 1")
    n = offsets.shape[1]
    pts = _ifs_points(scales, offsets, depth)
    w = np.array([math.prod(p) for p in itertools.product(probs.tolist(), repeat=depth)])
    spec = {
        "kind": "ifs", "scales": scales.tolist(), "offsets": offsets.tolist(),
        "probabilities": probs.tolist(), "depth": depth, "seed": seed,
        "resolution": _cells_per_side(float(scales.max()) ** depth), "k_base": 2,
        "singular": bool(np.sum(scales**n) < 1.0 - 1e-12), "null_directions": [],
    }
    return DiscreteMeasure(pts, w, spec)


def _ifs_points(scales, offsets, depth):
    n = offsets.shape[1]
    out = []
    for word in itertools.product(range(len(scales)), repeat=depth):
        x = np.full(n, 0.5)
        for i in reversed(word):
            x = scales[i] * x + offsets[i]
        out.append(x)
    return np.array(out)


GENERATORS = {
    "cantor_product": gen_cantor_product,
    "cantor_lebesgue": gen_cantor_lebesgue,
    "segment": gen_segment,
    "lebesgue_grid": gen_lebesgue_grid,
    "ifs": gen_ifs,
}


def from_spec(spec: dict) -> DiscreteMeasure:
    """Rebuild a measure from the ``spec`` dict a generator recorded."""
    kind = spec["kind"]
    seed = spec.get("seed", 0)
    if kind == "cantor_product":
        return gen_cantor_product(spec["ratio"], spec["depth"], spec.get("n", 2), seed)
    if kind == "cantor_lebesgue":
        return gen_cantor_lebesgue(spec["ratio"], spec["depth"], spec["samples_per_fiber"], seed)
    if kind == "segment":
        return gen_segment(spec["a"], spec["b"], spec["count"], seed)
    if kind == "lebesgue_grid":
        return gen_lebesgue_grid(spec["k"], spec.get("n", 2), seed)
    if kind == "ifs":
        return gen_ifs(spec["scales"], spec["offsets"], spec["probabilities"], spec["depth"], seed)
    raise ValueError(f"unknown measure kind {kind!r}")


def union(*measures: DiscreteMeasure) -> DiscreteMeasure:
    """Sum of measures; metadata keeps the smallest resolution."""
    pts = np.concatenate([m.points for m in measures])
    w = np.concatenate([m.weights for m in measures])
    res = [m.resolution for m in measures if m.resolution is not None]
    spec = {
        "kind": "union", "parts": [m.spec for m in measures],
        "k_base": 2, "singular": all(m.spec.get("singular", False) for m in measures),
        "null_directions": sorted(set.intersection(*(set(m.spec.get("null_directions", [])) for m in measures))),
    }
    if res:
        spec["resolution"] = min(res)
    return DiscreteMeasure(pts, w, spec, check_box=all(m.check_box for m in measures))


# ---------------------------------------------------------------------------
# file format: JSON header line, then CSV rows x_1,...,x_n,w
# ---------------------------------------------------------------------------


def format_measure(mu: DiscreteMeasure) -> str:
    header = {"n": mu.dimension, "count": mu.count, "mass": mu.total_mass, "spec": mu.spec}
    lines = [json.dumps(header, separators=(",", ":"))]
    rows = np.column_stack([mu.points, mu.weights])
    lines.extend(",".join(format(v, ".17g") for v in row) for row in rows.tolist())
    return "\n".join(lines) + "\n"


def atomic_write(path, text: str) -> None:
    """Write via a temp file in the target directory, then rename."""
    path = os.fspath(path)
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_measure(mu: DiscreteMeasure, path) -> None:
    atomic_write(path, format_measure(mu))


def parse_measure(text: str) -> DiscreteMeasure:
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise MeasureFormatError("empty file", line=1)
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise MeasureFormatError(f"header is not JSON ({exc.msg})", line=1) from None
    for key in ("n", "count", "mass"):
        if key not in header:
            raise MeasureFormatError("missing header key", line=1, field=key)
    n, count = header["n"], header["count"]
    if not isinstance(n, int) or n < 2:
        raise MeasureFormatError("n must be an integer >= 2", line=1, field="n")
    rows = lines[1:]
    if len(rows) != count:
        raise MeasureFormatError(f"header announces {count} rows, found {len(rows)}", line=1, field="count")
    data = np.empty((count, n + 1))
    for r, line in enumerate(rows):
        parts = line.split(",")
        if len(parts) != n + 1:
            raise MeasureFormatError(
                f"row {r + 1}: expected {n + 1} fields, got {len(parts)}", line=r + 2
            )
        for c, tok in enumerate(parts):
            try:
                data[r, c] = float(tok)
            except ValueError:
                name = "w" if c == n else f"x{c + 1}"
                raise MeasureFormatError(f"row {r + 1}: bad number {tok!r}", line=r + 2, field=name) from None
    spec = header.get("spec") or {}
    for r in range(count):
        if data[r, n] <= 0:
            raise MeasureValidationError(f"row {r + 1} (line {r + 2}): weight must be positive, got {data[r, n]!r}")
    box = bool(count == 0 or (data[:, :n].min() >= 0 and data[:, :n].max() <= 1))
    mu = DiscreteMeasure(data[:, :n], data[:, n], spec, check_box=box)
    mass = float(header["mass"])
    if abs(mu.total_mass - mass) > 1e-9 * max(1.0, abs(mass)):
        raise MeasureValidationError(f"header mass {mass!r} disagrees with the sum of weights {mu.total_mass!r}")
    return mu


def load_measure(path) -> DiscreteMeasure:
    with open(path, encoding="utf-8") as fh:
        return parse_measure(fh.read())

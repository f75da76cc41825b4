"""Atomic measures on R^n and the Poisson-type functionals of the theory.

Measures are finite lists of weighted point masses.  Every integral is an
exact finite sum; cube membership uses exact dyadic comparison through the
grid module, so half-open boundaries never double count.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np

from .grid import Cube, GridSpec


@dataclass(frozen=True)
class AtomicMeasure:
    """Finitely many point masses: ``points`` is (N, n), ``weights`` is (N,)."""

    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        w = np.asarray(self.weights, dtype=float).reshape(-1)
        if pts.shape[0] == 0:
            pts = pts.reshape(0, max(pts.shape[1] if pts.ndim == 2 else 1, 1))
        if pts.shape[0] != w.shape[0]:
            raise ValueError("points and weights must have matching lengths")
        if np.any(w <= 0):
            raise ValueError("weights must be strictly positive")
        if len({tuple(p) for p in pts}) != pts.shape[0]:
            raise ValueError("atom locations must be pairwise distinct")
        pts.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)

    @property
    def n(self) -> int:
        return self.points.shape[1]

    def __len__(self) -> int:
        return self.points.shape[0]

    @property
    def total(self) -> float:
        return float(self.weights.sum()) if len(self) else 0.0

    # -- construction / serialization ------------------------------------

    @classmethod
    def from_atoms(cls, atoms, n: int | None = None) -> "AtomicMeasure":
        """From an iterable of (coords, weight) pairs; coords may be scalar in 1d."""
        pts, ws = [], []
        for x, w in atoms:
            pts.append(np.atleast_1d(np.asarray(x, dtype=float)))
            ws.append(float(w))
        if not pts:
            if n is None:
                raise ValueError("empty measure needs an explicit dimension")
            return cls(np.zeros((0, n)), np.zeros((0,)))
        return cls(np.vstack(pts), np.asarray(ws))

    @classmethod
    def empty(cls, n: int) -> "AtomicMeasure":
        return cls(np.zeros((0, n)), np.zeros((0,)))

    def to_json(self) -> dict:
        return {
            "n": self.n,
            "atoms": [
                {"x": [float(c) for c in p], "w": float(w)}
                for p, w in zip(self.points, self.weights)
            ],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "AtomicMeasure":
        n = int(obj["n"])
        atoms = [(a["x"], a["w"]) for a in obj["atoms"]]
        return cls.from_atoms(atoms, n=n)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2, sort_keys=True))

    @classmethod
    def load(cls, path: str | Path) -> "AtomicMeasure":
        return cls.from_json(json.loads(Path(path).read_text()))

    # -- restriction and cube queries ------------------------------------

    def indices_in(self, Q: Cube) -> np.ndarray:
        """Indices of atoms inside Q (half-open, exact dyadic comparison).

        Cube bounds inside the usual level windows are exactly
        float-representable, in which case plain array comparisons are exact;
        otherwise the test falls back to rational arithmetic per atom.
        """
        fb = Q.bounds_float()
        if fb is not None:
            lows, highs = np.asarray(fb[0]), np.asarray(fb[1])
            mask = np.all((self.points >= lows) & (self.points < highs), axis=1)
            return np.flatnonzero(mask)
        out = [i for i, p in enumerate(self.points) if Q.contains_point(p)]
        return np.asarray(out, dtype=int)

    def mass(self, Q: Cube) -> float:
        idx = self.indices_in(Q)
        return float(self.weights[idx].sum()) if idx.size else 0.0

    def restrict_mask(self, mask: np.ndarray) -> "AtomicMeasure":
        mask = np.asarray(mask, dtype=bool)
        return AtomicMeasure(self.points[mask].reshape(-1, self.n), self.weights[mask])

    def restrict_inside(self, Q: Cube) -> "AtomicMeasure":
        mask = np.zeros(len(self), dtype=bool)
        mask[self.indices_in(Q)] = True
        return self.restrict_mask(mask)

    def restrict_outside(self, Q: Cube) -> "AtomicMeasure":
        mask = np.ones(len(self), dtype=bool)
        mask[self.indices_in(Q)] = False
        return self.restrict_mask(mask)

    def restrict_between(self, outer: Cube, inner: Cube) -> "AtomicMeasure":
        """Atoms inside ``outer`` but not inside ``inner``."""
        mask = np.zeros(len(self), dtype=bool)
        mask[self.indices_in(outer)] = True
        mask[self.indices_in(inner)] = False
        return self.restrict_mask(mask)

    def scaled(self, factor: float) -> "AtomicMeasure":
        return AtomicMeasure(self.points, self.weights * float(factor))


def mass(mu: AtomicMeasure, Q: Cube) -> float:
    return mu.mass(Q)


def no_common_point_masses(a: AtomicMeasure, b: AtomicMeasure) -> bool:
    """True iff no atom location appears exactly in both measures."""
    pa = {tuple(p) for p in a.points}
    return all(tuple(p) not in pa for p in b.points)


# ---------------------------------------------------------------------------
# Poisson functionals


def poisson(Q: Cube, mu: AtomicMeasure, alpha: float, kind: str = "P") -> float:
    """The two tail-weighted Poisson integrals of ``mu`` against ``Q``.

    kind="P"    : integral of s / (s + |x - c_Q|)^(n+1-alpha),
    kind="calP" : integral of (s / (s + |x - c_Q|)^2)^(n-alpha),

    with s = side(Q) and c_Q the cube center.  Exact finite sums.
    """
    n = Q.n
    if not (0 <= alpha < n):
        raise ValueError(f"alpha must lie in [0, n={n})")
    if len(mu) == 0:
        return 0.0
    s = Q.side_float
    c = np.asarray(Q.center_float())
    d = np.linalg.norm(mu.points - c, axis=1)
    if kind == "P":
        vals = s / (s + d) ** (n + 1 - alpha)
    elif kind == "calP":
        vals = (s / (s + d) ** 2) ** (n - alpha)
    else:
        raise ValueError("kind must be 'P' or 'calP'")
    return float(np.dot(vals, mu.weights))


def poisson_tilde(K: Cube, mu: AtomicMeasure) -> float:
    """Cubic-tail Poisson sum |K|^2 / (|K| + |y - c_K|)^3, dimension 1 only."""
    if K.n != 1:
        raise ValueError("the cubic-tail Poisson sum is defined in dimension 1 only")
    if len(mu) == 0:
        return 0.0
    s = K.side_float
    d = np.abs(mu.points[:, 0] - float(K.center()[0]))
    return float(np.dot(s * s / (s + d) ** 3, mu.weights))


@dataclass(frozen=True)
class HalfSpaceAtomicMeasure:
    """Atoms ((x, t), weight) in the upper half space, t > 0, weights >= 0."""

    points: np.ndarray   # (N, n) base coordinates
    heights: np.ndarray  # (N,) strictly positive t
    weights: np.ndarray  # (N,) nonnegative

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        t = np.asarray(self.heights, dtype=float).reshape(-1)
        w = np.asarray(self.weights, dtype=float).reshape(-1)
        if pts.shape[0] == 0:
            pts = pts.reshape(0, max(pts.shape[1] if pts.ndim == 2 else 1, 1))
        if not (pts.shape[0] == t.shape[0] == w.shape[0]):
            raise ValueError("points, heights, weights must have matching lengths")
        if np.any(t <= 0):
            raise ValueError("heights must be strictly positive")
        if np.any(w < 0):
            raise ValueError("weights must be nonnegative")
        for arr in (pts, t, w):
            arr.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "heights", t)
        object.__setattr__(self, "weights", w)

    @property
    def n(self) -> int:
        return self.points.shape[1]

    def __len__(self) -> int:
        return self.points.shape[0]

    @classmethod
    def empty(cls, n: int) -> "HalfSpaceAtomicMeasure":
        return cls(np.zeros((0, n)), np.zeros((0,)), np.zeros((0,)))

    def box_mask(self, I: Cube) -> np.ndarray:
        """Mask of atoms inside the box over I: x in I (half-open), 0 < t <= side(I)."""
        side = I.side
        out = np.zeros(len(self), dtype=bool)
        for i in range(len(self)):
            if Fraction(float(self.heights[i])) <= side and I.contains_point(self.points[i]):
                out[i] = True
        return out

    def mass_box(self, I: Cube) -> float:
        m = self.box_mask(I)
        return float(self.weights[m].sum()) if m.any() else 0.0

    def t2_integral_box(self, I: Cube) -> float:
        """Integral of t^2 over the box above I."""
        m = self.box_mask(I)
        return float(np.dot(self.heights[m] ** 2, self.weights[m])) if m.any() else 0.0


def halfspace_poisson(nu: AtomicMeasure, x, t: float, alpha: float) -> float:
    """Half-space Poisson extension t / (t^2 + |x - y|^2)^((n+1-alpha)/2) of nu."""
    if t <= 0:
        raise ValueError("the extension is defined for t > 0")
    if len(nu) == 0:
        return 0.0
    n = nu.n
    x = np.atleast_1d(np.asarray(x, dtype=float))
    d2 = np.sum((nu.points - x) ** 2, axis=1)
    return float(np.dot(t / (t * t + d2) ** ((n + 1 - alpha) / 2.0), nu.weights))


def dual_halfspace_poisson(mu_hat: HalfSpaceAtomicMeasure, x, alpha: float,
                           restrict_to: Cube) -> float:
    """Dual extension: integral of t^2/(t^2+|x-y|^2)^((n+1-alpha)/2) over the
    box above ``restrict_to``."""
    mask = mu_hat.box_mask(restrict_to)
    if not mask.any():
        return 0.0
    n = mu_hat.n
    x = np.atleast_1d(np.asarray(x, dtype=float))
    ys = mu_hat.points[mask]
    ts = mu_hat.heights[mask]
    ws = mu_hat.weights[mask]
    d2 = np.sum((ys - x) ** 2, axis=1)
    return float(np.dot(ts ** 2 / (ts ** 2 + d2) ** ((n + 1 - alpha) / 2.0), ws))


# ---------------------------------------------------------------------------
# grid/measure helpers


def bounding_cube(grid: GridSpec, *measures: AtomicMeasure) -> Cube:
    """Smallest window cube containing every atom of the given measures."""
    pts = [p for mu in measures for p in mu.points]
    if not pts:
        raise ValueError("no atoms to bound")
    for k in range(grid.k_min, grid.k_max + 1):
        c = grid.cube_containing(pts[0], k)
        if all(c.contains_point(p) for p in pts[1:]):
            return c
    raise ValueError("no single window cube contains all atoms; widen the level window")


def separating_level(grid: GridSpec, root: Cube, *measures: AtomicMeasure) -> int:
    """Largest level at which every cube under ``root`` holds at most one atom.

    Returns ``root.level`` when there is at most one atom in total; raises if
    the window bottom is reached while some cube still holds two atoms.
    """
    pts = [tuple(Fraction(float(c)) for c in p) for mu in measures for p in mu.points]
    level = root.level
    while True:
        buckets = {}
        crowded = False
        for p in pts:
            key = grid.cube_containing(p, level).index
            buckets[key] = buckets.get(key, 0) + 1
            if buckets[key] > 1:
                crowded = True
        if not crowded:
            return level
        if level - 1 < grid.k_min:
            raise ValueError("atoms are not separated within the level window")
        level -= 1


def auto_grid(points: np.ndarray, n: int, r: int = 4, eps: float = 0.1,
              depth: int = 12) -> GridSpec:
    """Unshifted grid whose window spans ``depth`` levels below the data's
    bounding cube, deepened to separate the atoms when necessary."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.size == 0:
        return GridSpec(n=n, level_window=(-depth, 0), r=r, eps=eps)
    span = float((pts.max(axis=0) - pts.min(axis=0)).max()) if len(pts) > 1 else 0.0
    k0 = 0 if span <= 0 else int(np.ceil(np.log2(span)))
    probe = GridSpec(n=n, level_window=(k0 - 70, k0 + 70), r=r, eps=eps)
    top = None
    for kk in range(k0, k0 + 66):
        c = probe.cube_containing(pts[0], kk)
        if all(c.contains_point(p) for p in pts):
            top = c
            break
    if top is None:
        raise ValueError("data cannot be covered by a single unshifted cube; give a grid")
    # deepen past the separating level so Haar expansions terminate cleanly
    sep = separating_level(probe, top, AtomicMeasure(pts, np.ones(len(pts))))
    k_min = min(top.level - depth, sep - 2)
    return GridSpec(n=n, level_window=(k_min, top.level), r=r, eps=eps)

"""Shifted dyadic grids: cubes, ancestry, skeletons, and good/bad classification.

Cubes are half-open boxes 2^k([0,1)^n + m) translated by the grid shift
reduced modulo the scale 2^k.  All coordinates are dyadic rationals kept as
exact ``Fraction`` values, so containment tests and skeleton distances are
exact; floating point enters only when a distance is compared against the
fractional-power goodness threshold.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from math import sqrt
from typing import Iterable, Iterator, Sequence


class LevelUnderflowError(ValueError):
    """Descending below the bottom of the grid's level window."""


class LevelOverflowError(ValueError):
    """Ascending above the top of the grid's level window."""


def _as_fraction(x) -> Fraction:
    # float -> Fraction is exact, which is the point.
    return x if isinstance(x, Fraction) else Fraction(x)


def is_dyadic(x: Fraction, max_bits: int = 53) -> bool:
    den = x.denominator
    return den & (den - 1) == 0 and den.bit_length() - 1 <= max_bits


@lru_cache(maxsize=4096)
def _offset_cached(shift: Fraction, level: int) -> Fraction:
    scale = Fraction(2) ** level
    return shift - scale * (shift / scale).__floor__()


@dataclass(frozen=True)
class GridSpec:
    """A shifted dyadic grid on R^n with a bounded window of levels.

    ``level_window = (k_min, k_max)`` bounds admissible cube side lengths
    2^k.  ``r`` and ``eps`` are the goodness parameters used by
    :func:`is_good` and :func:`deeply_embedded`.
    """

    n: int
    shift: tuple[Fraction, ...] = ()
    level_window: tuple[int, int] = (-12, 0)
    r: int = 4
    eps: float = 0.1

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("dimension must be a positive integer")
        shift = tuple(_as_fraction(s) for s in self.shift)
        if not shift:
            shift = (Fraction(0),) * self.n
        if len(shift) != self.n:
            raise ValueError("shift must have one component per dimension")
        for s in shift:
            if not (0 <= s < 1):
                raise ValueError("shift components must lie in [0, 1)")
            if not is_dyadic(s):
                raise ValueError("shift components must be dyadic rationals with <= 53 bits")
        object.__setattr__(self, "shift", shift)
        k_min, k_max = self.level_window
        if k_min > k_max:
            raise ValueError("level window must satisfy k_min <= k_max")
        if self.r < 1:
            raise ValueError("goodness parameter r must be a positive integer")
        if not (0.0 < self.eps < 1.0):
            raise ValueError("goodness parameter eps must lie in (0, 1)")

    @property
    def k_min(self) -> int:
        return self.level_window[0]

    @property
    def k_max(self) -> int:
        return self.level_window[1]

    def validate_alpha(self, alpha: float) -> None:
        """eps * (n + 1 - alpha) < 1 is required by the goodness machinery."""
        if not (0 <= alpha < self.n):
            raise ValueError(f"alpha must lie in [0, n={self.n})")
        if self.eps * (self.n + 1 - alpha) >= 1:
            raise ValueError(
                f"eps={self.eps} too large: eps*(n+1-alpha) = "
                f"{self.eps * (self.n + 1 - alpha):.3f} >= 1"
            )

    def offset(self, i: int, level: int) -> Fraction:
        """Shift of the level-``level`` lattice in coordinate ``i`` (shift mod 2^level)."""
        return _offset_cached(self.shift[i], level)

    def cube(self, level: int, index: Sequence[int]) -> "Cube":
        if not (self.k_min <= level <= self.k_max):
            raise ValueError(f"level {level} outside window {self.level_window}")
        return Cube(self, level, tuple(int(m) for m in index))

    def cube_containing(self, point: Sequence, level: int) -> "Cube":
        scale = Fraction(2) ** level
        idx = tuple(
            int(((_as_fraction(p) - self.offset(i, level)) / scale).__floor__())
            for i, p in enumerate(point)
        )
        return self.cube(level, idx)

    @classmethod
    def from_config(cls, cfg: dict) -> "GridSpec":
        """Build from the lab JSON form {"n":1,"shift":[0.0],"levels":[-8,4],"r":4,"eps":0.1}."""
        n = int(cfg["n"])
        shift = tuple(_as_fraction(s) for s in cfg.get("shift", [0.0] * n))
        levels = tuple(int(k) for k in cfg.get("levels", (-12, 0)))
        return cls(n=n, shift=shift, level_window=levels, r=int(cfg.get("r", 4)),
                   eps=float(cfg.get("eps", 0.1)))

    def to_config(self) -> dict:
        return {
            "n": self.n,
            "shift": [float(s) for s in self.shift],
            "levels": list(self.level_window),
            "r": self.r,
            "eps": self.eps,
        }


@dataclass(frozen=True)
class Cube:
    """Half-open dyadic cube of side 2^level at integer index ``index``."""

    grid: GridSpec
    level: int
    index: tuple[int, ...]

    @property
    def n(self) -> int:
        return self.grid.n

    @property
    def side(self) -> Fraction:
        return Fraction(2) ** self.level

    @property
    def side_float(self) -> float:
        return 2.0 ** self.level

    @property
    def volume(self) -> Fraction:
        return self.side ** self.n

    def lower(self, i: int) -> Fraction:
        return self.side * self.index[i] + self.grid.offset(i, self.level)

    def upper(self, i: int) -> Fraction:
        return self.lower(i) + self.side

    def center(self) -> tuple[Fraction, ...]:
        half = self.side / 2
        return tuple(self.lower(i) + half for i in range(self.n))

    def center_float(self) -> tuple[float, ...]:
        return tuple(float(c) for c in self.center())

    def box(self) -> tuple[tuple[Fraction, ...], tuple[Fraction, ...]]:
        lows = tuple(self.lower(i) for i in range(self.n))
        return lows, tuple(lo + self.side for lo in lows)

    def bounds_float(self):
        """(lows, highs) as floats when exactly representable, else None.

        Exact float bounds let membership tests run as plain comparisons
        without losing the exact-dyadic guarantee.
        """
        cached = self.__dict__.get("_fb", False)
        if cached is not False:
            return cached
        lows, highs = [], []
        out = (lows, highs)
        for i in range(self.n):
            lo = self.lower(i)
            hi = lo + self.side
            flo, fhi = float(lo), float(hi)
            if flo != lo or fhi != hi:
                out = None
                break
            lows.append(flo)
            highs.append(fhi)
        self.__dict__["_fb"] = out
        return out

    def contains_point(self, point: Sequence) -> bool:
        fb = self.bounds_float()
        if fb is not None:
            lows, highs = fb
            for i, p in enumerate(point):
                if isinstance(p, Fraction):
                    if not (lows[i] <= p < highs[i]):
                        return False
                elif not (lows[i] <= p < highs[i]):
                    return False
            return True
        for i, p in enumerate(point):
            q = _as_fraction(p)
            lo = self.lower(i)
            if not (lo <= q < lo + self.side):
                return False
        return True

    def contains_cube(self, other: "Cube") -> bool:
        if other.level > self.level:
            return False
        if other.level == self.level:
            return other.index == self.index
        return other.ancestor(self.level) == self

    def children(self) -> list["Cube"]:
        """The 2^n children, ordered by the multi-index beta in {0,1}^n (lex order).

        Child beta occupies the beta/2-relative position: beta_i = 0 is the
        lower half in coordinate i.
        """
        k = self.level - 1
        if k < self.grid.k_min:
            raise LevelUnderflowError(f"children of level-{self.level} cube leave the window")
        half = Fraction(2) ** k
        bits = []
        for i in range(self.n):
            d = (self.grid.offset(i, self.level) - self.grid.offset(i, k)) / half
            assert d in (0, 1)
            bits.append(int(d))
        out = []
        for beta in itertools.product((0, 1), repeat=self.n):
            idx = tuple(2 * self.index[i] + bits[i] + beta[i] for i in range(self.n))
            out.append(Cube(self.grid, k, idx))
        return out

    def parent(self) -> "Cube":
        k = self.level + 1
        if k > self.grid.k_max:
            raise LevelOverflowError(f"parent of level-{self.level} cube leaves the window")
        scale = Fraction(2) ** self.level
        idx = []
        for i in range(self.n):
            d = (self.grid.offset(i, k) - self.grid.offset(i, self.level)) / scale
            assert d in (0, 1)
            idx.append((self.index[i] - int(d)) // 2)
        return Cube(self.grid, k, tuple(idx))

    def ancestor(self, level: int) -> "Cube":
        if level < self.level:
            raise ValueError("ancestor level must not be below the cube's level")
        c = self
        while c.level < level:
            c = c.parent()
        return c

    def child_containing(self, point: Sequence) -> "Cube":
        for child in self.children():
            if child.contains_point(point):
                return child
        raise ValueError("point not inside the cube")

    def key(self) -> tuple:
        """Hashable identity without the grid object (for JSON/report use)."""
        return (self.level, self.index)

    def __repr__(self) -> str:  # compact, e.g. Q(k=-2, m=(3, 1))
        return f"Q(k={self.level}, m={self.index})"


# ---------------------------------------------------------------------------
# skeletons and distances


@dataclass(frozen=True)
class Skeleton:
    """The dyadic skeleton e(Q): the union of the boundaries of Q's children.

    In one dimension this is the two endpoints and the center.  In general a
    point belongs to e(Q) iff it lies in the closed cube and at least one of
    its coordinates equals the low edge, midpoint, or high edge of Q in that
    coordinate.
    """

    cube: Cube

    def axis_coords(self, i: int) -> tuple[Fraction, Fraction, Fraction]:
        lo = self.cube.lower(i)
        s = self.cube.side
        return (lo, lo + s / 2, lo + s)

    def points(self) -> tuple[Fraction, ...]:
        if self.cube.n != 1:
            raise ValueError("point enumeration only available in dimension 1")
        return self.axis_coords(0)

    def dist2_to_box(self, lows: Sequence[Fraction], highs: Sequence[Fraction]) -> Fraction:
        """Exact squared distance from e(Q) to a closed axis-aligned box."""
        cube = self.cube
        n = cube.n
        # per-coordinate distance from the box to the cube's closed extent
        base = []
        for j in range(n):
            lo, hi = cube.lower(j), cube.upper(j)
            d = max(Fraction(0), lows[j] - hi, lo - highs[j])
            base.append(d * d)
        base_sum = sum(base)
        best = None
        for i in range(n):
            snap = None
            for p in self.axis_coords(i):
                d = max(Fraction(0), lows[i] - p, p - highs[i])
                d2 = d * d
                if snap is None or d2 < snap:
                    snap = d2
            cand = base_sum - base[i] + snap
            if best is None or cand < best:
                best = cand
        return best

    def dist2_to_point(self, point: Sequence) -> Fraction:
        q = tuple(_as_fraction(p) for p in point)
        return self.dist2_to_box(q, q)


def skeleton(Q: Cube) -> Skeleton:
    return Skeleton(Q)


def _skeleton_dist2_float(I: Cube, J: Cube) -> float | None:
    """Float path: per-coordinate distances between exact dyadic bounds are
    themselves exact dyadic floats whenever the level span stays well inside
    the 53-bit mantissa; only the final squares round (and those are compared
    against irrational thresholds anyway)."""
    fi = I.bounds_float()
    fj = J.bounds_float()
    if fi is None or fj is None or I.level - J.level > 40:
        return None
    ilo, ihi = fi
    jlo, jhi = fj
    n = I.n
    base = []
    for k in range(n):
        d = max(0.0, jlo[k] - ihi[k], ilo[k] - jhi[k])
        base.append(d * d)
    base_sum = sum(base)
    half = 0.5 * (ihi[0] - ilo[0])
    best = None
    for i in range(n):
        snap = None
        for p in (ilo[i], ilo[i] + half, ihi[i]):
            d = max(0.0, jlo[i] - p, p - jhi[i])
            d2 = d * d
            if snap is None or d2 < snap:
                snap = d2
        cand = base_sum - base[i] + snap
        if best is None or cand < best:
            best = cand
    return best


@lru_cache(maxsize=1 << 18)
def skeleton_dist2(I: Cube, J: Cube):
    """Squared distance between e(I) and the closed cube J (exact dyadic
    coordinate arithmetic; rational fallback off the float fast path)."""
    fast = _skeleton_dist2_float(I, J)
    if fast is not None:
        return fast
    lows, highs = J.box()
    return Skeleton(I).dist2_to_box(lows, highs)


@lru_cache(maxsize=1 << 18)
def is_good(J: Cube, other_grid: GridSpec | None = None,
            r: int | None = None, eps: float | None = None) -> bool:
    """r-goodness of J against ``other_grid`` (defaults to J's own grid).

    J is r-bad when some cube I of the other grid inside the level window
    with side(I) >= 2^r side(J) has dist(e(I), J) <= (1/2) side(J)^eps *
    side(I)^(1-eps).  The search is exhaustive over window levels; per level
    only the O(1) cubes near J can violate the threshold, and the candidate
    index ranges below over-cover that neighborhood.
    """
    grid = other_grid if other_grid is not None else J.grid
    r = J.grid.r if r is None else r
    eps = J.grid.eps if eps is None else eps
    j_lows, j_highs = J.box()
    sj = float(J.side)
    for k in range(J.level + r, grid.k_max + 1):
        si = 2.0 ** k
        thr = 0.5 * (sj ** eps) * (si ** (1.0 - eps))
        ranges = []
        for i in range(grid.n):
            off = float(grid.offset(i, k))
            m_lo = int((float(j_lows[i]) - thr - off) // si) - 1
            m_hi = int((float(j_highs[i]) + thr - off) // si) + 1
            ranges.append(range(m_lo, m_hi + 1))
        for idx in itertools.product(*ranges):
            I = Cube(grid, k, idx)
            if sqrt(float(skeleton_dist2(I, J))) <= thr:
                return False
    return True


@lru_cache(maxsize=1 << 18)
def deeply_embedded(J: Cube, I: Cube, r: int | None = None, eps: float | None = None) -> bool:
    """Whether J sits well inside I: contained, >= r levels smaller, and far
    from the skeleton of I in the side(J)^eps side(I)^(1-eps) sense."""
    if J.grid is not I.grid and J.grid != I.grid:
        raise ValueError("deep embedding is defined within a single grid")
    r = I.grid.r if r is None else r
    eps = I.grid.eps if eps is None else eps
    if J.level > I.level - r:
        return False
    if not I.contains_cube(J):
        return False
    thr = (float(J.side) ** eps) * (float(I.side) ** (1.0 - eps))
    return sqrt(float(skeleton_dist2(I, J))) >= thr


# ---------------------------------------------------------------------------
# enumeration helpers


def cubes_over_points(grid: GridSpec, points: Iterable[Sequence], levels: Iterable[int] | None = None) -> Iterator[Cube]:
    """All window cubes containing at least one of the given points.

    Covers every level of the window (or ``levels``), so ancestors of any
    point-carrying cube up to the window top are included.
    """
    pts = [tuple(_as_fraction(c) for c in p) for p in points]
    if levels is None:
        levels = range(grid.k_min, grid.k_max + 1)
    for k in levels:
        seen = set()
        for p in pts:
            c = grid.cube_containing(p, k)
            if c.index not in seen:
                seen.add(c.index)
                yield c


def descend(root: Cube, keep, min_level: int | None = None) -> Iterator[Cube]:
    """Depth-first walk from ``root`` through cubes for which ``keep`` holds."""
    lo = root.grid.k_min if min_level is None else min_level
    stack = [root]
    while stack:
        q = stack.pop()
        if not keep(q):
            continue
        yield q
        if q.level - 1 >= lo:
            stack.extend(reversed(q.children()))

"""Deterministic random instances: measure pairs, test functions, good-cube
scans, and admissible pair collections for the verification suites."""

from __future__ import annotations

import numpy as np

from .grid import Cube, GridSpec, deeply_embedded, is_good
from .measures import AtomicMeasure

WEIGHT_LOG_RANGE = (np.log(1e-2), np.log(1e2))


def rng_for(seed: int, *stream: int) -> np.random.Generator:
    """Independent generator for a (seed, stream...) address."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), *map(int, stream)]))


def _weights(rng: np.random.Generator, m: int) -> np.ndarray:
    return np.exp(rng.uniform(*WEIGHT_LOG_RANGE, size=m))


def measure_pair(rng: np.random.Generator, n: int, n_sigma: int, n_omega: int,
                 clusters: int = 0) -> tuple[AtomicMeasure, AtomicMeasure]:
    """Two measures with disjoint supports in the unit cube; log-uniform
    weights.  ``clusters > 0`` concentrates that many tight clusters per
    measure instead of a uniform spray."""

    def sample(m: int, taken: set) -> np.ndarray:
        pts = []
        while len(pts) < m:
            if clusters > 0:
                centers = rng.random((clusters, n))
                raw = centers[rng.integers(0, clusters, size=m)] \
                    + rng.normal(scale=0.02, size=(m, n))
                raw = np.clip(raw, 0.0, 1.0 - 1e-9)
            else:
                raw = rng.random((m, n))
            for p in raw:
                t = tuple(p)
                if t not in taken:
                    taken.add(t)
                    pts.append(p)
                if len(pts) == m:
                    break
        return np.asarray(pts)

    taken: set = set()
    ps = sample(n_sigma, taken)
    po = sample(n_omega, taken)
    return (AtomicMeasure(ps, _weights(rng, n_sigma)),
            AtomicMeasure(po, _weights(rng, n_omega)))


def random_function(rng: np.random.Generator, m: int, spiky: bool = True) -> np.ndarray:
    """Atom values with heavy tails so stopping trees are nontrivial."""
    base = rng.normal(size=m)
    if spiky:
        base *= np.exp(rng.uniform(0.0, 4.0, size=m))
    return base


_GOOD_POOL_CACHE: dict = {}


def good_cubes(grid: GridSpec, levels, limit: int | None = None,
               within: Cube | None = None) -> list[Cube]:
    """Good cubes of the unit cube region at the given levels (exhaustive in
    dimension 1, sampled lattice scan in dimension 2).  Results are cached
    per (grid, levels, limit, region)."""
    key = (grid, tuple(levels), limit, None if within is None else within.key())
    if key in _GOOD_POOL_CACHE:
        return _GOOD_POOL_CACHE[key]
    out = _good_cubes_scan(grid, levels, limit, within)
    _GOOD_POOL_CACHE[key] = out
    return out


def _good_cubes_scan(grid: GridSpec, levels, limit: int | None,
                     within: Cube | None) -> list[Cube]:
    out = []
    for k in levels:
        side_count = 2 ** (-k) if k < 0 else 1
        if grid.n == 1:
            candidates = (grid.cube(k, (m,)) for m in range(side_count))
        else:
            rng = np.random.default_rng(abs(k) + 1)
            seen = set()
            cand = []
            for _ in range(min(side_count ** grid.n, 4000)):
                idx = tuple(int(v) for v in rng.integers(0, side_count, size=grid.n))
                if idx not in seen:
                    seen.add(idx)
                    cand.append(grid.cube(k, idx))
            candidates = iter(cand)
        for Q in candidates:
            if within is not None and not within.contains_cube(Q):
                continue
            if is_good(Q):
                out.append(Q)
                if limit is not None and len(out) >= limit:
                    return out
    return out


def clustered_measure_on_good_cubes(rng: np.random.Generator, grid: GridSpec,
                                    cubes: list[Cube], n_clusters: int,
                                    atoms_per_cluster: int) -> AtomicMeasure:
    """Atoms concentrated inside randomly chosen good cubes, so the deeply
    embedded partitions and tent measures are nontrivial."""
    if not cubes:
        raise ValueError("no good cubes available for clustering")
    idx = rng.choice(len(cubes), size=min(n_clusters, len(cubes)), replace=False)
    pts = []
    for ci in idx:
        q = cubes[ci]
        lows, _ = q.box()
        s = q.side_float
        for _ in range(atoms_per_cluster):
            pts.append([float(lo) + s * rng.random() for lo in lows])
    pts = np.asarray(pts)
    # exact duplicates are measure-invalid; nudge deterministically
    seen = set()
    for i in range(len(pts)):
        while tuple(pts[i]) in seen:
            pts[i] = pts[i] * (1 - 1e-12)
        seen.add(tuple(pts[i]))
    return AtomicMeasure(pts, _weights(rng, len(pts)))


def admissible_collection(rng: np.random.Generator, root: Cube,
                          js: list[Cube], keep: float = 0.7):
    """Random admissible pairs: for each good J deeply inside the root, a
    contiguous run of ancestors I with J deeply embedded in each, so the
    geodesic closure is satisfied pair by pair."""
    pairs = []
    for J in js:
        chain = []
        q = J
        while q.level < root.level:
            q = q.ancestor(q.level + 1)
            if deeply_embedded(J, q):
                chain.append(q)
            else:
                chain.append(None)
        runs, cur = [], []
        for I in chain:
            if I is None:
                if cur:
                    runs.append(cur)
                cur = []
            else:
                cur.append(I)
        if cur:
            runs.append(cur)
        if not runs:
            continue
        run = runs[rng.integers(0, len(runs))]
        lo = rng.integers(0, len(run))
        hi = rng.integers(lo, len(run))
        if rng.random() < keep:
            for I in run[lo:hi + 1]:
                pairs.append((I, J))
    from .pairs import PairCollection
    return PairCollection.from_pairs(root, pairs)

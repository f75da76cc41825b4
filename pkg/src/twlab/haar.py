"""Weighted Haar systems, martingale differences, and energy functionals.

For a measure mu and a cube Q whose children all carry mass, the classical
weighted basis assigns child Q' the value  a(Q'/Q) / |Q'|_mu  up to a global
normalisation, where a(Q'/Q) in {-1,+1} follows the tensor sign patterns
indexed by a in {0,1}^n minus the all-ones index.  Those explicit functions
are mean zero and unit norm but are mutually orthogonal only when the child
masses agree, so the system returned here is their Gram-Schmidt
orthonormalisation (a no-op exactly when the explicit functions are already
orthogonal, in particular always in dimension 1).  Cubes with uncharged
children get a basis built from child indicators instead.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .grid import Cube, LevelUnderflowError
from .measures import AtomicMeasure

MEAN_ZERO_TOL = 1e-12
ORTHO_TOL = 1e-12


def gamma_indices(n: int) -> list[tuple[int, ...]]:
    """The 2^n - 1 sign-pattern indices: {0,1}^n without the all-ones tuple."""
    return [a for a in itertools.product((0, 1), repeat=n) if a != (1,) * n]


def coordinate_index(n: int, ell: int) -> tuple[int, ...]:
    """Index with 0 in slot ell and 1 elsewhere; its sign pattern tracks x_ell."""
    return tuple(0 if i == ell else 1 for i in range(n))


def _sign(a: tuple[int, ...], beta: tuple[int, ...]) -> float:
    # product over coordinates of (-1 on the lower half when a_i = 0, else +1)
    s = 1.0
    for ai, bi in zip(a, beta):
        if ai == 0 and bi == 0:
            s = -s
    return s


@dataclass(frozen=True)
class HaarFunction:
    """A child-constant function on a cube: value ``values[i]`` on ``children[i]``, 0 elsewhere."""

    cube: Cube
    label: tuple[int, ...]
    children: tuple[Cube, ...]
    values: tuple[float, ...]

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        out = np.zeros(len(pts))
        for child, v in zip(self.children, self.values):
            if v == 0.0:
                continue
            fb = child.bounds_float()
            if fb is not None:
                mask = np.all((pts >= np.asarray(fb[0])) & (pts < np.asarray(fb[1])),
                              axis=1)
                out[mask] = v
            else:
                for i, p in enumerate(pts):
                    if out[i] == 0.0 and child.contains_point(p):
                        out[i] = v
        return out

    def inner(self, mu: AtomicMeasure, f: np.ndarray) -> float:
        h = self.evaluate(mu.points)
        return float(np.dot(mu.weights * h, np.asarray(f, dtype=float)))


def charged_children(mu: AtomicMeasure, Q: Cube) -> list[tuple[Cube, float]]:
    out = []
    for child in Q.children():
        m = mu.mass(child)
        if m > 0:
            out.append((child, m))
    return out


def haar_system(mu: AtomicMeasure, Q: Cube) -> list[HaarFunction]:
    """Orthonormal basis of the mu-mean-zero child-constant space on Q.

    Empty when at most one child is charged.  With all 2^n children charged
    the seeds are the explicit sign-pattern functions in index order; with
    k < 2^n charged children the seeds are the charged-child indicators in
    child order, which after orthogonalisation gives functions negative on
    the earlier children and positive on the last one they touch.
    """
    try:
        charged = charged_children(mu, Q)
    except LevelUnderflowError:
        return []
    k = len(charged)
    if k <= 1:
        return []
    children = tuple(c for c, _ in charged)
    masses = np.array([m for _, m in charged])
    n = Q.n
    full = k == 2 ** n
    if full:
        betas = list(itertools.product((0, 1), repeat=n))
        labels = gamma_indices(n)
        seeds = np.array([[_sign(a, b) / m for b, m in zip(betas, masses)] for a in labels])
    else:
        labels = gamma_indices(n)[: k - 1]
        seeds = np.zeros((k - 1, k))
        for j in range(1, k):
            seeds[j - 1, j] = 1.0
    # weighted Gram-Schmidt against the constant function and earlier seeds,
    # run twice for numerical orthogonality at the 1e-12 scale
    basis: list[np.ndarray] = []
    ones = np.ones(k)
    for vec in seeds:
        v = vec.astype(float)
        for _ in range(2):
            v = v - (np.dot(masses * v, ones) / masses.sum()) * ones
            for b in basis:
                v = v - np.dot(masses * v, b) * b
        norm = np.sqrt(np.dot(masses * v, v))
        if norm <= 1e-14 * max(1.0, float(np.abs(vec).max())):
            continue
        v = v / norm
        if not full and v[0] > 0:
            v = -v
        basis.append(v)
    return [
        HaarFunction(Q, labels[i], children, tuple(float(x) for x in b))
        for i, b in enumerate(basis)
    ]


def coordinate_haar(mu: AtomicMeasure, Q: Cube, ell: int) -> HaarFunction | None:
    """The explicit unit-norm function whose sign on each child matches the
    sign of x_ell - c_ell.  Defined only when all 2^n children are charged;
    for unequal child masses it need not be orthogonal to the rest of the
    explicit family, which is why it is kept separate from the orthonormal
    system."""
    charged = charged_children(mu, Q)
    n = Q.n
    if len(charged) != 2 ** n:
        return None
    children = tuple(c for c, _ in charged)
    masses = np.array([m for _, m in charged])
    a = coordinate_index(n, ell)
    betas = list(itertools.product((0, 1), repeat=n))
    vals = np.array([_sign(a, b) / m for b, m in zip(betas, masses)])
    gamma = np.sqrt(float(np.sum(1.0 / masses)))
    vals = vals / gamma
    return HaarFunction(Q, a, children, tuple(float(v) for v in vals))


def x_hat(Q: Cube, omega: AtomicMeasure) -> float:
    """Coordinate-wise first moment against the sign-patterned functions.

    With all children charged this is sum_ell <x_ell - c_ell, h^(e_ell)>,
    each term nonnegative because the sign patterns match.  On degenerate
    cubes it falls back to the root-sum-of-squares of the coordinate
    coefficients over the orthonormal system, which dominates the aligned
    sum it replaces.
    """
    idx = omega.indices_in(Q)
    if idx.size <= 1:
        return 0.0
    pts = omega.points[idx]
    w = omega.weights[idx]
    n = Q.n
    center = np.asarray(Q.center_float())
    charged = charged_children(omega, Q)
    if len(charged) == 2 ** n:
        total = 0.0
        for ell in range(n):
            h = coordinate_haar(omega, Q, ell)
            hv = h.evaluate(pts)
            total += float(np.dot(w * hv, pts[:, ell] - center[ell]))
        return total
    total = 0.0
    for h in haar_system(omega, Q):
        hv = h.evaluate(pts)
        for ell in range(n):
            total += float(np.dot(w * hv, pts[:, ell] - center[ell])) ** 2
    return float(np.sqrt(total))


# ---------------------------------------------------------------------------
# averages, differences, transforms


def expectation(mu: AtomicMeasure, f: np.ndarray, Q: Cube) -> float:
    """mu-average of f over Q; 0 when Q carries no mass."""
    idx = mu.indices_in(Q)
    if idx.size == 0:
        return 0.0
    w = mu.weights[idx]
    return float(np.dot(w, np.asarray(f, dtype=float)[idx]) / w.sum())


def martingale_difference(f: np.ndarray, mu: AtomicMeasure, Q: Cube) -> np.ndarray:
    """Values on the atoms of mu of the one-level difference at Q."""
    out = np.zeros(len(mu))
    idx = mu.indices_in(Q)
    if idx.size == 0:
        return out
    eq = expectation(mu, f, Q)
    for child in Q.children():
        cidx = mu.indices_in(child)
        if cidx.size == 0:
            continue
        out[cidx] = expectation(mu, f, child) - eq
    return out


def support_cubes(mu: AtomicMeasure, root: Cube) -> list[Cube]:
    """Cubes under ``root`` holding at least two atoms, top-down.

    Only these can carry nonzero differences; the walk stops at
    single-atom cubes and at the window bottom.
    """
    out = []
    stack = [root]
    while stack:
        q = stack.pop()
        if len(mu.indices_in(q)) < 2:
            continue
        out.append(q)
        if q.level - 1 >= q.grid.k_min:
            stack.extend(reversed(q.children()))
    return out


@dataclass
class CoefficientMap:
    """Sparse transform of a function: (cube, label) -> coefficient, plus the
    root mean term."""

    root: Cube
    mean: float
    entries: dict[tuple[Cube, tuple[int, ...]], float] = field(default_factory=dict)
    lossy: bool = False

    def norm_sq(self) -> float:
        return float(sum(c * c for c in self.entries.values()))

    def to_json_list(self) -> list[dict]:
        items = []
        for (cube, label), coef in self.entries.items():
            items.append({
                "level": cube.level,
                "index": list(cube.index),
                "a": list(label),
                "coef": coef,
            })
        items.sort(key=lambda d: (-d["level"], d["index"], d["a"]))
        return items


def analyze(f: np.ndarray, mu: AtomicMeasure, root: Cube) -> CoefficientMap:
    """Expand f over the Haar system below ``root``.

    The walk terminates at the separating depth on its own (differences
    vanish on single-atom cubes); if the window bottom cuts the walk short
    while a cube still holds two atoms the result is flagged lossy.
    """
    f = np.asarray(f, dtype=float)
    cmap = CoefficientMap(root=root, mean=expectation(mu, f, root))
    stack = [root]
    while stack:
        q = stack.pop()
        idx = mu.indices_in(q)
        if idx.size < 2:
            continue
        if q.level - 1 < q.grid.k_min:
            cmap.lossy = True
            continue
        for h in haar_system(mu, q):
            cmap.entries[(q, h.label)] = h.inner(mu, f)
        stack.extend(reversed(q.children()))
    return cmap


def synthesize(cmap: CoefficientMap, mu: AtomicMeasure) -> np.ndarray:
    """Rebuild atom values from a coefficient map (exact inverse of analyze
    at separating depth)."""
    out = np.zeros(len(mu))
    ridx = mu.indices_in(cmap.root)
    if ridx.size:
        out[ridx] = cmap.mean
    by_cube: dict[Cube, list[tuple[tuple[int, ...], float]]] = {}
    for (cube, label), coef in cmap.entries.items():
        by_cube.setdefault(cube, []).append((label, coef))
    for cube, items in by_cube.items():
        system = {h.label: h for h in haar_system(mu, cube)}
        for label, coef in items:
            h = system[label]
            out += coef * h.evaluate(mu.points)
    return out


def corona_projection(f: np.ndarray, mu: AtomicMeasure, cubes) -> np.ndarray:
    """Sum of one-level differences over a set of cubes."""
    out = np.zeros(len(mu))
    for q in cubes:
        out += martingale_difference(f, mu, q)
    return out


# ---------------------------------------------------------------------------
# energies


def energy_sq(J: Cube, omega: AtomicMeasure) -> float:
    """Normalised second moment: double average of |x - z|^2 / side^2 over J."""
    idx = omega.indices_in(J)
    if idx.size == 0:
        return 0.0
    pts = omega.points[idx]
    w = omega.weights[idx]
    tot = w.sum()
    diff = pts[:, None, :] - pts[None, :, :]
    d2 = np.sum(diff * diff, axis=2)
    s = J.side_float
    return float(w @ d2 @ w / (tot * tot * s * s))


def second_moment(J: Cube, omega: AtomicMeasure) -> float:
    """Integral over J of |x - mean|^2 d omega."""
    idx = omega.indices_in(J)
    if idx.size == 0:
        return 0.0
    pts = omega.points[idx]
    w = omega.weights[idx]
    mean = (w[:, None] * pts).sum(axis=0) / w.sum()
    return float(np.dot(w, np.sum((pts - mean) ** 2, axis=1)))


def projection_norm_sq(cubes, omega: AtomicMeasure) -> float:
    """Squared norm of the coordinate projections over a set of cubes:
    sum over cubes, basis functions, and coordinates of <x_ell, h>^2."""
    total = 0.0
    for q in cubes:
        idx = omega.indices_in(q)
        if idx.size <= 1:
            continue
        pts = omega.points[idx]
        w = omega.weights[idx]
        for h in haar_system(omega, q):
            hv = h.evaluate(pts)
            for ell in range(omega.n):
                total += float(np.dot(w * hv, pts[:, ell])) ** 2
    return total

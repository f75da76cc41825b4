"""Condition constants for a weight pair: the two-tailed and tailless
quadratic conditions, dual energy constants via dynamic programming over
dyadic subpartitions, adapted-family checks, and the half-space testing
quantities for functional energy.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .grid import Cube, GridSpec, deeply_embedded
from .haar import energy_sq, projection_norm_sq, second_moment
from .kernels import KernelSpec, default_cube_enumerator, testing_constant
from .measures import (AtomicMeasure, HalfSpaceAtomicMeasure, dual_halfspace_poisson,
                       halfspace_poisson, poisson)


# ---------------------------------------------------------------------------
# quadratic conditions


def a2_constant(sigma: AtomicMeasure, omega: AtomicMeasure, alpha: float,
                grid: GridSpec, kind: str = "two_tailed", direction: str = "forward",
                cubes: list[Cube] | None = None) -> tuple[float, Cube | None]:
    """Supremum over enumerated cubes of the quadratic condition term.

    two_tailed forward: calP(Q, sigma) |Q|_omega / |Q|^(1-alpha/n); the dual
    swaps the roles; tailless: |Q|_sigma |Q|_omega / |Q|^(2(1-alpha/n)).
    """
    if direction == "dual" and kind != "tailless":
        return a2_constant(omega, sigma, alpha, grid, kind=kind,
                           direction="forward", cubes=cubes)
    if cubes is None:
        cubes = default_cube_enumerator(grid, sigma, omega)
    if not cubes:
        raise ValueError("empty cube enumeration")
    n = grid.n
    best, witness = 0.0, None
    for Q in cubes:
        sn = Q.side_float ** (n - alpha)
        if kind == "two_tailed":
            mo = omega.mass(Q)
            term = poisson(Q, sigma, alpha, "calP") * mo / sn if mo > 0 else 0.0
        elif kind == "tailless":
            term = sigma.mass(Q) * omega.mass(Q) / (sn * sn)
        else:
            raise ValueError("kind must be 'two_tailed' or 'tailless'")
        if term > best:
            best, witness = term, Q
    return best, witness


def a2_term(Q: Cube, sigma: AtomicMeasure, omega: AtomicMeasure, alpha: float,
            kind: str = "two_tailed") -> float:
    """Single-cube value of the quadratic condition (forward orientation)."""
    sn = Q.side_float ** (Q.n - alpha)
    if kind == "two_tailed":
        return poisson(Q, sigma, alpha, "calP") * omega.mass(Q) / sn
    return sigma.mass(Q) * omega.mass(Q) / (sn * sn)


def tailless_domination_constant(n: int, alpha: float) -> float:
    """Exact per-cube constant with
    tailless_term(Q) <= C * two_tailed_term(Q): a point of Q sits at distance
    at most sqrt(n)/2 * side from the center, so each atom's tailed
    contribution is at least (1 + sqrt(n)/2)^(-2(n-alpha)) of its
    center-normalised share.  (Without this constant the comparison can fail:
    an atom at the edge of Q contributes strictly less than the tailless
    normalisation assumes.)"""
    return float((1.0 + np.sqrt(n) / 2.0) ** (2.0 * (n - alpha)))


# ---------------------------------------------------------------------------
# energy constants


@dataclass
class EnergyResult:
    value: float                      # the constant itself (not squared)
    witness_top: Cube | None
    witness_partition: list[Cube] = field(default_factory=list)


class _EnergyWorkspace:
    """Per-call caches: atom indices, moments, and per-piece Poisson vectors."""

    def __init__(self, sigma: AtomicMeasure, omega: AtomicMeasure, alpha: float, mode: str):
        self.sigma = sigma
        self.omega = omega
        self.alpha = alpha
        self.mode = mode
        self._sidx: dict[tuple, np.ndarray] = {}
        self._oidx: dict[tuple, np.ndarray] = {}
        self._weight: dict[tuple, float] = {}
        self._pvec: dict[tuple, np.ndarray] = {}

    def sidx(self, Q: Cube) -> np.ndarray:
        k = Q.key()
        if k not in self._sidx:
            self._sidx[k] = self.sigma.indices_in(Q)
        return self._sidx[k]

    def oidx(self, Q: Cube) -> np.ndarray:
        k = Q.key()
        if k not in self._oidx:
            self._oidx[k] = self.omega.indices_in(Q)
        return self._oidx[k]

    def omega_weight(self, Q: Cube) -> float:
        """The omega-side factor of the piece score."""
        k = Q.key()
        if k not in self._weight:
            if self.mode == "corona":
                self._weight[k] = float(self.omega.weights[self.oidx(Q)].sum()) * energy_sq(Q, self.omega)
            else:
                self._weight[k] = second_moment(Q, self.omega)
        return self._weight[k]

    def poisson_contrib(self, Q: Cube) -> np.ndarray:
        """Per-sigma-atom contribution to P^alpha(Q, .), weights included."""
        k = Q.key()
        if k not in self._pvec:
            n = self.sigma.n
            s = Q.side_float
            c = np.asarray(Q.center_float())
            d = np.linalg.norm(self.sigma.points - c, axis=1)
            self._pvec[k] = self.sigma.weights * s / (s + d) ** (n + 1 - self.alpha)
        return self._pvec[k]


def _piece_score(ws: _EnergyWorkspace, Q: Cube, top_sidx: np.ndarray) -> float:
    """Score of a single subpartition piece relative to the current top.

    theorem face: (P(Q, restriction to top minus Q)/side)^2 * second moment;
    corona face:  |Q|_w E(Q, w)^2 * P(Q, full top restriction)^2.
    """
    wgt = ws.omega_weight(Q)
    if wgt == 0.0:
        return 0.0
    p = ws.poisson_contrib(Q)
    tail = float(p[top_sidx].sum())
    if ws.mode != "corona":
        tail -= float(p[ws.sidx(Q)].sum())
        return (tail / Q.side_float) ** 2 * wgt
    return tail * tail * wgt


def energy_constant(sigma: AtomicMeasure, omega: AtomicMeasure, alpha: float,
                    grid: GridSpec, direction: str = "forward",
                    mode: str = "theorem", depth: int | None = None,
                    tops: list[Cube] | None = None) -> EnergyResult:
    """Best constant in the chosen energy condition over dyadic subpartitions.

    mode="theorem": piece score (P(Q_r, tail within the top)/side)^2 times the
    second moment of the other weight on the piece.  mode="corona": piece
    score |Q_r|_w E(Q_r, w)^2 P(Q_r, full top restriction)^2.  The optimal
    subpartition per top is found bottom-up: a piece either stands or is
    replaced by its children, whichever scores higher; ``depth`` bounds how
    far below the top pieces may sit (None: window-limited).
    """
    if direction == "dual":
        return energy_constant(omega, sigma, alpha, grid, direction="forward",
                               mode=mode, depth=depth, tops=tops)
    if direction != "forward":
        raise ValueError("direction must be 'forward' or 'dual'")
    if mode not in ("theorem", "corona"):
        raise ValueError("mode must be 'theorem' or 'corona'")
    ws = _EnergyWorkspace(sigma, omega, alpha, mode)
    if tops is None:
        tops = default_cube_enumerator(grid, sigma, omega)
    best = EnergyResult(0.0, None)
    best_sq = 0.0
    for top in tops:
        sidx = ws.sidx(top)
        ms = float(sigma.weights[sidx].sum()) if sidx.size else 0.0
        if ms <= 0:
            continue

        def dp(Q: Cube, d: int | None) -> tuple[float, list[Cube]]:
            if ws.oidx(Q).size < 2:
                return 0.0, []
            own = _piece_score(ws, Q, sidx)
            if (d is not None and d <= 0) or Q.level - 1 < grid.k_min:
                return (own, [Q]) if own > 0 else (0.0, [])
            tot, parts = 0.0, []
            for child in Q.children():
                v, p = dp(child, None if d is None else d - 1)
                tot += v
                parts.extend(p)
            if own >= tot:
                return (own, [Q]) if own > 0 else (0.0, [])
            return tot, parts

        val, parts = dp(top, depth)
        if val / ms > best_sq:
            best_sq = val / ms
            best = EnergyResult(float(np.sqrt(best_sq)), top, parts)
    return best


def energy_partition_value(top: Cube, pieces: list[Cube], sigma: AtomicMeasure,
                           omega: AtomicMeasure, alpha: float,
                           mode: str = "theorem") -> float:
    """Re-evaluate a given subpartition of ``top`` (witness reproduction)."""
    ws = _EnergyWorkspace(sigma, omega, alpha, mode)
    sidx = ws.sidx(top)
    return sum(_piece_score(ws, Q, sidx) for Q in pieces)


# ---------------------------------------------------------------------------
# adapted families and functional-energy quantities


@dataclass
class AdaptedReport:
    ok: bool
    violations: list[str]
    overlap: int


def maximal_cubes(cubes) -> list[Cube]:
    cubes = list(cubes)
    out = []
    for q in cubes:
        if not any(other is not q and other.contains_cube(q) for other in cubes):
            out.append(q)
    return out


def f_adapted_check(tree_cubes, families: dict, coefficient_maps: dict | None = None,
                    r: int | None = None, eps: float | None = None) -> AdaptedReport:
    """Verify the adapted-family conditions for collections J(F) under the
    stopping cubes F.

    Checks: (1) every J in J(F) is deeply embedded in F, and the supplied
    coefficients (if any) are nonnegative and supported inside J(F);
    (2) the families are pairwise disjoint; (3) reports the maximal overlap
    count of maximal cubes straddling any intermediate cube.
    """
    violations: list[str] = []
    families = {F: list(Js) for F, Js in families.items()}
    for F in families:
        if F not in set(tree_cubes):
            violations.append(f"family root {F!r} is not a stopping cube")
    for F, Js in families.items():
        for J in Js:
            if not deeply_embedded(J, F, r=r, eps=eps):
                violations.append(f"{J!r} is not deeply embedded in {F!r}")
    seen: dict[tuple, object] = {}
    for F, Js in families.items():
        for J in Js:
            k = J.key()
            if k in seen and seen[k] != F:
                violations.append(f"{J!r} appears under two stopping cubes")
            seen[k] = F
    if coefficient_maps is not None:
        for F, cmap in coefficient_maps.items():
            allowed = {J.key() for J in families.get(F, [])}
            for (cube, label), coef in cmap.entries.items():
                if coef < 0:
                    violations.append(f"negative coefficient at {cube!r}")
                if abs(coef) > 0 and cube.key() not in allowed:
                    violations.append(f"coefficient outside the family at {cube!r}")
    # overlap bound for straddling pairs
    pairs = []
    for F, Js in families.items():
        for Jstar in maximal_cubes(Js):
            pairs.append((F, Jstar))
    overlap = 0
    candidates: list[Cube] = []
    for F, Jstar in pairs:
        q = Jstar
        while True:
            candidates.append(q)
            if q == F or q.level >= F.level or q.level + 1 > q.grid.k_max:
                break
            q = q.parent()
    seen_keys = set()
    for I in candidates:
        if I.key() in seen_keys:
            continue
        seen_keys.add(I.key())
        bucket = [Jstar for (F, Jstar) in pairs
                  if I.contains_cube(Jstar) and F.contains_cube(I)]
        for J0 in bucket:
            count = sum(1 for J in bucket if J.contains_cube(J0))
            overlap = max(overlap, count)
    return AdaptedReport(ok=not violations, violations=violations, overlap=overlap)


def functional_energy_mu(families: dict, omega: AtomicMeasure) -> HalfSpaceAtomicMeasure:
    """The half-space measure carrying, over each maximal family cube, the
    squared norm of the coordinate projection onto the family below it,
    normalised by the cube side."""
    pts, heights, weights = [], [], []
    n = omega.n
    for F, Js in families.items():
        Js = list(Js)
        for Jstar in maximal_cubes(Js):
            below = [J for J in Js if Jstar.contains_cube(J)]
            w = projection_norm_sq(below, omega) / (Jstar.side_float ** 2)
            pts.append(np.asarray(Jstar.center_float()))
            heights.append(Jstar.side_float)
            weights.append(w)
    if not pts:
        return HalfSpaceAtomicMeasure.empty(n)
    return HalfSpaceAtomicMeasure(np.vstack(pts), np.asarray(heights), np.asarray(weights))


def poisson_testing_check(mu_half: HalfSpaceAtomicMeasure, sigma: AtomicMeasure,
                          I: Cube, alpha: float,
                          a2_tailless: float, a2_two_tailed: float,
                          energy: float) -> dict:
    """Raw two-sided quantities of the two half-space testing inequalities.

    Returns the left/right sides; callers decide which constant multiples to
    assert.
    """
    sigma_I = sigma.restrict_inside(I)
    lhs1 = 0.0
    for k in range(len(mu_half)):
        v = halfspace_poisson(sigma_I, mu_half.points[k], float(mu_half.heights[k]), alpha)
        lhs1 += v * v * float(mu_half.weights[k])
    rhs1 = (a2_tailless + energy ** 2) * sigma.mass(I)
    lhs2 = 0.0
    for i in range(len(sigma)):
        v = dual_halfspace_poisson(mu_half, sigma.points[i], alpha, I)
        lhs2 += v * v * float(sigma.weights[i])
    rhs2 = (a2_two_tailed + energy * np.sqrt(a2_two_tailed)) * mu_half.t2_integral_box(I)
    return {"lhs1": lhs1, "rhs1": rhs1, "lhs2": lhs2, "rhs2": rhs2}


# ---------------------------------------------------------------------------
# the merged constant report


@dataclass
class ConstantReport:
    A2: float
    A2_star: float
    A2_tailless: float
    T: float
    T_star: float
    E: float
    E_star: float
    witnesses: dict = field(default_factory=dict)

    def package(self) -> float:
        """The additive combination entering the norm comparison."""
        return (np.sqrt(self.A2 + self.A2_star) + self.T + self.T_star
                + self.E + self.E_star)

    def to_json(self) -> dict:
        out = {
            "A2": self.A2, "A2_star": self.A2_star, "A2_tailless": self.A2_tailless,
            "T": self.T, "T_star": self.T_star, "E": self.E, "E_star": self.E_star,
        }
        out["witnesses"] = self.witnesses
        return out


def _cube_json(Q: Cube | None) -> dict | None:
    if Q is None:
        return None
    return {"level": Q.level, "index": list(Q.index)}


def compute_constants(sigma: AtomicMeasure, omega: AtomicMeasure, alpha: float,
                      grid: GridSpec, kernel: KernelSpec,
                      energy_depth: int | None = None) -> ConstantReport:
    """All condition constants of the pair plus witnesses, one enumeration."""
    cubes = default_cube_enumerator(grid, sigma, omega)
    a2, a2_w = a2_constant(sigma, omega, alpha, grid, "two_tailed", "forward", cubes)
    a2s, a2s_w = a2_constant(sigma, omega, alpha, grid, "two_tailed", "dual", cubes)
    a2t, a2t_w = a2_constant(sigma, omega, alpha, grid, "tailless", "forward", cubes)
    T, T_w = testing_constant(sigma, omega, kernel, "forward", cubes=cubes)
    Ts, Ts_w = testing_constant(sigma, omega, kernel, "dual", cubes=cubes)
    E = energy_constant(sigma, omega, alpha, grid, "forward", depth=energy_depth, tops=cubes)
    Es = energy_constant(sigma, omega, alpha, grid, "dual", depth=energy_depth, tops=cubes)
    witnesses = {
        "A2": _cube_json(a2_w), "A2_star": _cube_json(a2s_w),
        "A2_tailless": _cube_json(a2t_w),
        "T": _cube_json(T_w), "T_star": _cube_json(Ts_w),
        "E": {"top": _cube_json(E.witness_top),
              "pieces": [_cube_json(p) for p in E.witness_partition]},
        "E_star": {"top": _cube_json(Es.witness_top),
                   "pieces": [_cube_json(p) for p in Es.witness_partition]},
    }
    return ConstantReport(A2=a2, A2_star=a2s, A2_tailless=a2t, T=T, T_star=Ts,
                          E=E.value, E_star=Es.value, witnesses=witnesses)

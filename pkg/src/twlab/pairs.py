"""Admissible cube-pair collections, the tent measure they induce, the size
functional, its bottom-up contraction decomposition, straddling bounds, and
the exact stopping bilinear form.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .grid import Cube, deeply_embedded
from .haar import expectation, haar_system, martingale_difference, x_hat
from .kernels import KernelSpec, spectral_norm
from .measures import AtomicMeasure


@dataclass(frozen=True)
class PairCollection:
    """Pairs (I, J) with J deeply inside I inside the root A, closed along
    vertical geodesics in the first coordinate."""

    root: Cube
    pairs: frozenset

    @classmethod
    def from_pairs(cls, root: Cube, pairs) -> "PairCollection":
        return cls(root=root, pairs=frozenset((I, J) for I, J in pairs))

    def __len__(self) -> int:
        return len(self.pairs)

    @property
    def pi1(self) -> list[Cube]:
        return sorted({I for I, _ in self.pairs}, key=lambda q: (-q.level, q.index))

    @property
    def pi2(self) -> list[Cube]:
        return sorted({J for _, J in self.pairs}, key=lambda q: (-q.level, q.index))

    def all_cubes(self) -> list[Cube]:
        return sorted({q for p in self.pairs for q in p}, key=lambda q: (-q.level, q.index))

    def pi2_under(self, K: Cube) -> list[Cube]:
        return [J for J in self.pi2 if K.contains_cube(J)]

    def admissibility_violations(self, r: int | None = None,
                                 eps: float | None = None) -> list[str]:
        out = []
        for I, J in self.pairs:
            if not self.root.contains_cube(I):
                out.append(f"{I!r} is not inside the root")
            if not deeply_embedded(J, I, r=r, eps=eps):
                out.append(f"{J!r} is not deeply embedded in {I!r}")
        by_j: dict[Cube, list[Cube]] = {}
        for I, J in self.pairs:
            by_j.setdefault(J, []).append(I)
        for J, Is in by_j.items():
            iset = {I.key() for I in Is}
            for I1 in Is:
                for I2 in Is:
                    if I1.level < I2.level and I2.contains_cube(I1):
                        q = I1
                        while q.level + 1 < I2.level:
                            q = q.parent()
                            if q.key() not in iset:
                                out.append(
                                    f"geodesic gap between {I1!r} and {I2!r} at {q!r}")
        return out


def closed_pair_collection(root: Cube, pairs) -> PairCollection:
    """Close a raw pair set along vertical geodesics (same J, nested I's)."""
    by_j: dict[Cube, set[Cube]] = {}
    for I, J in pairs:
        by_j.setdefault(J, set()).add(I)
    closed = set()
    for J, Is in by_j.items():
        iset = set(Is)
        for I1 in Is:
            for I2 in Is:
                if I1.level < I2.level and I2.contains_cube(I1):
                    q = I1
                    while q.level < I2.level:
                        q = q.parent()
                        iset.add(q)
        for I in iset:
            closed.add((I, J))
    return PairCollection.from_pairs(root, closed)


# ---------------------------------------------------------------------------
# tent measure and size functional


class TentMeasure:
    """Point masses x_hat(J)^2 at (center(J), side(J)) for J in the second
    projection; the mass of a tent over K is the sum over J inside K."""

    def __init__(self, collection: PairCollection, omega: AtomicMeasure):
        self.weights: dict[Cube, float] = {
            J: x_hat(J, omega) ** 2 for J in collection.pi2
        }

    def restricted(self, js) -> "TentMeasure":
        t = object.__new__(TentMeasure)
        keep = set(js)
        t.weights = {J: w for J, w in self.weights.items() if J in keep}
        return t

    def total(self) -> float:
        return sum(self.weights.values())

    def tent_mass(self, K: Cube) -> float:
        return sum(w for J, w in self.weights.items() if K.contains_cube(J))


def _poisson_tail_ratio_sq(K: Cube, root: Cube, sigma: AtomicMeasure, alpha: float) -> float:
    """(P(K, sigma restricted to root minus K) / side(K))^2."""
    from .measures import poisson
    tail = sigma.restrict_between(root, K)
    if len(tail) == 0:
        return 0.0
    return (poisson(K, tail, alpha, "P") / K.side_float) ** 2


def size_functional(collection: PairCollection, sigma: AtomicMeasure,
                    omega: AtomicMeasure, alpha: float,
                    tent: TentMeasure | None = None) -> tuple[float, Cube | None]:
    """The squared size: sup over first-projection cubes I of
    (1/|I|_sigma) (P(I, tail)/side)^2 * tent mass over I.  Zero-mass cubes
    are skipped."""
    if tent is None:
        tent = TentMeasure(collection, omega)
    best, witness = 0.0, None
    for I in collection.pi1:
        ms = sigma.mass(I)
        if ms <= 0:
            continue
        val = _poisson_tail_ratio_sq(I, collection.root, sigma, alpha) * tent.tent_mass(I) / ms
        if val > best:
            best, witness = val, I
    return best, witness


# ---------------------------------------------------------------------------
# the bottom-up decomposition


@dataclass
class SizeLemmaResult:
    big: PairCollection
    smalls: list[PairCollection]
    leftover: PairCollection
    generations: list[list[Cube]]
    size_before_sq: float
    small_sizes_sq: list[float] = field(default_factory=list)

    def partition_ok(self, original: PairCollection) -> bool:
        union: set = set(self.big.pairs) | set(self.leftover.pairs)
        count = len(self.big.pairs) + len(self.leftover.pairs)
        for s in self.smalls:
            union |= set(s.pairs)
            count += len(s.pairs)
        return union == set(original.pairs) and count == len(original.pairs)


def size_lemma_decompose(collection: PairCollection, sigma: AtomicMeasure,
                         omega: AtomicMeasure, alpha: float, eps: float) -> SizeLemmaResult:
    """Split a pair collection into a big part and small parts whose size
    contracts by ``eps``, by a bottom-up stopping construction over the tent
    measure with generation ratio 1 + eps.

    Pairs whose first cube lies in no stopping corona (or whose second cube
    sits above the first's generation) are returned in ``leftover``; they are
    part of the partition but carry no contraction claim.
    """
    if not (0.0 < eps < 1.0):
        raise ValueError("eps must lie in (0, 1)")
    root = collection.root
    tent = TentMeasure(collection, omega)
    size_sq, _ = size_functional(collection, sigma, omega, alpha, tent)
    if size_sq == 0.0 or len(collection) == 0:
        return SizeLemmaResult(
            big=PairCollection.from_pairs(root, []),
            smalls=[collection],
            leftover=PairCollection.from_pairs(root, []),
            generations=[], size_before_sq=0.0, small_sizes_sq=[0.0])

    rho = 1.0 + eps
    all_cubes = collection.all_cubes()

    def psi(K: Cube) -> float:
        ms = sigma.mass(K)
        if ms <= 0:
            return 0.0
        return _poisson_tail_ratio_sq(K, root, sigma, alpha) * tent.tent_mass(K) / ms

    # generation 0: minimal cubes whose local ratio reaches eps * size
    qualifying = [K for K in all_cubes if psi(K) >= eps * size_sq]
    gen0 = [K for K in qualifying
            if not any(L is not K and K.contains_cube(L) for L in qualifying)]
    generations = [gen0]
    gen_of: dict[Cube, int] = {K: 0 for K in gen0}
    members: list[Cube] = list(gen0)
    while True:
        prev = generations[-1]
        cand = []
        for L in all_cubes:
            if L in gen_of:
                continue
            below = [Lp for Lp in prev if L.contains_cube(Lp)]
            if not below:
                continue
            if tent.tent_mass(L) >= rho * sum(tent.tent_mass(Lp) for Lp in below):
                cand.append(L)
        nxt = [L for L in cand
               if not any(M is not L and L.contains_cube(M) for M in cand)]
        if not nxt:
            break
        for L in nxt:
            gen_of[L] = len(generations)
        generations.append(nxt)
        members.extend(nxt)

    def corona_top(Q: Cube) -> Cube | None:
        best = None
        for L in members:
            if L.contains_cube(Q) and (best is None or best.contains_cube(L)):
                best = L
        return best

    big, leftover = [], []
    small_by_top: dict[Cube, list] = {}
    for I, J in collection.pairs:
        LI, LJ = corona_top(I), corona_top(J)
        if LI is None or LJ is None:
            leftover.append((I, J))
            continue
        t = gen_of[LI] - gen_of[LJ]
        if t < 0:
            leftover.append((I, J))
        elif t >= 1:
            big.append((I, J))
        elif I == LI:
            big.append((I, J))
        else:
            small_by_top.setdefault(LI, []).append((I, J))

    smalls = [PairCollection.from_pairs(root, ps)
              for _, ps in sorted(small_by_top.items(),
                                  key=lambda kv: (-kv[0].level, kv[0].index))]
    small_sizes = [size_functional(s, sigma, omega, alpha)[0] for s in smalls]
    return SizeLemmaResult(
        big=PairCollection.from_pairs(root, big),
        smalls=smalls,
        leftover=PairCollection.from_pairs(root, leftover),
        generations=generations,
        size_before_sq=size_sq,
        small_sizes_sq=small_sizes,
    )


# ---------------------------------------------------------------------------
# straddling


def straddles(collection: PairCollection, subpartition: list[Cube]) -> dict:
    """Whether every pair has a member of the subpartition on the geodesic
    from J to I, plus the two refinement cases used by the straddling bound.
    """
    for i, S1 in enumerate(subpartition):
        for S2 in subpartition[i + 1:]:
            if S1.contains_cube(S2) or S2.contains_cube(S1):
                raise ValueError("the straddling family must be pairwise disjoint")
    holds = True
    case_in = True
    case_out = True
    for I, J in collection.pairs:
        on_geodesic = [S for S in subpartition
                       if S.contains_cube(J) and I.contains_cube(S)]
        if not on_geodesic:
            holds = False
        for S in subpartition:
            if S.contains_cube(J) and not deeply_embedded(J, S):
                case_in = False
            if I.contains_cube(S) and not deeply_embedded(S, I):
                case_out = False
    return {"holds": holds, "case_in": case_in, "case_out": case_out}


def eta(collection: PairCollection, subpartition: list[Cube], sigma: AtomicMeasure,
        omega: AtomicMeasure, alpha: float, which: str,
        tent: TentMeasure | None = None) -> float:
    """The straddling bounds.

    which="out": sup over S of (1/|S|_sigma)(P(S, tail)/side)^2 times the
    tent mass over S — never above the size of the collection when the
    family is drawn from the first projection.  which="in": the Poisson
    factor moves inside the sum over second-projection cubes below S.
    Tent weights are reused for both so the comparison with the size
    functional is exact.
    """
    if tent is None:
        tent = TentMeasure(collection, omega)
    best = 0.0
    for S in subpartition:
        ms = sigma.mass(S)
        if ms <= 0:
            continue
        if which == "out":
            val = _poisson_tail_ratio_sq(S, collection.root, sigma, alpha) \
                * tent.tent_mass(S) / ms
        elif which == "in":
            tail = sigma.restrict_between(collection.root, S)
            val = 0.0
            for J in collection.pi2_under(S):
                w = tent.weights.get(J, 0.0)
                if w == 0.0 or len(tail) == 0:
                    continue
                from .measures import poisson
                val += (poisson(J, tail, alpha, "P") / J.side_float) ** 2 * w
            val /= ms
        else:
            raise ValueError("which must be 'in' or 'out'")
        best = max(best, val)
    return float(np.sqrt(best))


# ---------------------------------------------------------------------------
# the stopping form


def _pair_constant(f: np.ndarray, sigma: AtomicMeasure, I: Cube) -> float:
    """The average over I of the one-level difference at I's parent."""
    parent = I.parent()
    return expectation(sigma, f, I) - expectation(sigma, f, parent)


def stopping_form(collection: PairCollection, f: np.ndarray, g: np.ndarray,
                  sigma: AtomicMeasure, omega: AtomicMeasure, kernel: KernelSpec):
    """Exact value of the stopping bilinear form: sum over pairs of the
    constant of the f-difference on I times the pairing of the outside
    potential with the g-difference at J."""
    f = np.asarray(f, dtype=float)
    g = np.asarray(g, dtype=float)
    root = collection.root
    ncomp = kernel.n_components
    acc = np.zeros(ncomp)
    pot_cache: dict[tuple, np.ndarray] = {}
    dg_cache: dict[tuple, np.ndarray] = {}
    for I, J in collection.pairs:
        cI = _pair_constant(f, sigma, I)
        if cI == 0.0:
            continue
        kJ = J.key()
        if kJ not in dg_cache:
            dg_cache[kJ] = martingale_difference(g, omega, J)
        dg = dg_cache[kJ]
        kI = I.key()
        if kI not in pot_cache:
            outside = np.zeros(len(sigma))
            outside[sigma.indices_in(root)] = 1.0
            outside[sigma.indices_in(I)] = 0.0
            pot_cache[kI] = kernel.apply(sigma, outside, omega.points)
        pot = pot_cache[kI]
        pair_val = (omega.weights * dg) @ pot
        acc += cI * pair_val
    return float(acc[0]) if ncomp == 1 else acc


def stopping_form_norm(collection: PairCollection, sigma: AtomicMeasure,
                       omega: AtomicMeasure, kernel: KernelSpec) -> float:
    """Norm of the stopping form as the largest singular value of its matrix
    in Haar coordinates: rows over (J, label, component), columns over
    (parent of I, label)."""
    if len(collection) == 0:
        return 0.0
    root = collection.root
    parents = sorted({I.parent() for I in collection.pi1},
                     key=lambda q: (-q.level, q.index))
    cols = []
    for P in parents:
        for h in haar_system(sigma, P):
            cols.append((P, h))
    rows = []
    rows_by_cube: dict[tuple, list[int]] = {}
    row_weights: list[np.ndarray] = []
    for J in collection.pi2:
        for h in haar_system(omega, J):
            rows_by_cube.setdefault(J.key(), []).append(len(rows))
            row_weights.append(omega.weights * h.evaluate(omega.points))
            rows.append((J, h))
    if not rows or not cols:
        return 0.0
    ncomp = kernel.n_components
    pot_cache: dict[tuple, np.ndarray] = {}

    def potential(I: Cube) -> np.ndarray:
        kI = I.key()
        if kI not in pot_cache:
            outside = np.zeros(len(sigma))
            outside[sigma.indices_in(root)] = 1.0
            outside[sigma.indices_in(I)] = 0.0
            pot_cache[kI] = kernel.apply(sigma, outside, omega.points)
        return pot_cache[kI]

    pairs_by_parent: dict[tuple, list] = {}
    for I, J in collection.pairs:
        pairs_by_parent.setdefault(I.parent().key(), []).append((I, J))
    M = np.zeros((len(rows) * ncomp, len(cols)))
    for cidx, (P, hb) in enumerate(cols):
        plist = pairs_by_parent.get(P.key(), [])
        if not plist:
            continue
        child_value = {c.key(): v for c, v in zip(hb.children, hb.values)}
        for I, J in plist:
            hval = child_value.get(I.key(), 0.0)
            if hval == 0.0:
                continue
            pot = potential(I)
            for ridx in rows_by_cube.get(J.key(), []):
                coefs = row_weights[ridx] @ pot
                for comp in range(ncomp):
                    M[ridx * ncomp + comp, cidx] += hval * coefs[comp]
    return spectral_norm(M)

"""Stopping-time machinery: general stopping data, the average-ratio
construction, corona iteration, energy coronas, bounded-fluctuation
splitting, and the near/disjoint/far splitting of two stopping trees.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .grid import Cube, GridSpec, deeply_embedded, is_good
from .haar import corona_projection, energy_sq, expectation
from .measures import AtomicMeasure, poisson

AVG_TOL = 1e-12


def _sort_members(cubes) -> tuple[Cube, ...]:
    return tuple(sorted(set(cubes), key=lambda q: (-q.level, q.index)))


@dataclass
class StoppingData:
    """A stopping tree: distinguished root, member cubes, stopping values,
    and the constant the data properties hold with."""

    root: Cube
    cubes: tuple[Cube, ...]
    alpha: dict
    C0: float

    def __post_init__(self):
        members = list(self.cubes)
        if self.root not in members:
            members.append(self.root)
        self.cubes = _sort_members(members)
        self.alpha = {q: float(self.alpha.get(q, 0.0)) for q in self.cubes}

    def __len__(self) -> int:
        return len(self.cubes)

    def assign(self, Q: Cube) -> Cube | None:
        """The owning member: smallest stopping cube containing Q."""
        best = None
        for F in self.cubes:
            if F.contains_cube(Q) and (best is None or best.contains_cube(F)):
                best = F
        return best

    def tree_parent(self, F: Cube) -> Cube | None:
        best = None
        for G in self.cubes:
            if G != F and G.contains_cube(F) and (best is None or best.contains_cube(G)):
                best = G
        return best

    def tree_children(self, F: Cube) -> list[Cube]:
        return [G for G in self.cubes if self.tree_parent(G) == F]

    def generations(self, F: Cube) -> dict[int, list[Cube]]:
        gens = {0: [F]}
        m = 0
        while gens[m]:
            nxt = []
            for G in gens[m]:
                nxt.extend(self.tree_children(G))
            m += 1
            gens[m] = nxt
        del gens[m]
        return gens

    def corona_support_cubes(self, F: Cube, mu: AtomicMeasure) -> list[Cube]:
        """Cubes of the corona of F relevant for differences of ``mu``:
        the walk cuts at stopping members strictly below F and prunes
        cubes holding fewer than two atoms."""
        members = {q.key() for q in self.cubes}
        out = []
        stack = [F]
        while stack:
            q = stack.pop()
            if q != F and q.key() in members:
                continue
            if len(mu.indices_in(q)) < 2:
                continue
            out.append(q)
            if q.level - 1 >= q.grid.k_min:
                stack.extend(reversed(q.children()))
        return out

    def corona_members_below(self, I: Cube) -> list[Cube]:
        return [F for F in self.cubes if I.contains_cube(F)]

    def to_json(self, sigma: AtomicMeasure | None = None) -> dict:
        def node(F):
            kids = self.tree_children(F)
            d = {
                "cube": {"level": F.level, "index": list(F.index)},
                "alpha": self.alpha[F],
                "children": [node(k) for k in kids],
            }
            if sigma is not None:
                d["mass"] = sigma.mass(F)
            return d
        return {"C0": self.C0, "tree": node(self.root)}


# ---------------------------------------------------------------------------
# average-ratio stopping times


def cz_stopping_times(f: np.ndarray, sigma: AtomicMeasure, grid: GridSpec,
                      root: Cube, ratio: float = 4.0) -> StoppingData:
    """Stopping cubes by the average-ratio rule: the children of a stopping
    cube F are the maximal Q inside F whose sigma-average of |f| exceeds
    ``ratio`` times that of F.  Stopping values are ratio * average, which
    bounds every corona average by construction."""
    if ratio <= 1.0:
        raise ValueError("the stopping ratio must exceed 1")
    f = np.asarray(f, dtype=float)
    if sigma.mass(root) <= 0:
        raise ValueError("the root must carry sigma mass")
    absf = np.abs(f)

    def avg(Q: Cube) -> float:
        return expectation(sigma, absf, Q)

    members = [root]
    queue = [root]
    while queue:
        F = queue.pop()
        cut = ratio * avg(F)
        stack = []
        if F.level - 1 >= grid.k_min:
            stack.extend(F.children())
        while stack:
            q = stack.pop()
            idx = sigma.indices_in(q)
            if idx.size == 0:
                continue
            if avg(q) > cut:
                members.append(q)
                queue.append(q)
                continue
            if q.level - 1 >= grid.k_min and idx.size >= 2:
                stack.extend(q.children())
    alpha = {F: ratio * avg(F) for F in members}
    sd = StoppingData(root=root, cubes=tuple(members), alpha=alpha, C0=4.0)
    sd.C0 = computed_stopping_constant(sd, f, sigma)
    return sd


def computed_stopping_constant(sd: StoppingData, f: np.ndarray,
                               sigma: AtomicMeasure) -> float:
    """Smallest C0 >= 4 for which the four stopping-data properties hold."""
    f = np.asarray(f, dtype=float)
    norm_sq = float(np.dot(sigma.weights, f * f))
    carleson = 0.0
    for F in sd.cubes:
        mf = sigma.mass(F)
        if mf <= 0:
            continue
        tot = sum(sigma.mass(G) for G in sd.corona_members_below(F))
        carleson = max(carleson, tot / mf)
    quad = sum(sd.alpha[F] ** 2 * sigma.mass(F) for F in sd.cubes)
    c3 = np.sqrt(quad / norm_sq) if norm_sq > 0 else 0.0
    return float(max(4.0, carleson, c3))


def quasiorthogonality_constant(C0: float) -> float:
    """Rigorous bound for the quasiorthogonal property derived from the
    Carleson property alone: generation masses decay like C0 (1 - 1/C0)^m,
    and Cauchy-Schwarz over generations gives
    (1 + 2 sqrt(C0) q/(1-q)) C0^2 with q = sqrt(1 - 1/C0)."""
    q = np.sqrt(1.0 - 1.0 / C0)
    return float((1.0 + 2.0 * np.sqrt(C0) * q / (1.0 - q)) * C0 * C0)


def verify_stopping_data(sd: StoppingData, f: np.ndarray, sigma: AtomicMeasure) -> dict:
    """Literal checks of the four properties, the generation decay, and the
    quasiorthogonal inequality with the constant derived from C0."""
    f = np.asarray(f, dtype=float)
    absf = np.abs(f)
    norm_sq = float(np.dot(sigma.weights, f * f))
    failures: list[str] = []

    # (1) corona averages bounded by the stopping value
    avg_ratio = 0.0
    for F in sd.cubes:
        aF = sd.alpha[F]
        for I in sd.corona_support_cubes(F, sigma):
            e = expectation(sigma, absf, I)
            if aF > 0:
                avg_ratio = max(avg_ratio, e / aF)
            elif e > 0:
                failures.append(f"average {e} in a zero-value corona at {I!r}")
    if avg_ratio > 1.0 + AVG_TOL:
        failures.append(f"corona average exceeds the stopping value (ratio {avg_ratio})")

    # (2) Carleson
    carleson = 0.0
    for F in sd.cubes:
        mf = sigma.mass(F)
        if mf <= 0:
            continue
        carleson = max(carleson, sum(sigma.mass(G) for G in sd.corona_members_below(F)) / mf)
    if carleson > sd.C0 * (1 + AVG_TOL):
        failures.append(f"Carleson sum {carleson} exceeds C0 {sd.C0}")

    # (3) quadratic bound
    quad = sum(sd.alpha[F] ** 2 * sigma.mass(F) for F in sd.cubes)
    if quad > sd.C0 ** 2 * norm_sq * (1 + AVG_TOL):
        failures.append(f"quadratic sum {quad} exceeds C0^2 norm^2")

    # (4) monotone stopping values down the tree
    for F in sd.cubes:
        p = sd.tree_parent(F)
        if p is not None and sd.alpha[p] > sd.alpha[F] * (1 + AVG_TOL):
            failures.append(f"stopping value decreases from {p!r} to {F!r}")

    # generation decay with the constants implied by C0
    theta = 1.0 - 1.0 / sd.C0
    decay_ok = True
    for F in sd.cubes:
        mf = sigma.mass(F)
        if mf <= 0:
            continue
        for m, gen in sd.generations(F).items():
            if m == 0:
                continue
            s_m = sum(sigma.mass(G) for G in gen)
            if s_m > sd.C0 * theta ** m * mf * (1 + AVG_TOL):
                decay_ok = False
    if not decay_ok:
        failures.append("generation masses do not decay at the derived rate")

    # quasiorthogonality
    stack = np.zeros(len(sigma))
    for F in sd.cubes:
        idx = sigma.indices_in(F)
        stack[idx] += sd.alpha[F]
    quasi = float(np.dot(sigma.weights, stack * stack))
    c0p = quasiorthogonality_constant(sd.C0)
    if quasi > c0p * norm_sq * (1 + AVG_TOL):
        failures.append(f"quasiorthogonal sum {quasi} exceeds {c0p} * norm^2")

    return {
        "ok": not failures,
        "failures": failures,
        "avg_ratio": avg_ratio,
        "carleson": carleson,
        "quad_ratio": quad / norm_sq if norm_sq > 0 else 0.0,
        "quasi_ratio": quasi / norm_sq if norm_sq > 0 else 0.0,
        "quasi_constant": c0p,
    }


def iterate_coronas(outer: StoppingData, inner: dict) -> StoppingData:
    """Merge per-corona stopping data into one tree for the original
    function: keep the inner cubes that live in their outer corona and whose
    stopping value is at least the outer one, and add every outer cube."""
    members: list[Cube] = []
    alpha: dict = {}
    for F in outer.cubes:
        members.append(F)
        alpha[F] = outer.alpha[F]
    for F, sub in inner.items():
        for K in sub.cubes:
            if K == F:
                alpha[F] = max(alpha.get(F, 0.0), outer.alpha[F], sub.alpha[K])
                continue
            if outer.assign(K) != F:
                continue
            if sub.alpha[K] >= outer.alpha[F]:
                members.append(K)
                alpha[K] = sub.alpha[K]
    merged = StoppingData(root=outer.root, cubes=tuple(members), alpha=alpha,
                          C0=outer.C0)
    return merged


# ---------------------------------------------------------------------------
# energy coronas


def m_partition(I: Cube, prune: AtomicMeasure, r: int | None = None,
                eps: float | None = None) -> list[Cube]:
    """Maximal good deeply-embedded subcubes of I, pruned to the support
    tree of ``prune`` (cubes without atoms carry no energy and are skipped)."""
    out = []
    stack = []
    if I.level - 1 >= I.grid.k_min:
        stack.extend(I.children())
    while stack:
        q = stack.pop()
        if len(prune.indices_in(q)) == 0:
            continue
        if deeply_embedded(q, I, r=r, eps=eps) and is_good(q, r=r, eps=eps):
            out.append(q)
            continue
        if q.level - 1 >= q.grid.k_min:
            stack.extend(reversed(q.children()))
    return out


def energy_trigger(I: Cube, S0: Cube, sigma: AtomicMeasure, omega: AtomicMeasure,
                   alpha: float, r: int | None = None, eps: float | None = None) -> float:
    """Sum over the maximal deeply-embedded partition of I of
    |J|_w E(J, w)^2 P(J, restriction of sigma to S0)^2."""
    sigma_S = sigma.restrict_inside(S0)
    total = 0.0
    for J in m_partition(I, omega, r=r, eps=eps):
        mw = omega.mass(J)
        if mw <= 0:
            continue
        e2 = energy_sq(J, omega)
        if e2 == 0.0:
            continue
        total += mw * e2 * poisson(J, sigma_S, alpha, "P") ** 2
    return total


def energy_corona(sigma: AtomicMeasure, omega: AtomicMeasure, alpha: float,
                  S0: Cube, energy_const: float, grid: GridSpec,
                  r: int | None = None, eps: float | None = None) -> StoppingData:
    """Energy stopping cubes below S0: the maximal charged proper subcubes
    whose trigger reaches 10 * energy_const^2 times their sigma mass,
    iterated stage by stage (each stage measures the trigger against its own
    top cube)."""
    members: list[Cube] = []
    stage = [S0]
    while stage:
        nxt = []
        for top in stage:
            found = []
            stack = []
            if top.level - 1 >= grid.k_min:
                stack.extend(top.children())
            while stack:
                q = stack.pop()
                if sigma.indices_in(q).size == 0 and omega.indices_in(q).size == 0:
                    continue
                ms = sigma.mass(q)
                if ms > 0:
                    trig = energy_trigger(q, top, sigma, omega, alpha, r=r, eps=eps)
                    if trig > 0 and trig >= 10.0 * energy_const ** 2 * ms:
                        found.append(q)
                        continue
                if q.level - 1 >= grid.k_min:
                    stack.extend(reversed(q.children()))
            members.extend(found)
            nxt.extend(found)
        stage = nxt
    return StoppingData(root=S0, cubes=tuple([S0] + members),
                        alpha={q: 0.0 for q in [S0] + members}, C0=2.0)


def stopping_energy_sq(tree: StoppingData, S: Cube, sigma: AtomicMeasure,
                       omega: AtomicMeasure, alpha: float,
                       r: int | None = None, eps: float | None = None) -> float:
    """sup over charged corona cubes I of trigger(I; S) / |I|_sigma."""
    members = {q.key() for q in tree.cubes}
    best = 0.0
    stack = [S]
    while stack:
        q = stack.pop()
        if q != S and q.key() in members:
            continue
        if sigma.indices_in(q).size == 0 and omega.indices_in(q).size == 0:
            continue
        ms = sigma.mass(q)
        if ms > 0:
            trig = energy_trigger(q, S, sigma, omega, alpha, r=r, eps=eps)
            best = max(best, trig / ms)
        if q.level - 1 >= q.grid.k_min:
            stack.extend(reversed(q.children()))
    return best


# ---------------------------------------------------------------------------
# bounded fluctuation


@dataclass
class GBFReport:
    ok: bool
    family: list[Cube]
    violations: list[str] = field(default_factory=list)


def gbf_check(h: np.ndarray, sigma: AtomicMeasure, K: Cube, gamma: float,
              require_mean_zero: bool = False) -> GBFReport:
    """Greedy membership test for bounded fluctuation on K.

    Recovers the family as the maximal subcubes where the sigma-average of
    |h| exceeds gamma (unique for gamma > 1), then checks that h is constant
    of modulus > gamma on each member, vanishes outside the family, and has
    averages at most 1 on every cube strictly containing a member.
    """
    if gamma <= 1.0:
        raise ValueError("the fluctuation threshold gamma must exceed 1")
    h = np.asarray(h, dtype=float)
    violations: list[str] = []
    absh = np.abs(h)
    family: list[Cube] = []
    stack = [K]
    while stack:
        q = stack.pop()
        idx = sigma.indices_in(q)
        if idx.size == 0:
            continue
        if expectation(sigma, absh, q) > gamma:
            family.append(q)
            continue
        if q.level - 1 >= q.grid.k_min:
            stack.extend(reversed(q.children()))
    if K in family:
        # h is large on all of K; there is no complementary corona to test
        family = [K]
    covered = np.zeros(len(sigma), dtype=bool)
    for Kp in family:
        idx = sigma.indices_in(Kp)
        covered[idx] = True
        vals = h[idx]
        if np.abs(vals - vals[0]).max() > 1e-9 * max(1.0, np.abs(vals[0])):
            violations.append(f"not constant on {Kp!r}")
        if abs(vals[0]) <= gamma:
            violations.append(f"constant {vals[0]} not above gamma on {Kp!r}")
    kidx = sigma.indices_in(K)
    outside = kidx[~covered[kidx]]
    if np.any(absh[outside] > 0):
        violations.append("support leaks outside the recovered family")
    # averages on cubes strictly containing a member
    seen = set()
    for Kp in family:
        q = Kp
        while q != K:
            q = q.parent()
            if q.key() in seen:
                continue
            seen.add(q.key())
            if expectation(sigma, absh, q) > 1.0 + AVG_TOL:
                violations.append(f"average above 1 on {q!r}")
            if not K.contains_cube(q):
                violations.append(f"family member {Kp!r} escapes {K!r}")
                break
    if require_mean_zero:
        total = float(np.dot(sigma.weights[kidx], h[kidx]))
        if abs(total) > 1e-9 * max(1.0, float(np.dot(sigma.weights[kidx], absh[kidx]))):
            violations.append("mean over K is not zero")
    return GBFReport(ok=not violations, family=family, violations=violations)


def bounded_fluctuation_split(f: np.ndarray, sigma: AtomicMeasure,
                              tree: StoppingData, F: Cube, gamma: float) -> dict:
    """Split the corona projection of f at F into a bounded part and a part
    supported on the stopping children with large average jumps.

    part1 + part2 equals the projection on atoms; |part1| stays below
    (C0 gamma + gamma + 1) times the average of |f| on F; part2 normalised by
    (C0 + 1) times that average passes the fluctuation test at gamma.
    """
    f = np.asarray(f, dtype=float)
    C0 = tree.C0
    avgF = expectation(sigma, np.abs(f), F)
    eF = expectation(sigma, f, F)
    thr = (C0 * gamma + gamma + 1.0) * avgF
    proj = corona_projection(f, sigma, tree.corona_support_cubes(F, sigma))
    part2 = np.zeros(len(sigma))
    big = []
    for Fp in tree.tree_children(F):
        jump = expectation(sigma, f, Fp) - eF
        if abs(jump) > thr:
            big.append(Fp)
            part2[sigma.indices_in(Fp)] = jump
    part1 = proj - part2
    return {
        "part1": part1,
        "part2": part2,
        "projection": proj,
        "big_children": big,
        "bound": thr,
        "scale": (C0 + 1.0) * avgF,
    }


# ---------------------------------------------------------------------------
# parallel splitting of two trees


@dataclass
class ParallelSplit:
    near: list[tuple[Cube, Cube]]
    disjoint: list[tuple[Cube, Cube]]
    far: list[tuple[Cube, Cube]]

    def sizes(self) -> tuple[int, int, int]:
        return len(self.near), len(self.disjoint), len(self.far)


def _minimal_containing(tree: StoppingData, Q: Cube) -> Cube | None:
    return tree.assign(Q)


def parallel_split(treeF: StoppingData, treeG: StoppingData) -> ParallelSplit:
    """Partition of the member pairs into near / disjoint / far.

    Near pairs: one cube is the minimal member of the other family
    containing it.  Disjoint: empty intersection.  Far: the rest.
    """
    near, disjoint, far = [], [], []
    for F in treeF.cubes:
        minF_in_G = _minimal_containing(treeG, F)
        for G in treeG.cubes:
            if not (F.contains_cube(G) or G.contains_cube(F)):
                disjoint.append((F, G))
                continue
            if F.contains_cube(G) and _minimal_containing(treeF, G) == F:
                near.append((F, G))
            elif G.contains_cube(F) and minF_in_G == G:
                near.append((F, G))
            else:
                far.append((F, G))
    return ParallelSplit(near=near, disjoint=disjoint, far=far)


# ---------------------------------------------------------------------------
# the double-corona construction


def double_corona(f: np.ndarray, sigma: AtomicMeasure, omega: AtomicMeasure,
                  alpha: float, grid: GridSpec, root: Cube, ratio: float = 4.0,
                  energy_const: float | None = None,
                  r: int | None = None, eps: float | None = None) -> dict:
    """Average-ratio stopping times refined per corona by energy stopping
    cubes (with stopping value twice the outer one), merged into a single
    stopping tree for f."""
    from .conditions import energy_constant  # local import to avoid a cycle

    outer = cz_stopping_times(f, sigma, grid, root, ratio)
    if energy_const is None:
        energy_const = energy_constant(sigma, omega, alpha, grid, mode="corona").value
    inner: dict = {}
    for F in outer.cubes:
        et = energy_corona(sigma, omega, alpha, F, energy_const, grid, r=r, eps=eps)
        inner[F] = StoppingData(
            root=F, cubes=et.cubes,
            alpha={S: 2.0 * outer.alpha[F] for S in et.cubes}, C0=et.C0)
    merged = iterate_coronas(outer, inner)
    merged.C0 = computed_stopping_constant(merged, f, sigma)
    return {
        "outer": outer,
        "inner": inner,
        "merged": merged,
        "energy_const": energy_const,
    }

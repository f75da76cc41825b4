"""Fractional singular kernels, exact bilinear forms, operator norms, and
testing constants on pairs of atomic measures.

With disjoint atomic supports every operator application is a finite sum, so
the restricted-to-atoms operator is a finite matrix and its L2(sigma) ->
L2(omega) norm is a largest singular value; no truncation is needed
(``truncation`` exists to probe stability, the norm is nonincreasing in it).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import Cube, GridSpec, cubes_over_points
from .measures import AtomicMeasure, no_common_point_masses

SVD_CUTOFF = 512
POWER_TOL = 1e-10
POWER_MAXITER = 10_000


class SingularKernelError(ValueError):
    """Kernel evaluated on the diagonal x == y."""


class PowerIterationError(RuntimeError):
    def __init__(self, rayleigh: float, iterations: int):
        super().__init__(
            f"power iteration did not converge after {iterations} iterations; "
            f"last Rayleigh quotient {rayleigh!r}"
        )
        self.rayleigh = rayleigh
        self.iterations = iterations


_FAMILIES = ("hilbert", "riesz", "riesz_vector", "cauchy")


@dataclass(frozen=True)
class KernelSpec:
    """A concrete fractional kernel: family, dimension, order, truncation.

    Families: ``hilbert`` (n=1, alpha=0, K(x,y) = 1/(y-x)); ``riesz`` with a
    ``component`` j (K_j(x,y) = (x_j - y_j)/|x-y|^(n+1-alpha)); ``riesz_vector``
    (all n components); ``cauchy`` (n=2, alpha=1, the vector (R_1, -R_2)).
    Contributions with |x-y| <= truncation are dropped.
    """

    family: str
    n: int
    alpha: float
    component: int | None = None
    truncation: float = 0.0

    def __post_init__(self):
        if self.family not in _FAMILIES:
            raise ValueError(f"unknown kernel family {self.family!r}")
        if self.family == "hilbert" and (self.n != 1 or self.alpha != 0.0):
            raise ValueError("the Hilbert kernel requires n=1, alpha=0")
        if self.family == "cauchy" and (self.n != 2 or self.alpha != 1.0):
            raise ValueError("the Cauchy kernel requires n=2, alpha=1")
        if self.family == "riesz" and not (self.component is not None
                                           and 0 <= self.component < self.n):
            raise ValueError("riesz needs a component index in [0, n)")
        if not (0 <= self.alpha < self.n):
            raise ValueError("alpha must lie in [0, n)")
        if self.truncation < 0:
            raise ValueError("truncation must be nonnegative")

    # -- constructors ------------------------------------------------------

    @classmethod
    def hilbert(cls, truncation: float = 0.0) -> "KernelSpec":
        return cls("hilbert", 1, 0.0, truncation=truncation)

    @classmethod
    def riesz(cls, component: int, n: int, alpha: float, truncation: float = 0.0) -> "KernelSpec":
        return cls("riesz", n, alpha, component=component, truncation=truncation)

    @classmethod
    def riesz_vector(cls, n: int, alpha: float, truncation: float = 0.0) -> "KernelSpec":
        return cls("riesz_vector", n, alpha, truncation=truncation)

    @classmethod
    def cauchy(cls, truncation: float = 0.0) -> "KernelSpec":
        return cls("cauchy", 2, 1.0, truncation=truncation)

    @property
    def n_components(self) -> int:
        if self.family in ("hilbert", "riesz"):
            return 1
        if self.family == "cauchy":
            return 2
        return self.n

    def key(self) -> str:
        comp = "" if self.component is None else f"[{self.component}]"
        return f"{self.family}{comp}(n={self.n},alpha={self.alpha:g})"

    # -- evaluation --------------------------------------------------------

    def eval(self, x, y):
        """K(x, y); scalar for 1-component families, else an ndarray.

        Raises on x == y; returns zero when 0 < |x - y| <= truncation.
        """
        x = np.atleast_1d(np.asarray(x, dtype=float))
        y = np.atleast_1d(np.asarray(y, dtype=float))
        d = float(np.linalg.norm(x - y))
        if d == 0.0:
            raise SingularKernelError("kernel is singular on the diagonal")
        if d <= self.truncation:
            return 0.0 if self.n_components == 1 else np.zeros(self.n_components)
        if self.family == "hilbert":
            return 1.0 / (y[0] - x[0])
        denom = d ** (self.n + 1 - self.alpha)
        if self.family == "riesz":
            return (x[self.component] - y[self.component]) / denom
        if self.family == "riesz_vector":
            return (x - y) / denom
        # cauchy: 1/(x-y) over C as the real vector (R_1, -R_2) at n=2, alpha=1
        return np.array([(x[0] - y[0]) / denom, -(x[1] - y[1]) / denom])

    def matrix(self, sigma: AtomicMeasure, omega: AtomicMeasure) -> np.ndarray:
        """Weighted kernel matrix with rows stacked over components then
        omega-atoms, columns over sigma-atoms: A[(c,j),i] = K_c(y_j, x_i)
        sqrt(w_i v_j)."""
        ns, no = len(sigma), len(omega)
        ncomp = self.n_components
        A = np.zeros((ncomp * no, ns))
        sw = np.sqrt(sigma.weights)
        svv = np.sqrt(omega.weights)
        for j in range(no):
            y = omega.points[j]
            for i in range(ns):
                val = self.eval(y, sigma.points[i])
                scale = sw[i] * svv[j]
                if ncomp == 1:
                    A[j, i] = val * scale
                else:
                    A[j::no, i] = np.asarray(val) * scale
        return A

    def apply(self, sigma: AtomicMeasure, density: np.ndarray, at_points: np.ndarray) -> np.ndarray:
        """T(density * sigma) evaluated at the given points; shape
        (len(points), n_components)."""
        density = np.asarray(density, dtype=float)
        pts = np.atleast_2d(np.asarray(at_points, dtype=float))
        out = np.zeros((len(pts), self.n_components))
        for j, y in enumerate(pts):
            acc = np.zeros(self.n_components)
            for i, x in enumerate(sigma.points):
                if density[i] == 0.0:
                    continue
                val = self.eval(y, x)
                acc += np.atleast_1d(val) * density[i] * sigma.weights[i]
            out[j] = acc
        return out

    def apply_adjoint(self, omega: AtomicMeasure, density: np.ndarray,
                      at_points: np.ndarray) -> np.ndarray:
        """Adjoint application: kernel arguments swapped, source weighted by
        omega; shape (len(points), n_components)."""
        density = np.asarray(density, dtype=float)
        pts = np.atleast_2d(np.asarray(at_points, dtype=float))
        out = np.zeros((len(pts), self.n_components))
        for j, x in enumerate(pts):
            acc = np.zeros(self.n_components)
            for i, y in enumerate(omega.points):
                if density[i] == 0.0:
                    continue
                val = self.eval(y, x)
                acc += np.atleast_1d(val) * density[i] * omega.weights[i]
            out[j] = acc
        return out


def kernel_eval(kernel: KernelSpec, x, y):
    return kernel.eval(x, y)


def bilinear_form(sigma: AtomicMeasure, omega: AtomicMeasure, kernel: KernelSpec,
                  f: np.ndarray, g: np.ndarray):
    """<T(f sigma), g>_omega as an exact double sum.

    Scalar kernels give a float; vector kernels give one value per component.
    """
    if not no_common_point_masses(sigma, omega):
        raise ValueError("the two measures must not share point masses")
    f = np.asarray(f, dtype=float)
    g = np.asarray(g, dtype=float)
    ncomp = kernel.n_components
    acc = np.zeros(ncomp)
    for j, y in enumerate(omega.points):
        if g[j] == 0.0:
            continue
        for i, x in enumerate(sigma.points):
            if f[i] == 0.0:
                continue
            val = kernel.eval(y, x)
            acc += np.atleast_1d(val) * (f[i] * g[j] * sigma.weights[i] * omega.weights[j])
    return float(acc[0]) if ncomp == 1 else acc


def spectral_norm(A: np.ndarray, svd_cutoff: int = SVD_CUTOFF,
                  tol: float = POWER_TOL, maxiter: int = POWER_MAXITER) -> float:
    """Largest singular value: dense SVD up to ``svd_cutoff`` rows/columns,
    power iteration on the Gram matrix beyond."""
    if A.size == 0:
        return 0.0
    if max(A.shape) <= svd_cutoff:
        return float(np.linalg.svd(A, compute_uv=False)[0])
    B = A @ A.T if A.shape[0] <= A.shape[1] else A.T @ A
    rng = np.random.default_rng(0)
    v = rng.standard_normal(B.shape[0])
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(maxiter):
        w = B @ v
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0
        w /= nw
        lam_new = float(w @ B @ w)
        if abs(lam_new - lam) <= tol * max(lam_new, 1e-300):
            return float(np.sqrt(lam_new))
        lam, v = lam_new, w
    raise PowerIterationError(np.sqrt(max(lam, 0.0)), maxiter)


def operator_norm(sigma: AtomicMeasure, omega: AtomicMeasure, kernel: KernelSpec,
                  svd_cutoff: int = SVD_CUTOFF) -> float:
    """Exact L2(sigma) -> L2(omega) norm of the discrete operator."""
    if len(sigma) == 0 or len(omega) == 0:
        return 0.0
    if not no_common_point_masses(sigma, omega):
        raise ValueError("the two measures must not share point masses")
    return spectral_norm(kernel.matrix(sigma, omega), svd_cutoff=svd_cutoff)


def default_cube_enumerator(grid: GridSpec, sigma: AtomicMeasure,
                            omega: AtomicMeasure) -> list[Cube]:
    """All window cubes meeting the joint support, every level up to the top."""
    pts = list(sigma.points) + list(omega.points)
    return list(cubes_over_points(grid, pts))


def testing_constant(sigma: AtomicMeasure, omega: AtomicMeasure, kernel: KernelSpec,
                     direction: str = "forward",
                     cubes: list[Cube] | None = None,
                     grid: GridSpec | None = None) -> tuple[float, Cube | None]:
    """Best constant in the cube testing inequality, with its witness cube.

    forward: sup over cubes Q of (1/|Q|_sigma) * sum_{y_j in Q}
    |T(1_Q sigma)(y_j)|^2 v_j.  dual: the adjoint tested on vector inputs
    u 1_Q over unit directions u — the largest eigenvalue of the component
    Gram of the restricted potentials — which for one-component kernels is
    the usual swapped-roles formula and in general stays below the stacked
    operator norm exactly.
    """
    if direction not in ("forward", "dual"):
        raise ValueError("direction must be 'forward' or 'dual'")
    if cubes is None:
        if grid is None:
            raise ValueError("need either an explicit cube list or a grid")
        cubes = default_cube_enumerator(grid, sigma, omega)
    if not cubes:
        raise ValueError("empty cube enumeration")
    best, witness = 0.0, None
    for Q in cubes:
        if direction == "forward":
            ms = sigma.mass(Q)
            if ms <= 0:
                continue
            oidx = omega.indices_in(Q)
            if oidx.size == 0:
                continue
            inside = np.zeros(len(sigma))
            inside[sigma.indices_in(Q)] = 1.0
            vals = kernel.apply(sigma, inside, omega.points[oidx])
            e = float(np.dot(omega.weights[oidx], np.sum(vals * vals, axis=1))) / ms
        else:
            mo = omega.mass(Q)
            if mo <= 0:
                continue
            sidx = sigma.indices_in(Q)
            if sidx.size == 0:
                continue
            inside = np.zeros(len(omega))
            inside[omega.indices_in(Q)] = 1.0
            vals = kernel.apply_adjoint(omega, inside, sigma.points[sidx])
            gram = (vals * sigma.weights[sidx, None]).T @ vals
            e = float(np.linalg.eigvalsh(gram)[-1]) / mo
        if e > best:
            best, witness = e, Q
    return float(np.sqrt(best)), witness

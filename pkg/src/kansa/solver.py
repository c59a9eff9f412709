"""Backward theta-scheme collocation for terminal-value problems

    -d_t v + F(t, x, v, Dv, D^2 v) = 0 on [0, T) x R^d,    v(T, .) = f.

Site values ``v_k`` at ``t_k = k h`` satisfy

    v_k + h (1 - theta) F_k(v_k) = v_{k+1} - h theta F_{k+1}(v_{k+1}),

where ``F_k(v)`` collocates ``F`` at the sites using the derivatives of the
interpolant of ``v``. ``theta = 1`` is explicit; otherwise the relation is
solved by fixed-point iteration started from the explicit predictor.
"""

from __future__ import annotations

import csv
import logging
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from kansa.errors import ConvergenceError, EvaluationError
from kansa.geometry import SiteSet
from kansa.interpolation import Interpolant, InterpolationSystem
from kansa.kernel import KernelSpec

logger = logging.getLogger(__name__)

ELLIPTICITY_SAMPLES = 50
ELLIPTICITY_TOL = 1e-9


class EllipticityWarning(UserWarning):
    """Sampled tuples suggest F is not degenerate elliptic."""


def _random_symmetric(rng, d, size=None):
    shape = (d, d) if size is None else (size, d, d)
    M = rng.standard_normal(shape)
    return (M + np.swapaxes(M, -1, -2)) / 2


@dataclass(frozen=True)
class ParabolicProblem:
    """Terminal-value problem data.

    ``F(t, x, z, p, Gamma)`` and ``f(x)`` take one point at a time unless
    ``vectorized`` is set, in which case they receive stacked arrays
    ``x (n, d)``, ``z (n,)``, ``p (n, d)``, ``Gamma (n, d, d)`` and must
    return ``n`` values.
    """

    d: int
    T: float
    F: Callable
    f: Callable
    exact: Callable | None = None
    vectorized: bool = False
    name: str = "problem"
    check_ellipticity: bool = field(default=True, repr=False)

    def __post_init__(self):
        if self.d < 1:
            raise ValueError(f"dimension must be >= 1, got {self.d}")
        if not self.T >= 0:
            raise ValueError(f"horizon T must be nonnegative, got {self.T}")
        if self.check_ellipticity:
            bad = ellipticity_violations(self)
            if bad:
                warnings.warn(
                    f"{self.name}: F increased along a positive semidefinite Hessian increment "
                    f"in {bad}/{ELLIPTICITY_SAMPLES} sampled tuples; F may not be degenerate elliptic",
                    EllipticityWarning,
                    stacklevel=3,
                )

    def F_batch(self, t: float, x, z, p, G) -> np.ndarray:
        x = np.atleast_2d(x)
        if self.vectorized:
            return np.broadcast_to(np.asarray(self.F(t, x, z, p, G), float), z.shape).copy()
        out = np.empty(x.shape[0])
        for j in range(x.shape[0]):
            try:
                out[j] = self.F(t, x[j], z[j], p[j], G[j])
            except Exception as exc:  # noqa: BLE001 - re-raised with site context
                raise EvaluationError(j, x[j], exc) from exc
        return out

    def f_batch(self, x) -> np.ndarray:
        x = np.atleast_2d(x)
        if self.vectorized:
            return np.broadcast_to(np.asarray(self.f(x), float), x.shape[:1]).copy()
        out = np.empty(x.shape[0])
        for j in range(x.shape[0]):
            try:
                out[j] = self.f(x[j])
            except Exception as exc:  # noqa: BLE001
                raise EvaluationError(j, x[j], exc) from exc
        return out


def ellipticity_violations(problem: ParabolicProblem, samples: int = ELLIPTICITY_SAMPLES, seed: int = 0) -> int:
    """Count sampled tuples with ``F(.., G + S) > F(.., G) + tol`` for PSD ``S``."""
    rng = np.random.default_rng(seed)
    d = problem.d
    t = rng.uniform(0, max(problem.T, 0.0), samples)
    x = rng.standard_normal((samples, d))
    z = rng.standard_normal(samples)
    p = rng.standard_normal((samples, d))
    G = _random_symmetric(rng, d, samples)
    B = rng.standard_normal((samples, d, d))
    S = B @ np.swapaxes(B, -1, -2)
    bad = 0
    for i in range(samples):
        lo = problem.F_batch(t[i], x[i:i + 1], z[i:i + 1], p[i:i + 1], G[i:i + 1])[0]
        hi = problem.F_batch(t[i], x[i:i + 1], z[i:i + 1], p[i:i + 1], G[i:i + 1] + S[i:i + 1])[0]
        bad += hi > lo + ELLIPTICITY_TOL
    return int(bad)


def growth_ratio(problem: ParabolicProblem, samples: int = 1000, seed: int = 0, scale: float = 1.0) -> float:
    """Largest sampled ``|F| / (1 + |z| + |p| + |Gamma|)``; a lower estimate of ``K_1``."""
    rng = np.random.default_rng(seed)
    d = problem.d
    t = rng.uniform(0, max(problem.T, 0.0), samples)
    x = scale * rng.standard_normal((samples, d))
    z = scale * rng.standard_normal(samples)
    p = scale * rng.standard_normal((samples, d))
    G = scale * _random_symmetric(rng, d, samples)
    vals = np.array([
        problem.F_batch(t[i], x[i:i + 1], z[i:i + 1], p[i:i + 1], G[i:i + 1])[0] for i in range(samples)
    ])
    denom = 1 + np.abs(z) + np.linalg.norm(p, axis=1) + np.linalg.norm(G, ord=2, axis=(1, 2))
    return float(np.max(np.abs(vals) / denom))


def check_growth(problem: ParabolicProblem, K1: float, samples: int = 1000, seed: int = 0) -> bool:
    """Spot-check ``|F| <= K1 (1 + |z| + |p| + |Gamma|)`` on random tuples."""
    return growth_ratio(problem, samples, seed) <= K1


@dataclass(frozen=True)
class SchemeConfig:
    n: int = 100
    theta: float = 1.0
    fp_tol: float = 1e-10
    fp_max_iter: int = 200
    m: int | None = None

    def __post_init__(self):
        if self.n < 1 or int(self.n) != self.n:
            raise ValueError(f"number of steps must be a positive integer, got {self.n}")
        if not 0.0 <= self.theta <= 1.0:
            raise ValueError(f"theta must lie in [0, 1], got {self.theta}")
        if not self.fp_tol > 0:
            raise ValueError(f"fp_tol must be positive, got {self.fp_tol}")
        if self.fp_max_iter < 1:
            raise ValueError(f"fp_max_iter must be >= 1, got {self.fp_max_iter}")
        if self.m is not None and self.m < 0:
            raise ValueError(f"tail order m must be nonnegative, got {self.m}")


@dataclass
class SolutionField:
    """Site values ``values[k, j] = v_{k,j}`` with one interpolant per time level."""

    values: np.ndarray
    interpolants: list[Interpolant]
    time_grid: np.ndarray
    sites: SiteSet
    iterations: list[int] = field(default_factory=list)

    @property
    def n(self) -> int:
        return len(self.time_grid) - 1

    @property
    def T(self) -> float:
        return float(self.time_grid[-1])

    def __call__(self, t: float, x):
        return evaluate_solution(self, t, x)

    def to_csv(self, path) -> None:
        """Write ``k,t,j,x1..xd,v`` rows with 12 significant digits."""
        d = self.sites.dim
        with open(Path(path), "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["k", "t", "j", *[f"x{i + 1}" for i in range(d)], "v"])
            for k, t in enumerate(self.time_grid):
                for j, x in enumerate(self.sites.points):
                    w.writerow([k, _fmt(t), j, *[_fmt(c) for c in x], _fmt(self.values[k, j])])


def _fmt(v: float) -> str:
    return f"{float(v):.12g}"


class CollocationScheme:
    """Reusable stepping machinery for one problem, kernel and site set.

    The interpolation matrix is factorised once; value, gradient and Hessian
    operators at the sites are precomputed, so each collocation of ``F`` is a
    handful of matrix-vector products.
    """

    def __init__(self, problem: ParabolicProblem, kernel: KernelSpec, sites: SiteSet, config: SchemeConfig):
        if sites.dim != problem.d:
            raise ValueError(f"sites have d={sites.dim}, problem has d={problem.d}")
        self.problem = problem
        self.kernel = kernel
        self.sites = sites
        self.config = config
        self.h = problem.T / config.n
        self.time_grid = np.arange(config.n + 1) * self.h
        self.time_grid[-1] = problem.T
        self.system = InterpolationSystem(kernel, sites, config.m)
        d = sites.dim
        X = sites.points
        eye = np.eye(d, dtype=int)
        self._value = self.system.operator(X)
        self._grad = np.stack([self.system.operator(X, eye[i]) for i in range(d)])
        self._hess = np.empty((d, d, sites.N, sites.N))
        for i in range(d):
            for j in range(i, d):
                self._hess[i, j] = self._hess[j, i] = self.system.operator(X, eye[i] + eye[j])

    def collocate(self, t: float, v: np.ndarray) -> np.ndarray:
        """``F(t, x_j, I(x_j), DI(x_j), D^2 I(x_j))`` for the interpolant ``I`` of ``v``."""
        z = self._value @ v
        p = np.einsum("inm,m->ni", self._grad, v)
        G = np.einsum("ijnm,m->nij", self._hess, v)
        return self.problem.F_batch(t, self.sites.points, z, p, G)

    def terminal_values(self) -> np.ndarray:
        return self.problem.f_batch(self.sites.points)

    def explicit_step(self, k: int, v_next: np.ndarray) -> np.ndarray:
        return v_next - self.h * self.collocate(self.time_grid[k + 1], v_next)

    def implicit_step(self, k: int, v_next: np.ndarray) -> tuple[np.ndarray, int]:
        """Fixed-point solve of the theta relation; returns ``(v_k, iterations)``."""
        h, theta = self.h, self.config.theta
        F_next = self.collocate(self.time_grid[k + 1], v_next)
        rhs = v_next - h * theta * F_next
        v = v_next - h * F_next
        t_k = self.time_grid[k]
        increment = np.inf
        for it in range(1, self.config.fp_max_iter + 1):
            v_new = rhs - h * (1.0 - theta) * self.collocate(t_k, v)
            increment = float(np.max(np.abs(v_new - v)))
            v = v_new
            if increment < self.config.fp_tol:
                return v, it
        raise ConvergenceError(k, self.config.fp_max_iter, increment)

    def step(self, k: int, v_next: np.ndarray) -> tuple[np.ndarray, int]:
        if self.config.theta == 1.0:
            return self.explicit_step(k, v_next), 0
        return self.implicit_step(k, v_next)

    def solve(self) -> SolutionField:
        n, N = self.config.n, self.sites.N
        values = np.empty((n + 1, N))
        values[n] = self.terminal_values()
        iterations = [0] * (n + 1)
        for k in range(n - 1, -1, -1):
            values[k], iterations[k] = self.step(k, values[k + 1])
            if not np.all(np.isfinite(values[k])):
                raise ArithmeticError(f"non-finite site values produced at step k={k}")
        interpolants = [self.system.fit(values[k]) for k in range(n + 1)]
        logger.info("solved %s: N=%d n=%d theta=%g", self.problem.name, N, n, self.config.theta)
        return SolutionField(values, interpolants, self.time_grid.copy(), self.sites, iterations)


def collocated_F(problem: ParabolicProblem, t: float, interpolant: Interpolant, sites: SiteSet | None = None) -> np.ndarray:
    """Collocate ``F`` at ``sites`` using value, gradient and Hessian of ``interpolant``."""
    sites = interpolant.sites if sites is None else sites
    if interpolant.dim != problem.d:
        raise ValueError(f"interpolant has d={interpolant.dim}, problem has d={problem.d}")
    X = sites.points
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        z = interpolant(X)
        p = interpolant.gradient(X)
        G = interpolant.hessian(X)
    return problem.F_batch(t, X, z, p, G)


def step_backward(problem: ParabolicProblem, k: int, v_next, config: SchemeConfig,
                  kernel: KernelSpec, sites: SiteSet) -> np.ndarray:
    """One backward step producing ``v_k`` from ``v_{k+1}``."""
    scheme = CollocationScheme(problem, kernel, sites, config)
    if not 0 <= k < config.n:
        raise ValueError(f"step index must lie in [0, {config.n - 1}], got {k}")
    return scheme.step(k, np.asarray(v_next, float))[0]


def solve(problem: ParabolicProblem, config: SchemeConfig, kernel: KernelSpec, sites: SiteSet) -> SolutionField:
    """Run the backward recursion from ``t_n = T`` down to ``t_0 = 0``."""
    return CollocationScheme(problem, kernel, sites, config).solve()


def evaluate_solution(sol: SolutionField, t: float, x):
    """``v^h(t, x)``, linear in time between adjacent levels."""
    T = sol.T
    if not (-1e-12 * max(T, 1.0) <= t <= T * (1 + 1e-12) + 1e-15):
        raise ValueError(f"time {t} outside [0, {T}]")
    grid = sol.time_grid
    k = int(np.searchsorted(grid, t, side="right")) - 1
    k = min(max(k, 0), sol.n)
    if k == sol.n or np.isclose(t, grid[k], rtol=0, atol=1e-14):
        return sol.interpolants[k](x)
    w = (t - grid[k]) / (grid[k + 1] - grid[k])
    return (1 - w) * sol.interpolants[k](x) + w * sol.interpolants[k + 1](x)

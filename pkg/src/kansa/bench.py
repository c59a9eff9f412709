"""KPZ and heat benchmarks with independent reference solutions.

The deterministic KPZ equation

    d_t v + 1/2 tr(D^2 v) + 1/2 |Dv|^2 = 0,    v(1, x) = cos(x_1) cos(x_2),

is linearised by the Cole-Hopf transform, giving
``v(t, x) = log E[exp(f(x + W_{1-t}))]``. The expectation is computed by
tensorised Gauss-Hermite quadrature (default) or by seeded Monte Carlo.
The heat benchmark drops the gradient term and has the closed-form solution
``exp(t - 1) cos(x_1) cos(x_2)``.
"""

from __future__ import annotations

import csv
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numpy.polynomial.hermite_e import hermegauss
from scipy.special import logsumexp

from kansa.diagnostics import max_error, rms_error
from kansa.geometry import Rectangle, SiteSet, equispaced_grid, grid_points, separation_distance
from kansa.kernel import KernelSpec
from kansa.solver import ParabolicProblem, SchemeConfig, solve

logger = logging.getLogger(__name__)

MC_CHUNK = 8192
SHAPE_RULES = ("mean_distance", "nearest_neighbor")


def kpz_F(t, x, z, p, Gamma):
    """``-1/2 tr(Gamma) - 1/2 |p|^2``; broadcasts over leading axes."""
    p = np.asarray(p, float)
    Gamma = np.asarray(Gamma, float)
    return -0.5 * np.trace(Gamma, axis1=-2, axis2=-1) - 0.5 * np.sum(p * p, axis=-1)


def heat_F(t, x, z, p, Gamma):
    """``-1/2 tr(Gamma)``: the backward heat equation."""
    return -0.5 * np.trace(np.asarray(Gamma, float), axis1=-2, axis2=-1)


def kpz_terminal(x):
    """``prod_i cos(x_i)``, i.e. ``cos(x_1) cos(x_2)`` in the plane."""
    return np.prod(np.cos(np.asarray(x, float)), axis=-1)


def heat_exact(t, x):
    """Separable solution ``exp(d (t - 1) / 2) prod_i cos(x_i)`` (``exp(t - 1) cos cos`` for d = 2)."""
    x = np.asarray(x, float)
    return np.exp(x.shape[-1] * (t - 1.0) / 2.0) * kpz_terminal(x)


def _check_time(t: float):
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"time must lie in [0, 1], got {t}")


def cole_hopf_quadrature(x, t: float, gh_nodes: int = 64, f=kpz_terminal):
    """``log E[exp(f(x + sqrt(1 - t) Z))]`` by tensor Gauss-Hermite quadrature."""
    _check_time(t)
    x = np.asarray(x, float)
    single = x.ndim == 1
    pts = np.atleast_2d(x)
    if t == 1.0:
        out = np.asarray(f(pts), float)
        return float(out[0]) if single else out
    d = pts.shape[1]
    z, w = hermegauss(gh_nodes)
    logw1 = np.log(w / w.sum())
    mesh = np.meshgrid(*([z] * d), indexing="ij")
    Z = np.stack([m.ravel() for m in mesh], axis=-1)
    logw = sum(np.meshgrid(*([logw1] * d), indexing="ij")).ravel()
    sigma = math.sqrt(1.0 - t)
    out = np.empty(pts.shape[0])
    for i, xi in enumerate(pts):
        out[i] = logsumexp(f(xi + sigma * Z) + logw)
    return float(out[0]) if single else out


def _mc_chunk(args):
    seed, index, size, pts, sigma, f = args
    rng = np.random.default_rng(np.random.SeedSequence([seed, index]))
    Z = rng.standard_normal((size, pts.shape[1]))
    vals = np.exp(f(pts[:, None, :] + sigma * Z[None, :, :]))
    return vals.sum(axis=1), (vals * vals).sum(axis=1)


def cole_hopf_mc(x, t: float, samples: int = 10**6, seed: int = 0, f=kpz_terminal, workers: int = 1):
    """Monte Carlo Cole-Hopf value and its delta-method standard error.

    Samples are drawn in fixed chunks of ``MC_CHUNK`` from substreams keyed by
    ``(seed, chunk index)`` and reduced in chunk order, so the result is
    bit-identical for any ``workers``. Every point ``x`` uses the same draws.
    Returns ``(value, standard_error)``, arrays when ``x`` holds several points.
    """
    _check_time(t)
    if samples < 1:
        raise ValueError(f"samples must be >= 1, got {samples}")
    x = np.asarray(x, float)
    single = x.ndim == 1
    pts = np.atleast_2d(x)
    if t == 1.0:
        val = np.asarray(f(pts), float)
        se = np.zeros_like(val)
        return (float(val[0]), 0.0) if single else (val, se)
    sigma = math.sqrt(1.0 - t)
    sizes = [MC_CHUNK] * (samples // MC_CHUNK)
    if samples % MC_CHUNK:
        sizes.append(samples % MC_CHUNK)
    jobs = [(seed, i, s, pts, sigma, f) for i, s in enumerate(sizes)]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_mc_chunk, jobs))
    else:
        parts = [_mc_chunk(job) for job in jobs]
    total = np.zeros(pts.shape[0])
    total_sq = np.zeros(pts.shape[0])
    for s1, s2 in parts:
        total += s1
        total_sq += s2
    mean = total / samples
    var = np.maximum(total_sq / samples - mean * mean, 0.0) * samples / max(samples - 1, 1)
    value = np.log(mean)
    se = np.sqrt(var / samples) / mean
    return (float(value[0]), float(se[0])) if single else (value, se)


def kpz_problem(T: float = 1.0) -> ParabolicProblem:
    return ParabolicProblem(d=2, T=T, F=kpz_F, f=kpz_terminal, vectorized=True, name="kpz")


def heat_problem(T: float = 1.0) -> ParabolicProblem:
    return ParabolicProblem(d=2, T=T, F=heat_F, f=kpz_terminal, exact=heat_exact, vectorized=True, name="heat")


def shape_parameter(sites: SiteSet, rule: str = "mean_distance") -> float:
    """Gaussian ``alpha = 1 / eps**2`` from a site-spacing length ``eps``.

    ``mean_distance``: ``eps`` is the mean Euclidean distance over all ordered
    site pairs (self-pairs included). ``nearest_neighbor``: ``eps`` is the
    smallest pairwise distance ``2 q_X``.
    """
    pts = sites.points
    if pts.shape[0] < 2:
        raise ValueError("a shape rule needs at least two sites")
    if rule == "mean_distance":
        diff = pts[:, None, :] - pts[None, :, :]
        eps = float(np.mean(np.sqrt(np.sum(diff * diff, axis=-1))))
    elif rule == "nearest_neighbor":
        eps = 2.0 * separation_distance(sites)
    else:
        raise ValueError(f"unknown shape rule {rule!r}; expected one of {SHAPE_RULES}")
    return 1.0 / eps**2


@dataclass
class BenchmarkConfig:
    grids: tuple = (3, 4, 5)
    h: float = 1e-2
    T: float = 1.0
    solve_domain: Rectangle = field(default_factory=lambda: Rectangle.cube(-math.pi / 2, math.pi / 2, 2))
    eval_domain: Rectangle = field(default_factory=lambda: Rectangle.cube(-math.pi / 4, math.pi / 4, 2))
    eval_per_axis: int = 25
    oracle: str = "quadrature"
    mc_samples: int = 10**6
    mc_seed: int = 0
    mc_workers: int = 1
    gh_nodes: int = 64
    theta: float = 1.0
    shape_rule: str = "mean_distance"
    alpha: float | None = None
    m: int = 0
    fp_tol: float = 1e-10
    fp_max_iter: int = 200

    def __post_init__(self):
        if self.oracle not in ("quadrature", "mc"):
            raise ValueError(f"oracle must be 'quadrature' or 'mc', got {self.oracle!r}")
        if self.shape_rule not in SHAPE_RULES:
            raise ValueError(f"unknown shape rule {self.shape_rule!r}")
        lo_in = np.array(self.eval_domain.lower) >= np.array(self.solve_domain.lower)
        hi_in = np.array(self.eval_domain.upper) <= np.array(self.solve_domain.upper)
        if not (np.all(lo_in) and np.all(hi_in)):
            raise ValueError("evaluation domain must lie inside the solve domain")
        if self.eval_domain.dim != 2 or self.solve_domain.dim != 2:
            raise ValueError("benchmarks are two-dimensional")
        n = self.T / self.h
        if abs(n - round(n)) > 1e-9 * max(1.0, n):
            raise ValueError(f"step h={self.h} does not divide T={self.T}")

    @property
    def steps(self) -> int:
        return int(round(self.T / self.h))


@dataclass
class BenchmarkRow:
    benchmark: str
    N: int
    h: float
    rms_error: float
    max_error: float
    oracle: str
    alpha: float = math.nan
    error: str | None = None
    eval_points: np.ndarray | None = field(default=None, repr=False)
    numeric: np.ndarray | None = field(default=None, repr=False)
    reference: np.ndarray | None = field(default=None, repr=False)

    @property
    def ok(self) -> bool:
        return self.error is None


def reference_values(config: BenchmarkConfig, which: str, points: np.ndarray) -> tuple[np.ndarray, str]:
    """Oracle values at ``t = 0`` and the oracle's name."""
    if which == "heat":
        return heat_exact(0.0, points), "exact"
    if config.oracle == "mc":
        val, _ = cole_hopf_mc(points, 0.0, config.mc_samples, config.mc_seed, workers=config.mc_workers)
        return val, "mc"
    return cole_hopf_quadrature(points, 0.0, config.gh_nodes), "quadrature"


def run_benchmark(config: BenchmarkConfig, which: str = "kpz") -> list[BenchmarkRow]:
    """One row per grid size: solve to ``t = 0`` and compare on the evaluation grid."""
    if which not in ("kpz", "heat"):
        raise ValueError(f"unknown benchmark {which!r}")
    problem = kpz_problem(config.T) if which == "kpz" else heat_problem(config.T)
    ev = config.eval_domain
    points = grid_points(ev.lower, ev.upper, config.eval_per_axis)
    reference, oracle = reference_values(config, which, points)
    scheme = SchemeConfig(n=config.steps, theta=config.theta, fp_tol=config.fp_tol,
                          fp_max_iter=config.fp_max_iter, m=config.m)
    rows = []
    for per_axis in config.grids:
        N = per_axis ** 2
        try:
            sites = equispaced_grid(config.solve_domain, per_axis)
            alpha = config.alpha if config.alpha is not None else shape_parameter(sites, config.shape_rule)
            kernel = KernelSpec("gaussian", alpha)
            sol = solve(problem, scheme, kernel, sites)
            numeric = sol.interpolants[0](points)
            rows.append(BenchmarkRow(which, N, config.h, rms_error(numeric, reference),
                                     max_error(numeric, reference), oracle, alpha,
                                     eval_points=points, numeric=numeric, reference=reference))
        except Exception as exc:  # noqa: BLE001 - a failed row must not stop the others
            logger.error("%s benchmark failed for N=%d: %s", which, N, exc)
            rows.append(BenchmarkRow(which, N, config.h, math.nan, math.nan, oracle, error=str(exc)))
    return rows


CSV_HEADER = ("benchmark", "N", "h", "rms_error", "max_error", "oracle")


def write_csv(rows, path) -> None:
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in rows:
            if r.ok:
                w.writerow([r.benchmark, r.N, f"{r.h:.12g}", f"{r.rms_error:.12g}", f"{r.max_error:.12g}", r.oracle])
            else:
                w.writerow([r.benchmark, r.N, f"{r.h:.12g}", "error", "error", r.oracle])


def write_grid_dump(row: BenchmarkRow, path) -> None:
    """``x1,x2,v_numeric,v_oracle`` on the evaluation grid, for external plotting."""
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x1", "x2", "v_numeric", "v_oracle"])
        for p, a, b in zip(row.eval_points, row.numeric, row.reference):
            w.writerow([f"{p[0]:.12g}", f"{p[1]:.12g}", f"{a:.12g}", f"{b:.12g}"])

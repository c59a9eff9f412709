"""Domains, collocation site sets and the distances that control them.

Rectangles and balls both satisfy an interior cone condition, so they are the
only domain shapes offered; no runtime cone check is made.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from kansa.polynomials import PolynomialTail

DEFAULT_FILL_RESOLUTION = 200
RANK_RTOL = 1e-10


@dataclass(frozen=True)
class Rectangle:
    """Axis-aligned box ``prod_l [lower_l, upper_l]``."""

    lower: tuple
    upper: tuple

    def __post_init__(self):
        lower = np.atleast_1d(np.asarray(self.lower, float))
        upper = np.atleast_1d(np.asarray(self.upper, float))
        if lower.shape != upper.shape or lower.ndim != 1:
            raise ValueError("rectangle bounds must be equal-length vectors")
        if np.any(lower >= upper):
            raise ValueError(f"rectangle requires lower < upper on every axis, got {lower}, {upper}")
        object.__setattr__(self, "lower", tuple(lower))
        object.__setattr__(self, "upper", tuple(upper))

    @classmethod
    def cube(cls, a: float, b: float, d: int) -> "Rectangle":
        return cls((a,) * d, (b,) * d)

    @property
    def dim(self) -> int:
        return len(self.lower)

    @property
    def midpoint(self) -> np.ndarray:
        return (np.array(self.lower) + np.array(self.upper)) / 2

    @property
    def half_widths(self) -> np.ndarray:
        return (np.array(self.upper) - np.array(self.lower)) / 2

    def contains(self, points, tol: float = 1e-12) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, float))
        slack = tol * np.maximum(1.0, self.half_widths)
        return np.all((pts >= np.array(self.lower) - slack) & (pts <= np.array(self.upper) + slack), axis=1)

    def axes(self, resolution: int) -> list[np.ndarray]:
        return [np.linspace(a, b, resolution) for a, b in zip(self.lower, self.upper)]

    def candidate_grid(self, resolution: int) -> np.ndarray:
        return _tensor(self.axes(resolution))


@dataclass(frozen=True)
class Ball:
    """Closed ball ``{x : |x - center| <= radius}``."""

    center: tuple
    radius: float

    def __post_init__(self):
        center = np.atleast_1d(np.asarray(self.center, float))
        if center.ndim != 1:
            raise ValueError("ball center must be a vector")
        if not self.radius > 0:
            raise ValueError(f"ball radius must be positive, got {self.radius}")
        object.__setattr__(self, "center", tuple(center))
        object.__setattr__(self, "radius", float(self.radius))

    @property
    def dim(self) -> int:
        return len(self.center)

    @property
    def midpoint(self) -> np.ndarray:
        return np.array(self.center)

    @property
    def half_widths(self) -> np.ndarray:
        return np.full(self.dim, self.radius)

    def contains(self, points, tol: float = 1e-12) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, float))
        return np.linalg.norm(pts - self.midpoint, axis=1) <= self.radius * (1 + tol)

    def candidate_grid(self, resolution: int) -> np.ndarray:
        c = self.midpoint
        box = _tensor([np.linspace(ci - self.radius, ci + self.radius, resolution) for ci in c])
        return box[self.contains(box)]


Domain = Rectangle | Ball


def _tensor(axes) -> np.ndarray:
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=-1)


@dataclass(frozen=True)
class SiteSet:
    """Ordered, pairwise distinct collocation sites, optionally tied to a domain."""

    points: np.ndarray
    domain: Rectangle | Ball | None = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.ndim != 2 or pts.shape[0] == 0:
            raise ValueError("sites must be a nonempty (N, d) array")
        if not np.all(np.isfinite(pts)):
            raise ValueError("sites must be finite")
        pts = pts.copy()
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        dup = _first_duplicate(pts)
        if dup is not None:
            i, j = dup
            raise ValueError(
                f"sites {i} and {j} coincide at coordinates {tuple(float(c) for c in pts[i])}"
            )
        if self.domain is not None:
            if self.domain.dim != pts.shape[1]:
                raise ValueError(f"sites have d={pts.shape[1]} but domain has d={self.domain.dim}")
            outside = np.flatnonzero(~self.domain.contains(pts))
            if outside.size:
                raise ValueError(f"site {outside[0]} at {tuple(pts[outside[0]])} lies outside the domain")

    @property
    def N(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def __len__(self) -> int:
        return self.N

    def tail(self, m: int) -> PolynomialTail:
        """Polynomial tail of order ``m`` scaled to the domain (or bounding box)."""
        if self.domain is not None:
            return PolynomialTail.for_domain(m, self.domain)
        return PolynomialTail.for_points(m, self.points)


def _first_duplicate(pts: np.ndarray):
    order = np.lexsort(pts.T[::-1])
    srt = pts[order]
    same = np.all(srt[1:] == srt[:-1], axis=1)
    hit = np.flatnonzero(same)
    if hit.size == 0:
        return None
    a, b = sorted((int(order[hit[0]]), int(order[hit[0] + 1])))
    return a, b


def equispaced_grid(domain: Rectangle, points_per_axis: int) -> SiteSet:
    """Tensor grid with endpoints; a single point per axis sits at the midpoint."""
    if not isinstance(domain, Rectangle):
        raise TypeError("equispaced_grid requires a Rectangle domain")
    if points_per_axis < 1:
        raise ValueError(f"points_per_axis must be >= 1, got {points_per_axis}")
    if points_per_axis == 1:
        axes = [np.array([c]) for c in domain.midpoint]
    else:
        axes = domain.axes(points_per_axis)
    return SiteSet(_tensor(axes), domain)


def _points(sites) -> np.ndarray:
    return sites.points if isinstance(sites, SiteSet) else np.atleast_2d(np.asarray(sites, float))


def separation_distance(sites) -> float:
    """Half the smallest pairwise distance, ``q_X``."""
    pts = _points(sites)
    if pts.shape[0] < 2:
        raise ValueError("separation distance needs at least two sites")
    dist, _ = cKDTree(pts).query(pts, k=2)
    return float(dist[:, 1].min() / 2)


def fill_distance(sites, domain: Rectangle | Ball, resolution: int = DEFAULT_FILL_RESOLUTION) -> float:
    """Largest distance from a domain point to its nearest site.

    The supremum is taken over a dense candidate grid with ``resolution``
    points per axis (clipped to the ball for :class:`Ball`), so the result is
    a lower approximation that converges as ``resolution`` grows.
    """
    if resolution < 2:
        raise ValueError(f"resolution must be >= 2, got {resolution}")
    tree = cKDTree(_points(sites))
    best = 0.0
    chunk = 1 << 18
    for block in _candidate_blocks(domain, resolution, chunk):
        if block.size:
            best = max(best, float(tree.query(block)[0].max()))
    return best


def _candidate_blocks(domain, resolution, chunk):
    if isinstance(domain, Ball):
        lo = domain.midpoint - domain.radius
        axes = [np.linspace(a, a + 2 * domain.radius, resolution) for a in lo]
    else:
        axes = domain.axes(resolution)
    d = len(axes)
    lead = max(1, chunk // resolution ** (d - 1)) if d > 1 else resolution
    for start in range(0, resolution, lead):
        block = _tensor([axes[0][start:start + lead], *axes[1:]])
        if isinstance(domain, Ball):
            block = block[domain.contains(block)]
        yield block


def quasi_uniformity(sites, domain: Rectangle | Ball, resolution: int = DEFAULT_FILL_RESOLUTION) -> float:
    """Empirical quasi-uniformity constant ``fill / q_X``."""
    return fill_distance(sites, domain, resolution) / separation_distance(sites)


class Unisolvency(enum.Enum):
    UNISOLVENT = "unisolvent"
    NOT_UNISOLVENT = "not_unisolvent"
    TRIVIALLY_TRUE = "trivially_true"


@dataclass(frozen=True)
class UnisolvencyResult:
    status: Unisolvency
    rank: int
    Q: int
    sufficient_condition: bool

    @property
    def ok(self) -> bool:
        return self.status is not Unisolvency.NOT_UNISOLVENT


def coordinatewise_distinct(pts: np.ndarray, m: int) -> bool:
    """Sufficient condition: ``N >= m`` and every coordinate sequence pairwise distinct."""
    n = pts.shape[0]
    return n >= m and all(np.unique(pts[:, i]).size == n for i in range(pts.shape[1]))


def unisolvency_check(sites, m: int) -> UnisolvencyResult:
    """Decide ``Pi_{m-1}``-unisolvency from the numerical rank of the monomial matrix."""
    if m < 0:
        raise ValueError(f"m must be nonnegative, got {m}")
    if not isinstance(sites, SiteSet):
        sites = SiteSet(sites)
    pts = sites.points
    sufficient = coordinatewise_distinct(pts, m)
    if m == 0:
        return UnisolvencyResult(Unisolvency.TRIVIALLY_TRUE, 0, 0, sufficient)
    P = sites.tail(m).evaluate(pts)
    Q = P.shape[1]
    sv = np.linalg.svd(P, compute_uv=False)
    rank = int(np.sum(sv > RANK_RTOL * sv[0])) if sv.size else 0
    status = Unisolvency.UNISOLVENT if rank == Q else Unisolvency.NOT_UNISOLVENT
    return UnisolvencyResult(status, rank, Q, sufficient)


def grid_points(lower, upper, per_axis: int) -> np.ndarray:
    """Plain tensor grid array (used for evaluation grids)."""
    return _tensor([np.linspace(a, b, per_axis) for a, b in zip(lower, upper)])


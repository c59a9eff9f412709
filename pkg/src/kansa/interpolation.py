"""Kernel interpolation with an optional polynomial tail.

The interpolant of data ``b`` on sites ``X`` is

    I(x) = sum_j xi_j Phi(x, x_j) + sum_l eta_l pi_l(x)

where ``(xi, eta)`` solves the symmetric saddle-point system

    [ A   P ] [xi ]   [b]
    [ P^T 0 ] [eta] = [0],     A_ij = Phi(x_i, x_j),  P_jl = pi_l(x_j).

For positive definite kernels (``m = 0``) the tail is empty and ``A xi = b``
is solved by Cholesky.
"""

from __future__ import annotations

import io
import logging
import warnings
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy import linalg
from scipy.linalg import lapack
from scipy.sparse.linalg import LinearOperator, onenormest

from kansa.errors import IllConditionedError, NotUnisolventError
from kansa.geometry import Ball, Rectangle, SiteSet, unisolvency_check
from kansa.kernel import KernelSpec, kernel_matrix
from kansa.polynomials import PolynomialTail

logger = logging.getLogger(__name__)

CONDITION_LIMIT = 1e14
SVD_SIZE_LIMIT = 2000
SEMINORM_NEGATIVE_TOL = 1e-10


class OutsideDomainWarning(UserWarning):
    """An interpolant was evaluated outside the domain of its sites."""


def _resolve_tail(kernel: KernelSpec, sites: SiteSet, tail) -> PolynomialTail:
    if tail is None:
        return sites.tail(kernel.cpd_order)
    if isinstance(tail, PolynomialTail):
        if tail.d != sites.dim:
            raise ValueError(f"tail dimension {tail.d} does not match sites dimension {sites.dim}")
        return tail
    return sites.tail(int(tail))


def assemble_system(kernel: KernelSpec, sites: SiteSet, tail=None) -> np.ndarray:
    """Symmetric matrix ``[[A, P], [P^T, 0]]`` of order ``N + Q``.

    ``tail`` may be a :class:`PolynomialTail`, an integer order ``m`` or
    ``None`` (use the kernel's conditional positive definiteness order).
    """
    if not isinstance(sites, SiteSet):
        sites = SiteSet(sites)
    tail = _resolve_tail(kernel, sites, tail)
    X = sites.points
    A = kernel_matrix(kernel, X, X)
    if tail.Q == 0:
        return A
    check = unisolvency_check(sites, tail.m)
    if not check.ok:
        raise NotUnisolventError(
            f"sites are not unisolvent for polynomials of degree <= {tail.m - 1} "
            f"(rank {check.rank} < Q={check.Q})"
        )
    P = tail.evaluate(X)
    N, Q = P.shape
    M = np.zeros((N + Q, N + Q))
    M[:N, :N] = A
    M[:N, N:] = P
    M[N:, :N] = P.T
    return M


class InterpolationSystem:
    """Factorised interpolation system for one kernel and one site set.

    The matrix depends only on the kernel and the sites, so a single
    factorisation serves every right-hand side; the time stepper relies on
    this to fit one interpolant per step cheaply.
    """

    def __init__(self, kernel: KernelSpec, sites: SiteSet, tail=None, *, condition_limit=CONDITION_LIMIT):
        if not isinstance(sites, SiteSet):
            sites = SiteSet(sites)
        self.kernel = kernel
        self.sites = sites
        self.tail = _resolve_tail(kernel, sites, tail)
        self.matrix = assemble_system(kernel, sites, self.tail)
        self.N = sites.N
        self.Q = self.tail.Q
        self._factorize()
        self.condition = self._condition_estimate()
        if not np.isfinite(self.condition) or self.condition > condition_limit:
            raise IllConditionedError(self.condition, condition_limit)
        logger.debug("interpolation system N=%d Q=%d cond=%.3e via %s",
                      self.N, self.Q, self.condition, self.method)

    def _factorize(self):
        M = self.matrix
        if self.Q == 0:
            try:
                self._factor = linalg.cho_factor(M, lower=True, check_finite=False)
                self.method = "cholesky"
                return
            except linalg.LinAlgError:
                logger.debug("Cholesky failed, falling back to LU")
            self._factor = linalg.lu_factor(M, check_finite=False)
            self.method = "lu"
            return
        ldu, ipiv, info = lapack.dsytrf(M, lower=1)
        if info != 0:
            raise IllConditionedError(np.inf, CONDITION_LIMIT)
        self._factor = (ldu, ipiv)
        self.method = "bunch-kaufman"

    def _solve_full(self, rhs: np.ndarray) -> np.ndarray:
        rhs = np.asarray(rhs, float)
        vec = rhs.ndim == 1
        R = rhs[:, None] if vec else rhs
        if self.method == "cholesky":
            X = linalg.cho_solve(self._factor, R, check_finite=False)
        elif self.method == "lu":
            X = linalg.lu_solve(self._factor, R, check_finite=False)
        else:
            ldu, ipiv = self._factor
            X, info = lapack.dsytrs(ldu, ipiv, R, lower=1)
            if info != 0:
                raise IllConditionedError(np.inf, CONDITION_LIMIT)
        return X[:, 0] if vec else X

    @cached_property
    def singular_values(self) -> np.ndarray:
        return np.linalg.svd(self.matrix, compute_uv=False)

    def _condition_estimate(self) -> float:
        n = self.matrix.shape[0]
        if n <= SVD_SIZE_LIMIT:
            sv = self.singular_values
            return float(sv[0] / sv[-1]) if sv[-1] > 0 else np.inf
        inv = LinearOperator((n, n), matvec=self._solve_full, rmatvec=self._solve_full, dtype=float)
        return float(np.linalg.norm(self.matrix, 1) * onenormest(inv))

    def solve(self, b) -> tuple[np.ndarray, np.ndarray]:
        """Coefficients ``(xi, eta)`` for data ``b`` (or columns of ``b``)."""
        b = np.asarray(b, float)
        if b.shape[0] != self.N:
            raise ValueError(f"expected {self.N} data values, got {b.shape[0]}")
        if self.Q == 0:
            xi = self._solve_full(b)
            return xi, np.zeros((0,) + b.shape[1:])
        rhs = np.zeros((self.N + self.Q,) + b.shape[1:])
        rhs[: self.N] = b
        sol = self._solve_full(rhs)
        return sol[: self.N], sol[self.N:]

    def fit(self, b) -> "Interpolant":
        xi, eta = self.solve(b)
        return Interpolant(self.kernel, self.sites, xi, eta, self.tail)

    @cached_property
    def _inverse_columns(self) -> np.ndarray:
        """Map from data ``b`` to the stacked coefficients ``(xi, eta)``."""
        xi, eta = self.solve(np.eye(self.N))
        return np.vstack([xi, eta])

    def operator(self, points, alpha_idx=None) -> np.ndarray:
        """Matrix ``E`` with ``E @ b = D^alpha I_b(points)`` for every data vector ``b``."""
        points = np.atleast_2d(np.asarray(points, float))
        alpha_idx = (0,) * self.sites.dim if alpha_idx is None else tuple(alpha_idx)
        K = kernel_matrix(self.kernel, points, self.sites.points, alpha_idx)
        if self.Q:
            K = np.hstack([K, self.tail.derivative(alpha_idx, points)])
        return K @ self._inverse_columns


def fit(kernel: KernelSpec, sites: SiteSet, values, tail=None) -> "Interpolant":
    """Interpolate ``values`` at ``sites``; see :class:`InterpolationSystem`."""
    return InterpolationSystem(kernel, sites, tail).fit(values)


@dataclass(frozen=True, eq=False)
class Interpolant:
    """Kernel expansion with polynomial tail; immutable once built."""

    kernel: KernelSpec
    sites: SiteSet
    xi: np.ndarray
    eta: np.ndarray
    tail: PolynomialTail

    def __post_init__(self):
        xi = np.array(self.xi, dtype=float).reshape(-1)
        eta = np.array(self.eta, dtype=float).reshape(-1)
        if xi.shape[0] != self.sites.N:
            raise ValueError(f"xi has length {xi.shape[0]}, expected N={self.sites.N}")
        if eta.shape[0] != self.tail.Q:
            raise ValueError(f"eta has length {eta.shape[0]}, expected Q={self.tail.Q}")
        xi.setflags(write=False)
        eta.setflags(write=False)
        object.__setattr__(self, "xi", xi)
        object.__setattr__(self, "eta", eta)

    @property
    def dim(self) -> int:
        return self.sites.dim

    def _prepare(self, x):
        x = np.asarray(x, float)
        single = x.ndim == 1
        pts = np.atleast_2d(x)
        if pts.shape[-1] != self.dim:
            raise ValueError(f"dimension mismatch: points have d={pts.shape[-1]}, interpolant has d={self.dim}")
        domain = self.sites.domain
        if domain is not None and not np.all(domain.contains(pts, tol=1e-9)):
            warnings.warn("interpolant evaluated outside its domain", OutsideDomainWarning, stacklevel=3)
        return pts, single

    def derivative(self, alpha_idx, x):
        """``D^alpha I(x)``; scalar for a single point, else one value per row of ``x``."""
        pts, single = self._prepare(x)
        out = kernel_matrix(self.kernel, pts, self.sites.points, alpha_idx) @ self.xi
        if self.tail.Q:
            out = out + self.tail.derivative(alpha_idx, pts) @ self.eta
        return float(out[0]) if single else out

    def __call__(self, x):
        return self.derivative((0,) * self.dim, x)

    evaluate = __call__

    def gradient(self, x) -> np.ndarray:
        pts, single = self._prepare(x)
        d = self.dim
        g = np.stack([self.derivative(np.eye(d, dtype=int)[i], pts) for i in range(d)], axis=-1)
        return g[0] if single else g

    def hessian(self, x) -> np.ndarray:
        pts, single = self._prepare(x)
        d = self.dim
        H = np.empty((pts.shape[0], d, d))
        for i in range(d):
            for j in range(i, d):
                idx = np.zeros(d, dtype=int)
                idx[i] += 1
                idx[j] += 1
                H[:, i, j] = H[:, j, i] = self.derivative(idx, pts)
        return H[0] if single else H

    def native_seminorm(self) -> float:
        """``sqrt(xi^T A xi)``, the native-space seminorm of the interpolant."""
        A = kernel_matrix(self.kernel, self.sites.points, self.sites.points)
        sq = float(self.xi @ A @ self.xi)
        if sq < -SEMINORM_NEGATIVE_TOL * max(1.0, float(np.abs(self.xi).sum()) ** 2):
            raise ArithmeticError(f"negative native seminorm square {sq:.3e}; moment condition violated")
        return float(np.sqrt(max(sq, 0.0)))

    @property
    def raw_eta(self) -> np.ndarray:
        """Tail coefficients with respect to plain monomials ``x**e``."""
        return self.tail.raw_coefficients(self.eta) if self.tail.Q else np.zeros(0)

    def dumps(self) -> str:
        """Plain-text coefficient dump; :meth:`loads` restores it exactly."""
        k = self.kernel
        buf = io.StringIO()
        buf.write("# kansa interpolant\n")
        buf.write(f"kernel.family = {k.family}\n")
        buf.write(f"kernel.alpha = {k.alpha!r}\n")
        buf.write(f"kernel.beta = {'' if k.beta is None else repr(k.beta)}\n")
        buf.write(f"kernel.nu = {k.nu}\n")
        buf.write(f"interp.m = {self.tail.m}\n")
        buf.write(f"dimension = {self.dim}\n")
        buf.write(f"tail.center = {' '.join(repr(float(c)) for c in self.tail.center)}\n")
        buf.write(f"tail.scale = {' '.join(repr(float(c)) for c in self.tail.scale)}\n")
        buf.write(f"domain = {_domain_line(self.sites.domain)}\n")
        buf.write(f"sites = {self.sites.N}\n")
        for p, c in zip(self.sites.points, self.xi):
            buf.write(" ".join(repr(float(v)) for v in (*p, c)) + "\n")
        buf.write(f"eta = {' '.join(repr(float(e)) for e in self.eta)}\n")
        buf.write(f"eta.raw = {' '.join(repr(float(e)) for e in self.raw_eta)}\n")
        return buf.getvalue()

    def dump(self, path) -> None:
        Path(path).write_text(self.dumps())

    @classmethod
    def loads(cls, text: str) -> "Interpolant":
        header, rows = {}, []
        for line in text.splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" in line:
                key, _, val = line.partition("=")
                header[key.strip()] = val.strip()
            else:
                rows.append([float(v) for v in line.split()])
        d = int(header["dimension"])
        beta = header.get("kernel.beta") or None
        kernel = KernelSpec(header["kernel.family"], float(header["kernel.alpha"]),
                            None if beta is None else float(beta), int(header["kernel.nu"]))
        data = np.array(rows, float).reshape(-1, d + 1)
        if data.shape[0] != int(header["sites"]):
            raise ValueError("site count in dump does not match its header")
        tail = PolynomialTail(int(header["interp.m"]), d,
                              [float(v) for v in header["tail.center"].split()],
                              [float(v) for v in header["tail.scale"].split()])
        sites = SiteSet(data[:, :d], _parse_domain(header.get("domain", "none")))
        eta = [float(v) for v in header.get("eta", "").split()]
        return cls(kernel, sites, data[:, d], np.array(eta), tail)

    @classmethod
    def load(cls, path) -> "Interpolant":
        return cls.loads(Path(path).read_text())


def _domain_line(domain) -> str:
    if domain is None:
        return "none"
    if isinstance(domain, Rectangle):
        return "rectangle " + " ".join(repr(float(v)) for v in (*domain.lower, *domain.upper))
    return "ball " + " ".join(repr(float(v)) for v in (*domain.center, domain.radius))


def _parse_domain(line: str):
    kind, *vals = line.split()
    vals = [float(v) for v in vals]
    if kind == "rectangle":
        d = len(vals) // 2
        return Rectangle(vals[:d], vals[d:])
    if kind == "ball":
        return Ball(vals[:-1], vals[-1])
    return None


def interpolant_eval(f: Interpolant, x):
    return f(x)


def interpolant_derivative(f: Interpolant, alpha_idx, x):
    return f.derivative(alpha_idx, x)


def native_seminorm(f: Interpolant) -> float:
    return f.native_seminorm()


def error_indicator(f: Interpolant, delta: float, alpha_order: int) -> float:
    """``delta**(nu - |alpha|) * |f|_native``: the interpolation error estimate
    without its unknown kernel constant. An indicator, not a certified bound."""
    nu = f.kernel.nu
    if alpha_order > nu:
        raise ValueError(f"derivative order {alpha_order} exceeds kernel smoothness nu={nu}")
    if alpha_order < 0:
        raise ValueError("derivative order must be nonnegative")
    return float(delta ** (nu - alpha_order) * f.native_seminorm())


__all__ = [
    "Interpolant",
    "InterpolationSystem",
    "OutsideDomainWarning",
    "assemble_system",
    "error_indicator",
    "fit",
    "interpolant_derivative",
    "interpolant_eval",
    "native_seminorm",
]

"""Polynomial tail for conditionally positive definite interpolation."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from kansa.kernel import multiindex_axes, multiindices


@dataclass(frozen=True)
class PolynomialTail:
    """Monomial basis of polynomials of total degree ``<= m - 1`` in ``d`` variables.

    The monomials are shifted and scaled, ``prod_i ((x_i - center_i) / scale_i) ** e_i``,
    to keep the augmented system well conditioned. :meth:`raw_coefficients`
    converts coefficients back to plain monomials ``prod_i x_i ** e_i``.
    """

    m: int
    d: int
    center: np.ndarray | None = None
    scale: np.ndarray | None = None
    exponents: tuple = field(init=False, repr=False)

    def __post_init__(self):
        if self.m < 0 or int(self.m) != self.m:
            raise ValueError(f"tail order m must be a nonnegative integer, got {self.m}")
        if self.d < 1:
            raise ValueError(f"dimension must be >= 1, got {self.d}")
        center = np.zeros(self.d) if self.center is None else np.asarray(self.center, float)
        scale = np.ones(self.d) if self.scale is None else np.asarray(self.scale, float)
        if center.shape != (self.d,) or scale.shape != (self.d,):
            raise ValueError("tail center/scale must have length d")
        if np.any(scale <= 0):
            raise ValueError("tail scale must be positive")
        object.__setattr__(self, "m", int(self.m))
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "scale", scale)
        exps = tuple(multiindices(self.d, self.m - 1)) if self.m > 0 else ()
        object.__setattr__(self, "exponents", exps)

    @classmethod
    def for_domain(cls, m: int, domain) -> "PolynomialTail":
        """Tail centred at the domain midpoint and scaled by its half-widths."""
        return cls(m, domain.dim, domain.midpoint, domain.half_widths)

    @classmethod
    def for_points(cls, m: int, points) -> "PolynomialTail":
        """Tail centred/scaled to the bounding box of ``points``."""
        pts = np.atleast_2d(np.asarray(points, float))
        lo, hi = pts.min(axis=0), pts.max(axis=0)
        half = (hi - lo) / 2
        half[half <= 0] = 1.0
        return cls(m, pts.shape[1], (lo + hi) / 2, half)

    @property
    def Q(self) -> int:
        return len(self.exponents)

    def evaluate(self, x) -> np.ndarray:
        """Basis values, shape (n, Q) for points of shape (n, d)."""
        return self.derivative((0,) * self.d, x)

    def derivative(self, alpha_idx, x) -> np.ndarray:
        """``D^alpha`` of every basis monomial, shape (n, Q)."""
        x = np.atleast_2d(np.asarray(x, float))
        if x.shape[-1] != self.d:
            raise ValueError(f"dimension mismatch: points have d={x.shape[-1]}, tail has d={self.d}")
        multiindex_axes(alpha_idx, self.d)
        alpha_idx = tuple(int(a) for a in alpha_idx)
        t = (x - self.center) / self.scale
        out = np.zeros((x.shape[0], self.Q))
        for q, e in enumerate(self.exponents):
            if any(a > k for a, k in zip(alpha_idx, e)):
                continue
            col = np.ones(x.shape[0])
            for i, (k, a) in enumerate(zip(e, alpha_idx)):
                if k - a:
                    col = col * t[:, i] ** (k - a)
                if a:
                    col = col * (math.perm(k, a) / self.scale[i] ** a)
            out[:, q] = col
        return out

    def raw_coefficients(self, eta) -> np.ndarray:
        """Re-express ``sum_q eta_q basis_q`` in plain monomials (same exponent order)."""
        eta = np.asarray(eta, float)
        if eta.shape != (self.Q,):
            raise ValueError(f"expected {self.Q} tail coefficients, got shape {eta.shape}")
        index = {e: q for q, e in enumerate(self.exponents)}
        raw = np.zeros(self.Q)
        for coef, e in zip(eta, self.exponents):
            # prod_i ((x_i - c_i)/s_i)^e_i expanded binomially per axis
            terms = {(): coef}
            for i, k in enumerate(e):
                c, s = self.center[i], self.scale[i]
                nxt = {}
                for partial, val in terms.items():
                    for j in range(k + 1):
                        w = val * math.comb(k, j) * (-c) ** (k - j) / s**k
                        key = partial + (j,)
                        nxt[key] = nxt.get(key, 0.0) + w
                terms = nxt
            for key, val in terms.items():
                raw[index[key]] += val
        return raw


def tail_dimension(m: int, d: int) -> int:
    """``dim`` of polynomials of total degree ``<= m - 1`` in ``d`` variables."""
    return 0 if m == 0 else math.comb(m - 1 + d, d)

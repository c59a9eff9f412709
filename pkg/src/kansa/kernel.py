"""Radial basis kernels ``Phi(x, y) = phi(|x - y|)`` and their derivatives.

Every profile is written as a function of ``s = r**2`` so that derivatives
follow from the chain rule on ``s = |x - y|**2`` without ever touching the
square root. With ``u = x - y`` and ``g`` the profile in ``s``::

    d_i Phi       = 2 u_i g'
    d_ij Phi      = 4 u_i u_j g'' + 2 delta_ij g'
    d_ijk Phi     = 8 u_i u_j u_k g''' + 4 (delta_ij u_k + delta_ik u_j + delta_jk u_i) g''

Derivatives are always taken with respect to the first argument ``x``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

FAMILIES = ("gaussian", "multiquadric", "inverse_multiquadric")
MAX_DERIVATIVE_ORDER = 3

_ALIASES = {
    "gaussian": "gaussian",
    "ga": "gaussian",
    "multiquadric": "multiquadric",
    "mq": "multiquadric",
    "inverse_multiquadric": "inverse_multiquadric",
    "inversemultiquadric": "inverse_multiquadric",
    "imq": "inverse_multiquadric",
}


@dataclass(frozen=True)
class KernelSpec:
    """Radial kernel family and shape parameters.

    Parameters
    ----------
    family : str
        ``"gaussian"`` (``exp(-alpha r^2)``), ``"multiquadric"`` or
        ``"inverse_multiquadric"`` (both ``(alpha^2 + r^2)^beta``).
    alpha : float
        Positive shape parameter.
    beta : float, optional
        Exponent of the (inverse) multiquadric. Must not be a nonnegative
        integer; must be negative for the inverse multiquadric. Defaults to
        ``1/2`` and ``-1/2`` respectively; ignored for the Gaussian.
    nu : int
        Effective smoothness order used by the interpolation error indicator.
    """

    family: str = "gaussian"
    alpha: float = 1.0
    beta: float | None = None
    nu: int = 2

    def __post_init__(self):
        family = _ALIASES.get(str(self.family).lower().replace("-", "_"))
        if family is None:
            raise ValueError(f"unknown kernel family {self.family!r}; expected one of {FAMILIES}")
        object.__setattr__(self, "family", family)
        if not (self.alpha > 0 and math.isfinite(self.alpha)):
            raise ValueError(f"kernel alpha must be positive, got {self.alpha}")
        if family == "gaussian":
            object.__setattr__(self, "beta", None)
        else:
            beta = self.beta
            if beta is None:
                beta = 0.5 if family == "multiquadric" else -0.5
            beta = float(beta)
            if beta >= 0 and beta == int(beta):
                raise ValueError(f"multiquadric exponent must not be a nonnegative integer, got {beta}")
            if family == "inverse_multiquadric" and beta >= 0:
                raise ValueError(f"inverse multiquadric requires beta < 0, got {beta}")
            object.__setattr__(self, "beta", beta)
        if int(self.nu) != self.nu or self.nu < 2:
            raise ValueError(f"smoothness nu must be an integer >= 2, got {self.nu}")
        object.__setattr__(self, "nu", int(self.nu))

    @property
    def cpd_order(self) -> int:
        """Order ``m`` of conditional positive definiteness (0 = positive definite)."""
        if self.family == "gaussian" or self.beta < 0:
            return 0
        return math.ceil(self.beta)

    @property
    def positive_definite(self) -> bool:
        return self.cpd_order == 0

    def profile(self, s, order: int = 0):
        """``order``-th derivative of the profile ``g(s) = phi(sqrt(s))``."""
        s = np.asarray(s, dtype=float)
        if self.family == "gaussian":
            return (-self.alpha) ** order * np.exp(-self.alpha * s)
        coef = 1.0
        for i in range(order):
            coef *= self.beta - i
        return coef * (self.alpha**2 + s) ** (self.beta - order)

    def phi(self, r):
        """Radial profile ``phi(r)``."""
        r = np.asarray(r, dtype=float)
        return self.profile(r * r)


def _as_points(x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.ndim == 0 or y.ndim == 0:
        raise ValueError("points must be at least one-dimensional arrays")
    if x.shape[-1] != y.shape[-1]:
        raise ValueError(f"dimension mismatch: x has d={x.shape[-1]}, y has d={y.shape[-1]}")
    return x, y


def multiindex_axes(alpha_idx: Sequence[int], d: int) -> tuple[int, ...]:
    """Expand a multiindex into the list of differentiated axes, e.g. (2, 1) -> (0, 0, 1)."""
    alpha_idx = tuple(int(a) for a in alpha_idx)
    if len(alpha_idx) != d:
        raise ValueError(f"multiindex {alpha_idx} has length {len(alpha_idx)}, expected {d}")
    if any(a < 0 for a in alpha_idx):
        raise ValueError(f"multiindex {alpha_idx} has negative entries")
    if sum(alpha_idx) > MAX_DERIVATIVE_ORDER:
        raise ValueError(
            f"derivative order {sum(alpha_idx)} unsupported (maximum {MAX_DERIVATIVE_ORDER})"
        )
    return tuple(axis for axis, a in enumerate(alpha_idx) for _ in range(a))


def multiindices(d: int, max_order: int) -> list[tuple[int, ...]]:
    """All multiindices in ``d`` variables with total order ``<= max_order``, graded."""
    out = []
    for order in range(max_order + 1):
        out.extend(_compositions(order, d))
    return out


def _compositions(total: int, parts: int):
    if parts == 1:
        yield (total,)
        return
    for first in range(total, -1, -1):
        for rest in _compositions(total - first, parts - 1):
            yield (first,) + rest


def kernel_eval(spec: KernelSpec, x, y):
    """``Phi(x, y) = phi(|x - y|)``, broadcasting over leading axes."""
    x, y = _as_points(x, y)
    u = x - y
    return spec.profile(np.einsum("...i,...i->...", u, u))


def kernel_derivative(spec: KernelSpec, alpha_idx, x, y):
    """Analytic ``D^alpha_x Phi(x, y)`` for ``|alpha| <= 3``, broadcasting over leading axes."""
    x, y = _as_points(x, y)
    axes = multiindex_axes(alpha_idx, x.shape[-1])
    u = x - y
    s = np.einsum("...i,...i->...", u, u)
    order = len(axes)
    if order == 0:
        return spec.profile(s)
    if order == 1:
        (i,) = axes
        return 2.0 * u[..., i] * spec.profile(s, 1)
    if order == 2:
        i, j = axes
        out = 4.0 * u[..., i] * u[..., j] * spec.profile(s, 2)
        if i == j:
            out = out + 2.0 * spec.profile(s, 1)
        return out
    i, j, k = axes
    out = 8.0 * u[..., i] * u[..., j] * u[..., k] * spec.profile(s, 3)
    lower = np.zeros_like(s)
    if i == j:
        lower = lower + u[..., k]
    if i == k:
        lower = lower + u[..., j]
    if j == k:
        lower = lower + u[..., i]
    return out + 4.0 * lower * spec.profile(s, 2)


def kernel_matrix(spec: KernelSpec, x, y, alpha_idx=None) -> np.ndarray:
    """Matrix ``M[i, j] = D^alpha_x Phi(x_i, y_j)`` for point arrays of shape (n, d), (m, d)."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.atleast_2d(np.asarray(y, dtype=float))
    if alpha_idx is None:
        return kernel_eval(spec, x[:, None, :], y[None, :, :])
    return kernel_derivative(spec, alpha_idx, x[:, None, :], y[None, :, :])

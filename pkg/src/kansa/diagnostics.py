"""Stability constants, a priori bounds and error metrics.

Quantities here are diagnostics: sampled maxima are lower approximations and
the theoretical bounds are evaluated as written. Comparisons against them are
reported with a ``pass``/``flag`` marker and never abort a run.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.special import gammaln

from kansa.geometry import Rectangle, SiteSet, fill_distance, separation_distance
from kansa.interpolation import InterpolationSystem, assemble_system
from kansa.kernel import KernelSpec, kernel_derivative, multiindices
from kansa.solver import collocated_F, growth_ratio

DEFAULT_DELTA = 0.1
DEFAULT_K2_RESOLUTION = 41
K2_ORDER = 3
GAUSSIAN_LN_EXPONENT = 40.71


def compute_LN(kernel: KernelSpec, sites: SiteSet, tail=None) -> float:
    """Spectral norm of the inverse interpolation matrix (saddle matrix when a tail is present)."""
    M = assemble_system(kernel, sites, tail)
    smin = np.linalg.svd(M, compute_uv=False)[-1]
    if smin <= 0 or not np.isfinite(smin):
        raise np.linalg.LinAlgError("interpolation matrix is singular")
    return float(1.0 / smin)


def _domain_of(sites: SiteSet):
    if sites.domain is not None:
        return sites.domain
    pts = sites.points
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    hi = np.where(hi > lo, hi, lo + 1.0)
    return Rectangle(lo, hi)


def _kernel_branch(kernel: KernelSpec, domain, resolution: int) -> float:
    d = domain.dim
    alphas = multiindices(d, K2_ORDER)
    best = np.zeros(len(alphas))
    if isinstance(domain, Rectangle):
        # differences of a uniform tensor grid form the doubled grid on [-(b-a), b-a]
        w = np.array(domain.upper) - np.array(domain.lower)
        axes = [np.linspace(-wi, wi, 2 * resolution - 1) for wi in w]
        mesh = np.meshgrid(*axes, indexing="ij")
        blocks = [np.stack([m.ravel() for m in mesh], axis=-1)]
    else:
        pts = domain.candidate_grid(resolution)
        blocks = (
            (pts[i:i + 256, None, :] - pts[None, :, :]).reshape(-1, d)
            for i in range(0, pts.shape[0], 256)
        )
    for U in blocks:
        zero = np.zeros_like(U)
        for a, alpha in enumerate(alphas):
            best[a] = max(best[a], float(np.max(kernel_derivative(kernel, alpha, U, zero) ** 2)))
    return float(np.sqrt(best.sum()))


def _tail_branch(tail, domain, resolution: int) -> float:
    if tail is None or tail.Q == 0:
        return 0.0
    pts = domain.candidate_grid(resolution)
    total = 0.0
    for alpha in multiindices(tail.d, K2_ORDER):
        total += float(np.max(np.sum(tail.derivative(alpha, pts) ** 2, axis=1)))
    return float(np.sqrt(total))


def compute_K2(kernel: KernelSpec, sites: SiteSet, tail=None,
               sample_resolution: int = DEFAULT_K2_RESOLUTION, domain=None) -> float:
    """Sampled derivative-sum constant over all orders ``|alpha| <= 3``.

    The maxima over the domain are taken on a tensor sample grid with
    ``sample_resolution`` points per axis, so the result is a lower
    approximation of the true constant ("sampled K_2").
    """
    domain = _domain_of(sites) if domain is None else domain
    if tail is None:
        tail = sites.tail(kernel.cpd_order)
    elif isinstance(tail, int):
        tail = sites.tail(tail)
    return max(_kernel_branch(kernel, domain, sample_resolution),
               _tail_branch(tail, domain, sample_resolution))


def _check_delta(delta: float):
    if not 0 < delta < 0.2:
        raise ValueError(f"delta must lie in (0, 1/5), got {delta}")


def _exp_or_inf(log_value: float) -> float:
    try:
        return math.exp(log_value)
    except OverflowError:
        return math.inf


def log_stability_product(L_N, K_2, K_1, N, h, delta, T) -> float:
    _check_delta(delta)
    for name, v in (("L_N", L_N), ("K_2", K_2), ("K_1", K_1), ("N", N), ("h", h)):
        if not v > 0:
            raise ValueError(f"{name} must be positive, got {v}")
    if T < 0:
        raise ValueError(f"T must be nonnegative, got {T}")
    sqrtN = math.sqrt(N)
    return (delta * math.log(h) + math.log(sqrtN * L_N)
            + math.sqrt(3.0) * T * K_1 * K_2 * (1 + sqrtN) * L_N)


def stability_product(L_N, K_2, K_1, N, h, delta, T) -> float:
    """``h**delta sqrt(N) L_N exp(sqrt(3) T K_1 K_2 (1 + sqrt(N)) L_N)``; ``inf`` on overflow."""
    return _exp_or_inf(log_stability_product(L_N, K_2, K_1, N, h, delta, T))


def log_apriori_bound(sup_f, K_1, K_2, T, N, L_N) -> float:
    if sup_f < 0 or not (K_1 > 0 and K_2 > 0 and N > 0 and L_N > 0) or T < 0:
        raise ValueError("a priori bound needs sup_f >= 0, T >= 0 and positive K_1, K_2, N, L_N")
    sqrtN = math.sqrt(N)
    return (math.log(sup_f + 1.0 / (math.sqrt(2.0) * K_2))
            + math.sqrt(3.0) * T * K_1 * K_2 * sqrtN * (1 + sqrtN) * L_N)


def apriori_bound(sup_f, K_1, K_2, T, N, L_N) -> float:
    """Bound on ``max_k |v_k|`` (Euclidean norm over sites); ``inf`` on overflow."""
    return _exp_or_inf(log_apriori_bound(sup_f, K_1, K_2, T, N, L_N))


def c_tilde_2(d: int) -> float:
    """``12 (pi Gamma((d+2)/2)**2 / 9) ** (1/(d+1))``."""
    return 12.0 * math.exp((math.log(math.pi / 9.0) + 2 * gammaln((d + 2) / 2)) / (d + 1))


def c_tilde_1(d: int) -> float:
    """``(c_tilde_2 / sqrt(8)) ** d / (2 Gamma((d+2)/2))``."""
    return (c_tilde_2(d) / math.sqrt(8.0)) ** d / (2.0 * math.gamma((d + 2) / 2))


def ln_bound_gaussian(alpha: float, d: int, q_X: float, *, log: bool = False) -> float:
    """Theoretical bound on ``|A^-1|`` for the Gaussian kernel, evaluated as written.

    ``(2 alpha)**(d/2) / c1 * q_X**d * exp(40.71 d**2 / (alpha q_X**2))``.
    With ``log=True`` the natural logarithm is returned, which stays finite
    where the bound itself overflows.
    """
    if not (alpha > 0 and q_X > 0):
        raise ValueError("alpha and q_X must be positive")
    val = (0.5 * d * math.log(2 * alpha) - math.log(c_tilde_1(d)) + d * math.log(q_X)
           + GAUSSIAN_LN_EXPONENT * d * d / (alpha * q_X * q_X))
    return val if log else _exp_or_inf(val)


def ln_bound_multiquadric(alpha: float, beta: float, d: int, q_X: float, *, log: bool = False) -> float:
    """``q_X**(beta + d/2 - 1/2) exp(2 alpha c_tilde_2 / q_X)``.

    The leading constant is not available numerically and is factored out,
    so this is the bound *modulo its constant*.
    """
    if not (alpha > 0 and beta > 0 and q_X > 0):
        raise ValueError("alpha, beta and q_X must be positive")
    val = (beta + d / 2 - 0.5) * math.log(q_X) + 2 * alpha * c_tilde_2(d) / q_X
    return val if log else _exp_or_inf(val)


def _diffs(field_values, oracle):
    a = np.asarray(field_values, float).ravel()
    b = np.asarray(oracle, float).ravel()
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.size} values vs {b.size} oracle values")
    return a - b


def rms_error(field_values, oracle) -> float:
    return float(np.sqrt(np.mean(_diffs(field_values, oracle) ** 2)))


def max_error(field_values, oracle) -> float:
    return float(np.max(np.abs(_diffs(field_values, oracle))))


def seminorm_trace(sol, problem, system: InterpolationSystem | None = None) -> list[float]:
    """Native seminorm of the interpolant of the collocated ``F`` at every time level."""
    first = sol.interpolants[0]
    if system is None:
        system = InterpolationSystem(first.kernel, sol.sites, first.tail)
    out = []
    for k, t in enumerate(sol.time_grid):
        F = collocated_F(problem, float(t), sol.interpolants[k], sol.sites)
        out.append(system.fit(F).native_seminorm())
    return out


def estimate_K1(problem, samples: int = 1000, seed: int = 0) -> float:
    """Sampled growth constant ``max |F| / (1 + |z| + |p| + |Gamma|)``."""
    return growth_ratio(problem, samples, seed)


def max_site_value(values: np.ndarray) -> float:
    """``max_k |v_k|`` over time levels ``k < n`` (Euclidean norm over sites)."""
    values = np.atleast_2d(values)
    levels = values[:-1] if values.shape[0] > 1 else values
    return float(np.max(np.linalg.norm(levels, axis=1)))


CSV_FIELDS = ("N", "h", "q_X", "fill", "L_N", "K_2", "stability_product", "apriori_bound", "max_site_value")


@dataclass
class StabilityReport:
    N: int
    h: float
    q_X: float
    fill: float
    L_N: float
    K_2: float
    K_1: float
    delta: float
    T: float
    stability_product: float
    log10_stability_product: float
    ln_bound: float
    log10_ln_bound: float
    ln_bound_note: str
    apriori_bound: float
    log10_apriori_bound: float
    max_site_value: float = math.nan
    nu: int = 2
    seminorm_trace: list = field(default_factory=list)

    def __post_init__(self):
        _check_delta(self.delta)

    @property
    def seminorm_indicator(self) -> float:
        """``fill**nu (1 + max_k seminorm_k)``."""
        if not self.seminorm_trace:
            return math.nan
        return self.fill ** self.nu * (1 + max(self.seminorm_trace))

    def ln_bound_check(self) -> str:
        if not math.isfinite(self.log10_ln_bound):
            return "n/a"
        return "pass" if math.log10(self.L_N) <= self.log10_ln_bound else "flag"

    def apriori_check(self) -> str:
        if math.isnan(self.max_site_value):
            return "n/a"
        return "pass" if math.log10(max(self.max_site_value, 1e-300)) <= self.log10_apriori_bound else "flag"

    def to_text(self) -> str:
        lines = [
            ("N", self.N),
            ("h", _g(self.h)),
            ("q_X", _g(self.q_X)),
            ("fill", _g(self.fill)),
            ("quasi_uniformity", _g(self.fill / self.q_X) if self.q_X > 0 else "nan"),
            ("L_N", _g(self.L_N)),
            ("K_2 (sampled)", _g(self.K_2)),
            ("K_1", _g(self.K_1)),
            ("delta", _g(self.delta)),
            ("T", _g(self.T)),
            ("stability_product", _g(self.stability_product)),
            ("log10_stability_product", _g(self.log10_stability_product)),
            ("ln_bound", _g(self.ln_bound)),
            ("log10_ln_bound", _g(self.log10_ln_bound)),
            ("ln_bound_note", self.ln_bound_note),
            ("ln_bound_check", self.ln_bound_check()),
            ("apriori_bound", _g(self.apriori_bound)),
            ("log10_apriori_bound", _g(self.log10_apriori_bound)),
            ("max_site_value", _g(self.max_site_value)),
            ("apriori_check", self.apriori_check()),
        ]
        if self.seminorm_trace:
            lines += [
                ("seminorm_first", _g(self.seminorm_trace[0])),
                ("seminorm_last", _g(self.seminorm_trace[-1])),
                ("seminorm_max", _g(max(self.seminorm_trace))),
                ("seminorm_indicator", _g(self.seminorm_indicator)),
            ]
        return "".join(f"{k}: {v}\n" for k, v in lines)

    def csv_row(self) -> list[str]:
        data = asdict(self)
        return [str(self.N)] + [_g(data[k]) for k in CSV_FIELDS[1:]]


def _g(v) -> str:
    return f"{float(v):.12g}"


def _log10(x: float) -> float:
    return x / math.log(10.0)


def stability_report(kernel: KernelSpec, sites: SiteSet, *, h: float, T: float, sup_f: float,
                     K_1: float, tail=None, delta: float = DEFAULT_DELTA,
                     K2_resolution: int = DEFAULT_K2_RESOLUTION, fill_resolution: int = 200,
                     domain=None, solution=None, problem=None) -> StabilityReport:
    """Assemble every diagnostic for one kernel/site configuration.

    Passing ``solution`` (and ``problem``) adds the realised site maximum and
    the per-step seminorm trace.
    """
    _check_delta(delta)
    domain = _domain_of(sites) if domain is None else domain
    N = sites.N
    q = separation_distance(sites) if N >= 2 else math.nan
    fill = fill_distance(sites, domain, fill_resolution)
    L_N = compute_LN(kernel, sites, tail)
    K_2 = compute_K2(kernel, sites, tail, K2_resolution, domain)
    log_sp = log_stability_product(L_N, K_2, K_1, N, h, delta, T)
    log_ap = log_apriori_bound(sup_f, K_1, K_2, T, N, L_N)
    d = sites.dim
    if N < 2:
        log_ln, note = math.nan, "undefined for a single site"
    elif kernel.family == "gaussian":
        log_ln, note = ln_bound_gaussian(kernel.alpha, d, q, log=True), "gaussian bound"
    elif kernel.beta < 0:
        log_ln = ln_bound_multiquadric(kernel.alpha, -kernel.beta, d, q, log=True)
        note = "inverse multiquadric bound modulo its constant"
    else:
        log_ln, note = math.nan, "no closed-form bound for this kernel"
    report = StabilityReport(
        N=N, h=h, q_X=q, fill=fill, L_N=L_N, K_2=K_2, K_1=K_1, delta=delta, T=T,
        stability_product=_exp_or_inf(log_sp), log10_stability_product=_log10(log_sp),
        ln_bound=_exp_or_inf(log_ln) if math.isfinite(log_ln) else math.nan,
        log10_ln_bound=_log10(log_ln), ln_bound_note=note,
        apriori_bound=_exp_or_inf(log_ap), log10_apriori_bound=_log10(log_ap), nu=kernel.nu,
    )
    if solution is not None:
        report.max_site_value = max_site_value(solution.values)
        if problem is not None:
            report.seminorm_trace = seminorm_trace(solution, problem)
    return report


__all__ = [
    "StabilityReport",
    "apriori_bound",
    "compute_K2",
    "compute_LN",
    "estimate_K1",
    "ln_bound_gaussian",
    "ln_bound_multiquadric",
    "max_error",
    "max_site_value",
    "rms_error",
    "seminorm_trace",
    "stability_product",
    "stability_report",
]

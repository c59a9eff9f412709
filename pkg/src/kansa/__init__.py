"""Meshfree Kansa-type collocation for terminal-value problems of fully
nonlinear parabolic equations.

The package is organised bottom-up:

``kernel``         radial basis kernels and their analytic derivatives
``geometry``       domains, site sets, fill/separation distance, unisolvency
``interpolation``  the saddle-point interpolation system and interpolants
``solver``         the backward theta-scheme collocation recursion
``diagnostics``    stability constants, a priori bounds and error metrics
``bench``          the KPZ and heat benchmarks with their exact oracles
``cli``            the ``kansa`` command-line front end
"""

from kansa.errors import (
    ConfigError,
    ConvergenceError,
    IllConditionedError,
    KansaError,
    NotUnisolventError,
)
from kansa.kernel import KernelSpec, kernel_derivative, kernel_eval
from kansa.geometry import (
    Ball,
    Rectangle,
    SiteSet,
    equispaced_grid,
    fill_distance,
    quasi_uniformity,
    separation_distance,
    unisolvency_check,
)
from kansa.polynomials import PolynomialTail
from kansa.interpolation import (
    Interpolant,
    InterpolationSystem,
    assemble_system,
    error_indicator,
    fit,
    interpolant_derivative,
    interpolant_eval,
    native_seminorm,
)
from kansa.solver import (
    ParabolicProblem,
    SchemeConfig,
    SolutionField,
    collocated_F,
    evaluate_solution,
    solve,
    step_backward,
)

__version__ = "0.1.0"

__all__ = [
    "Ball",
    "ConfigError",
    "ConvergenceError",
    "IllConditionedError",
    "Interpolant",
    "InterpolationSystem",
    "KansaError",
    "KernelSpec",
    "NotUnisolventError",
    "ParabolicProblem",
    "PolynomialTail",
    "Rectangle",
    "SchemeConfig",
    "SiteSet",
    "SolutionField",
    "assemble_system",
    "collocated_F",
    "equispaced_grid",
    "error_indicator",
    "evaluate_solution",
    "fill_distance",
    "fit",
    "interpolant_derivative",
    "interpolant_eval",
    "kernel_derivative",
    "kernel_eval",
    "native_seminorm",
    "quasi_uniformity",
    "separation_distance",
    "solve",
    "step_backward",
    "unisolvency_check",
]

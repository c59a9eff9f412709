import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kansa.kernel import (
    KernelSpec,
    kernel_derivative,
    kernel_eval,
    kernel_matrix,
    multiindex_axes,
    multiindices,
)

SPECS = [
    KernelSpec("gaussian", 0.7),
    KernelSpec("multiquadric", 1.3, 0.5),
    KernelSpec("multiquadric", 0.9, 1.5),
    KernelSpec("inverse_multiquadric", 1.1, -0.5),
    KernelSpec("inverse_multiquadric", 1.0, -1.0),
]


def test_gaussian_values():
    g = KernelSpec("gaussian", 1.0)
    assert kernel_eval(g, [0.2, 0.4], [0.2, 0.4]) == 1.0
    assert kernel_eval(g, [1.0, 0.0], [0.0, 0.0]) == pytest.approx(0.3678794, abs=1e-7)


def test_inverse_multiquadric_value():
    s = KernelSpec("imq", 1.0, -1.0)
    assert s.family == "inverse_multiquadric"
    assert kernel_eval(s, [1.0], [0.0]) == pytest.approx(0.5, abs=1e-15)


def test_dimension_mismatch():
    with pytest.raises(ValueError):
        kernel_eval(KernelSpec(), [0.0, 1.0], [0.0])
    with pytest.raises(ValueError):
        kernel_derivative(KernelSpec(), (1, 0), [0.0, 1.0], [0.0])


@pytest.mark.parametrize("kw", [
    dict(family="spline"),
    dict(alpha=0.0),
    dict(alpha=-1.0),
    dict(family="multiquadric", beta=1.0),
    dict(family="inverse_multiquadric", beta=0.5),
    dict(nu=1),
])
def test_invalid_specs(kw):
    with pytest.raises(ValueError):
        KernelSpec(**kw)


def test_cpd_order():
    assert KernelSpec("gaussian").cpd_order == 0
    assert KernelSpec("multiquadric", 1.0, 0.5).cpd_order == 1
    assert KernelSpec("multiquadric", 1.0, 2.5).cpd_order == 3
    assert KernelSpec("inverse_multiquadric").positive_definite


def test_multiindex_axes():
    assert multiindex_axes((0, 0), 2) == ()
    assert multiindex_axes((2, 1), 2) == (0, 0, 1)
    with pytest.raises(ValueError):
        multiindex_axes((2, 2), 2)
    with pytest.raises(ValueError):
        multiindex_axes((1,), 2)
    with pytest.raises(ValueError):
        multiindex_axes((-1, 1), 2)


def test_multiindices_count():
    # graded count of |alpha| <= 3 in d dims is C(3+d, d)
    for d in (1, 2, 3):
        assert len(multiindices(d, 3)) == math.comb(3 + d, d)


def test_zero_multiindex_is_value():
    for spec in SPECS:
        x, y = np.array([0.3, -0.2]), np.array([1.0, 0.5])
        assert kernel_derivative(spec, (0, 0), x, y) == kernel_eval(spec, x, y)


def test_odd_derivative_vanishes_at_origin():
    assert kernel_derivative(KernelSpec("gaussian", 1.0), (1,), [0.4], [0.4]) == 0.0


def _fd(spec, alpha_idx, x, y, step=1e-4):
    """One central difference of the next-lower derivative.

    Order zero is the plain kernel value, so each order is checked against
    the one below it.
    """
    axes = multiindex_axes(alpha_idx, len(x))
    first, rest = axes[-1], list(alpha_idx)
    rest[first] -= 1
    e = np.zeros(len(x))
    e[first] = step
    lower = tuple(rest)
    return (kernel_derivative(spec, lower, x + e, y) - kernel_derivative(spec, lower, x - e, y)) / (2 * step)


def test_gaussian_second_derivative_fd():
    spec = KernelSpec("gaussian", 1.0)
    x, y = np.array([0.3, 0.0]), np.zeros(2)
    exact = kernel_derivative(spec, (2, 0), x, y)
    # closed form: (4 a^2 x^2 - 2 a) exp(-a x^2)
    assert exact == pytest.approx((4 * 0.09 - 2) * math.exp(-0.09), rel=1e-14)
    # second difference of plain values with step 1e-4
    h = 1e-4
    e = np.array([h, 0.0])
    fd = (kernel_eval(spec, x + e, y) - 2 * kernel_eval(spec, x, y) + kernel_eval(spec, x - e, y)) / h**2
    assert abs(fd - exact) <= 1e-5 * abs(exact)


@pytest.mark.parametrize("d", [1, 2, 3])
@pytest.mark.parametrize("spec", SPECS, ids=lambda s: f"{s.family}-{s.beta}")
def test_derivatives_match_finite_differences(spec, d):
    rng = np.random.default_rng(100 + d)
    for alpha_idx in multiindices(d, 3)[1:]:
        for _ in range(100):
            x, y = rng.uniform(-2, 2, d), rng.uniform(-2, 2, d)
            exact = kernel_derivative(spec, alpha_idx, x, y)
            approx = _fd(spec, alpha_idx, x, y)
            scale = max(abs(exact), 1e-3)
            assert abs(approx - exact) <= 1e-5 * scale, (alpha_idx, x, y)


def test_kernel_matrix_shape_and_symmetry():
    rng = np.random.default_rng(0)
    X = rng.uniform(-1, 1, (6, 2))
    A = kernel_matrix(KernelSpec("gaussian", 2.0), X, X)
    assert A.shape == (6, 6)
    np.testing.assert_array_equal(A, A.T)
    D = kernel_matrix(KernelSpec("gaussian", 2.0), X, X[:3], (1, 0))
    assert D.shape == (6, 3)


coords = st.floats(-3, 3, allow_nan=False)


@settings(max_examples=60, deadline=None)
@given(st.lists(coords, min_size=4, max_size=4), st.sampled_from(SPECS))
def test_symmetry(v, spec):
    x, y = np.array(v[:2]), np.array(v[2:])
    assert kernel_eval(spec, x, y) == kernel_eval(spec, y, x)


@settings(max_examples=60, deadline=None)
@given(st.lists(coords, min_size=4, max_size=4), st.floats(0, 2 * math.pi), st.sampled_from(SPECS))
def test_radiality(v, angle, spec):
    x, y = np.array(v[:2]), np.array(v[2:])
    c, s = math.cos(angle), math.sin(angle)
    R = np.array([[c, -s], [s, c]])
    assert abs(kernel_eval(spec, R @ x, R @ y) - kernel_eval(spec, x, y)) <= 1e-12

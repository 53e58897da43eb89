import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate

from alignflow.errors import KernelError, NoDiameterBoundError
from alignflow.kernel import (ConstantKernel, PowerTailKernel, TabulatedKernel, evaluate,
                              flocking_constants, make_kernel)


def test_constant_kernel_is_constant():
    assert evaluate(ConstantKernel(1.0, dimension=2), [3.7, -2.0]) == 1.0


def test_power_tail_values():
    k = PowerTailKernel(1.0, dimension=2)
    assert evaluate(k, [0.0, 0.0]) == 1.0
    # |x| = sqrt(3): (1 + 3)^(-1/2)
    assert evaluate(k, [1.0, math.sqrt(2.0)]) == pytest.approx(0.5, rel=1e-15)


def test_primitive_simple_values():
    assert ConstantKernel(1.0).primitive(0.7) == pytest.approx(0.7, rel=1e-15)
    for k in (ConstantKernel(2.0), PowerTailKernel(1.0), PowerTailKernel(0.5)):
        assert k.primitive(0.0) == 0.0
    assert PowerTailKernel(1.0).primitive(1.0) == pytest.approx(math.asinh(1.0), rel=1e-14)


@pytest.mark.parametrize("s", [0.5, 1.0, 1.5, 3.0])
def test_power_tail_primitive_matches_quadrature(s):
    k = PowerTailKernel(s)
    for x in (-2.5, 0.3, 4.0):
        ref = integrate.quad(lambda y: (1 + y * y) ** (-s / 2), 0.0, x, epsabs=0, epsrel=1e-13)[0]
        assert k.primitive(x) == pytest.approx(ref, rel=1e-10)


def test_lateral_primitive_matches_quadrature():
    k = PowerTailKernel(1.0, dimension=2)
    for x1, q in ((0.8, 0.3), (-1.7, -0.9), (2.0, 0.0)):
        ref = integrate.quad(lambda y: (1 + y * y + q * q) ** -0.5, 0.0, x1, epsrel=1e-13)[0]
        assert k.primitive(x1, q) == pytest.approx(ref, rel=1e-10)


def test_lateral_primitive_derivative_finite_difference():
    k = PowerTailKernel(1.0, dimension=2)
    h = 1e-5
    for x1, q in ((0.8, 0.3), (-1.7, -0.9)):
        fd = (k.primitive(x1, q + h) - k.primitive(x1, q - h)) / (2 * h)
        assert k.primitive_dlat(x1, q) == pytest.approx(fd, rel=1e-7)


@given(st.floats(-5, 5), st.floats(1e-3, 2), st.floats(0.2, 2.0))
def test_primitive_increment_bracketed(x, h, s):
    k = PowerTailKernel(s)
    inc = k.primitive(x + h) - k.primitive(x)
    vals = k(np.linspace(x, x + h, 201))
    assert h * vals.min() * (1 - 1e-9) <= inc <= h * vals.max() * (1 + 1e-9)


@given(st.floats(-4, 4), st.floats(0.3, 2.0))
def test_primitive_derivative_is_kernel(x, s):
    k = PowerTailKernel(s)
    h = 1e-4
    fd = (k.primitive(x + h) - k.primitive(x - h)) / (2 * h)
    assert fd == pytest.approx(float(k(x)), rel=1e-6)


@given(st.floats(0.1, 5), st.floats(0.0, 3))
def test_primitive_is_odd(x, q):
    k = PowerTailKernel(1.0, dimension=2)
    assert k.primitive(-x, q) == pytest.approx(-k.primitive(x, q), rel=1e-13)


def test_flocking_constants_constant_kernel():
    c = flocking_constants(ConstantKernel(1.0), 1.0, 0.5, 1.0, 1.0)
    assert c.diam_bound == pytest.approx(1.5, abs=1e-11)
    assert c.a == 0.0 and c.b == pytest.approx(1.0)


def test_flocking_constants_already_aligned():
    k = PowerTailKernel(1.0)
    c = flocking_constants(k, 2.0, 0.0, 1.0, 1.0)
    assert c.diam_bound == 2.0
    assert c.kernel_floor == pytest.approx(float(k(2.0)))


def test_flocking_constants_power_tail_inverts_asinh():
    c = flocking_constants(PowerTailKernel(1.0), 1.0, 1.0, 1.0, 1.0)
    assert c.diam_bound == pytest.approx(math.sinh(1.0 + math.asinh(1.0)), abs=1e-10)


@given(st.floats(0.0, 3.0), st.floats(0.01, 2.0))
def test_flocking_constants_monotone_in_amplitude(A0, dA):
    k = PowerTailKernel(1.0)
    lo = flocking_constants(k, 1.0, A0, 1.0, 1.0)
    hi = flocking_constants(k, 1.0, A0 + dA, 1.0, 1.0)
    assert hi.diam_bound > lo.diam_bound
    assert hi.kernel_floor < lo.kernel_floor


def test_thin_tail_has_no_diameter_bound():
    with pytest.raises(NoDiameterBoundError, match="no a-priori diameter bound"):
        flocking_constants(PowerTailKernel(2.0), 1.0, 1.0, 1.0, 1.0)


def test_tabulated_kernel_is_monotone_and_matches_samples():
    r = np.array([0.0, 0.5, 1.0, 2.0, 4.0])
    k = TabulatedKernel(r, 1.0 / np.sqrt(1 + r ** 2), heavy_tailed=True)
    assert np.allclose(k.radial(r), 1.0 / np.sqrt(1 + r ** 2))
    vals = k.radial(np.linspace(0, 10, 500))
    assert np.all(np.diff(vals) <= 1e-15)
    assert k.primitive(1.0) == pytest.approx(
        integrate.quad(lambda y: float(k.radial(abs(y))), 0, 1)[0], rel=1e-9)


def test_make_kernel_round_trip_and_errors():
    k = make_kernel({"family": "powertail", "exponent": 1.0, "scale": 2.0})
    assert make_kernel(k.to_dict()) == k
    with pytest.raises(KernelError):
        make_kernel({"family": "gaussian"})

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate

from alignflow.errors import MeasureError
from alignflow.kernel import ConstantKernel, PowerTailKernel
from alignflow.measure import MassMeasure, convolve, lumped_measure, total_mass, w1_distance_1d


def test_total_mass_of_equal_labels():
    m = lumped_measure(lambda a: np.ones_like(a), [(0.0, 1.0)], [100])
    assert np.allclose(m.weights, 0.01)
    assert total_mass(m) == pytest.approx(1.0, abs=1e-15)


def test_total_mass_with_atoms():
    m = lumped_measure(lambda a: np.ones_like(a), [(0.0, 1.0)], [50],
                       atoms=[(0.2, 0.25), (0.9, 0.25)])
    assert total_mass(m) == pytest.approx(1.5, abs=1e-15)


def test_empty_measure_rejected():
    with pytest.raises(MeasureError):
        lumped_measure(lambda a: np.zeros_like(a), [(0.0, 1.0)], [10])


def test_normalization_and_atom_validation():
    m = lumped_measure(lambda a: 3 * np.ones_like(a), [(0.0, 2.0)], [20], normalize_to=1.0)
    assert m.total_mass == pytest.approx(1.0, abs=1e-15)
    assert m.density_fn(np.array([0.5]))[0] == pytest.approx(0.5)
    with pytest.raises(MeasureError):
        lumped_measure(lambda a: np.ones_like(a), [(0.0, 1.0)], [4], atoms=[(2.0, 1.0)])


def test_two_dimensional_layout_is_slice_major():
    m = lumped_measure(lambda a1, a2: np.ones_like(a1), [(0, 1), (0, 2)], [4, 3])
    assert m.positions.shape == (12, 2)
    assert np.all(m.positions[:4, 1] == m.positions[0, 1])
    assert m.total_mass == pytest.approx(2.0)


def test_convolve_constant_kernel_is_total_mass():
    m = lumped_measure(lambda a: 0.5 + a ** 2, [(-1.0, 1.0)], [64], atoms=[(0.3, 0.2)])
    vals = convolve(ConstantKernel(1.0), m, np.linspace(-3, 3, 7))
    assert np.allclose(vals, m.total_mass, rtol=1e-14)


def test_convolve_single_atom():
    m = lumped_measure(lambda a: np.zeros_like(a), [(0.0, 1.0)], [1], atoms=[(0.4, 0.7)])
    k = PowerTailKernel(1.0)
    assert convolve(k, m, 1.9) == pytest.approx(0.7 * float(k(1.5)), rel=1e-15)


def test_convolve_converges_to_quadrature():
    k = PowerTailKernel(1.0)
    ref = integrate.quad(lambda y: float(k(y)), 0.0, 1.0, epsrel=1e-13)[0]
    errs = []
    for n in (64, 256, 1024):
        m = lumped_measure(lambda a: np.ones_like(a), [(0.0, 1.0)], [n])
        errs.append(abs(convolve(k, m, 0.0) - ref))
    assert errs[-1] <= 1e-6
    assert errs[0] > errs[1] > errs[2]


def test_convolve_rejects_mismatched_positions():
    m = lumped_measure(lambda a: np.ones_like(a), [(0.0, 1.0)], [8])
    with pytest.raises(MeasureError):
        convolve(ConstantKernel(1.0), m, 0.0, positions=np.zeros(5))


def _unit(pos):
    pos = np.atleast_1d(np.asarray(pos, dtype=float))
    return pos, np.full(pos.size, 1.0 / pos.size)


def test_w1_simple_values():
    mu = _unit(np.linspace(0, 1, 11))
    assert w1_distance_1d(mu, mu) == 0.0
    assert w1_distance_1d(_unit(0.0), _unit(1.0)) == pytest.approx(1.0)


def test_w1_shifted_uniforms():
    # uniform[0,1] vs uniform[0.5,1.5] lumped at the same resolution
    n = 1000
    a = (np.arange(n) + 0.5) / n
    got = w1_distance_1d((a, np.full(n, 1 / n)), (a + 0.5, np.full(n, 1 / n)))
    assert got == pytest.approx(0.5, abs=1e-12)


def test_w1_dominates_lipschitz_test_functions():
    rng = np.random.default_rng(7)
    x, y = rng.uniform(0, 1, 30), rng.uniform(0.2, 1.4, 30)
    w = np.full(30, 1 / 30)
    d = w1_distance_1d((x, w), (y, w))
    grid = np.linspace(-0.5, 2.0, 501)
    for _ in range(200):
        slopes = rng.uniform(-1, 1, grid.size - 1)
        f = np.concatenate([[0.0], np.cumsum(slopes * np.diff(grid))])
        gap = abs(np.sum(w * np.interp(x, grid, f)) - np.sum(w * np.interp(y, grid, f)))
        assert gap <= d + 1e-12


points = st.lists(st.floats(-5, 5), min_size=1, max_size=12)


@given(points, points, points)
def test_w1_is_a_metric(a, b, c):
    A, B, C = _unit(a), _unit(b), _unit(c)
    dab, dba = w1_distance_1d(A, B), w1_distance_1d(B, A)
    assert dab == pytest.approx(dba, abs=1e-12)
    assert dab <= w1_distance_1d(A, C) + w1_distance_1d(C, B) + 1e-12


def test_w1_rejects_unequal_mass_and_2d():
    with pytest.raises(MeasureError):
        w1_distance_1d(([0.0], [1.0]), ([0.0], [1.1]))
    m2 = lumped_measure(lambda a1, a2: np.ones_like(a1), [(0, 1), (0, 1)], [2, 2])
    with pytest.raises(MeasureError):
        w1_distance_1d(m2, m2)


@given(st.floats(-2, 2), st.floats(0.1, 3.0))
def test_convolve_linear_and_bounded(x, scale):
    k = PowerTailKernel(1.0)
    m = lumped_measure(lambda a: np.exp(-a * a), [(-1, 1)], [32])
    m2 = lumped_measure(lambda a: scale * np.exp(-a * a), [(-1, 1)], [32])
    v, v2 = convolve(k, m, x), convolve(k, m2, x)
    assert v2 == pytest.approx(scale * v, rel=1e-12)
    assert v <= k.sup_value * m.total_mass

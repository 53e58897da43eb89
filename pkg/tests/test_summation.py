import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from alignflow.kernel import ConstantKernel, PowerTailKernel
from alignflow.summation import (ChebyshevSummer, DirectSummer, LabelLayout, compensated_sum,
                                 make_summer, tree_sum, two_sum)


@given(st.floats(-1e300, 1e300), st.floats(-1e300, 1e300))
def test_two_sum_is_error_free(a, b):
    s, e = two_sum(a, b)
    assert s == a + b
    if math.isfinite(s):
        assert math.fsum([a, b, -s]) == e


@given(st.lists(st.floats(-1e10, 1e10), min_size=1, max_size=200))
def test_compensated_sum_matches_fsum(xs):
    assert compensated_sum(np.array(xs)) == pytest.approx(math.fsum(xs), abs=1e-6)


def test_tree_sum_is_order_independent_of_block_count():
    rng = np.random.default_rng(1)
    parts = [rng.normal(size=7) for _ in range(13)]
    assert np.array_equal(tree_sum(parts), tree_sum(list(parts)))


def _brute(kernel, w, x, lat=None, part="phi"):
    fn = {"phi": kernel, "prim": kernel.primitive, "d1": kernel.d1}[part]
    if lat is None:
        return np.array([sum(w[j] * float(fn(x[i] - x[j])) for j in range(x.size))
                         for i in range(x.size)])
    return np.array([sum(w[j] * float(fn(x[i] - x[j], lat[i] - lat[j]))
                         for j in range(x.size)) for i in range(x.size)])


@pytest.mark.parametrize("part", ["phi", "prim", "d1"])
def test_direct_summer_matches_brute_force(part):
    rng = np.random.default_rng(0)
    x = np.sort(rng.uniform(-1, 1, 40))
    w = rng.uniform(0.1, 1, 40)
    k = PowerTailKernel(1.0)
    got = DirectSummer(k, w, block=7).sum(part, x)
    assert np.allclose(got, _brute(k, w, x, part=part), rtol=1e-12, atol=1e-14)


def test_direct_summer_independent_of_workers():
    rng = np.random.default_rng(3)
    x = rng.uniform(-1, 1, 1000)
    w = rng.uniform(0, 1, 1000)
    k = PowerTailKernel(1.0)
    a = DirectSummer(k, w, workers=1).sum("phi", x)
    b = DirectSummer(k, w, workers=4).sum("phi", x)
    assert np.array_equal(a, b)


def test_chebyshev_summer_accuracy_1d():
    rng = np.random.default_rng(5)
    x = np.sort(rng.uniform(-1.5, 1.5, 2048))
    w = rng.uniform(0, 1, 2048) / 2048
    k = PowerTailKernel(1.0)
    for part in ("phi", "prim", "d1"):
        ref = DirectSummer(k, w).sum(part, x)
        got = ChebyshevSummer(k, w).sum(part, x)
        assert np.max(np.abs(got - ref)) <= 1e-10 * max(1.0, np.max(np.abs(ref)))


def test_chebyshev_summer_accuracy_2d():
    n1, n2 = 24, 16
    a1 = np.linspace(-1, 1, n1)
    a2 = np.linspace(-1, 1, n2)
    layout = LabelLayout(n_slices=n2, lateral=a2)
    X = np.tile(a1, n2) + 0.05 * np.sin(np.arange(n1 * n2))
    w = np.full(n1 * n2, 1.0 / (n1 * n2))
    k = PowerTailKernel(1.0, dimension=2)
    for part in ("phi", "prim", "dlat"):
        ref = DirectSummer(k, w, layout).sum(part, X)
        got = ChebyshevSummer(k, w, layout).sum(part, X)
        assert np.max(np.abs(got - ref)) <= 1e-10


def test_constant_kernel_sum_is_total_mass():
    w = np.full(10, 0.1)
    got = make_summer(ConstantKernel(1.0), w).sum("phi", np.linspace(0, 3, 10))
    assert np.allclose(got, 1.0, rtol=1e-15)

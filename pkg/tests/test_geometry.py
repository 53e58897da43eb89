import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from alignflow.errors import LimitError
from alignflow.geometry import (box_dimension, covering_number, dyadic_radii, frostman_ratio,
                                label_image_cells, local_dimension)
from alignflow.limits import MeasureDecomposition, SingularAtom


def middle_thirds(depth):
    pts = np.array([0.0])
    for k in range(1, depth + 1):
        pts = np.concatenate([pts, pts + 2 * 3.0 ** -k])
    return pts


def test_single_point_has_dimension_zero():
    est = box_dimension([0.3])
    assert est.slope == 0.0


def test_equispaced_points_are_one_dimensional():
    pts = np.linspace(0, 1, 1025)
    h = pts[1] - pts[0]
    est = box_dimension(pts, r_min=8 * h, r_max=0.25)
    assert est.slope == pytest.approx(1.0, abs=0.05)


def test_middle_thirds_dimension():
    est = box_dimension(middle_thirds(10), r_min=3.0 ** -10)
    assert est.slope == pytest.approx(math.log(2) / math.log(3), abs=0.05)


def test_window_too_small_raises():
    with pytest.raises(LimitError):
        box_dimension(np.linspace(0, 1, 5))


def test_covering_number_examples():
    assert covering_number([], 1.0) == 0
    assert covering_number([0.0, 0.1, 0.2], 0.1) == 1
    assert covering_number([0.0, 1.0, 2.0], 0.1) == 3


@given(st.lists(st.floats(-10, 10), min_size=1, max_size=40), st.floats(1e-3, 1.0))
def test_covering_number_monotone_in_radius(pts, r):
    assert covering_number(pts, r) >= covering_number(pts, 2 * r)
    assert 1 <= covering_number(pts, r) <= len(set(pts))


@given(st.lists(st.floats(-10, 10), min_size=1, max_size=40), st.floats(1e-3, 1.0))
def test_covering_number_is_minimal(pts, r):
    # any cover by intervals of length 2r needs at least as many as a 2r-separated subset
    x = np.sort(pts)
    sep, last = 0, -np.inf
    for v in x:
        if v > last + 2 * r:
            sep, last = sep + 1, v
    assert covering_number(pts, r) == sep


def test_dyadic_radii():
    r = dyadic_radii(1.0, 0.1)
    assert np.allclose(r, [1, 0.5, 0.25, 0.125])
    with pytest.raises(ValueError):
        dyadic_radii(0.0, 0.1)


def _uniform_decomposition(n=2000, atom=None):
    X = (np.arange(n) + 0.5) / n
    atoms = [] if atom is None else [SingularAtom(atom[0], atom[1], 0, None, None, 0.0)]
    return MeasureDecomposition(X, None, np.full(n, 1.0 / n), np.ones(n), np.arange(n),
                                atoms, 1.0 + (0 if atom is None else atom[1])), X


def test_local_dimension_of_lebesgue():
    dec, X = _uniform_decomposition()
    est = local_dimension(dec, 0.5, np.geomspace(0.1, 1e-3, 8), X)
    assert est.slope == pytest.approx(1.0, abs=1e-6)


def test_local_dimension_of_atom():
    dec, X = _uniform_decomposition(atom=(0.5, 0.2))
    est = local_dimension(dec, 0.5, np.geomspace(1e-2, 1e-5, 8), X)
    assert abs(est.slope) < 0.02


def test_local_dimension_outside_support():
    dec, X = _uniform_decomposition()
    with pytest.raises(LimitError):
        local_dimension(dec, 5.0, np.geomspace(0.1, 1e-3, 6), X)


def test_label_image_cells_tile():
    X = np.array([0.0, 1.0, 3.0])
    lo, hi = label_image_cells(X)
    assert np.allclose(lo, [-0.5, 0.5, 2.0]) and np.allclose(hi, [0.5, 2.0, 4.0])


def test_frostman_ratio_on_cantor_measure():
    pts = middle_thirds(8)
    m = np.full(pts.size, 1.0 / pts.size)
    s = math.log(2) / math.log(3)
    ratio = frostman_ratio(pts, m, s, 3.0 ** -np.arange(1, 7))
    assert 0.5 < ratio < 4.0
    # a larger exponent makes the ratio grow as r shrinks
    assert frostman_ratio(pts, m, 0.9, [3.0 ** -7]) > frostman_ratio(pts, m, s, [3.0 ** -7])

import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate

from alignflow.errors import ScenarioError, SupercriticalError
from alignflow.kernel import ConstantKernel
from alignflow.measure import lumped_measure
from alignflow.scenario import (CantorEntropy, cantor_geometry, cantor_prediction,
                                cantor_scenario, constant_kernel_oracle, entropy_e0, f0,
                                f0_at_particles, from_velocity, generic_scenario,
                                plateau_scenario, powerlaw_scenario, ring_scenario_2d,
                                supercritical_scenario, zero_set)


@pytest.fixture(scope="module")
def oracle():
    return constant_kernel_oracle(n_labels=128)


def test_oracle_entropy_closed_form(oracle):
    a = np.linspace(-1, 1, 41)
    assert np.allclose(entropy_e0(oracle, a), 1 - np.cos(np.pi * a), atol=1e-14)
    assert np.allclose(oracle.e0_labels[:oracle.n_labels],
                       1 - np.cos(np.pi * oracle.alpha), atol=1e-13)


def test_oracle_momentum_vanishes(oracle):
    assert abs(oracle.momentum) < 1e-15


def test_f0_derivative_is_e0(oracle):
    s = generic_scenario(n_labels=64)
    a = np.linspace(-0.8, 0.8, 9)
    h = 1e-5
    fd = (f0(s, a + h) - f0(s, a - h)) / (2 * h)
    assert np.allclose(fd, entropy_e0(s, a), atol=1e-6)


def test_f0_at_particles_matches_f0(oracle):
    assert np.allclose(f0_at_particles(oracle), f0(oracle, oracle.alpha), atol=1e-12)


def test_supercritical_oracle_rejected():
    with pytest.raises(ScenarioError):
        constant_kernel_oracle(u0_amplitude=1.5)


def test_zero_set_oracle_is_origin(oracle):
    zs = zero_set(oracle, eps_z=1e-12)
    (ivs,) = zs.slices
    assert len(ivs) == 1
    b, g = ivs[0]
    assert abs(b) < 1e-4 and abs(g) < 1e-4


def test_zero_set_empty_for_positive_entropy():
    m0 = lumped_measure(lambda a: np.full_like(a, 0.5), [(-1, 1)], [64])
    s = from_velocity("flat", ConstantKernel(1.0), 1.0, m0,
                      lambda a: np.zeros_like(a), lambda a: np.zeros_like(a))
    assert np.allclose(s.e0_labels, 1.0)
    zs = zero_set(s)
    assert zs.empty and zs.total_length() == 0.0
    assert np.all(zs.label_interval == -1)


def test_plateau_zero_interval():
    s = plateau_scenario(zero_half_width=0.3, n_labels=200)
    zs = zero_set(s)
    (ivs,) = zs.slices
    assert len(ivs) == 1
    assert ivs[0][0] == pytest.approx(-0.3, abs=1e-8)
    assert ivs[0][1] == pytest.approx(0.3, abs=1e-8)


def test_supercritical_crossing_bound():
    s = supercritical_scenario(n_labels=200)
    with pytest.raises(SupercriticalError) as exc:
        zero_set(s)
    err = exc.value
    assert err.value < 0 and abs(err.location) < 0.1
    # negative region of 1 - 2cos(pi a) is |a| < 1/3, integral 2/3 - 2*sqrt(3)/pi
    integral = 2 / 3 - 2 * math.sqrt(3) / math.pi
    assert err.crossing_time_bound == pytest.approx((2 / 3) / abs(integral), rel=1e-4)


def test_cantor_kept_length():
    g = 0.3
    geom = cantor_geometry(g, 6)
    kept = geom.kept_intervals(6)
    assert len(kept) == 64
    length = math.fsum(b - a for a, b in kept)
    exact = 1 - sum(2 ** (j - 1) * g ** j for j in range(1, 7))
    assert length == pytest.approx(exact, abs=1e-14)
    assert exact == pytest.approx(0.2857, abs=1e-3)
    assert (1 - 3 * g) / (1 - 2 * g) == pytest.approx(0.25)


def test_cantor_geometry_rejects_thin_gamma():
    with pytest.raises(ScenarioError):
        cantor_geometry(0.34, 3)
    with pytest.raises(ScenarioError):
        cantor_geometry(0.3, 0)


def test_cantor_prediction_values():
    pred = cantor_prediction(0.3, 0.3)
    assert pred["dimension"] == pytest.approx(math.log(2) / math.log(1 / 0.09), rel=1e-14)
    assert pred["dimension"] == pytest.approx(0.28786, abs=1e-5)
    assert pred["ceiling"] == 0.5


@pytest.fixture(scope="module")
def cantor_entropy():
    return CantorEntropy(0.3, 0.3, 5)


def test_cantor_interval_integrals_by_quadrature(cantor_entropy):
    ent = cantor_entropy
    for j in (1, 2, 3):
        for lo, hi in ent.geom.kept_intervals(j)[:3]:
            pts = [c for c in ent.geom.centers if lo < c < hi]
            ref = integrate.quad(lambda x: float(ent(x)), lo, hi, points=pts or None,
                                 limit=500, epsabs=1e-15)[0]
            assert ref == pytest.approx(ent.interval_integral(j), rel=1e-8)


def test_cantor_antiderivative_by_quadrature(cantor_entropy):
    ent = cantor_entropy
    for x in (0.13, 0.5, 0.77, 1.0):
        pts = [c for c in ent.geom.centers if c < x]
        ref = integrate.quad(lambda y: float(ent(y)), 0, x, points=pts or None,
                             limit=500, epsabs=1e-15)[0]
        assert ent.antiderivative(x) == pytest.approx(ref, abs=1e-12)


def test_cantor_entropy_vanishes_on_kept_set(cantor_entropy):
    ent = cantor_entropy
    for lo, hi in ent.geom.kept_intervals(5):
        assert ent(0.5 * (lo + hi)) == 0.0


def test_cantor_scenario_smoothness_index():
    s = cantor_scenario(0.3, 0.3, depth=4, n_labels=256)
    assert s.smoothness_k == 1
    assert s.extras["predicted_dimension"] == pytest.approx(0.28786, abs=1e-5)


def test_powerlaw_requires_p_above_one():
    with pytest.raises(ScenarioError):
        powerlaw_scenario(p=1.0)
    s = powerlaw_scenario(p=3.0, n_labels=512)
    assert s.extras["predicted_local_dimension"] == pytest.approx(1 / 3)


def test_ring_slice_intervals():
    s = ring_scenario_2d(0.3, 0.6, n=32)
    iv = s.extras["zero_slice_intervals"]
    assert iv(0.0) == [(-0.6, -0.3), (0.3, 0.6)]
    assert iv(0.7) == []
    w = math.sqrt(0.36 - 0.16)
    (lo, hi), = iv(0.4)
    assert (lo, hi) == (pytest.approx(-w), pytest.approx(w))
    assert s.extras["zero_slice_mass"](0.0) == pytest.approx(0.6)


def test_ring_rejects_bad_radii():
    with pytest.raises(ScenarioError):
        ring_scenario_2d(0.5, 0.4)


@given(st.floats(0.05, 0.3), st.floats(0.05, 0.95))
def test_cantor_prediction_below_ceiling_when_smooth(gamma, beta):
    k = max(1, int(math.floor(math.log(beta) / math.log(gamma) + 1e-12)))
    pred = cantor_prediction(gamma, beta, k)
    assert 0 < pred["dimension"] < 1
    if beta <= gamma ** k:
        assert pred["dimension"] <= math.log(2) / ((k + 1) * math.log(1 / gamma)) + 1e-12

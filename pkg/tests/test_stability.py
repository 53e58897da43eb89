import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import solve_ivp

from alignflow.dynamics import IntegratorConfig
from alignflow.errors import ScenarioError
from alignflow.kernel import PowerTailKernel
from alignflow.measure import lumped_measure
from alignflow.scenario import constant_kernel_oracle, from_velocity
from alignflow.stability import (default_perturbation, deformation_envelope, perturb_velocity,
                                 run_pair, stability_constants, transport_gap)

CFG = IntegratorConfig(method="rk45", rtol=1e-10, atol=1e-14, tol_align=1e-10)


@pytest.fixture(scope="module")
def oracle():
    return constant_kernel_oracle(n_labels=48)


def test_envelope_decoupled_case():
    G, GV, rate = deformation_envelope(0.0, 2.0, 3.0)
    assert (G, GV, rate) == (2.5, 3.0, 2.0)
    with pytest.raises(ScenarioError):
        deformation_envelope(0.1, 0.0, 1.0)


@settings(max_examples=25)
@given(st.floats(0.01, 2.0), st.floats(0.2, 3.0), st.floats(0.0, 2.0),
       st.sampled_from([-1.0, 1.0]))
def test_envelope_bounds_comparison_system(a, b, g, sign):
    # x' = v, v' = -b v + sign * a exp(-b t) x, from (1, g)
    G, GV, rate = deformation_envelope(a, b, g)
    t = np.linspace(0, 30 / b, 400)
    sol = solve_ivp(lambda t, y: [y[1], -b * y[1] + sign * a * math.exp(-b * t) * y[0]],
                    (0, t[-1]), [1.0, g], t_eval=t, rtol=1e-10, atol=1e-12)
    x, v = sol.y
    assert np.all(np.abs(x) <= G * (1 + 1e-6))
    assert np.all(np.abs(v) <= GV * np.exp(-rate * t) * (1 + 1e-6) + 1e-12)


def test_constants_closed_form(oracle):
    # constant kernel: a = 0 and grad phi = 0, so only the phi term of a_W survives
    c = stability_constants(oracle, oracle)
    g, A0 = float(np.max(np.abs(oracle.du0))), float(np.ptp(oracle.u0))
    assert c.grad_u0 == g
    assert c.a == 0.0 and c.a_X == 0.0 and c.b == pytest.approx(1.0)
    assert c.G == pytest.approx(1 + g) and c.G_V == pytest.approx(g)
    a_s = 2 * ((1 + g) * A0 + g)
    assert c.a_s == pytest.approx(a_s, rel=1e-12)
    C_X = math.exp(a_s)
    assert c.C_X == pytest.approx(C_X, rel=1e-12)
    assert c.C_V == pytest.approx(1 + a_s * 2 / math.e * C_X, rel=1e-12)
    assert c.C_W == pytest.approx(1 + g + C_X, rel=1e-12)
    assert c.c == pytest.approx(0.5)
    assert c.C == max(c.C_X, c.C_V, c.C_W)


def test_perturbation_keeps_mass_and_momentum(oracle):
    s2 = perturb_velocity(oracle, 1e-3)
    assert s2.M0 == oracle.M0
    assert abs(s2.momentum) < 1e-15
    psi, dpsi = default_perturbation(oracle)
    a = np.linspace(-0.9, 0.9, 7)
    h = 1e-6
    assert np.allclose((psi(a + h) - psi(a - h)) / (2 * h), dpsi(a), atol=1e-6)
    assert np.max(np.abs(s2.u0 - oracle.u0)) <= 1e-3 * 1.3


def test_identical_runs_have_zero_gap(oracle):
    rep = run_pair(oracle, oracle, CFG)
    assert rep.delta0 == 0.0
    assert all(r.gap_X == 0.0 and r.gap_V == 0.0 for r in rep.records)
    assert rep.w1_limit == 0.0 and rep.passed


def test_oracle_pair_matches_closed_form(oracle):
    eps = 1e-3
    s2 = perturb_velocity(oracle, eps)
    rep = run_pair(oracle, s2, CFG)
    assert rep.passed
    # X_bar = alpha + u0 / (kappa M0 phi) with rate 1, so the limit gap is the u0 gap
    gap = np.max(np.abs(s2.u0 - oracle.u0))
    assert rep.xbar_gap == pytest.approx(gap, rel=1e-8)
    prof = rep.decay_profile()
    assert np.all(prof <= rep.constants.C_V * rep.delta0 + 1e-6)


def test_limit_gap_linear_in_eps(oracle):
    r1 = run_pair(oracle, perturb_velocity(oracle, 1e-3), CFG)
    r2 = run_pair(oracle, perturb_velocity(oracle, 5e-4), CFG)
    assert r1.w1_limit / r2.w1_limit == pytest.approx(2.0, rel=1e-3)


def test_transport_gap_is_w1(oracle):
    X = oracle.alpha
    assert transport_gap(oracle, X, oracle, X + 0.01) == pytest.approx(0.01 * oracle.M0)


def test_rejects_unequal_mass(oracle):
    other = constant_kernel_oracle(n_labels=48, density=0.6)
    with pytest.raises(ScenarioError):
        run_pair(oracle, other, CFG)


def test_rejects_nonzero_momentum():
    k = PowerTailKernel(1.0)
    m0 = lumped_measure(lambda a: np.ones_like(a), [(-1, 1)], [32])
    u = lambda a: 0.1 * np.sin(np.pi * a)
    du = lambda a: 0.1 * np.pi * np.cos(np.pi * a)
    s1 = from_velocity("a", k, 1.0, m0, u, du)
    s2 = from_velocity("b", k, 1.0, m0, lambda a: u(a) + 0.05, du, normalize_momentum=False)
    assert abs(s2.momentum - 0.1) < 1e-12
    with pytest.raises(ScenarioError):
        run_pair(s1, s2, CFG)


def test_rejects_different_grids(oracle):
    with pytest.raises(ScenarioError):
        run_pair(oracle, constant_kernel_oracle(n_labels=64), CFG)

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from alignflow.dynamics import (FlockState, IntegratorConfig, amplitude, diameter, integrate,
                                integrate_full_positions, integrate_reduced, rhs_deformation,
                                rhs_full, rhs_reduced)
from alignflow.errors import IntegrationError
from alignflow.kernel import ConstantKernel, PowerTailKernel
from alignflow.scenario import (constant_kernel_oracle, expression_scenario, generic_scenario,
                                supercritical_scenario, zero_set)
from alignflow.errors import SupercriticalError


@pytest.fixture(scope="module")
def oracle():
    return constant_kernel_oracle(n_labels=64)


@pytest.fixture(scope="module")
def generic():
    return generic_scenario(n_labels=32)


def _state(s, X=None, V=None, t=0.0):
    n = s.n_particles
    return FlockState(t, s.alpha.copy() if X is None else X, s.u0.copy() if V is None else V,
                      np.ones(n), s.du0.copy())


def test_zero_velocity_is_equilibrium():
    s = expression_scenario("0", "1", (-1, 1), 32, PowerTailKernel(1.0))
    dX, dV = rhs_full(_state(s), s)
    assert np.all(dX == 0) and np.all(dV == 0)
    traj = integrate(s, IntegratorConfig(record_times=(0.5, 1.0)))
    assert np.array_equal(traj.final.X, s.alpha)


def test_two_atoms_relax_at_total_mass_rate():
    m1, m2 = 0.3, 0.7
    s = expression_scenario("a", "0", (0, 1), 1, ConstantKernel(1.0),
                            atoms=[(0.0, m1), (1.0, m2)])
    times = (1.0, 2.0, 4.0)
    traj = integrate(s, IntegratorConfig(method="rk45", rtol=1e-11, atol=1e-14,
                                         record_times=times))
    rate = m1 + m2
    for st_ in traj.states[1:]:
        gap = st_.V[2] - st_.V[1]
        assert gap == pytest.approx(np.exp(-rate * st_.t), rel=1e-8)


def test_momentum_derivative_vanishes(generic):
    rng = np.random.default_rng(3)
    X = generic.alpha + 0.05 * rng.standard_normal(generic.n_particles)
    V = rng.standard_normal(generic.n_particles)
    _, dV = rhs_full(_state(generic, X, V), generic)
    assert abs(np.sum(generic.weights * dV)) < 1e-13


def test_reduced_rhs_at_time_zero_is_u0(generic):
    assert np.allclose(rhs_reduced(generic.alpha, generic), generic.u0, atol=1e-13)


def test_oracle_deformation_closed_form(oracle):
    times = (0.5, 1.0, 2.0, 4.0)
    traj = integrate(oracle, IntegratorConfig(method="rk45", rtol=1e-11, atol=1e-14,
                                              record_times=times))
    for st_ in traj.states[1:]:
        decay = 1 - np.exp(-st_.t)
        assert np.allclose(st_.dX1, 1 + oracle.du0 * decay, atol=1e-9)
        assert np.allclose(st_.X, oracle.alpha + oracle.u0 * decay, atol=1e-9)
    res = traj.series("e_residual")
    assert np.max(res) < 1e-9


def test_deformation_rhs_matches_finite_difference(generic):
    # a probe label moved along X(alpha) = alpha + c u0(alpha) against the frozen cloud
    s, k = generic, generic.kernel
    c, h = 0.3, 1e-6
    X, V = s.alpha + c * s.u0, s.u0.copy()
    st_ = FlockState(0.0, X, V, 1 + c * s.du0, s.du0.copy())
    d = rhs_deformation(st_, s)
    assert np.array_equal(d["dX1"], st_.dV1)

    def accel(a):
        xp, vp = a + c * s.u0_fn(a), s.u0_fn(a)
        return -s.kappa * np.sum(s.weights * k(xp - X) * (vp - V))

    fd = [(accel(a + h) - accel(a - h)) / (2 * h) for a in s.alpha]
    assert np.allclose(d["dV1"], fd, atol=1e-7)


def test_reduced_and_full_agree(generic):
    times = (0.5, 1.0)
    red = integrate_reduced(generic, times, dt=0.005, engine="direct")
    full = integrate_full_positions(generic, times, dt=0.005, engine="direct")
    for a, b in zip(red, full):
        assert np.max(np.abs(a - b)) < 1e-9


def test_alignment_stops_and_records_tail(generic):
    cfg = IntegratorConfig(method="rk45", rtol=1e-9, atol=1e-12, tol_align=1e-6,
                           tail_frames=2)
    traj = integrate(generic, cfg)
    assert traj.aligned
    A = traj.series("A")
    assert A[-3] <= 1e-6 * traj.A0
    assert len(traj.states) >= 3
    mom = traj.series("momentum")
    assert np.max(np.abs(mom - mom[0])) < 1e-12


def test_supercritical_breakdown_before_bound():
    s = supercritical_scenario(n_labels=200)
    with pytest.raises(SupercriticalError) as exc:
        zero_set(s)
    bound = exc.value.crossing_time_bound
    traj = integrate(s, IntegratorConfig(breakdown=True, dt=1e-3))
    assert traj.breakdown_time is not None
    assert 0 < traj.breakdown_time <= bound
    # constant kernel: dX1 = 1 + u0' (1 - e^-t) first vanishes at t = ln 2 for strength 2
    assert traj.breakdown_time == pytest.approx(np.log(2.0), abs=1e-3)


def test_crossing_raises_outside_breakdown_mode():
    s = supercritical_scenario(n_labels=50)
    with pytest.raises(IntegrationError):
        integrate(s, IntegratorConfig(dt=1e-2, t_max=5.0))


def test_unknown_method_rejected(generic):
    with pytest.raises(IntegrationError):
        integrate(generic, IntegratorConfig(method="euler"))


def test_diameter_and_amplitude():
    assert diameter(np.array([0.0, 3.0, -1.0]), None) == 4.0
    assert amplitude(np.array([1.0, -2.0, 0.5])) == 3.0


@settings(max_examples=15)
@given(st.floats(0.1, 1.0), st.floats(-0.4, 0.4))
def test_constant_kernel_velocity_decays_exactly(mass, shift):
    # with a constant kernel the velocity relative to the mean decays at rate M0
    s = expression_scenario(f"{shift} + 0.3*sin(3*a)", f"{mass}", (0, 1), 8,
                            ConstantKernel(1.0))
    traj = integrate(s, IntegratorConfig(record_times=(1.0,), dt=0.01))
    mean = np.sum(s.weights * s.u0) / s.M0
    V = traj.final.V
    assert np.allclose(V - mean, (s.u0 - mean) * np.exp(-s.M0), atol=1e-9)

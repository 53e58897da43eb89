"""Lagrangian alignment dynamics, deformation entries and run diagnostics.

The full system for labels ``i`` (active coordinate ``X``, frozen lateral
coordinate ``y``) is

    X_i' = V_i
    V_i' = -kappa sum_j w_j phi(X_i - X_j, y_i - y_j) (V_i - V_j)

and differentiating under the sum gives the deformation entries

    dX1' = dV1
    dV1' = -kappa dX1 (V S1 - S1V) - kappa dV1 S0
    dX2' = dV2
    dV2' = -kappa ((dX2 S1 + S2) V - (dX2 S1V + S2V)) - kappa dV2 S0

with ``S0 = sum w phi``, ``S1 = sum w d1phi``, ``S2 = sum w dlat phi`` and
``S1V``, ``S2V`` the same sums weighted by ``V_j``.  The reduced equation
``X_i' = f0(alpha_i) - kappa sum_j w_j phi_prim(X_i - X_j, y_i - y_j)`` is an
exact first integral of the full system.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import IntegrationError, NoDiameterBoundError
from .integrators import DormandPrince, rk4_step
from .kernel import FlockingConstants, flocking_constants
from .scenario import Scenario, f0_at_particles
from .summation import compensated_sum, make_summer


@dataclass
class FlockState:
    """Per-particle state at time ``t`` (particles are labels then atoms)."""

    t: float
    X: np.ndarray
    V: np.ndarray
    dX1: np.ndarray
    dV1: np.ndarray
    dX2: np.ndarray | None = None
    dV2: np.ndarray | None = None

    def copy(self) -> "FlockState":
        c = lambda a: None if a is None else a.copy()
        return FlockState(self.t, self.X.copy(), self.V.copy(), self.dX1.copy(),
                          self.dV1.copy(), c(self.dX2), c(self.dV2))


@dataclass
class Diagnostics:
    """Flocking and continuation diagnostics at one recorded time.

    ``grad_X`` and ``grad_V`` are sup norms over particles of the active rows
    ``(dX1, dX2)`` and ``(dV1, dV2)`` of the flow-map and velocity gradients.
    """

    t: float
    D: float
    A: float
    min_dX1: float
    e_residual: float
    momentum: float
    grad_X: float
    grad_V: float

    def to_dict(self):
        return dict(self.__dict__)


@dataclass
class IntegratorConfig:
    """Time-integration settings.

    Attributes
    ----------
    method : {"rk4", "rk45"}
    dt : float, optional
        RK4 step; defaults to ``min(0.01, 0.1 / (kappa M0 ||phi||))``.
    rtol, atol : float
        RK45 tolerances.  ``atol`` is scaled per block by the block's
        initial magnitude.
    t_max : float
    tol_align : float
        Stop once ``A(t) <= tol_align * A(0)``.
    tau : float, optional
        Recording unit; defaults to ``0.25 / b``.
    tail_frames : int
        Frames recorded at spacing ``tau`` after alignment (for the tail fit).
    breakdown : bool
        Stop when ``min dX1 <= eps_stop`` instead of raising on crossing.
    record_times : sequence of float, optional
        Explicit recording times; when given the run ends at the last one.
    deformation : bool
        Integrate the deformation entries alongside ``(X, V)``.
    """

    method: str = "rk4"
    dt: float | None = None
    rtol: float = 1e-8
    atol: float = 1e-10
    t_max: float = 500.0
    tol_align: float = 1e-8
    tau: float | None = None
    tail_frames: int = 2
    breakdown: bool = False
    eps_stop: float = 1e-6
    record_times: tuple | None = None
    deformation: bool = True
    engine: str = "auto"
    workers: int = 1
    max_steps: int = 50_000_000

    def to_dict(self):
        d = dict(self.__dict__)
        d["record_times"] = None if self.record_times is None else list(self.record_times)
        return d


@dataclass
class Trajectory:
    """Recorded states, diagnostics and run metadata."""

    scenario: Scenario
    config: IntegratorConfig
    states: list = field(default_factory=list)
    diagnostics: list = field(default_factory=list)
    constants: FlockingConstants | None = None
    aligned: bool = False
    t_align: float | None = None
    breakdown_time: float | None = None
    n_steps: int = 0
    A0: float = 0.0
    D0: float = 0.0

    @property
    def final(self) -> FlockState:
        return self.states[-1]

    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.states])

    def series(self, name: str) -> np.ndarray:
        return np.array([getattr(d, name) for d in self.diagnostics])

    def summary(self) -> dict:
        return {"aligned": self.aligned, "t_align": self.t_align,
                "breakdown_time": self.breakdown_time, "n_steps": self.n_steps,
                "A0": self.A0, "D0": self.D0,
                "constants": None if self.constants is None else self.constants.to_dict(),
                "config": {k: v for k, v in self.config.to_dict().items() if k != "workers"},
                "diagnostics": [d.to_dict() for d in self.diagnostics]}


def diameter(X: np.ndarray, lateral: np.ndarray | None, n_slices: int = 1) -> float:
    """Diameter of the particle cloud ``{(X_i, y_i)}``.

    In two dimensions only the extreme particles of each lateral slice can
    realize the diameter, so the pairwise search runs over ``2 * n_slices``
    candidates.
    """
    if lateral is None:
        return float(np.max(X) - np.min(X))
    n = X.size
    per = n // n_slices
    Xs = X[: per * n_slices].reshape(n_slices, per)
    ys = lateral[: per * n_slices].reshape(n_slices, per)[:, 0]
    px = np.concatenate([Xs.min(axis=1), Xs.max(axis=1)])
    py = np.concatenate([ys, ys])
    d2 = (px[:, None] - px[None, :]) ** 2 + (py[:, None] - py[None, :]) ** 2
    return float(math.sqrt(np.max(d2)))


def amplitude(V: np.ndarray) -> float:
    """Velocity amplitude ``max_ij |V_i - V_j|``."""
    return float(np.max(V) - np.min(V))


class FlockSystem:
    """Vectorized right-hand sides for one scenario.

    The flat state is ``[X, V, dX1, dV1]`` (plus ``[dX2, dV2]`` in two
    dimensions) when deformation is tracked, else ``[X, V]``.
    """

    def __init__(self, s: Scenario, engine: str = "auto", workers: int = 1,
                 deformation: bool = True):
        self.s = s
        self.n = s.n_particles
        self.two_d = s.lateral is not None
        self.deformation = deformation
        self.summer = make_summer(s.kernel, s.weights, s.layout, engine=engine,
                                  workers=workers)
        self.kappa = s.kappa
        self.f0 = f0_at_particles(s)
        self.blocks = (6 if self.two_d else 4) if deformation else 2

    def initial(self) -> np.ndarray:
        s = self.s
        parts = [s.alpha, s.u0]
        if self.deformation:
            parts += [np.ones(self.n), s.du0]
            if self.two_d:
                parts += [np.zeros(self.n), self._lateral_du0()]
        return np.concatenate(parts)

    def _lateral_du0(self) -> np.ndarray:
        """``d u0 / d alpha2`` at the labels (centered differences of ``u0_fn`` if not stored)."""
        s = self.s
        if "du0_lat" in s.extras:
            return np.asarray(s.extras["du0_lat"], dtype=float)
        h = 1e-5
        return (s.u0_fn(s.alpha, s.lateral + h) - s.u0_fn(s.alpha, s.lateral - h)) / (2 * h)

    def unpack(self, y: np.ndarray, t: float = 0.0) -> FlockState:
        b = y.reshape(self.blocks, self.n)
        if not self.deformation:
            z = np.full(self.n, np.nan)
            return FlockState(t, b[0].copy(), b[1].copy(), z, z.copy())
        st = FlockState(t, b[0].copy(), b[1].copy(), b[2].copy(), b[3].copy())
        if self.two_d:
            st.dX2, st.dV2 = b[4].copy(), b[5].copy()
        return st

    def rhs(self, t: float, y: np.ndarray) -> np.ndarray:
        b = y.reshape(self.blocks, self.n)
        X, V = b[0], b[1]
        k = self.kappa
        sm = self.summer
        S0 = sm.sum("phi", X)
        S0V = sm.sum("phi", X, charges=V)
        out = np.empty_like(b)
        out[0] = V
        out[1] = -k * (V * S0 - S0V)
        if self.deformation:
            dX1, dV1 = b[2], b[3]
            S1 = sm.sum("d1", X)
            S1V = sm.sum("d1", X, charges=V)
            out[2] = dV1
            out[3] = -k * dX1 * (V * S1 - S1V) - k * dV1 * S0
            if self.two_d:
                dX2, dV2 = b[4], b[5]
                S2 = sm.sum("dlat", X)
                S2V = sm.sum("dlat", X, charges=V)
                out[4] = dV2
                out[5] = -k * ((dX2 * S1 + S2) * V - (dX2 * S1V + S2V)) - k * dV2 * S0
        return out.reshape(-1)

    def rhs_reduced(self, t: float, X: np.ndarray) -> np.ndarray:
        return self.f0 - self.kappa * self.summer.sum("prim", X)

    def diagnostics(self, st: FlockState) -> Diagnostics:
        s = self.s
        S0 = self.summer.sum("phi", st.X)
        if self.deformation:
            res = float(np.max(np.abs(st.dV1 + self.kappa * S0 * st.dX1 - s.e0_labels)))
            gx = np.abs(st.dX1) if st.dX2 is None else np.hypot(st.dX1, st.dX2)
            gv = np.abs(st.dV1) if st.dV2 is None else np.hypot(st.dV1, st.dV2)
            gX, gV, mdx = float(np.max(gx)), float(np.max(gv)), float(np.min(st.dX1))
        else:
            res = gX = gV = mdx = float("nan")
        return Diagnostics(t=st.t, D=diameter(st.X, s.lateral, s.layout.n_slices),
                           A=amplitude(st.V), min_dX1=mdx, e_residual=res,
                           momentum=compensated_sum(s.weights * st.V), grad_X=gX, grad_V=gV)


def _system(s: Scenario, summer=None) -> FlockSystem:
    sys_ = FlockSystem.__new__(FlockSystem)
    sys_.s = s
    sys_.n = s.n_particles
    sys_.two_d = s.lateral is not None
    sys_.deformation = True
    sys_.summer = summer or make_summer(s.kernel, s.weights, s.layout, engine="direct")
    sys_.kappa = s.kappa
    sys_.f0 = f0_at_particles(s)
    sys_.blocks = 6 if sys_.two_d else 4
    return sys_


def _pack(sys_: FlockSystem, st: FlockState) -> np.ndarray:
    n = sys_.n
    parts = [st.X, st.V,
             st.dX1 if st.dX1 is not None else np.ones(n),
             st.dV1 if st.dV1 is not None else np.zeros(n)]
    if sys_.two_d:
        parts += [st.dX2 if st.dX2 is not None else np.zeros(n),
                  st.dV2 if st.dV2 is not None else np.zeros(n)]
    return np.concatenate(parts)


def rhs_full(state: FlockState, s: Scenario, summer=None):
    """``(X', V')`` of the full system at ``state``."""
    sys_ = _system(s, summer)
    d = sys_.rhs(state.t, _pack(sys_, state)).reshape(sys_.blocks, sys_.n)
    return d[0].copy(), d[1].copy()


def rhs_deformation(state: FlockState, s: Scenario, summer=None) -> dict:
    """Time derivatives of the deformation entries at ``state``."""
    sys_ = _system(s, summer)
    d = sys_.rhs(state.t, _pack(sys_, state)).reshape(sys_.blocks, sys_.n)
    out = {"dX1": d[2].copy(), "dV1": d[3].copy()}
    if sys_.two_d:
        out.update(dX2=d[4].copy(), dV2=d[5].copy())
    return out


def rhs_reduced(X: np.ndarray, s: Scenario, summer=None) -> np.ndarray:
    """``X' = f0(alpha) - kappa sum_j w_j phi_prim(X_i - X_j)``."""
    return _system(s, summer).rhs_reduced(0.0, np.asarray(X, dtype=float))


def default_dt(s: Scenario) -> float:
    return min(0.01, 0.1 / (s.kappa * s.M0 * s.kernel.sup_value))


def scenario_constants(s: Scenario) -> FlockingConstants | None:
    """Flocking constants from the discrete initial diameter and amplitude."""
    D0 = diameter(s.alpha, s.lateral, s.layout.n_slices)
    try:
        return flocking_constants(s.kernel, D0, amplitude(s.u0), s.kappa, s.M0)
    except NoDiameterBoundError:
        return None


def _geometric_times(tau: float, t_max: float):
    t = tau
    while t < t_max:
        yield t
        t *= 2.0
    yield t_max


def integrate(s: Scenario, cfg: IntegratorConfig | None = None) -> Trajectory:
    """Integrate the full system from the scenario's initial data.

    Records states at ``0, tau, 2 tau, 4 tau, ...`` until
    ``A(t) <= tol_align * A(0)`` (or ``t_max``), then ``tail_frames`` more
    frames at spacing ``tau``.  In breakdown mode the run stops at the
    first step with ``min dX1 <= eps_stop``; the crossing time is located by
    linear interpolation of ``min dX1`` across that step.

    Raises
    ------
    IntegrationError
        On a non-finite state, step-size underflow, or a trajectory crossing
        outside breakdown mode.
    """
    cfg = cfg or IntegratorConfig()
    if cfg.method not in ("rk4", "rk45"):
        raise IntegrationError(f"unknown method {cfg.method!r}")
    sys_ = FlockSystem(s, cfg.engine, cfg.workers, cfg.deformation)
    y = sys_.initial()
    const = scenario_constants(s)
    traj = Trajectory(s, cfg, constants=const)
    traj.A0 = A0 = amplitude(s.u0)
    traj.D0 = diameter(s.alpha, s.lateral, s.layout.n_slices)
    rate_guess = const.b if const is not None and const.b > 0 else \
        s.kappa * s.M0 * s.kernel.sup_value
    tau = cfg.tau or 0.25 / rate_guess

    def record(t, y):
        st = sys_.unpack(y, t)
        traj.states.append(st)
        traj.diagnostics.append(sys_.diagnostics(st))

    if cfg.record_times is not None:
        pending = sorted(float(x) for x in cfg.record_times if x > 0)
        t_end = pending[-1] if pending else 0.0
    else:
        pending = list(_geometric_times(tau, cfg.t_max))
        t_end = cfg.t_max
    t = 0.0
    record(t, y)
    explicit = cfg.record_times is not None
    if not explicit and A0 <= cfg.tol_align * A0:
        traj.aligned, traj.t_align = True, 0.0
        pending = [tau * (i + 1) for i in range(cfg.tail_frames)]
        t_end = pending[-1] if pending else 0.0
    dt = cfg.dt or default_dt(s)
    stepper = None
    if cfg.method == "rk45":
        scales = np.abs(y.reshape(sys_.blocks, -1)).max(axis=1)
        scales[1] = A0
        scales = np.where(scales > 0, scales, 1.0)
        atol = np.repeat(cfg.atol * scales, sys_.n)
        stepper = DormandPrince(sys_.rhs, rtol=cfg.rtol, atol=atol)
        h = min(stepper.initial_step(t, y), tau)
    prev_min = 1.0
    while pending and t < t_end * (1 - 1e-15):
        target = pending[0]
        if traj.n_steps >= cfg.max_steps:
            raise IntegrationError("maximum step count exceeded", last_state=sys_.unpack(y, t))
        if stepper is None:
            step = min(dt, target - t)
            y_new = rk4_step(sys_.rhs, t, y, step)
            t_new = t + step
            if target - t_new < 1e-12 * max(1.0, target):
                t_new = target
        else:
            clamped = h >= target - t
            h_try = target - t if clamped else h
            t_new, y_new, taken, h_next = stepper.step(t, y, h_try)
            if clamped and taken == h_try:
                t_new = target
            else:
                h = h_next
        traj.n_steps += 1
        if not np.all(np.isfinite(y_new)):
            raise IntegrationError(f"non-finite state at t = {t_new:.6g}",
                                   last_state=sys_.unpack(y, t))
        if cfg.deformation:
            cur_min = float(np.min(y_new[2 * sys_.n:3 * sys_.n]))
            if not cfg.breakdown and cur_min < -cfg.eps_stop:
                raise IntegrationError(
                    f"trajectories cross near t = {t_new:.6g} (min dX1 = {cur_min:.3g})",
                    last_state=sys_.unpack(y, t))
            if cfg.breakdown and cur_min <= cfg.eps_stop:
                frac = (prev_min - cfg.eps_stop) / (prev_min - cur_min) \
                    if prev_min > cur_min else 1.0
                traj.breakdown_time = t + frac * (t_new - t)
                t, y = t_new, y_new
                record(t, y)
                return traj
            prev_min = cur_min
        t, y = t_new, y_new
        if t >= target:
            pending.pop(0)
            record(t, y)
        if not explicit and not traj.aligned:
            A = amplitude(y[sys_.n:2 * sys_.n])
            if A <= cfg.tol_align * A0:
                traj.aligned, traj.t_align = True, t
                if not traj.states or traj.states[-1].t != t:
                    record(t, y)
                pending = [t + tau * (i + 1) for i in range(cfg.tail_frames)]
                t_end = pending[-1] if pending else t
    return traj


def integrate_reduced(s: Scenario, times, dt: float | None = None, engine: str = "auto",
                      workers: int = 1) -> list[np.ndarray]:
    """RK4 integration of the reduced equation; positions at each requested time."""
    sys_ = FlockSystem(s, engine, workers, deformation=False)
    X = s.alpha.copy()
    dt = dt or default_dt(s)
    out, t = [], 0.0
    f = lambda t, x: sys_.rhs_reduced(t, x)
    for target in sorted(float(x) for x in times):
        while t < target * (1 - 1e-15):
            step = min(dt, target - t)
            X = rk4_step(f, t, X, step)
            t = t + step if target - (t + step) >= 1e-12 * max(1.0, target) else target
        out.append(X.copy())
    return out


def integrate_full_positions(s: Scenario, times, dt: float | None = None,
                             engine: str = "auto", workers: int = 1) -> list[np.ndarray]:
    """RK4 integration of ``(X, V)`` only; positions at each requested time."""
    cfg = IntegratorConfig(dt=dt, record_times=tuple(times), deformation=False,
                           engine=engine, workers=workers)
    traj = integrate(s, cfg)
    return [st.X for st in traj.states[1:]]

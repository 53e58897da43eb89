"""Paired runs and the Lipschitz stability estimates of the flow map and measure.

Two scenarios on the same labels are integrated with a common recording
schedule.  At every shared recorded time the gaps ``sup|X' - X''|``,
``sup|V' - V''|`` and ``W1(m_t', m_t'')`` are compared against bounds
``C * Delta0`` and ``C * exp(-c t) * Delta0`` with
``Delta0 = W1(m0', m0'') + ||u0' - u0''||``.

The constants follow from the comparison system ``x' <= v``,
``v' <= a_s exp(-b_s t) x - b v`` for ``x = W1(m0', m0'') + sup|X' - X''|`` and
``v = sup|V' - V''|``.  Integrating the velocity inequality and applying
Gronwall to ``x`` gives::

    x(t) <= max(1, 1/b) * exp(a_s / (b b_s)) * Delta0 = C_X * Delta0
    v(t) <= (1 + a_s K C_X) * exp(-b t / 2) * Delta0 = C_V * exp(-c t) * Delta0

with ``K = 2/b`` (``b_s = b/2``) or ``K = 2/(e b)`` (``b_s = b``), and
``W1(m_t', m_t'') <= (G + M0 C_X) * Delta0`` where ``G`` bounds ``||grad X||``.
"""

from __future__ import annotations

import dataclasses
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .dynamics import IntegratorConfig, Trajectory, integrate, scenario_constants
from .errors import ScenarioError
from .limits import LimitFlowMap, limit_flow_map
from .measure import w1_distance_1d
from .scenario import Scenario, zero_set
from .summation import compensated_sum

__all__ = ["StabilityConstants", "StabilityRecord", "StabilityReport", "stability_constants",
           "deformation_envelope", "perturb_velocity", "default_perturbation", "run_pair",
           "transport_gap"]

SLACK = 1e-6


@dataclass
class StabilityConstants:
    """Every link of the constant chain, so a failing check can be traced.

    Attributes
    ----------
    a, b : float
        Deformation-system coefficients ``kappa M0 ||grad phi|| A0`` and
        ``kappa M0 phi(D_bar)`` (worst case over the pair).
    grad_u0 : float
        ``||grad u0||`` (max over the pair).
    G, G_V : float
        Time-uniform envelope of ``||grad X||`` and the prefactor of
        ``||grad V||``, which decays like ``exp(-b_s t)``.
    a_W, a_X : float
        Coefficients of ``W1(m0', m0'')`` and ``sup|X' - X''|`` in the velocity
        gap inequality; ``a_s`` is their max.
    C_X, C_V, C_W : float
        Bounds for the position, velocity and measure gaps; ``C`` is their max.
    c : float
        Velocity-gap decay rate ``b / 2``.
    """

    a: float
    b: float
    A0: float
    M0: float
    kappa: float
    grad_u0: float
    phi_sup: float
    grad_phi_sup: float
    G: float
    G_V: float
    b_s: float
    a_W: float
    a_X: float
    a_s: float
    C_X: float
    C_V: float
    C_W: float
    c: float

    @property
    def C(self) -> float:
        return max(self.C_X, self.C_V, self.C_W)

    def to_dict(self):
        d = dict(self.__dict__)
        d["C"] = self.C
        return d


def deformation_envelope(a: float, b: float, grad_u0: float) -> tuple[float, float, float]:
    """``(G, G_V, rate)`` with ``||grad X|| <= G`` and ``||grad V|| <= G_V exp(-rate t)``.

    For ``a > 0`` the energy ``a x^2 + exp(b t) v^2`` grows at most by
    ``exp(4 sqrt(a) / b)``; for ``a = 0`` the system decouples.
    """
    if b <= 0:
        raise ScenarioError("no positive alignment rate b")
    if a <= 0:
        return 1.0 + grad_u0 / b, grad_u0, b
    energy = math.exp(4.0 * math.sqrt(a) / b) * (a + grad_u0 ** 2)
    return math.sqrt(energy / a), math.sqrt(energy), b / 2


def stability_constants(s1: Scenario, s2: Scenario, grad_u0: float | None = None
                        ) -> StabilityConstants:
    """Materialize ``C_X, C_V, C_W, c`` for a pair of scenarios.

    Raises
    ------
    ScenarioError
        If either kernel lacks an a-priori diameter bound.
    """
    c1, c2 = scenario_constants(s1), scenario_constants(s2)
    if c1 is None or c2 is None:
        raise ScenarioError("stability constants need a heavy-tailed kernel")
    a, b = max(c1.a, c2.a), min(c1.b, c2.b)
    A0 = max(float(np.ptp(s1.u0)), float(np.ptp(s2.u0)))
    if grad_u0 is None:
        grad_u0 = max(float(np.max(np.abs(s1.du0))), float(np.max(np.abs(s2.du0))))
    M0, kappa = s1.M0, s1.kappa
    phi_sup, dphi_sup = s1.kernel.sup_value, s1.kernel.grad_sup
    G, G_V, b_s = deformation_envelope(a, b, grad_u0)
    a_W = 2 * kappa * (phi_sup + dphi_sup) * (G * A0 + G_V)
    a_X = 2 * kappa * M0 * dphi_sup * A0
    a_s = max(a_W, a_X)
    C_X = max(1.0, 1.0 / b) * math.exp(a_s / (b * b_s))
    K = 2.0 / (math.e * b) if b_s >= b else 2.0 / b
    C_V = 1.0 + a_s * K * C_X
    C_W = G + M0 * C_X
    return StabilityConstants(a, b, A0, M0, kappa, grad_u0, phi_sup, dphi_sup, G, G_V, b_s,
                              a_W, a_X, a_s, C_X, C_V, C_W, b / 2)


@dataclass
class StabilityRecord:
    """Gaps and bounds at one shared recorded time."""

    t: float
    gap_X: float
    gap_V: float
    gap_W: float
    bound_X: float
    bound_V: float
    bound_W: float
    chain_W: float
    grad_X: float

    @property
    def ok_X(self) -> bool:
        return self.gap_X <= self.bound_X + SLACK

    @property
    def ok_V(self) -> bool:
        return self.gap_V <= self.bound_V + SLACK

    @property
    def ok_W(self) -> bool:
        return self.gap_W <= self.bound_W + SLACK

    @property
    def ok_chain(self) -> bool:
        return self.gap_W <= self.chain_W + SLACK

    def to_dict(self):
        d = dict(self.__dict__)
        d.update(ok_X=self.ok_X, ok_V=self.ok_V, ok_W=self.ok_W, ok_chain=self.ok_chain)
        return d


@dataclass
class StabilityReport:
    """Outcome of a paired run.

    ``w1_initial`` and ``u0_gap`` are the two parts of ``Delta0``;
    ``w1_limit`` compares the limiting measures ``X_bar'_# m0'`` and
    ``X_bar''_# m0''``.  ``w1_exact`` is False in two dimensions, where the
    label-coupled transport cost (an upper bound on ``W1``) is reported.
    """

    names: tuple
    constants: StabilityConstants
    w1_initial: float
    u0_gap: float
    records: list = field(default_factory=list)
    w1_limit: float = float("nan")
    xbar_gap: float = float("nan")
    w1_exact: bool = True
    notes: dict = field(default_factory=dict)
    trajectories: tuple = field(default=(), repr=False)

    @property
    def delta0(self) -> float:
        return self.w1_initial + self.u0_gap

    @property
    def bound_limit(self) -> float:
        return self.constants.C_W * self.delta0

    @property
    def checks(self) -> dict:
        r = self.records
        return {"positions": all(x.ok_X for x in r),
                "velocities": all(x.ok_V for x in r),
                "measures": all(x.ok_W for x in r),
                "chain": all(x.ok_chain for x in r),
                "limit_measure": self.w1_limit <= self.bound_limit + SLACK,
                "limit_positions": self.xbar_gap <= self.constants.C_X * self.delta0 + SLACK}

    @property
    def passed(self) -> bool:
        return bool(self.records) and all(self.checks.values())

    def decay_profile(self) -> np.ndarray:
        """``sup|V' - V''|(t) exp(c t)``, bounded by ``C_V Delta0``."""
        c = self.constants.c
        return np.array([x.gap_V * math.exp(c * x.t) for x in self.records])

    def rows(self):
        """Time series of gaps and bounds for plotting."""
        head = ["t", "gap_X", "gap_V", "gap_W", "bound_X", "bound_V", "bound_W", "chain_W"]
        return head, [[getattr(x, k) for k in head] for x in self.records]

    def to_dict(self):
        return {"names": list(self.names), "constants": self.constants.to_dict(),
                "w1_initial": self.w1_initial, "u0_gap": self.u0_gap, "delta0": self.delta0,
                "w1_limit": self.w1_limit, "bound_limit": self.bound_limit,
                "xbar_gap": self.xbar_gap, "w1_exact": self.w1_exact,
                "checks": self.checks, "passed": self.passed, "notes": self.notes,
                "records": [x.to_dict() for x in self.records]}


def default_perturbation(s: Scenario) -> tuple[Callable, Callable]:
    """``psi = sin(pi xi)/pi + 0.2 sin(2 pi xi)`` on the rescaled label box, and ``psi'``."""
    lo, hi = s.box[0]
    mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)

    def psi(a):
        xi = (np.asarray(a, dtype=float) - mid) / half
        return np.sin(np.pi * xi) / np.pi + 0.2 * np.sin(2 * np.pi * xi)

    def dpsi(a):
        xi = (np.asarray(a, dtype=float) - mid) / half
        return (np.cos(np.pi * xi) + 0.4 * np.pi * np.cos(2 * np.pi * xi)) / half

    return psi, dpsi


def perturb_velocity(s: Scenario, eps: float, psi: Callable | None = None,
                     dpsi: Callable | None = None, name: str | None = None) -> Scenario:
    """Copy of ``s`` with ``u0 + eps * (psi(alpha1) - mean)``, the mean taken under ``m0``.

    The shift keeps the momentum at zero; ``e0`` and ``f0`` move by
    ``eps * psi'`` and ``eps * psi`` accordingly.
    """
    if psi is None:
        psi, dpsi = default_perturbation(s)
    elif dpsi is None:
        raise ScenarioError("a custom perturbation needs its derivative")
    p = np.asarray(psi(s.alpha), dtype=float)
    dp = np.asarray(dpsi(s.alpha), dtype=float)
    shift = -compensated_sum(s.weights * p) / compensated_sum(s.weights)
    du, ddu = eps * (p + shift), eps * dp
    lat = s.lateral is not None
    base_u, base_e, base_f = s.u0_fn, s.e0_fn, s.f0_fn

    def u0_fn(a1, a2=None):
        u = base_u(a1, a2) if lat else base_u(a1)
        return u + eps * (psi(a1) + shift)

    def e0_fn(a1, a2=None):
        e = base_e(a1, a2) if lat else base_e(a1)
        return e + eps * dpsi(a1)

    def f0_fn(a1, a2=None):
        f = base_f(a1, a2) if lat else base_f(a1)
        return f + eps * (psi(a1) + shift)

    extras = dict(s.extras)
    if "f0_labels" in extras:
        extras["f0_labels"] = extras["f0_labels"] + du
    rate = extras.get("alignment_rate")
    for key in ("xbar_exact", "dxbar_exact"):
        extras.pop(key, None)
    if rate is not None and "xbar_exact" in s.extras:
        xe, dxe = s.extras["xbar_exact"], s.extras["dxbar_exact"]
        extras["xbar_exact"] = lambda a: xe(a) + eps * (psi(a) + shift) / rate
        extras["dxbar_exact"] = lambda a: dxe(a) + eps * dpsi(a) / rate
    anti = s.e0_antiderivative
    if anti is not None:
        base_anti = anti
        anti = lambda a1, a2=None: base_anti(a1, a2) + eps * (psi(a1) + shift)
    params = dict(s.params, perturbation_eps=eps)
    e_lab = None if s.e0_labels is None else s.e0_labels + ddu
    return dataclasses.replace(s, name=name or f"{s.name}+eps", u0=s.u0 + du, du0=s.du0 + ddu,
                               e0_fn=e0_fn, f0_fn=f0_fn, u0_fn=u0_fn, params=params,
                               extras=extras, e0_labels=e_lab, e0_antiderivative=anti)


def _check_pair(s1: Scenario, s2: Scenario):
    if s1.dimension != s2.dimension or s1.alpha.shape != s2.alpha.shape:
        raise ScenarioError("scenarios live on different label grids")
    if not np.array_equal(s1.alpha, s2.alpha) or (
            s1.lateral is not None and not np.array_equal(s1.lateral, s2.lateral)):
        raise ScenarioError("scenarios have different labels")
    if not np.array_equal(np.asarray(s1.box), np.asarray(s2.box)):
        raise ScenarioError(f"label boxes differ: {s1.box} vs {s2.box}")
    if abs(s1.M0 - s2.M0) > 1e-12 * max(s1.M0, s2.M0):
        raise ScenarioError(f"unequal masses {s1.M0!r} and {s2.M0!r}")
    for s in (s1, s2):
        scale = s.M0 * max(1.0, float(np.max(np.abs(s.u0))))
        if abs(s.momentum) > 1e-10 * scale:
            raise ScenarioError(f"scenario {s.name!r} has nonzero momentum {s.momentum:.3e}")
    if s1.kappa != s2.kappa or s1.kernel.to_dict() != s2.kernel.to_dict():
        raise ScenarioError("scenarios use different kernels or coupling strengths")
    if s1.dimension == 2 and not np.array_equal(s1.weights, s2.weights):
        raise ScenarioError("two-dimensional pairs need identical label weights")
    for s in (s1, s2):
        zero_set(s)


def transport_gap(s1: Scenario, X1: np.ndarray, s2: Scenario, X2: np.ndarray) -> float:
    """``W1`` between ``X1_# m0'`` and ``X2_# m0''`` (label-coupled cost in 2D)."""
    if s1.dimension == 1:
        return w1_distance_1d((X1, s1.weights), (X2, s2.weights))
    return compensated_sum(s1.weights * np.abs(X1 - X2))


def _run_both(s1, s2, cfg, workers):
    if workers > 1:
        with ThreadPoolExecutor(max_workers=2) as ex:
            f1, f2 = ex.submit(integrate, s1, cfg), ex.submit(integrate, s2, cfg)
            return f1.result(), f2.result()
    return integrate(s1, cfg), integrate(s2, cfg)


def _shared_times(t1: Trajectory, t2: Trajectory):
    out = []
    times2 = t2.times()
    for i, t in enumerate(t1.times()):
        k = int(np.argmin(np.abs(times2 - t)))
        if abs(times2[k] - t) <= 1e-12 * max(1.0, t):
            out.append((i, k))
    return out


def run_pair(s1: Scenario, s2: Scenario, cfg: IntegratorConfig | None = None,
             limit_frames: int = 3) -> StabilityReport:
    """Integrate both scenarios and check the stability inequalities.

    Both runs share the recording unit ``tau = 0.25 / b`` with ``b`` the
    smaller alignment rate, so their geometric schedules coincide; gaps are
    evaluated at every common recorded time and at the extrapolated limits.

    Raises
    ------
    ScenarioError
        If the pair differs in mass, labels, box, kernel, or has nonzero
        momentum.
    SupercriticalError
        If either scenario has negative ``e0``.
    """
    _check_pair(s1, s2)
    cfg = cfg or IntegratorConfig()
    const = stability_constants(s1, s2)
    if cfg.tau is None:
        cfg = dataclasses.replace(cfg, tau=0.25 / const.b)
    traj1, traj2 = _run_both(s1, s2, cfg, cfg.workers)
    grad_u0 = max(traj1.diagnostics[0].grad_V, traj2.diagnostics[0].grad_V)
    const = stability_constants(s1, s2, grad_u0=grad_u0)
    w1_0 = transport_gap(s1, s1.alpha, s2, s2.alpha)
    u_gap = float(np.max(np.abs(s1.u0 - s2.u0)))
    rep = StabilityReport((s1.name, s2.name), const, w1_0, u_gap,
                          w1_exact=s1.dimension == 1)
    d0 = rep.delta0
    for i, k in _shared_times(traj1, traj2):
        a, b = traj1.states[i], traj2.states[k]
        gX = float(np.max(np.abs(a.X - b.X)))
        gV = float(np.max(np.abs(a.V - b.V)))
        gW = transport_gap(s1, a.X, s2, b.X)
        grad = traj1.diagnostics[i].grad_X
        rep.records.append(StabilityRecord(
            a.t, gX, gV, gW, const.C_X * d0, const.C_V * math.exp(-const.c * a.t) * d0,
            const.C_W * d0, grad * w1_0 + s1.M0 * gX, grad))
    flows: list[LimitFlowMap] = [limit_flow_map(tr, limit_frames) for tr in (traj1, traj2)]
    rep.w1_limit = transport_gap(s1, flows[0].Xbar, s2, flows[1].Xbar)
    ext = flows[0].extrapolation_error_bound + flows[1].extrapolation_error_bound
    rep.xbar_gap = float(np.max(np.abs(flows[0].Xbar - flows[1].Xbar)))
    rep.notes = {"tau": cfg.tau, "n_shared_times": len(rep.records),
                 "t_align": [traj1.t_align, traj2.t_align],
                 "extrapolation_error_bound": ext, "slack": SLACK}
    rep.trajectories = (traj1, traj2)
    return rep

"""Initial data, the entropy ``e0``, its zero set, and the named scenario builders.

Two ways of specifying data are supported.

Velocity-specified
    ``u0`` is given; ``e0 = du0/dalpha1 + kappa * (phi * m0)`` and
    ``f0 = u0 + kappa * int phi_prim(alpha - gamma) dm0(gamma)``.

Entropy-specified
    ``e0`` and its antiderivative ``F0`` along ``alpha1`` are given and the
    velocity is recovered as ``u0 = F0 - kappa * sum_j w_j phi_prim(alpha - alpha_j)``
    (plus a Galilean constant for zero momentum).  Using the lumped measure
    in this recovery makes the discrete ``f0`` equal ``F0`` exactly, so labels
    sharing an interval where ``e0 = 0`` share the same ``f0`` value bit for
    bit and collapse in the limit exactly as the continuum labels do.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np
from scipy import integrate, optimize

from .errors import ScenarioError, SupercriticalError
from .kernel import ConstantKernel, Kernel, PowerTailKernel
from .measure import MassMeasure, lumped_measure
from .summation import DirectSummer, LabelLayout, compensated_sum, make_summer

_GL_X, _GL_W = np.polynomial.legendre.leggauss(64)


@dataclass(eq=False)
class Scenario:
    """Initial data of a unidirectional run.

    Particles are the lumped labels followed by the atoms of ``m0``.  All
    per-particle arrays (``alpha``, ``weights``, ``u0``, ``du0``) share that
    order.
    """

    name: str
    kernel: Kernel
    kappa: float
    m0: MassMeasure
    alpha: np.ndarray
    lateral: np.ndarray | None
    weights: np.ndarray
    u0: np.ndarray
    du0: np.ndarray
    e0_fn: Callable
    f0_fn: Callable
    u0_fn: Callable
    layout: LabelLayout
    smoothness_k: int = 1
    params: dict = field(default_factory=dict)
    extras: dict = field(default_factory=dict)
    n_labels: int = 0
    e0_labels: np.ndarray | None = None
    e0_antiderivative: Callable | None = None

    @property
    def dimension(self) -> int:
        return 1 if self.lateral is None else 2

    @property
    def M0(self) -> float:
        return self.m0.total_mass

    @property
    def n_particles(self) -> int:
        return self.alpha.size

    @property
    def box(self) -> tuple:
        return self.m0.support_box

    @property
    def momentum(self) -> float:
        return compensated_sum(self.weights * self.u0)

    def e0_sup(self) -> float:
        return float(np.max(np.abs(self.e0_labels)))

    def default_eps_z(self) -> float:
        return 1e-10 * self.kappa * self.M0 * self.kernel.sup_value

    def to_dict(self) -> dict[str, Any]:
        return {"name": self.name, "kappa": self.kappa, "kernel": self.kernel.to_dict(),
                "measure": self.m0.to_dict(), "smoothness_k": self.smoothness_k,
                "params": _jsonable(self.params),
                "e0_convention": "e0 = d(u0)/d(alpha1) + kappa * (phi * m0)",
                "extras": _jsonable({k: v for k, v in self.extras.items()
                                     if not callable(v)})}


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    return obj


def f0_at_particles(s: Scenario) -> np.ndarray:
    """``f0`` at every particle, computed with the lumped measure and cached."""
    if "f0_labels" not in s.extras:
        summer = make_summer(s.kernel, s.weights, s.layout)
        s.extras["f0_labels"] = s.u0 + s.kappa * summer.sum("prim", s.alpha)
    return np.asarray(s.extras["f0_labels"], dtype=float)


def entropy_e0(s: Scenario, alpha) -> np.ndarray:
    """``e0`` at a point (1D: scalar; 2D: ``(alpha1, alpha2)``) or arrays of them."""
    if s.dimension == 1:
        return s.e0_fn(np.asarray(alpha, dtype=float))
    a = np.asarray(alpha, dtype=float)
    return s.e0_fn(a[..., 0], a[..., 1])


def f0(s: Scenario, alpha) -> np.ndarray:
    """``f0 = u0 + kappa * int phi_prim(alpha - gamma) dm0(gamma)``."""
    if s.dimension == 1:
        return s.f0_fn(np.asarray(alpha, dtype=float))
    a = np.asarray(alpha, dtype=float)
    return s.f0_fn(a[..., 0], a[..., 1])


# ---------------------------------------------------------------------------
# construction helpers
# ---------------------------------------------------------------------------

def _particles(m0: MassMeasure):
    if m0.dimension == 1:
        alpha = np.concatenate([m0.positions, m0.atom_positions.ravel()])
        return alpha, None, np.concatenate([m0.weights, m0.atom_weights])
    if m0.atom_weights.size:
        raise ScenarioError("atoms are only supported in one dimension")
    return m0.positions[:, 0].copy(), m0.positions[:, 1].copy(), m0.weights.copy()


def _layout(m0: MassMeasure) -> LabelLayout:
    if m0.dimension == 1:
        return LabelLayout()
    n1, n2 = m0.shape
    lat = m0.positions[::n1, 1].copy()
    return LabelLayout(n_slices=n2, lateral=lat)


def _pointwise_sums(kernel, weights, alpha, lateral, layout, part, x1, x2=None):
    src = DirectSummer(kernel, weights, layout if lateral is not None else None)
    x1 = np.asarray(x1, dtype=float)
    flat = np.atleast_1d(x1).ravel()
    if lateral is None:
        out = src.sum(part, alpha, targets=flat)
    else:
        x2f = np.broadcast_to(np.asarray(x2, dtype=float), x1.shape).ravel()
        out = src.sum(part, alpha, targets=flat, target_lateral=np.atleast_1d(x2f))
    return out.reshape(x1.shape) if x1.ndim else float(out[0])


def from_velocity(name: str, kernel: Kernel, kappa: float, m0: MassMeasure,
                  u0: Callable, du0: Callable, smoothness_k: int = 1,
                  params: dict | None = None, normalize_momentum: bool = True,
                  engine: str = "auto") -> Scenario:
    """Scenario from an explicit initial velocity and its ``alpha1``-derivative.

    ``u0`` and ``du0`` take ``alpha1`` (1D) or ``(alpha1, alpha2)`` arrays.
    """
    if kappa <= 0:
        raise ScenarioError("kappa must be positive")
    alpha, lateral, weights = _particles(m0)
    layout = _layout(m0)
    call = (lambda f, a1, a2=None: f(a1)) if lateral is None else \
        (lambda f, a1, a2=None: f(a1, a2))
    u_lab = np.asarray(call(u0, alpha, lateral), dtype=float) * np.ones_like(alpha)
    du_lab = np.asarray(call(du0, alpha, lateral), dtype=float) * np.ones_like(alpha)
    shift = 0.0
    if normalize_momentum:
        shift = -compensated_sum(weights * u_lab) / compensated_sum(weights)
        u_lab = u_lab + shift

    def u0_fn(a1, a2=None):
        return np.asarray(call(u0, a1, a2), dtype=float) + shift

    def e0_fn(a1, a2=None):
        conv = _pointwise_sums(kernel, weights, alpha, lateral, layout, "phi", a1, a2)
        return np.asarray(call(du0, a1, a2), dtype=float) + kappa * conv

    def f0_fn(a1, a2=None):
        prim = _pointwise_sums(kernel, weights, alpha, lateral, layout, "prim", a1, a2)
        return u0_fn(a1, a2) + kappa * prim

    summer = make_summer(kernel, weights, layout, engine=engine)
    conv_lab = summer.sum("phi", alpha)
    e_lab = du_lab + kappa * conv_lab
    return Scenario(name=name, kernel=kernel, kappa=float(kappa), m0=m0, alpha=alpha,
                    lateral=lateral, weights=weights, u0=u_lab, du0=du_lab, e0_fn=e0_fn,
                    f0_fn=f0_fn, u0_fn=u0_fn, layout=layout, smoothness_k=smoothness_k,
                    params=dict(params or {}), n_labels=m0.weights.size, e0_labels=e_lab)


def from_entropy(name: str, kernel: Kernel, kappa: float, m0: MassMeasure,
                 e0: Callable, F0_labels: np.ndarray, F0: Callable | None = None,
                 smoothness_k: int = 1, params: dict | None = None,
                 engine: str = "auto", dF0_lat_labels: np.ndarray | None = None) -> Scenario:
    """Scenario from ``e0`` and its ``alpha1``-antiderivative sampled at the particles.

    The velocity is ``u0 = F0 - kappa * sum_j w_j phi_prim(alpha - alpha_j)``
    shifted to zero momentum.  In two dimensions ``dF0_lat_labels`` (the
    ``alpha2``-derivative of ``F0``) yields the lateral velocity gradient.
    """
    if kappa <= 0:
        raise ScenarioError("kappa must be positive")
    alpha, lateral, weights = _particles(m0)
    layout = _layout(m0)
    call = (lambda f, a1, a2=None: f(a1)) if lateral is None else \
        (lambda f, a1, a2=None: f(a1, a2))
    summer = make_summer(kernel, weights, layout, engine=engine)
    prim_lab = summer.sum("prim", alpha)
    conv_lab = summer.sum("phi", alpha)
    F_lab = np.asarray(F0_labels, dtype=float)
    u_raw = F_lab - kappa * prim_lab
    shift = -compensated_sum(weights * u_raw) / compensated_sum(weights)
    u_lab = u_raw + shift
    e_lab = np.asarray(call(e0, alpha, lateral), dtype=float) * np.ones_like(alpha)
    du_lab = e_lab - kappa * conv_lab

    def e0_fn(a1, a2=None):
        return np.asarray(call(e0, a1, a2), dtype=float)

    def f0_fn(a1, a2=None):
        if F0 is None:
            raise ScenarioError("this scenario only samples f0 at its labels")
        return np.asarray(call(F0, a1, a2), dtype=float) + shift

    def u0_fn(a1, a2=None):
        prim = _pointwise_sums(kernel, weights, alpha, lateral, layout, "prim", a1, a2)
        return f0_fn(a1, a2) - kappa * prim

    s = Scenario(name=name, kernel=kernel, kappa=float(kappa), m0=m0, alpha=alpha,
                 lateral=lateral, weights=weights, u0=u_lab, du0=du_lab, e0_fn=e0_fn,
                 f0_fn=f0_fn, u0_fn=u0_fn, layout=layout, smoothness_k=smoothness_k,
                 params=dict(params or {}), n_labels=m0.weights.size, e0_labels=e_lab,
                 e0_antiderivative=None if F0 is None else (lambda a1, a2=None:
                                                             call(F0, a1, a2)))
    s.extras["f0_labels"] = F_lab + shift
    if dF0_lat_labels is not None:
        s.extras["du0_lat"] = (np.asarray(dF0_lat_labels, dtype=float)
                               - kappa * summer.sum("prim_dlat", alpha))
    _recheck(s)
    return s


def _recheck(s: Scenario, rtol: float = 1e-12) -> None:
    """Reject recovered data whose entropy or ``f0`` increments turn negative."""
    scale = max(s.e0_sup(), 1e-300)
    worst = float(np.min(s.e0_labels))
    if worst < -rtol * scale:
        raise ScenarioError(f"recovered data has negative e0 (min {worst:.3e})")
    f = s.extras["f0_labels"][: s.n_labels]
    per = s.n_labels // s.layout.n_slices
    inc = np.diff(f.reshape(s.layout.n_slices, per), axis=1)
    fscale = max(float(np.max(np.abs(f))), 1e-300)
    if inc.size and float(np.min(inc)) < -rtol * fscale:
        raise ScenarioError(f"recovered f0 decreases along alpha1 "
                            f"(max violation {-float(np.min(inc)):.3e})")


def slice_antiderivative(e0_slice: Callable, grid, start: float,
                         breakpoints=()) -> np.ndarray:
    """``int_start^x e0_slice`` at every grid point by composite Gauss-Legendre.

    Breakpoints (kinks of ``e0``) are inserted as panel edges so each panel
    integrand is smooth; panels where ``e0`` vanishes identically contribute
    exact zeros.
    """
    grid = np.asarray(grid, dtype=float)
    edges = np.unique(np.concatenate([[start], grid,
                                      [b for b in breakpoints if start < b < grid[-1]]]))
    a, b = edges[:-1], edges[1:]
    mid, half = 0.5 * (a + b), 0.5 * (b - a)
    pts = mid[:, None] + half[:, None] * _GL_X[None, :]
    panel = half * np.sum(np.asarray(e0_slice(pts), dtype=float) * _GL_W[None, :], axis=1)
    cum = np.concatenate([[0.0], np.cumsum(panel)])
    return cum[np.searchsorted(edges, grid)]


# ---------------------------------------------------------------------------
# zero set
# ---------------------------------------------------------------------------

@dataclass
class ZeroSet:
    """Maximal intervals where ``e0 <= eps_z``, per lateral slice.

    Attributes
    ----------
    slices : list of list of (beta, gamma)
        Zero intervals per slice (sorted, disjoint; degenerate when beta = gamma).
    positive : list of list of (lo, hi)
        Complementary intervals forming P within each slice of the box.
    label_interval : ndarray of int
        For each label, the index of its zero interval within its slice, or -1.
    lateral : ndarray or None
        Lateral coordinate of each slice.
    eps_z : float
    """

    slices: list
    positive: list
    label_interval: np.ndarray
    lateral: np.ndarray | None
    eps_z: float

    @property
    def empty(self) -> bool:
        return all(len(s) == 0 for s in self.slices)

    def n_intervals(self) -> int:
        return sum(len(s) for s in self.slices)

    def total_length(self) -> float:
        return math.fsum(g - b for s in self.slices for b, g in s)

    def to_dict(self):
        return {"eps_z": self.eps_z, "n_intervals": self.n_intervals(),
                "total_length": self.total_length(),
                "slices": [[list(iv) for iv in s] for s in self.slices]}


def _bisect(fun, lo, hi, tol=1e-10):
    """Root of ``fun`` on ``[lo, hi]`` with ``fun(lo) > 0 >= fun(hi)`` or reversed."""
    flo = fun(lo)
    for _ in range(200):
        if hi - lo <= tol:
            break
        mid = 0.5 * (lo + hi)
        fm = fun(mid)
        if (fm > 0) == (flo > 0):
            lo, flo = mid, fm
        else:
            hi = mid
    return lo, hi


def _slice_intervals(efun, a, e, box_lo, box_hi, eps_z, tol):
    """Zero intervals on one slice from samples ``(a, e)`` of ``e0``."""
    g = lambda x: float(efun(x)) - eps_z
    zmask = e <= eps_z
    intervals = []
    k = 0
    while k < a.size:
        if not zmask[k]:
            k += 1
            continue
        j = k
        while j + 1 < a.size and zmask[j + 1]:
            j += 1
        left_out = a[k - 1] if k > 0 else box_lo
        beta = _bisect(g, left_out, a[k], tol)[1] if g(left_out) > 0 else box_lo
        right_out = a[j + 1] if j + 1 < a.size else box_hi
        gamma = _bisect(g, a[j], right_out, tol)[0] if g(right_out) > 0 else box_hi
        intervals.append((float(beta), float(gamma)))
        k = j + 1
    # isolated zeros between samples: refine every discrete local minimum
    for i in range(a.size):
        if zmask[i]:
            continue
        left = e[i - 1] if i > 0 else np.inf
        right = e[i + 1] if i + 1 < a.size else np.inf
        if e[i] <= left and e[i] <= right:
            lo = a[i - 1] if i > 0 else box_lo
            hi = a[i + 1] if i + 1 < a.size else box_hi
            res = optimize.minimize_scalar(lambda x: float(efun(x)), bounds=(lo, hi),
                                           method="bounded", options={"xatol": 1e-13})
            if res.fun <= eps_z:
                x = float(res.x)
                b0 = _bisect(g, lo, x, tol)[1] if g(lo) > 0 else lo
                g0 = _bisect(g, x, hi, tol)[0] if g(hi) > 0 else hi
                intervals.append((float(min(b0, x)), float(max(g0, x))))
    merged = []
    for iv in sorted(intervals):
        if merged and iv[0] <= merged[-1][1]:
            merged[-1] = (merged[-1][0], max(merged[-1][1], iv[1]))
        else:
            merged.append(iv)
    return merged


def _owners(a, intervals, slack=0.0):
    """Index of the interval containing each point, or -1."""
    owner = np.full(a.size, -1, dtype=int)
    if not intervals:
        return owner
    lo = np.array([b for b, _ in intervals])
    hi = np.array([g for _, g in intervals])
    k = np.searchsorted(lo, a + slack, side="right") - 1
    kk = np.clip(k, 0, lo.size - 1)
    inside = (k >= 0) & (a <= hi[kk] + slack)
    owner[inside] = kk[inside]
    return owner


def _complement(intervals, lo, hi):
    out, cur = [], lo
    for b, g in intervals:
        if b > cur:
            out.append((cur, b))
        cur = max(cur, g)
    if cur < hi:
        out.append((cur, hi))
    return out


def _negative_region(efun, a, e, i):
    """Maximal label run around ``i`` with ``e0 < 0`` and its crossing-time bound."""
    lo, hi = i, i
    while lo > 0 and e[lo - 1] < 0:
        lo -= 1
    while hi + 1 < a.size and e[hi + 1] < 0:
        hi += 1
    f = lambda x: float(efun(x))
    left = _bisect(f, a[lo - 1], a[lo])[1] if lo > 0 else a[lo]
    right = _bisect(f, a[hi], a[hi + 1])[0] if hi + 1 < a.size else a[hi]
    if right <= left:
        left, right = a[max(lo - 1, 0)], a[min(hi + 1, a.size - 1)]
    integral = integrate.quad(f, left, right, limit=200)[0]
    return left, right, integral


def crossing_time_bound(s: Scenario, left: float, right: float, integral: float) -> float:
    """Upper bound ``(right - left) / (kappa |int e0|)`` on the first crossing time."""
    return (right - left) / (s.kappa * abs(integral))


def zero_set(s: Scenario, eps_z: float | None = None, tol: float = 1e-10,
             oversample: int = 1) -> ZeroSet:
    """Detect ``Z = {e0 <= eps_z}`` slice by slice.

    ``e0`` is scanned on the label grid, refined ``oversample`` times, and
    interval endpoints are bisected to ``tol``.  Oversampling resolves
    positive bumps of ``e0`` narrower than the label spacing.

    Raises
    ------
    SupercriticalError
        When ``e0 < -eps_z`` at some label.
    """
    if eps_z is None:
        eps_z = s.default_eps_z()
    n = s.n_labels
    e = s.e0_labels[:n]
    worst = int(np.argmin(e))
    S = s.layout.n_slices
    per = n // S
    box = s.box
    lo_box, hi_box = box[0]
    if e[worst] < -eps_z:
        sl = worst // per
        a = s.alpha[sl * per:(sl + 1) * per]
        ee = e[sl * per:(sl + 1) * per]
        y = None if s.lateral is None else s.lateral[sl * per]
        efun = (lambda x: s.e0_fn(x)) if y is None else (lambda x: s.e0_fn(x, y))
        left, right, integral = _negative_region(efun, a, ee, worst - sl * per)
        bound = crossing_time_bound(s, left, right, integral)
        raise SupercriticalError(
            f"supercritical data: e0 = {e[worst]:.4g} at alpha1 = {s.alpha[worst]:.6g}; "
            f"trajectories cross by t <= {bound:.6g}",
            location=float(s.alpha[worst]), value=float(e[worst]),
            crossing_time_bound=bound)
    oversample = max(1, int(oversample))
    h = (hi_box - lo_box) / per
    slices, positive = [], []
    owner = np.full(n, -1, dtype=int)
    for sl in range(S):
        idx = slice(sl * per, (sl + 1) * per)
        a = s.alpha[idx]
        y = None if s.lateral is None else float(s.lateral[sl * per])
        efun = (lambda x: s.e0_fn(x)) if y is None else \
            (lambda x, y=y: s.e0_fn(np.asarray(x), np.full(np.shape(x), y)))
        if oversample == 1:
            grid, vals = a, e[idx]
        else:
            grid = lo_box + h * (np.arange(per * oversample) + 0.5) / oversample
            vals = np.asarray(efun(grid), dtype=float)
            if np.min(vals) < -eps_z:
                raise SupercriticalError(
                    "supercritical data between labels", location=float(grid[np.argmin(vals)]),
                    value=float(np.min(vals)), crossing_time_bound=float("nan"))
        ivs = _slice_intervals(efun, grid, vals, lo_box, hi_box, eps_z, tol)
        slices.append(ivs)
        positive.append(_complement(ivs, lo_box, hi_box))
        owner[idx] = _owners(a, ivs)
    lat = None if s.lateral is None else s.layout.lateral
    return ZeroSet(slices, positive, owner, lat, eps_z)


# ---------------------------------------------------------------------------
# named builders
# ---------------------------------------------------------------------------

def constant_kernel_oracle(n_labels: int = 256, kappa: float = 1.0, amplitude: float = 1.0,
                           half_width: float = 1.0, density: float = 0.5,
                           u0_amplitude: float = 1.0, engine: str = "auto") -> Scenario:
    """Constant kernel with ``u0 = -A sin(pi alpha / L) / pi`` and uniform density.

    The limit is known in closed form: ``X_bar = alpha + u0 / (kappa M0 phi)``.
    """
    L = half_width
    kern = ConstantKernel(amplitude)
    m0 = lumped_measure(lambda a: np.full_like(a, density), [(-L, L)], [n_labels])
    M0 = m0.total_mass
    A = u0_amplitude
    u0 = lambda a: -A * np.sin(np.pi * a / L) / np.pi
    du0 = lambda a: -A * np.cos(np.pi * a / L) / L
    if A / L > kappa * M0 * amplitude * (1 + 1e-12):
        raise ScenarioError("supercritical oracle: ||u0'|| exceeds kappa*M0*phi")
    s = from_velocity("oracle", kern, kappa, m0, u0, du0, smoothness_k=10**6,
                      params={"n_labels": n_labels, "kappa": kappa, "amplitude": amplitude,
                              "half_width": L, "density": density,
                              "u0_amplitude": A}, engine=engine)
    rate = kappa * M0 * amplitude
    s.extras["xbar_exact"] = lambda a: a + s.u0_fn(a) / rate
    s.extras["dxbar_exact"] = lambda a: 1.0 + du0(a) / rate
    s.extras["alignment_rate"] = rate
    return s


def velocity_scenario(name, kernel, kappa, m0, u0, du0, **kw) -> Scenario:
    return from_velocity(name, kernel, kappa, m0, u0, du0, **kw)


def generic_scenario(n_labels: int = 64, kappa: float = 1.0, engine: str = "auto") -> Scenario:
    """Smooth subcritical data with nonuniform density and a power-tail kernel."""
    kern = PowerTailKernel(1.0)
    m0 = lumped_measure(lambda a: 0.5 + 0.2 * np.cos(0.5 * np.pi * a), [(-1.0, 1.0)],
                        [n_labels])
    u0 = lambda a: 0.2 * np.sin(np.pi * a) + 0.05 * np.cos(2 * np.pi * a) + 0.03 * a
    du0 = lambda a: 0.2 * np.pi * np.cos(np.pi * a) - 0.1 * np.pi * np.sin(2 * np.pi * a) + 0.03
    return from_velocity("generic", kern, kappa, m0, u0, du0, smoothness_k=10**6,
                         params={"n_labels": n_labels, "kappa": kappa}, engine=engine)


def supercritical_scenario(n_labels: int = 200, strength: float = 2.0,
                           engine: str = "auto") -> Scenario:
    """Constant-kernel data with ``e0 = 1 - strength cos(pi alpha) < 0`` near 0."""
    kern = ConstantKernel(1.0)
    m0 = lumped_measure(lambda a: np.full_like(a, 0.5), [(-1.0, 1.0)], [n_labels])
    u0 = lambda a: -strength * np.sin(np.pi * a) / np.pi
    du0 = lambda a: -strength * np.cos(np.pi * a)
    return from_velocity("supercritical", kern, 1.0, m0, u0, du0, smoothness_k=10**6,
                         params={"n_labels": n_labels, "strength": strength}, engine=engine)


def default_bump(x):
    """``exp(-1/(1/4 - x^2))`` on ``(-1/2, 1/2)``, zero outside."""
    x = np.asarray(x, dtype=float)
    inside = np.abs(x) < 0.5
    q = np.where(inside, 0.25 - x * x, 1.0)
    return np.where(inside, np.exp(-1.0 / q), 0.0)


@dataclass(frozen=True)
class CantorGeometry:
    """Removed intervals ``J_j^k`` of the fat Cantor construction, sorted by center."""

    gamma: float
    depth: int
    centers: np.ndarray
    levels: np.ndarray

    @property
    def half_widths(self) -> np.ndarray:
        return 0.5 * self.gamma ** self.levels.astype(float)

    def kept_intervals(self, level: int) -> list[tuple[float, float]]:
        """The ``2^level`` closed intervals ``I_level^k``."""
        sel = self.levels <= level
        c, h = self.centers[sel], self.half_widths[sel]
        edges = [0.0]
        for ci, hi in zip(c, h):
            edges.extend([ci - hi, ci + hi])
        edges.append(1.0)
        return [(edges[2 * i], edges[2 * i + 1]) for i in range(len(edges) // 2)]


def cantor_geometry(gamma: float, depth: int) -> CantorGeometry:
    if not 0 < gamma < 1.0 / 3.0:
        raise ScenarioError("gamma must lie in (0, 1/3) for a fat Cantor set")
    if depth < 1:
        raise ScenarioError("Cantor depth J must be at least 1")
    kept = [(0.0, 1.0)]
    centers, levels = [], []
    for j in range(1, depth + 1):
        w = gamma ** j
        nxt = []
        for a, b in kept:
            c = 0.5 * (a + b)
            if w >= b - a:
                raise ScenarioError("removed interval longer than its parent")
            centers.append(c)
            levels.append(j)
            nxt.extend([(a, c - 0.5 * w), (c + 0.5 * w, b)])
        kept = nxt
    order = np.argsort(centers)
    return CantorGeometry(gamma, depth, np.asarray(centers)[order],
                          np.asarray(levels)[order])


def _outer_ramp(x):
    """Smooth positive continuation outside [0, 1]: ``exp(-1/x)`` for ``x > 0``."""
    x = np.asarray(x, dtype=float)
    return np.where(x > 0, np.exp(-1.0 / np.where(x > 0, x, 1.0)), 0.0)


class CantorEntropy:
    """``e0 = sum_{j<=J} sum_k beta^j g((alpha - c_jk) / gamma^j)`` and its antiderivative."""

    def __init__(self, gamma, beta, depth, bump=default_bump):
        if not 0 < beta < 1:
            raise ScenarioError("beta must lie in (0, 1)")
        self.geom = cantor_geometry(gamma, depth)
        self.gamma, self.beta, self.depth, self.bump = gamma, beta, depth, bump
        self.c0 = integrate.quad(lambda x: float(bump(x)), -0.5, 0.5, epsabs=0.0,
                                 epsrel=1e-13, limit=200)[0]
        lev = self.geom.levels.astype(float)
        self.amp = beta ** lev
        self.width = gamma ** lev
        self.mass = self.amp * self.width * self.c0
        self.prefix = np.concatenate([[0.0], np.cumsum(self.mass)])
        self.left = self.geom.centers - 0.5 * self.width
        self.right = self.geom.centers + 0.5 * self.width

    def _locate(self, a):
        k = np.searchsorted(self.left, a, side="right") - 1
        kk = np.clip(k, 0, self.left.size - 1)
        inside = (k >= 0) & (a < self.right[kk])
        return kk, inside

    def __call__(self, a):
        a = np.asarray(a, dtype=float)
        k, inside = self._locate(a)
        t = (a - self.geom.centers[k]) / self.width[k]
        val = np.where(inside, self.amp[k] * self.bump(np.where(inside, t, 0.0)), 0.0)
        out = np.where((a >= 0) & (a <= 1), val, _outer_ramp(-a) + _outer_ramp(a - 1))
        return out if out.ndim else float(out)

    def antiderivative(self, a):
        """``int_0^a e0`` on [0, 1]; the outer ramp is integrated by quadrature."""
        a = np.asarray(a, dtype=float)
        flat = np.atleast_1d(a).ravel()
        k, inside = self._locate(flat)
        done = np.searchsorted(self.right, flat, side="right")
        out = self.prefix[done].copy()
        idx = np.nonzero(inside & (flat >= 0) & (flat <= 1))[0]
        if idx.size:
            kk = k[idx]
            lo = self.left[kk]
            hi = flat[idx]
            half = 0.5 * (hi - lo)
            pts = 0.5 * (hi + lo)[:, None] + half[:, None] * _GL_X[None, :]
            t = (pts - self.geom.centers[kk][:, None]) / self.width[kk][:, None]
            out[idx] += self.amp[kk] * half * np.sum(self.bump(t) * _GL_W[None, :], axis=1)
        for i in np.nonzero((flat < 0) | (flat > 1))[0]:
            x = flat[i]
            if x < 0:
                out[i] = -integrate.quad(lambda y: float(_outer_ramp(-y)), x, 0.0)[0]
            else:
                out[i] = self.prefix[-1] + integrate.quad(
                    lambda y: float(_outer_ramp(y - 1)), 1.0, x)[0]
        out = out.reshape(a.shape)
        return out if out.ndim else float(out)

    def interval_integral(self, j: int) -> float:
        """``int_{I_j^k} e0`` summed over the truncated levels ``j < l <= J``."""
        return math.fsum(2 ** (l - (j + 1)) * (self.beta * self.gamma) ** l * self.c0
                         for l in range(j + 1, self.depth + 1))

    @property
    def c1(self) -> float:
        bg = self.beta * self.gamma
        return 0.5 * self.c0 * bg / (1.0 - 2.0 * bg)


def cantor_prediction(gamma: float, beta: float, k: int = 1) -> dict:
    """Analytic dimension of the image of the Cantor zero set and the C^k ceiling."""
    if not 0 < gamma < 1.0 / 3.0:
        raise ScenarioError("gamma must lie in (0, 1/3)")
    if not 0 < beta < 1:
        raise ScenarioError("beta must lie in (0, 1)")
    dim = math.log(2.0) / -math.log(beta * gamma)
    return {"dimension": dim, "zero_set_box_dimension": 1.0,
            "ceiling": 1.0 / (k + 1), "smoothness_k": k,
            "attainable_sup_for_k": math.log(2.0) / ((k + 1) * math.log(3.0))}


def cantor_scenario(gamma: float = 0.3, beta: float = 0.3, depth: int = 8,
                    n_labels: int = 2 ** 14, kappa: float = 1.0, kernel: Kernel | None = None,
                    bump: Callable = default_bump, engine: str = "auto") -> Scenario:
    """Fat Cantor zero set in [0, 1] with ``rho0 = 1`` there."""
    ent = CantorEntropy(gamma, beta, depth, bump)
    kern = kernel or PowerTailKernel(1.0)
    m0 = lumped_measure(lambda a: np.ones_like(a), [(0.0, 1.0)], [n_labels])
    F_lab = ent.antiderivative(m0.positions)
    k_smooth = max(1, int(math.floor(math.log(beta) / math.log(gamma) + 1e-12)))
    s = from_entropy("cantor", kern, kappa, m0, ent, F_lab, F0=ent.antiderivative,
                     smoothness_k=k_smooth,
                     params={"gamma": gamma, "beta": beta, "depth": depth,
                             "n_labels": n_labels, "kappa": kappa}, engine=engine)
    pred = cantor_prediction(gamma, beta, k_smooth)
    s.extras.update({"entropy": ent, "c0": ent.c0, "c1": ent.c1,
                     "predicted_dimension": pred["dimension"], "prediction": pred,
                     "zero_set_measure": (1 - 3 * gamma) / (1 - 2 * gamma),
                     "truncation_factor_bound": (2 * beta * gamma) ** 1})
    return s


def powerlaw_scenario(p: float = 2.0, delta: float = 1.0, n_labels: int = 4096,
                      kappa: float = 1.0, kernel: Kernel | None = None,
                      engine: str = "auto") -> Scenario:
    """``rho0 = 1`` and ``e0 = p |alpha|^(p-1)`` on ``[-delta, delta]``."""
    if not p > 1:
        raise ScenarioError("power-law exponent p must exceed 1")
    if not delta > 0:
        raise ScenarioError("delta must be positive")
    kern = kernel or PowerTailKernel(1.0)
    m0 = lumped_measure(lambda a: np.ones_like(a), [(-delta, delta)], [n_labels])
    e0 = lambda a: p * np.abs(a) ** (p - 1)
    F0 = lambda a: np.sign(a) * np.abs(a) ** p
    s = from_entropy("powerlaw", kern, kappa, m0, e0, F0(m0.positions), F0=F0,
                     smoothness_k=max(0, int(math.ceil(p - 1)) - 1),
                     params={"p": p, "delta": delta, "n_labels": n_labels, "kappa": kappa},
                     engine=engine)
    s.extras["predicted_local_dimension"] = 1.0 / p
    return s


def plateau_scenario(zero_half_width: float = 0.3, half_width: float = 1.0,
                     density: float = 0.5, slope: float = 1.0, floor: float = 0.0,
                     n_labels: int = 200, kappa: float = 1.0, kernel: Kernel | None = None,
                     engine: str = "auto") -> Scenario:
    """``e0 = floor + slope (|alpha| - z)_+`` so ``Z = [-z, z]`` when ``floor = 0``."""
    z, L = zero_half_width, half_width
    if not 0 <= z < L:
        raise ScenarioError("zero interval must sit inside the support")
    kern = kernel or PowerTailKernel(1.0)
    m0 = lumped_measure(lambda a: np.full_like(a, density), [(-L, L)], [n_labels])
    e0 = lambda a: floor + slope * np.maximum(np.abs(a) - z, 0.0)
    F0 = lambda a: floor * a + np.sign(a) * 0.5 * slope * np.maximum(np.abs(a) - z, 0.0) ** 2
    return from_entropy("plateau", kern, kappa, m0, e0, F0(m0.positions), F0=F0,
                        smoothness_k=0,
                        params={"zero_half_width": z, "half_width": L, "density": density,
                                "slope": slope, "floor": floor, "n_labels": n_labels,
                                "kappa": kappa}, engine=engine)


def _ring_distance(r, r_in, r_out):
    return np.maximum(r_in - r, 0.0) + np.maximum(r - r_out, 0.0)


def ring_scenario_2d(r_in: float = 0.0, r_out: float = 0.5, n: int = 128,
                     half_width: float = 1.0, slope: float = 1.0, kappa: float = 1.0,
                     kernel: Kernel | None = None, engine: str = "auto") -> Scenario:
    """Two-dimensional data with ``Z`` a disk (``r_in = 0``) or an annulus.

    ``rho0 = 1`` on the square ``[-L, L]^2`` and ``e0 = slope * dist(alpha, Z)``.
    """
    if not 0 <= r_in < r_out < half_width:
        raise ScenarioError("need 0 <= r_in < r_out < half_width")
    L = half_width
    kern = kernel or PowerTailKernel(1.0, dimension=2)
    m0 = lumped_measure(lambda a1, a2: np.ones_like(a1), [(-L, L), (-L, L)], [n, n])

    def e0(a1, a2):
        return slope * _ring_distance(np.hypot(a1, a2), r_in, r_out)

    def de0_lat(a1, a2):
        r = np.hypot(a1, a2)
        side = np.where(r < r_in, -1.0, 0.0) + np.where(r > r_out, 1.0, 0.0)
        return slope * side * a2 / np.where(r > 0, r, 1.0)

    per = n
    F = np.empty(n * n)
    dF = np.empty(n * n)
    for sl in range(n):
        a1 = m0.positions[sl * per:(sl + 1) * per, 0]
        y = m0.positions[sl * per, 1]
        bps = [0.0]
        for r in (r_in, r_out):
            if r > abs(y):
                w = math.sqrt(r * r - y * y)
                bps.extend([-w, w])
        F[sl * per:(sl + 1) * per] = slice_antiderivative(
            lambda x, y=y: e0(x, np.full_like(x, y)), a1, -L, bps)
        dF[sl * per:(sl + 1) * per] = slice_antiderivative(
            lambda x, y=y: de0_lat(x, np.full_like(x, y)), a1, -L, bps)
    name = "disk" if r_in == 0 else "annulus"
    s = from_entropy(name, kern, kappa, m0, e0, F, F0=None, smoothness_k=0,
                     params={"r_in": r_in, "r_out": r_out, "n": n, "half_width": L,
                             "slope": slope, "kappa": kappa}, engine=engine,
                     dF0_lat_labels=dF)

    def slice_intervals(y):
        wo = math.sqrt(max(r_out ** 2 - y * y, 0.0))
        wi = math.sqrt(max(r_in ** 2 - y * y, 0.0))
        if wo == 0.0:
            return []
        return [(-wo, wo)] if wi == 0.0 else [(-wo, -wi), (wi, wo)]

    s.extras["zero_slice_intervals"] = slice_intervals
    s.extras["zero_slice_mass"] = lambda y: sum(h - l for l, h in slice_intervals(y))
    return s


def expression_scenario(u0_expr: str, rho0_expr: str, box, n_labels: int,
                        kernel: Kernel, kappa: float = 1.0, atoms=(),
                        engine: str = "auto") -> Scenario:
    """Velocity-specified 1D scenario from expression strings in the variable ``a``."""
    import sympy

    a = sympy.Symbol("a", real=True)
    try:
        u_sym = sympy.sympify(u0_expr, locals={"a": a})
        r_sym = sympy.sympify(rho0_expr, locals={"a": a})
    except (sympy.SympifyError, SyntaxError, TypeError) as exc:
        raise ScenarioError(f"cannot parse expression: {exc}") from exc
    u = sympy.lambdify(a, u_sym, "numpy")
    du = sympy.lambdify(a, sympy.diff(u_sym, a), "numpy")
    rho = sympy.lambdify(a, r_sym, "numpy")
    m0 = lumped_measure(lambda x: np.asarray(rho(x), float) * np.ones_like(x), [tuple(box)],
                        [n_labels], atoms=[(float(p), float(w)) for p, w in atoms])
    wrap = lambda f: (lambda x: np.asarray(f(x), dtype=float) * np.ones_like(x))
    return from_velocity("custom", kernel, kappa, m0, wrap(u), wrap(du),
                         params={"u0": u0_expr, "rho0": rho0_expr, "box": list(box),
                                 "n_labels": n_labels, "kappa": kappa,
                                 "atoms": [list(x) for x in atoms]}, engine=engine)

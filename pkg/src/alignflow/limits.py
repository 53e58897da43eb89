"""Limiting flow map, limiting measure, and the two-sided bound checks.

The limit ``X_bar`` is extrapolated from the last recorded frames of an
aligned run.  Because ``f_i = V_i + kappa sum_j w_j phi_prim(X_i - X_j)`` is
conserved exactly, the increments of ``X_bar`` across a same-slice label
pair are bracketed by the increment of ``f0`` divided by
``kappa M0 ||phi||`` and ``kappa M0 phi_floor``; this is the form in which
the separation, measure-image and density bounds are checked.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from .dynamics import Trajectory
from .errors import LimitError
from .scenario import Scenario, ZeroSet, f0_at_particles
from .summation import compensated_sum


@dataclass
class LimitFlowMap:
    """Extrapolated ``X_bar`` and ``d X_bar / d alpha1`` at every particle.

    Attributes
    ----------
    Xbar, dX1bar : ndarray
    rate : float
        Fitted common decay rate of the velocities over the tail frames.
    extrapolation_error_bound : float
        ``A(T) / b``, a bound on ``|X_bar - X(T)|``.
    fit_valid : bool
        False when the tail was not monotone and ``X(T)`` was used instead.
    warning : str or None
    """

    Xbar: np.ndarray
    dX1bar: np.ndarray
    rate: float
    extrapolation_error_bound: float
    fit_valid: bool
    T: float
    warning: str | None = None
    scenario: Scenario | None = field(default=None, repr=False)
    kernel_floor: float = 0.0

    @property
    def n_labels(self) -> int:
        return self.scenario.n_labels


def tail_rate(times, sup_v) -> float | None:
    """Least-squares exponential rate of ``sup|V|`` over tail frames, or None."""
    t = np.asarray(times, dtype=float)
    v = np.asarray(sup_v, dtype=float)
    if t.size < 2 or np.any(v <= 0) or np.any(np.diff(v) >= 0):
        return None
    slope = np.polyfit(t - t[-1], np.log(v), 1)[0]
    return float(-slope) if slope < 0 else None


def limit_flow_map(traj: Trajectory, n_frames: int = 3) -> LimitFlowMap:
    """Extrapolate ``X_bar = X(T) + V(T) / c_hat`` from the last recorded frames.

    Falls back to ``X_bar = X(T)`` (with the bound ``A(T)/b``) when the tail
    is not strictly decaying.

    Raises
    ------
    LimitError
        If the run did not reach the alignment tolerance.
    """
    if traj.breakdown_time is not None:
        raise LimitError("run ended in breakdown; no limit exists")
    if not traj.aligned:
        raise LimitError("run did not reach the alignment tolerance; increase t_max")
    s = traj.scenario
    frames = traj.states[-n_frames:]
    last = frames[-1]
    b = traj.constants.b if traj.constants is not None else None
    floor = traj.constants.kernel_floor if traj.constants is not None else 0.0
    A_T = traj.diagnostics[-1].A
    sup_v = [float(np.max(np.abs(f.V))) for f in frames]
    rate = tail_rate([f.t for f in frames], sup_v)
    warning = None
    if sup_v[-1] == 0.0:
        Xbar, dX = last.X.copy(), last.dX1.copy()
        rate, valid = float("inf"), True
    elif rate is None:
        Xbar, dX = last.X.copy(), last.dX1.copy()
        rate, valid = float("nan"), False
        warning = "velocity tail not monotone; using X(T)"
    else:
        Xbar = last.X + last.V / rate
        dX = last.dX1 + last.dV1 / rate
        valid = True
    if b is None or b <= 0:
        b = rate if valid and math.isfinite(rate) else float("nan")
        warning = (warning + "; " if warning else "") + "no flocking constant b; bound uses fitted rate"
    bound = A_T / b if A_T > 0 else 0.0
    return LimitFlowMap(Xbar, dX, rate, bound, valid, last.t, warning, s, floor)


# ---------------------------------------------------------------------------
# limiting measure
# ---------------------------------------------------------------------------

@dataclass
class SingularAtom:
    """A concentration point of the limiting measure.

    ``mass`` sums the label weights collapsing to the point (plus initial
    atoms assigned to it); ``quadrature_mass`` integrates the density over
    the zero interval when the density callable is known.
    """

    location: float
    mass: float
    slice_index: int
    lateral: float | None
    interval: tuple | None
    collapse_diameter: float
    quadrature_mass: float | None = None
    from_initial_atom: bool = False
    on_boundary: bool = False

    def to_dict(self):
        return dict(self.__dict__)


@dataclass
class MeasureDecomposition:
    """``m_bar = rho_bar dx + singular part``.

    The absolutely continuous part is sampled at the images of the positive
    labels; ``ac_density`` holds ``rho_bar(X_bar_i) = rho0_i / dX1bar_i``.
    """

    ac_positions: np.ndarray
    ac_lateral: np.ndarray | None
    ac_weights: np.ndarray
    ac_density: np.ndarray
    ac_labels: np.ndarray
    atoms: list
    M0: float

    @property
    def singular_mass(self) -> float:
        return math.fsum(a.mass for a in self.atoms)

    @property
    def ac_mass(self) -> float:
        return compensated_sum(self.ac_weights)

    @property
    def total_mass(self) -> float:
        return math.fsum([self.ac_mass, self.singular_mass])

    def ball_mass(self, x: float, r: float) -> float:
        """``m_bar((x - r, x + r))`` in one dimension."""
        inside = np.abs(self.ac_positions - x) < r
        mass = compensated_sum(self.ac_weights[inside])
        return mass + math.fsum(a.mass for a in self.atoms if abs(a.location - x) < r)

    def to_dict(self):
        return {"M0": self.M0, "ac_mass": self.ac_mass, "singular_mass": self.singular_mass,
                "total_mass": self.total_mass, "n_ac_labels": int(self.ac_labels.size),
                "atoms": [a.to_dict() for a in self.atoms]}


def collapse_tolerance(flow: LimitFlowMap) -> float:
    return max(1e-6, 2.0 * flow.extrapolation_error_bound)


def _slice_quadrature(s: Scenario, lo: float, hi: float, y: float | None) -> float | None:
    fn = s.m0.density_fn
    if fn is None or hi <= lo:
        return None if fn is None else 0.0
    f = (lambda x: float(fn(np.array([x]))[0])) if y is None else \
        (lambda x: float(fn(np.array([x]), np.array([y]))[0]))
    return integrate.quad(f, lo, hi, epsabs=1e-13, epsrel=1e-12, limit=200)[0]


def _slice_view(s: Scenario, zs: ZeroSet):
    per = s.n_labels // s.layout.n_slices
    for sl in range(s.layout.n_slices):
        idx = np.arange(sl * per, (sl + 1) * per)
        y = None if s.lateral is None else float(s.lateral[sl * per])
        yield sl, idx, y


def limit_measure(flow: LimitFlowMap, zs: ZeroSet, collapse_tol: float | None = None,
                  strict: bool = True) -> MeasureDecomposition:
    """Lebesgue decomposition of ``m_bar = X_bar # m0``.

    Each zero interval carrying label mass becomes one atom at the mean
    image of its labels.  Initial atoms landing in a closed zero interval
    join that atom; the others push forward as atoms of their own.

    Raises
    ------
    LimitError
        If a zero interval's image is wider than ``collapse_tol`` and
        ``strict`` is set.
    """
    s = flow.scenario
    tol = collapse_tolerance(flow) if collapse_tol is None else collapse_tol
    n = s.n_labels
    owner = zs.label_interval
    atoms = []
    for sl, idx, y in _slice_view(s, zs):
        for k, (beta, gamma) in enumerate(zs.slices[sl]):
            lab = idx[owner[idx] == k]
            if lab.size == 0:
                continue
            img = flow.Xbar[lab]
            diam = float(np.max(img) - np.min(img))
            if strict and diam > tol:
                raise LimitError(
                    f"zero interval [{beta:.6g}, {gamma:.6g}] has image width {diam:.3e} "
                    f"> {tol:.3e}; extend the run")
            mass = compensated_sum(s.weights[lab])
            quad = _slice_quadrature(s, beta, gamma, y) if y is None else None
            atoms.append(SingularAtom(float(np.mean(img)), mass, sl, y, (beta, gamma), diam,
                                      quad))
    # initial atoms (one dimension only)
    for a in range(n, s.n_particles):
        pos0, w = float(s.alpha[a]), float(s.weights[a])
        hit = None
        for atom in atoms:
            beta, gamma = atom.interval
            if beta <= pos0 <= gamma:
                hit = atom
                atom.on_boundary = atom.on_boundary or pos0 in (beta, gamma)
                break
        if hit is not None:
            hit.mass += w
        else:
            atoms.append(SingularAtom(float(flow.Xbar[a]), w, 0, None, None, 0.0, None, True))
    pos = np.arange(n)[owner < 0]
    dens = s.m0.densities[pos] / np.where(flow.dX1bar[pos] > 0, flow.dX1bar[pos], np.nan)
    lat = None if s.lateral is None else s.lateral[pos]
    return MeasureDecomposition(flow.Xbar[pos], lat, s.weights[pos], dens, pos, atoms, s.M0)


lebesgue_decomposition = limit_measure


# ---------------------------------------------------------------------------
# bound checks
# ---------------------------------------------------------------------------

@dataclass
class BoundCheck:
    """Outcome of a family of two-sided inequality checks."""

    name: str
    n_checked: int
    n_violations: int
    worst_lower_margin: float
    worst_upper_margin: float
    details: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.n_violations == 0 and self.n_checked > 0

    def to_dict(self):
        d = dict(self.__dict__)
        d["passed"] = self.passed
        return d


def _bracket_constants(flow: LimitFlowMap):
    s = flow.scenario
    km = s.kappa * s.M0
    return km * s.kernel.sup_value, km * flow.kernel_floor


def _pair_integrals(s: Scenario, i, j, mode: str):
    if mode == "f0":
        f = f0_at_particles(s)
        return f[j] - f[i]
    if mode != "quad":
        raise ValueError(f"unknown integral mode {mode!r}")
    out = np.empty(len(i))
    for n, (a, b) in enumerate(zip(i, j)):
        y = None if s.lateral is None else float(s.lateral[a])
        g = (lambda x: float(s.e0_fn(np.array([x]))[0])) if y is None else \
            (lambda x: float(s.e0_fn(np.array([x]), np.array([y]))[0]))
        out[n] = integrate.quad(g, s.alpha[a], s.alpha[b], epsabs=1e-14, epsrel=1e-10,
                                limit=400)[0]
    return out


def _bracket(name, lower, measured, upper, slack, ext, details=None) -> BoundCheck:
    lo_ok = measured >= lower * (1 - slack) - ext
    hi_ok = measured <= upper * (1 + slack) + ext
    viol = int(np.count_nonzero(~(lo_ok & hi_ok)))
    lo_margin = float(np.min(measured - lower)) if measured.size else float("nan")
    hi_margin = float(np.min(upper - measured)) if measured.size else float("nan")
    return BoundCheck(name, int(measured.size), viol, lo_margin, hi_margin, details or {})


def sample_pairs(s: Scenario, n_pairs: int, rng: np.random.Generator):
    """Random ordered same-slice label pairs ``(i, j)`` with ``alpha_i < alpha_j``."""
    per = s.n_labels // s.layout.n_slices
    sl = rng.integers(0, s.layout.n_slices, size=n_pairs)
    a = rng.integers(0, per, size=n_pairs)
    b = rng.integers(0, per - 1, size=n_pairs)
    b = np.where(b >= a, b + 1, b)
    i, j = np.minimum(a, b) + sl * per, np.maximum(a, b) + sl * per
    return i, j


def check_separation_bounds(flow: LimitFlowMap, n_pairs: int = 1000, seed: int = 0,
                            pairs=None, slack: float = 1e-3,
                            integrals: str = "f0") -> BoundCheck:
    """Two-sided bracket on ``X_bar(alpha_j) - X_bar(alpha_i)`` for same-slice pairs.

    ``int_{alpha_i}^{alpha_j} e0`` is the increment of ``f0`` (exact for the
    discrete model) or, with ``integrals="quad"``, adaptive quadrature of ``e0``.
    """
    s = flow.scenario
    if pairs is None:
        i, j = sample_pairs(s, n_pairs, np.random.default_rng(seed))
    else:
        i, j = (np.asarray(p, dtype=int) for p in pairs)
    ints = _pair_integrals(s, i, j, integrals)
    top, floor = _bracket_constants(flow)
    measured = flow.Xbar[j] - flow.Xbar[i]
    ext = 2.0 * flow.extrapolation_error_bound
    return _bracket("separation", ints / top, measured, ints / floor, slack, ext,
                    {"slack": slack, "extrapolation": ext, "integrals": integrals})


def measure_image_bounds(flow: LimitFlowMap, intervals, slice_index: int = 0):
    """``(lower, measured, upper)`` for ``|X_bar(E)|`` with ``E`` a union of intervals.

    ``E`` is discretized by the labels it contains; each component
    contributes the image increment between its first and last label.
    """
    s = flow.scenario
    per = s.n_labels // s.layout.n_slices
    off = slice_index * per
    a = s.alpha[off:off + per]
    f = f0_at_particles(s)[off:off + per]
    X = flow.Xbar[off:off + per]
    merged = []
    for lo, hi in sorted(intervals):
        if merged and lo <= merged[-1][1]:
            merged[-1] = (merged[-1][0], max(merged[-1][1], hi))
        else:
            merged.append((lo, hi))
    total_int, measured = [], []
    for lo, hi in merged:
        k = np.nonzero((a >= lo) & (a <= hi))[0]
        if k.size < 2:
            continue
        total_int.append(f[k[-1]] - f[k[0]])
        measured.append(X[k[-1]] - X[k[0]])
    top, floor = _bracket_constants(flow)
    integral = math.fsum(total_int)
    return integral / top, math.fsum(measured), integral / floor


def check_density_bounds(flow: LimitFlowMap, zs: ZeroSet, slack: float = 1e-3,
                         eps: float | None = None) -> BoundCheck:
    """``kappa M0 phi_floor rho0/e0 <= rho_bar(X_bar) <= kappa M0 ||phi|| rho0/e0``.

    Checked on ``P_eps = {e0 >= eps}`` labels; ``eps`` defaults to
    ``1e-6 * ||e0||``.
    """
    s = flow.scenario
    n = s.n_labels
    e = s.e0_labels[:n]
    eps = 1e-6 * s.e0_sup() if eps is None else eps
    sel = np.nonzero((zs.label_interval < 0) & (e >= eps) & (s.m0.densities > 0))[0]
    rho0 = s.m0.densities[sel]
    rho_bar = rho0 / flow.dX1bar[sel]
    top, floor = _bracket_constants(flow)
    chk = _bracket("density", floor * rho0 / e[sel], rho_bar, top * rho0 / e[sel], slack, 0.0,
                   {"slack": slack, "eps": eps,
                    "excluded_positive_labels": int(np.count_nonzero(
                        (zs.label_interval < 0) & (e < eps)))})
    return chk


# ---------------------------------------------------------------------------
# aggregation curves (two dimensions)
# ---------------------------------------------------------------------------

@dataclass
class CurveBranch:
    """One x1-convex piece of the zero set and its image curve.

    Each sample row is ``(alpha2, f_hat, c, c_labels, collapse_diameter)``:
    the lateral coordinate, the common image of the slice interval, the
    weight ``int rho0`` over the slice interval by quadrature, the same
    weight from label masses, and the image width of the slice.
    """

    samples: np.ndarray
    nodes: list

    @property
    def lateral_range(self) -> tuple:
        return float(self.samples[0, 0]), float(self.samples[-1, 0])

    def slope_jumps(self) -> float:
        """Largest change of finite-difference slope of ``f_hat`` between neighbours."""
        if self.samples.shape[0] < 3:
            return 0.0
        sl = np.diff(self.samples[:, 1]) / np.diff(self.samples[:, 0])
        return float(np.max(np.abs(np.diff(sl))))

    def to_dict(self):
        return {"lateral_range": list(self.lateral_range),
                "columns": ["alpha2", "f_hat", "c", "c_labels", "collapse_diameter"],
                "samples": self.samples.tolist()}


@dataclass
class AggregationReport:
    branches: list
    max_collapse_diameter: float
    shared_range: tuple | None
    truncated: bool = False

    def to_dict(self):
        return {"n_branches": len(self.branches),
                "max_collapse_diameter": self.max_collapse_diameter,
                "shared_range": None if self.shared_range is None else list(self.shared_range),
                "truncated": self.truncated,
                "branches": [b.to_dict() for b in self.branches]}


def aggregation_curves(flow: LimitFlowMap, zs: ZeroSet, max_branches: int = 64
                       ) -> AggregationReport:
    """Image curves of the zero set, one per maximal x1-convex branch.

    Slice intervals carrying labels are nodes; consecutive slices are linked
    when their intervals overlap in ``alpha1``.  Every source-to-sink path
    of this layered graph has exactly one interval per slice, so it is an
    x1-convex piece and its image is a graph over ``alpha2``.
    """
    s = flow.scenario
    if s.lateral is None:
        raise LimitError("aggregation curves need a two-dimensional scenario")
    owner = zs.label_interval
    h2 = (s.box[1][1] - s.box[1][0]) / s.layout.n_slices
    nodes = {}
    for sl, idx, y in _slice_view(s, zs):
        for k, (beta, gamma) in enumerate(zs.slices[sl]):
            lab = idx[owner[idx] == k]
            if lab.size == 0:
                continue
            img = flow.Xbar[lab]
            quad = _slice_quadrature(s, beta, gamma, y)
            c_lab = compensated_sum(s.weights[lab]) / h2
            nodes[(sl, k)] = (y, float(np.mean(img)), quad if quad is not None else c_lab,
                              c_lab, float(np.max(img) - np.min(img)), (beta, gamma))
    if not nodes:
        return AggregationReport([], 0.0, None)
    succ = {key: [] for key in nodes}
    has_pred = set()
    for (sl, k), val in nodes.items():
        b0, g0 = val[5]
        for (sl2, k2), val2 in nodes.items():
            if sl2 == sl + 1:
                b1, g1 = val2[5]
                if max(b0, b1) <= min(g0, g1):
                    succ[(sl, k)].append((sl2, k2))
                    has_pred.add((sl2, k2))
    paths, truncated = [], False
    for start in sorted(k for k in nodes if k not in has_pred):
        stack = [[start]]
        while stack:
            path = stack.pop()
            nxt = succ[path[-1]]
            if not nxt:
                paths.append(path)
                if len(paths) >= max_branches:
                    truncated = True
                    break
                continue
            for key in reversed(nxt):
                stack.append(path + [key])
        if truncated:
            break
    branches = [CurveBranch(np.array([nodes[k][:5] for k in p]), p) for p in paths]
    lo = max(b.lateral_range[0] for b in branches)
    hi = min(b.lateral_range[1] for b in branches)
    shared = (lo, hi) if lo <= hi else None
    diam = max(v[4] for v in nodes.values())
    return AggregationReport(branches, diam, shared, truncated)


# ---------------------------------------------------------------------------
# report
# ---------------------------------------------------------------------------

@dataclass
class LimitReport:
    flow: LimitFlowMap
    decomposition: MeasureDecomposition
    bound_checks: list
    curves: AggregationReport | None = None

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.bound_checks)

    def to_dict(self):
        f = self.flow
        return {"T": f.T, "rate": f.rate, "fit_valid": f.fit_valid, "warning": f.warning,
                "extrapolation_error_bound": f.extrapolation_error_bound,
                "decomposition": self.decomposition.to_dict(),
                "bound_checks": [c.to_dict() for c in self.bound_checks],
                "aggregation_curves": None if self.curves is None else self.curves.to_dict(),
                "passed": self.passed}


def build_limit_report(traj: Trajectory, zs: ZeroSet, n_pairs: int = 1000, seed: int = 0,
                       slack: float = 1e-3) -> LimitReport:
    """Flow map, decomposition and every applicable bound check for one run."""
    flow = limit_flow_map(traj)
    dec = limit_measure(flow, zs)
    checks = [check_separation_bounds(flow, n_pairs=n_pairs, seed=seed, slack=slack)]
    if np.any(zs.label_interval < 0):
        checks.append(check_density_bounds(flow, zs, slack=slack))
    curves = aggregation_curves(flow, zs) if flow.scenario.lateral is not None else None
    return LimitReport(flow, dec, checks, curves)

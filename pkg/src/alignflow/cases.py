"""Named end-to-end cases, one per acceptance criterion.

Each case builds its scenarios, integrates them (sharing runs through a
process-wide cache), evaluates its criterion at the stated tolerance and
returns a :class:`CaseResult` with one printable verdict line.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import geometry, limits, scenario as sc
from .dynamics import (IntegratorConfig, Trajectory, integrate, integrate_full_positions,
                       integrate_reduced)
from .stability import perturb_velocity, run_pair

__all__ = ["CaseResult", "SHIPPED", "CASES", "shipped_run", "run_case", "clear_cache",
           "decay_rate_fit"]


@dataclass
class CaseResult:
    name: str
    criterion: int
    passed: bool
    summary: str
    metrics: dict = field(default_factory=dict)
    details: list = field(default_factory=list)

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.criterion:>2} {self.name}: " \
               f"{self.summary}"

    def to_dict(self):
        return {"name": self.name, "criterion": self.criterion, "passed": self.passed,
                "summary": self.summary, "metrics": self.metrics, "details": self.details}


def _rk45(rtol=1e-10, atol=1e-14, tol_align=1e-10):
    return IntegratorConfig(method="rk45", rtol=rtol, atol=atol, tol_align=tol_align)


# name -> (builder, integrator settings)
SHIPPED: dict[str, tuple[Callable, IntegratorConfig]] = {
    "oracle": (lambda: sc.constant_kernel_oracle(256), _rk45()),
    "generic": (lambda: sc.generic_scenario(64), _rk45()),
    "cantor": (lambda: sc.cantor_scenario(0.3, 0.3, 8, 2 ** 14), _rk45(atol=1e-15,
                                                                      tol_align=1e-12)),
    "powerlaw-2": (lambda: sc.powerlaw_scenario(2.0, n_labels=4096), _rk45()),
    "powerlaw-3": (lambda: sc.powerlaw_scenario(3.0, n_labels=4096), _rk45()),
    "plateau": (lambda: sc.plateau_scenario(floor=0.0), _rk45()),
    "plateau-floor": (lambda: sc.plateau_scenario(floor=0.2), _rk45()),
    "disk": (lambda: sc.ring_scenario_2d(0.0, 0.5, n=128), _rk45(1e-8, 1e-12, 1e-8)),
    "annulus": (lambda: sc.ring_scenario_2d(0.3, 0.6, n=128), _rk45(1e-8, 1e-12, 1e-8)),
}

_CACHE: dict[str, tuple] = {}


def clear_cache():
    _CACHE.clear()


def shipped_run(name: str, workers: int = 1) -> tuple[sc.Scenario, Trajectory]:
    """Scenario and trajectory of a shipped case, computed once per process."""
    if name not in _CACHE:
        build, cfg = SHIPPED[name]
        s = build()
        cfg = IntegratorConfig(**{**cfg.to_dict(), "record_times": None, "workers": workers})
        _CACHE[name] = (s, integrate(s, cfg))
    return _CACHE[name]


def _flow(name, workers=1):
    key = name + "#flow"
    if key not in _CACHE:
        s, tr = shipped_run(name, workers)
        oversample = 8 if name == "cantor" else 1
        _CACHE[key] = (limits.limit_flow_map(tr), sc.zero_set(s, oversample=oversample))
    return _CACHE[key]


def decay_rate_fit(traj: Trajectory) -> float:
    """Least-squares exponential rate of ``A(t)`` over the recorded frames."""
    t = traj.times()
    A = traj.series("A")
    ok = A > 0
    return float(-np.polyfit(t[ok], np.log(A[ok]), 1)[0])


def case_oracle(workers=1) -> CaseResult:
    s, _ = shipped_run("oracle", workers)
    fl, _ = _flow("oracle", workers)
    err = float(np.max(np.abs(fl.Xbar - s.extras["xbar_exact"](s.alpha))))
    derr = float(np.max(np.abs(fl.dX1bar - s.e0_labels)))
    ok = err <= 1e-4 and derr <= 1e-3
    return CaseResult("oracle", 1, ok, f"max|Xbar - (alpha + u0)| = {err:.2e} (<= 1e-4), "
                      f"max|dXbar - e0| = {derr:.2e} (<= 1e-3)",
                      {"xbar_error": err, "dxbar_error": derr})


def case_separation(workers=1, seed=0) -> CaseResult:
    metrics, ok = {}, True
    for name in ("oracle", "cantor", "powerlaw-2"):
        fl, _ = _flow(name, workers)
        chk = limits.check_separation_bounds(fl, n_pairs=1000, seed=seed, slack=1e-3)
        metrics[name] = chk.to_dict()
        ok &= chk.n_violations == 0 and chk.n_checked == 1000
    viol = {k: v["n_violations"] for k, v in metrics.items()}
    return CaseResult("separation", 2, ok, f"violations per scenario {viol} over 1000 pairs",
                      metrics)


def case_cantor(workers=1) -> CaseResult:
    s, _ = shipped_run("cantor", workers)
    fl, zs = _flow("cantor", workers)
    dec = limits.limit_measure(fl, zs)
    pts = [a.location for a in dec.atoms]
    pred = s.extras["predicted_dimension"]
    est = geometry.box_dimension(pts, r_min=3 * fl.extrapolation_error_bound, predicted=pred)
    ceiling = 1 / (s.smoothness_k + 1) + 0.05
    ok = abs(est.slope - pred) <= 0.08 and est.slope <= ceiling
    return CaseResult("cantor-k1", 3, ok,
                      f"box dimension {est.slope:.4f} vs {pred:.5f} (+-0.08), ceiling "
                      f"{ceiling:.2f}, {len(pts)} atoms",
                      {"estimate": est.to_dict(), "ceiling": ceiling, "n_atoms": len(pts)})


def case_local_dimension(workers=1) -> CaseResult:
    radii = np.geomspace(1e-2, 1e-4, 9)
    metrics, ok, parts = {}, True, []
    for p in (2.0, 3.0):
        name = f"powerlaw-{int(p)}"
        s, _ = shipped_run(name, workers)
        fl, zs = _flow(name, workers)
        dec = limits.limit_measure(fl, zs)
        est = geometry.local_dimension(dec, 0.0, radii, fl.Xbar[:s.n_labels], predicted=1 / p)
        metrics[name] = est.to_dict()
        ok &= abs(est.slope - 1 / p) <= 0.05
        parts.append(f"p={p:g}: {est.slope:.4f} vs {1 / p:.4f}")
    return CaseResult("local-dimension", 4, ok, "; ".join(parts) + " (+-0.05)", metrics)


def _all_shipped(workers):
    return [(n, *shipped_run(n, workers)) for n in SHIPPED]


def case_flocking(workers=1) -> CaseResult:
    metrics, ok = {}, True
    for name, s, tr in _all_shipped(workers):
        c = tr.constants
        D = float(np.max(tr.series("D")))
        rate = decay_rate_fit(tr)
        if name == "oracle":
            # b is the exact rate here, so the fit is judged by its tolerance
            good = D <= c.diam_bound and abs(rate - s.kappa * s.M0) <= 0.05 * s.kappa * s.M0
        else:
            good = D <= c.diam_bound and rate >= c.b
        metrics[name] = {"max_D": D, "D_bar": c.diam_bound, "rate": rate, "b": c.b,
                         "passed": bool(good)}
        ok &= good
    worst = min(v["rate"] / v["b"] for v in metrics.values())
    return CaseResult("flocking", 5, ok, f"D <= D_bar on all; min rate/b = {worst:.3f}; "
                      f"oracle rate {metrics['oracle']['rate']:.4f}", metrics)


def deformation_terms(tr: Trajectory) -> tuple[float, float, float]:
    """``(max LHS, stated RHS, exponential RHS)`` of the deformation bound."""
    c = tr.constants
    d = tr.diagnostics
    lhs = max(c.a * x.grad_X ** 2 + math.exp(c.b * x.t) * x.grad_V ** 2 for x in d)
    base = c.a + d[0].grad_V ** 2
    stated = 4 * math.sqrt(c.a) / c.b * base
    expo = math.exp(4 * math.sqrt(c.a) / c.b) * base
    return lhs, stated, expo


def case_deformation(workers=1) -> CaseResult:
    metrics, ok, failing = {}, True, []
    for name, s, tr in _all_shipped(workers):
        lhs, stated, expo = deformation_terms(tr)
        good = lhs <= stated
        metrics[name] = {"lhs": lhs, "rhs": stated, "rhs_exponential": expo,
                         "passed": bool(good), "passed_exponential": bool(lhs <= expo)}
        ok &= good
        if not good:
            failing.append(name)
    expo_ok = all(v["passed_exponential"] for v in metrics.values())
    msg = "stated bound holds on all" if ok else f"stated bound fails on {failing}"
    return CaseResult("deformation", 6, ok, f"{msg}; exponential form holds on all: {expo_ok}",
                      metrics)


def case_e_conservation(workers=1) -> CaseResult:
    metrics, ok = {}, True
    for name, s, tr in _all_shipped(workers):
        rel = float(np.max(tr.series("e_residual"))) / s.e0_sup()
        metrics[name] = rel
        ok &= rel <= 1e-6
    return CaseResult("e-conservation", 7, ok,
                      f"max relative e residual {max(metrics.values()):.2e} (<= 1e-6)", metrics)


def case_mass_dichotomy(workers=1) -> CaseResult:
    out = {}
    for name in ("plateau", "plateau-floor"):
        s, _ = shipped_run(name, workers)
        fl, zs = _flow(name, workers)
        dec = limits.limit_measure(fl, zs)
        out[name] = (s, dec)
    s0, d0 = out["plateau"]
    s1, d1 = out["plateau-floor"]
    single = len(d0.atoms) == 1 and abs(d0.atoms[0].mass - 0.3) <= 1e-6
    empty = d1.singular_mass <= 1e-8 * s1.M0
    conserved = all(abs(d.total_mass - s.M0) <= 1e-10 for s, d in out.values())
    ok = single and empty and conserved
    atom = d0.atoms[0].mass if d0.atoms else float("nan")
    return CaseResult("mass-dichotomy", 8, ok,
                      f"{len(d0.atoms)} atom(s), mass {atom:.9f} (0.3 +- 1e-6); empty-Z "
                      f"singular mass {d1.singular_mass:.1e}; mass conserved: {conserved}",
                      {"atoms": [a.to_dict() for a in d0.atoms],
                       "singular_mass_empty": d1.singular_mass,
                       "total_mass_errors": [d.total_mass - s.M0 for s, d in out.values()]})


def case_stability(workers=1, eps=(1e-3, 5e-4)) -> CaseResult:
    s, _ = shipped_run("oracle", workers)
    cfg = IntegratorConfig(**{**SHIPPED["oracle"][1].to_dict(), "workers": workers})
    reports = [run_pair(s, perturb_velocity(s, e), cfg) for e in eps]
    ratio = reports[0].w1_limit / reports[1].w1_limit
    ok = all(r.passed for r in reports) and 1.8 <= ratio <= 2.2
    return CaseResult("stability", 9, ok,
                      f"all inequalities hold: {all(r.passed for r in reports)}; "
                      f"W1 limit ratio {ratio:.4f} in [1.8, 2.2]",
                      {"ratio": ratio, "reports": [r.to_dict() for r in reports]})


def case_reduced_full(workers=1) -> CaseResult:
    s = sc.generic_scenario(64)
    Xr = integrate_reduced(s, [5.0], dt=0.01)[-1]
    Xf = integrate_full_positions(s, [5.0], dt=0.01)[-1]
    gap = float(np.max(np.abs(Xr - Xf)))
    sols = [integrate_full_positions(s, [5.0], dt=h)[-1] for h in (0.2, 0.1, 0.05)]
    e1 = float(np.max(np.abs(sols[0] - sols[1])))
    e2 = float(np.max(np.abs(sols[1] - sols[2])))
    ratio = e1 / e2
    ok = gap <= 1e-6 and 12 <= ratio <= 20
    return CaseResult("reduced-full", 10, ok,
                      f"max|X_reduced - X_full|(5) = {gap:.2e} (<= 1e-6); RK4 error ratio "
                      f"{ratio:.2f} in [12, 20]", {"gap": gap, "errors": [e1, e2],
                                                   "ratio": ratio})


def _curve_weight_error(s, zs, curves) -> float:
    exact = s.extras["zero_slice_intervals"]
    worst = 0.0
    for b in curves.branches:
        for (sl, k), row in zip(b.nodes, b.samples):
            lo, hi = zs.slices[sl][k]
            mid = 0.5 * (lo + hi)
            ivs = exact(row[0])
            if not ivs:
                return float("inf")
            l, h = min(ivs, key=lambda iv: abs(0.5 * (iv[0] + iv[1]) - mid))
            worst = max(worst, abs(row[2] - (h - l)))
    return worst


def case_aggregation(workers=1) -> CaseResult:
    metrics = {}
    for name in ("disk", "annulus"):
        s, _ = shipped_run(name, workers)
        fl, zs = _flow(name, workers)
        curves = limits.aggregation_curves(fl, zs)
        metrics[name] = {"n_branches": len(curves.branches),
                         "max_collapse_diameter": curves.max_collapse_diameter,
                         "weight_error": _curve_weight_error(s, zs, curves),
                         "shared_range": curves.shared_range}
    d, a = metrics["disk"], metrics["annulus"]
    ok = (d["max_collapse_diameter"] <= 1e-4 and d["weight_error"] <= 1e-4
          and a["n_branches"] == 2 and a["shared_range"] is not None)
    return CaseResult("aggregation-2d", 11, ok,
                      f"disk collapse {d['max_collapse_diameter']:.1e} (<= 1e-4), weight error "
                      f"{d['weight_error']:.1e} (<= 1e-4); annulus branches {a['n_branches']}",
                      metrics)


CASES: dict[str, Callable[..., CaseResult]] = {
    "oracle": case_oracle,
    "separation": case_separation,
    "cantor-k1": case_cantor,
    "local-dimension": case_local_dimension,
    "flocking": case_flocking,
    "deformation": case_deformation,
    "e-conservation": case_e_conservation,
    "mass-dichotomy": case_mass_dichotomy,
    "stability": case_stability,
    "reduced-full": case_reduced_full,
    "aggregation-2d": case_aggregation,
}


def run_case(name: str, workers: int = 1) -> CaseResult:
    """Run a named case; raises KeyError for unknown names."""
    return CASES[name](workers=workers)

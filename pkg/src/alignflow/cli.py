"""Command-line entry point: ``alignflow {simulate,limit,dimension,stability,reproduce}``.

Exit status is 0 when every enabled bound check passes, 1 when a check
fails or a module raises, and 2 for usage or configuration errors.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import geometry, limits
from .artifacts import ArtifactWriter, build_manifest, curve_rows, trajectory_rows
from .cases import CASES, run_case
from .config import RunConfig, build_scenario, load_config
from .dynamics import integrate
from .errors import AlignflowError, ConfigError
from .scenario import zero_set
from .stability import perturb_velocity, run_pair

__all__ = ["main", "build_parser"]

COMMANDS = ("simulate", "limit", "dimension", "stability", "reproduce")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="alignflow",
        description="Unidirectional Euler alignment flows: simulation, limiting measures, "
                    "dimension estimates and stability pairs.")
    sub = p.add_subparsers(dest="command", metavar="COMMAND")
    helps = {"simulate": "integrate a scenario and write its trajectory",
             "limit": "extract the limiting flow map and measure, check the bounds",
             "dimension": "box-counting or local dimension of the limiting measure",
             "stability": "paired perturbed runs against the stability estimates"}
    for name, text in helps.items():
        c = sub.add_parser(name, help=text)
        c.add_argument("--config", metavar="PATH", help="YAML or JSON run configuration")
        _common(c)
    r = sub.add_parser("reproduce", help="run a named acceptance case")
    r.add_argument("case", choices=sorted(CASES) + ["all"], help="case name")
    _common(r)
    return p


def _common(c):
    c.add_argument("--out", metavar="DIR", help="output directory (overrides the config)")
    c.add_argument("--workers", type=int, default=1, metavar="N",
                   help="threads for pair summation")
    c.add_argument("--seed", type=int, default=0, metavar="N",
                   help="seed for random pair sampling")


def _writer(args, cfg: RunConfig | None, extra=None) -> ArtifactWriter:
    out = args.out or (cfg.output["dir"] if cfg else "out")
    w = ArtifactWriter(out, build_manifest(args.command, cfg.resolved if cfg else None,
                                           args.seed, extra))
    w.write_manifest()
    return w


def _simulate(args, cfg, w):
    s = build_scenario(cfg)
    traj = integrate(s, cfg.integrator(args.workers))
    payload = {"scenario": s.to_dict(), **traj.summary()}
    w.write_json("diagnostics.json", payload)
    if cfg.output["trajectory_csv"]:
        w.write_csv("trajectory.csv", *trajectory_rows(traj))
    return s, traj


def _limit(args, cfg, w, s, traj):
    an = cfg.analysis
    zs = zero_set(s, eps_z=an["eps_z"], oversample=an["oversample"])
    rep = limits.build_limit_report(traj, zs, n_pairs=an["n_pairs"], seed=args.seed,
                                    slack=an["slack"])
    w.write_json("limit_report.json", {"zero_set": zs.to_dict(), **rep.to_dict()})
    if rep.curves is not None:
        w.write_csv("curves.csv", *curve_rows(rep.curves))
    for c in rep.bound_checks:
        print(f"{c.name}: {c.n_violations} violations in {c.n_checked}")
    return zs, rep


def cmd_simulate(args, cfg) -> int:
    w = _writer(args, cfg)
    s, traj = _simulate(args, cfg, w)
    if traj.breakdown_time is not None:
        print(f"{s.name}: breakdown at t = {traj.breakdown_time:.6g}")
    else:
        print(f"{s.name}: aligned={traj.aligned} t_align={traj.t_align} "
              f"steps={traj.n_steps}")
    return 0


def cmd_limit(args, cfg) -> int:
    w = _writer(args, cfg)
    s, traj = _simulate(args, cfg, w)
    _, rep = _limit(args, cfg, w, s, traj)
    print(f"{s.name}: singular mass {rep.decomposition.singular_mass:.6g}, "
          f"{len(rep.decomposition.atoms)} atoms")
    return 0 if rep.passed or not cfg.analysis["checks"] else 1


def _dimension_estimate(cfg, s, rep):
    dim = cfg.analysis["dimension"]
    dec, flow = rep.decomposition, rep.flow
    kind = dim["kind"]
    if kind == "auto":
        kind = "box" if len(dec.atoms) >= 2 else "local"
    radii = None if dim["radii"] is None else np.asarray(dim["radii"], dtype=float)
    if kind == "box":
        pts = [a.location for a in dec.atoms]
        r_min = dim["r_min"] if dim["r_min"] is not None else 3 * flow.extrapolation_error_bound
        return geometry.box_dimension(pts, radii=radii, r_min=r_min, r_max=dim["r_max"],
                                      predicted=s.extras.get("predicted_dimension"),
                                      min_points=dim["min_points"])
    if radii is None:
        radii = np.geomspace(1e-2, 1e-4, 9)
    return geometry.local_dimension(dec, dim["x"], radii, flow.Xbar[:s.n_labels],
                                    min_points=dim["min_points"],
                                    predicted=s.extras.get("predicted_local_dimension"))


def cmd_dimension(args, cfg) -> int:
    w = _writer(args, cfg)
    s, traj = _simulate(args, cfg, w)
    if s.dimension != 1:
        raise ConfigError("scenario: dimension estimates are one-dimensional only")
    _, rep = _limit(args, cfg, w, s, traj)
    est = _dimension_estimate(cfg, s, rep)
    w.write_json("dimension.json", est.to_dict())
    w.write_csv("loglog.csv", ["x", "y", "used"], est.loglog().tolist())
    pred = "" if est.predicted is None else f" (predicted {est.predicted:.5f})"
    print(f"{s.name}: {est.kind} dimension {est.slope:.4f}{pred}")
    return 0 if rep.passed or not cfg.analysis["checks"] else 1


def _psi(expr: str):
    import sympy

    a = sympy.Symbol("a", real=True)
    try:
        e = sympy.sympify(expr, locals={"a": a})
    except (sympy.SympifyError, SyntaxError, TypeError) as exc:
        raise ConfigError(f"analysis.stability.psi: {exc}") from exc
    f, df = sympy.lambdify(a, e, "numpy"), sympy.lambdify(a, sympy.diff(e, a), "numpy")
    wrap = lambda g: (lambda x: np.asarray(g(x), dtype=float) * np.ones_like(x))
    return wrap(f), wrap(df)


def cmd_stability(args, cfg) -> int:
    w = _writer(args, cfg)
    s = build_scenario(cfg)
    st = cfg.analysis["stability"]
    psi, dpsi = _psi(st["psi"]) if st["psi"] else (None, None)
    icfg = cfg.integrator(args.workers)
    reports = [run_pair(s, perturb_velocity(s, e, psi, dpsi), icfg) for e in st["eps"]]
    payload = {"eps": st["eps"], "reports": [r.to_dict() for r in reports]}
    if len(reports) >= 2 and reports[-1].w1_limit > 0:
        payload["w1_limit_ratio"] = reports[0].w1_limit / reports[-1].w1_limit
    w.write_json("stability.json", payload)
    rows = []
    for e, r in zip(st["eps"], reports):
        head, body = r.rows()
        rows.extend([e, *row] for row in body)
    w.write_csv("stability_gaps.csv", ["eps", *head], rows)
    for e, r in zip(st["eps"], reports):
        print(f"eps={e:g}: passed={r.passed} W1(limit)={r.w1_limit:.6g} "
              f"bound={r.bound_limit:.6g}")
    return 0 if all(r.passed for r in reports) else 1


def cmd_reproduce(args) -> int:
    names = sorted(CASES, key=lambda n: CASES[n].__code__.co_firstlineno) \
        if args.case == "all" else [args.case]
    w = _writer(args, None, {"cases": names})
    ok = True
    for name in names:
        res = run_case(name, workers=args.workers)
        print(res.line(), flush=True)
        w.write_json(f"reproduce_{name}.json", res.to_dict())
        ok &= res.passed
    return 0 if ok else 1


def main(argv=None) -> int:
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    if not argv:
        parser.print_usage(sys.stderr)
        return 2
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 2
    try:
        if args.command == "reproduce":
            return cmd_reproduce(args)
        if not args.config:
            parser.print_usage(sys.stderr)
            print("error: --config is required", file=sys.stderr)
            return 2
        if Path(args.config).exists() and not Path(args.config).read_text().strip():
            parser.print_usage(sys.stderr)
            print("error: empty configuration", file=sys.stderr)
            return 2
        cfg = load_config(args.config)
        return {"simulate": cmd_simulate, "limit": cmd_limit, "dimension": cmd_dimension,
                "stability": cmd_stability}[args.command](args, cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except AlignflowError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

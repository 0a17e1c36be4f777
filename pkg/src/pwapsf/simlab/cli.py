"""Command-line entry point: ``pwapsf run|sweep-horizons|validate|sensitivity|dump``."""
import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from ..barrier import check_backup_pair, sample_safe_set
from ..errors import PwaPsfError
from ..flow import integrate
from ..pwa_core import close_loop
from ..sensitivity import aumann_sensitivity, compute_critical_sets
from . import export
from .runner import CONTROLLERS, compare_horizons, run_closed_loop
from .scenarios import Scenario, load_scenario


def _scenario(args) -> Scenario:
    sc = load_scenario(args.scenario)
    if getattr(args, "seed", None) is not None:
        sc = sc.with_(seed=args.seed)
    return sc


def cmd_run(args):
    sc = _scenario(args)
    x0 = None if args.x0 is None else np.array(args.x0, dtype=float)
    res = run_closed_loop(sc, args.controller, duration=args.duration, x0=x0)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    stem = f"{sc.name}_{args.controller}"
    export.write_trajectory(res, out / f"{stem}.csv")
    export.write_timing(res, out / f"{stem}_timing.csv")
    export.write_metrics(res.metrics, out / f"{stem}_metrics.txt",
                         extra={"scenario": sc.name, "controller": args.controller})
    export.write_gnuplot_runs({stem: res}, out / f"{stem}.dat")
    m = res.metrics
    print(f"{stem}: steps={m.steps} violations={m.violations} worst_h_X={m.worst_h_X:.6g} "
          f"tracking={m.tracking_error:.6g} fallbacks={m.fallbacks} mean_us={m.mean_us:.1f}")
    return 0


def cmd_sweep(args):
    sc = _scenario(args)
    rows = compare_horizons(sc, args.horizons, controllers=args.controllers,
                            grid_step=args.grid_step, duration=args.duration)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    export.write_table(rows, out / f"{sc.name}_horizons.csv")
    export.write_gnuplot_sweep(rows, out / f"{sc.name}_horizons.dat")
    for r in rows:
        print(f"T={r['T']:g} N={r['N']} {r['controller']}: tracking={r['tracking_error']:.6g} "
              f"violations={r['violations']} solve_us={r['mean_solve_us']:.1f}")
    return 0


def cmd_validate(args):
    sc = _scenario(args)
    ok = True
    try:
        cl = close_loop(sc.system, sc.backup, validate=True)
        print(f"partition: {len(sc.system.regions)} regions, closed loop {len(cl.regions)} cells, continuous")
    except PwaPsfError as exc:
        print(f"partition: FAILED ({exc})")
        return 1
    if sc.sample_box is None:
        print("backup pair: no sampling box in the scenario, skipped")
        return 0
    rng = np.random.default_rng(args.seed or 0)
    plan = sample_safe_set(sc.h_b, sc.sample_box[0], sc.sample_box[1], args.samples, args.samples,
                           rng, center=sc.sample_center)
    report = check_backup_pair(sc.h_b, cl, sc.psf.alpha_b, plan.points, strict=False)
    ok &= report.passed
    print(f"backup pair: {'passed' if report.passed else 'FAILED'} margin={report.margin:.6g} "
          f"samples={report.n_samples}")
    if not report.passed:
        print(f"  witness: {np.array2string(report.witness, precision=6)}")
    crit = compute_critical_sets(cl)
    print(f"critical set: {len(crit)} component(s)")
    for comp in crit:
        print(f"  regions {comp.regions} witness {np.array2string(comp.witness, precision=6)}")
    return 0 if ok else 1


def cmd_sensitivity(args):
    sc = _scenario(args)
    cfg = sc.psf
    x = np.array(args.state, dtype=float)
    if x.size != sc.system.n:
        print(f"error: --state needs {sc.system.n} entries, got {x.size}", file=sys.stderr)
        return 2
    T = cfg.horizon if args.horizon is None else args.horizon
    N = cfg.N if args.points is None else args.points
    grid = np.linspace(0.0, T, N + 1) if N else np.zeros(1)
    rec = integrate(sc.closed_loop, x, T, cfg.dt)
    tree = aumann_sensitivity(sc.closed_loop, rec, grid, mode=args.mode)
    print(f"leaves={tree.n_leaves} min|det Q|={tree.min_abs_det():.6g} switching={rec.switching}")
    for k, Q in enumerate(tree.leaves):
        print(f"  leaf {k} at t={tree.times[-1]:g}: {np.array2string(Q, precision=6)}")
    if args.out:
        tree.to_csv(args.out)
    return 0


def cmd_dump(args):
    sc = _scenario(args)
    sc.save(args.path)
    print(f"wrote {args.path}")
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="pwapsf", description="Predictive safety filters for PWA systems.")
    p.add_argument("-v", "--verbose", action="store_true", help="log fallback events")
    sub = p.add_subparsers(dest="command", required=True)

    def scenario_arg(sp):
        sp.add_argument("scenario", help="JSON file or built-in name (pendulum, pendulum_boundary, rooms)")
        sp.add_argument("--seed", type=int, default=None)

    r = sub.add_parser("run", help="closed-loop simulation of one controller")
    scenario_arg(r)
    r.add_argument("--controller", choices=CONTROLLERS, default="psf")
    r.add_argument("--duration", type=float, default=None)
    r.add_argument("--x0", type=float, nargs="+", default=None)
    r.add_argument("--out", default="out")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("sweep-horizons", help="tracking error and timing per horizon")
    scenario_arg(s)
    s.add_argument("--horizons", type=float, nargs="*", default=[0.0, 1.0, 2.0, 4.0])
    s.add_argument("--controllers", nargs="+", choices=CONTROLLERS, default=["psf", "explicit"])
    s.add_argument("--grid-step", type=float, default=0.1)
    s.add_argument("--duration", type=float, default=None)
    s.add_argument("--out", default="out")
    s.set_defaults(func=cmd_sweep)

    v = sub.add_parser("validate", help="partition continuity and backup-pair checks")
    scenario_arg(v)
    v.add_argument("--samples", type=int, default=2000)
    v.set_defaults(func=cmd_validate)

    t = sub.add_parser("sensitivity", help="Aumann sensitivity tree at a state")
    scenario_arg(t)
    t.add_argument("--state", type=float, nargs="+", required=True)
    t.add_argument("--horizon", type=float, default=None)
    t.add_argument("--points", type=int, default=None, help="grid intervals")
    t.add_argument("--mode", choices=("discrete", "exact"), default="discrete")
    t.add_argument("--out", default=None, help="CSV file for all leaves")
    t.set_defaults(func=cmd_sensitivity)

    d = sub.add_parser("dump", help="write a scenario as JSON")
    scenario_arg(d)
    d.add_argument("path")
    d.set_defaults(func=cmd_dump)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except PwaPsfError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

"""Command-line surface: validate / solve / verify-ic / synthesize / optimize /
simulate / report.

Exit codes: 0 success, 2 validation failure, 3 incentive-compatibility
failure, 4 configuration error.  All numeric outputs are deterministic given
(scenario, seed); human-readable diagnostics go to stderr.
"""

import argparse
import os
import sys

import numpy as np

from . import __version__
from . import gridtools as gt
from . import icverify, optimizer, paysynth, reporting
from .environment import (build_environment, check_fosd, check_full_support,
                          check_lipschitz)
from .errors import (AssumptionError, DegenerateError, NonFiniteError,
                     NotThresholdError, SchemaError, StopmechError,
                     SupportError)
from .mechanism import build_mechanism
from .montecarlo import monte_carlo
from .scenario import config_digest, load_scenario
from .valuesolver import (check_boundedness, check_single_crossing,
                          extract_threshold, mean_first_passage,
                          principal_exante, solve_value)

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_IC = 3
EXIT_CONFIG = 4


def _err(msg):
    print(msg, file=sys.stderr)


# ===================== scenario plumbing =====================


def _load(args):
    cfg = load_scenario(args.scenario)
    if getattr(args, "grid", None):
        cfg.solver["grid"] = int(args.grid)
    if getattr(args, "seed", None) is not None:
        cfg.simulation["seed"] = int(args.seed)
    if getattr(args, "strict_literal", False):
        cfg.solver["strict_literal"] = True
    return cfg


def _outdir(args, cfg):
    out = args.out or cfg.output.get("directory", "out")
    os.makedirs(out, exist_ok=True)
    return out


def _fmt(args, cfg):
    return args.format or cfg.output.get("format", "csv")


def _eta_from(args, cfg, env):
    if getattr(args, "eta", None):
        return np.asarray([float(v) for v in args.eta], dtype=float)
    eta = cfg.synthesis.get("eta") if cfg.synthesis else None
    if eta is None:
        return np.zeros(max(env.T - 1, 1))
    return np.asarray(eta, dtype=float)


def _anchors_from(cfg, env):
    spec = (cfg.synthesis or {}).get("anchors", "bottom")
    if spec == "bottom":
        return None
    return np.asarray(spec, dtype=float)


def _need_mechanism(cfg, env):
    mech = build_mechanism(cfg, env)
    if mech is None:
        raise SchemaError("scenario has no mechanism block")
    return mech


def _synthesized(cfg, env, args):
    mech = _need_mechanism(cfg, env)
    eta = _eta_from(args, cfg, env)
    strict_literal = bool(cfg.solver.get("strict_literal", False))
    out, pot = paysynth.synthesize_mechanism(
        env, mech.alloc, theta_eps=_anchors_from(cfg, env),
        eta=eta[:max(env.T - 1, 0)] if env.T > 1 else None,
        strict_literal=strict_literal)
    return out, pot, eta


# ===================== subcommands =====================


def cmd_validate(args):
    cfg = _load(args)
    try:
        env = build_environment(cfg)
    except (SupportError, DegenerateError) as exc:
        _err(f"{type(exc).__name__}: {exc}")
        return EXIT_VALIDATION
    checks = [check_full_support(env), check_lipschitz(env)]
    mech = build_mechanism(cfg, env)
    if mech is not None:
        checks.append(check_fosd(env, mech.alloc))
        checks.append(check_boundedness(env, mech))
        try:
            checks.append(check_single_crossing(env, mech))
        except StopmechError as exc:
            _err(f"single-crossing scan failed: {exc}")
            return EXIT_VALIDATION
    ok = True
    for rep in checks:
        print(f"{rep.name}: {'PASS' if rep.passed else 'FAIL'}"
              + (f"  (worst {rep.worst:.3g})" if not rep.passed else ""))
        if not rep.passed:
            for f in rep.failures[:5]:
                _err(f"  {rep.name} violation: {f}")
            ok = False
    return EXIT_OK if ok else EXIT_VALIDATION


def cmd_solve(args):
    cfg = _load(args)
    env = build_environment(cfg)
    mech = _need_mechanism(cfg, env)
    out = _outdir(args, cfg)
    run = reporting.RunReport("solve", config_digest(cfg), __version__)
    sol = solve_value(env, mech,
                      strict_literal=bool(cfg.solver.get("strict_literal", False)),
                      tie_tol=float(cfg.solver.get("tie_tol", 1e-9)))
    reporting.write_value_tables(out, env, sol, fmt=_fmt(args, cfg))
    run.add("solve", {"eta": [float(v) for v in np.atleast_1d(sol.eta)],
                      "tau_bar": float(sol.tau_bar),
                      "V1_bottom": float(sol.V[0][0]),
                      "down_closed": all(bool(v) for v in sol.down_closed)})
    run.write(out)
    print(f"solved on {env.meta.get('grid_nodes')} nodes; "
          f"V1(bottom) = {sol.V[0][0]:.6g}; eta = {np.atleast_1d(sol.eta)}; "
          f"tau_bar = {sol.tau_bar:.6g}")
    return EXIT_OK


def cmd_verify_ic(args):
    cfg = _load(args)
    env = build_environment(cfg)
    mech = _need_mechanism(cfg, env)
    out = _outdir(args, cfg)
    run = reporting.RunReport("verify-ic", config_digest(cfg), __version__)
    tol = float(cfg.solver.get("ic_tolerance", 1e-3))
    sol = solve_value(env, mech, tie_tol=float(cfg.solver.get("tie_tol", 1e-9)))
    rep = icverify.one_shot_check(env, mech, solution=sol, tol=tol)
    with open(os.path.join(out, "ic_report.json"), "w", newline="\n") as fh:
        fh.write(rep.to_json() + "\n")
    run.add("ic", rep.to_dict())
    run.write(out)
    print(f"one-shot audit: {rep.verdict} (worst gap {rep.worst_gap:.3g}, tol {tol:g})")
    return EXIT_OK if rep.passed else EXIT_IC


def cmd_synthesize(args):
    cfg = _load(args)
    env = build_environment(cfg)
    out = _outdir(args, cfg)
    run = reporting.RunReport("synthesize", config_digest(cfg), __version__)
    mech, pot, eta = _synthesized(cfg, env, args)
    sol = solve_value(env, mech, tie_tol=float(cfg.solver.get("tie_tol", 1e-9)))
    tol = float(cfg.solver.get("ic_tolerance", 1e-3))
    rep = icverify.one_shot_check(env, mech, solution=sol, tol=tol)
    suf = paysynth.verify_sufficiency(env, mech.alloc, pot, payments=mech.pay)
    fmt = _fmt(args, cfg)
    reporting.write_potential_tables(out, env, pot, fmt=fmt)
    reporting.write_value_tables(out, env, sol, fmt=fmt)
    with open(os.path.join(out, "ic_report.json"), "w", newline="\n") as fh:
        fh.write(rep.to_json() + "\n")
    run.add("synthesis", {"rho": [float(v) for v in mech.pay.rho],
                          "eta": [float(v) for v in eta],
                          "V1_bottom": float(sol.V[0][0]),
                          "sufficiency": suf.to_dict() if hasattr(suf, "to_dict")
                          else {"passed": bool(suf.passed),
                                "worst_slack": float(suf.worst_slack)}})
    run.add("ic", rep.to_dict())
    run.write(out)
    print(f"synthesized payments; rho = {mech.pay.rho}; IC {rep.verdict} "
          f"(worst gap {rep.worst_gap:.3g}); sufficiency "
          f"{'PASS' if suf.passed else 'FAIL'}")
    return EXIT_OK if rep.passed else EXIT_IC


def cmd_optimize(args):
    cfg = _load(args)
    env = build_environment(cfg)
    out = _outdir(args, cfg)
    run = reporting.RunReport("optimize", config_digest(cfg), __version__)
    family = (optimizer.TabularFamily(env, nodes=args.family_nodes)
              if args.family == "tabular" else optimizer.AffineFamily(env))
    etas = ([np.asarray([float(v) for v in args.eta], dtype=float)]
            if args.eta else [_eta_from(args, cfg, env)])
    ocfg = optimizer.OptimizerConfig(seed=int(cfg.simulation.get("seed", 7)))
    if len(etas) == 1:
        rep = optimizer.optimize_allocation(env, family, etas[0], config=ocfg)
        best = rep
    else:
        sweep = optimizer.optimize_over_eta(env, family, etas, config=ocfg)
        best = sweep.best
        rep = sweep
    reporting.write_json(os.path.join(out, "optimizer_report.json"), rep.to_dict())
    rows = list(zip(family.names, best.best_params))
    rows.append(("objective", best.best_value))
    rows.append(("gradient_norm", best.gradient_norm))
    reporting.write_table(os.path.join(out, "optimizer_params"),
                          ["name", "value"],
                          [[n, v] for n, v in rows], _fmt(args, cfg))
    run.add("optimize", best.to_dict())
    run.write(out)
    print("optimum: " + ", ".join(f"{n} = {v:.6g}" for n, v in
                                  zip(family.names, best.best_params)))
    print(f"objective = {best.best_value:.8g}; gradient norm = {best.gradient_norm:.3g}")
    return EXIT_OK


def cmd_simulate(args):
    cfg = _load(args)
    env = build_environment(cfg)
    mech = _need_mechanism(cfg, env)
    out = _outdir(args, cfg)
    run = reporting.RunReport("simulate", config_digest(cfg), __version__)
    sol = solve_value(env, mech, tie_tol=float(cfg.solver.get("tie_tol", 1e-9)))
    try:
        eta = extract_threshold(sol) if not args.eta else None
    except NotThresholdError as exc:
        _err(f"stopping region is not a threshold: {exc}; pass --eta explicitly")
        return EXIT_VALIDATION
    if args.eta:
        eta = np.asarray([float(v) for v in args.eta], dtype=float)
    paths = int(args.paths or cfg.simulation.get("paths", 100000))
    seed = int(cfg.simulation.get("seed", 0))
    stats = monte_carlo(env, mech, eta, paths, seed)
    pts1 = env.grid(1).points
    agent_q = float(gt.product_integral(pts1, env.f1, sol.V[0]))
    principal_q = principal_exante(env, mech, eta)
    tau_q = mean_first_passage(env, mech, eta)
    payload = stats.to_dict()
    payload["quadrature"] = {"agent": agent_q, "principal": principal_q,
                             "tau_bar": tau_q}
    reporting.write_json(os.path.join(out, "mc_stats.json"), payload)
    run.add("simulate", payload)
    run.write(out)
    za = (abs(stats.agent_mean - agent_q) / stats.agent_stderr
          if stats.agent_stderr else 0.0)
    print(f"paths = {paths}; agent {stats.agent_mean:.6g} (quadrature {agent_q:.6g}, "
          f"z = {za:.2f}); principal {stats.principal_mean:.6g} "
          f"(quadrature {principal_q:.6g}); tau {stats.tau_mean:.6g} "
          f"(quadrature {tau_q:.6g})")
    return EXIT_OK


def cmd_report(args):
    cfg = _load(args)
    env = build_environment(cfg)
    out = _outdir(args, cfg)
    run = reporting.RunReport("report", config_digest(cfg), __version__)
    fmt = _fmt(args, cfg)
    mech = _need_mechanism(cfg, env)
    sol = solve_value(env, mech, tie_tol=float(cfg.solver.get("tie_tol", 1e-9)))
    tol = float(cfg.solver.get("ic_tolerance", 1e-3))
    ic = icverify.one_shot_check(env, mech, solution=sol, tol=tol)
    mats = icverify.gap_matrices(env, mech, solution=sol)
    _, pot, eta = _synthesized(cfg, env, args)

    reporting.write_value_tables(out, env, sol, fmt=fmt)
    reporting.write_potential_tables(out, env, pot, fmt=fmt)
    reporting.write_gap_tables(out, mats, fmt=fmt)
    reporting.write_curve_bundle(out, env, sol, pot=pot, fmt=fmt)
    with open(os.path.join(out, "ic_report.json"), "w", newline="\n") as fh:
        fh.write(ic.to_json() + "\n")
    reporting.render_value_figure(os.path.join(out, "values.png"), env, sol)
    reporting.render_potential_figure(os.path.join(out, "potentials.png"), env, pot)
    reporting.render_gap_figure(os.path.join(out, "ic_gaps.png"), mats)
    run.add("solve", {"eta": [float(v) for v in np.atleast_1d(sol.eta)],
                      "tau_bar": float(sol.tau_bar)})
    run.add("ic", {"verdict": ic.verdict, "worst_gap": ic.worst_gap})
    run.write(out)
    print(f"report bundle written to {out} (IC {ic.verdict})")
    return EXIT_OK


# ===================== argument parsing =====================


def _common(p, *, grid=True, seed=True, eta=True, fmt=True):
    p.add_argument("--scenario", required=True, help="scenario file path")
    p.add_argument("--out", default=None, help="output directory")
    if grid:
        p.add_argument("--grid", type=int, default=None, help="nodes per period grid")
    if seed:
        p.add_argument("--seed", type=int, default=None, help="simulation seed override")
    if eta:
        p.add_argument("--eta", nargs="+", default=None, metavar="X",
                       help="exit thresholds (one per period before the last)")
    p.add_argument("--strict-literal", action="store_true",
                   help="flowless continuation ledger variant (diagnostics only)")
    if fmt:
        p.add_argument("--format", choices=("csv", "json"), default=None,
                       help="table output format")


def build_parser():
    ap = argparse.ArgumentParser(
        prog="stopmech",
        description="Finite-horizon screening with agent exit: solver, audit, synthesis.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="environment and assumption battery")
    _common(p, eta=False, fmt=False, seed=False)
    p.set_defaults(fn=cmd_validate)

    p = sub.add_parser("solve", help="agent optimal-stopping value tables")
    _common(p)
    p.set_defaults(fn=cmd_solve)

    p = sub.add_parser("verify-ic", help="one-shot deviation audit")
    _common(p)
    p.set_defaults(fn=cmd_verify_ic)

    p = sub.add_parser("synthesize", help="payments from the allocation rule")
    _common(p)
    p.set_defaults(fn=cmd_synthesize)

    p = sub.add_parser("optimize", help="relaxed profit maximization")
    _common(p)
    p.add_argument("--family", choices=("affine", "tabular"), default="affine")
    p.add_argument("--family-nodes", type=int, default=4,
                   help="free nodes per period for the tabular family")
    p.set_defaults(fn=cmd_optimize)

    p = sub.add_parser("simulate", help="Monte Carlo cross-checks")
    _common(p)
    p.add_argument("--paths", type=int, default=None)
    p.set_defaults(fn=cmd_simulate)

    p = sub.add_parser("report", help="bundled tables, plot data, figures")
    _common(p)
    p.set_defaults(fn=cmd_report)
    return ap


def main(argv=None):
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code not in (0, None) else EXIT_OK
    try:
        return args.fn(args)
    except SchemaError as exc:
        _err(f"configuration error: {exc}")
        return EXIT_CONFIG
    except (SupportError, DegenerateError, AssumptionError, NotThresholdError) as exc:
        _err(f"{type(exc).__name__}: {exc}")
        return EXIT_VALIDATION
    except NonFiniteError as exc:
        _err(f"NonFiniteError: {exc}")
        return EXIT_VALIDATION
    except StopmechError as exc:
        _err(f"{type(exc).__name__}: {exc}")
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())

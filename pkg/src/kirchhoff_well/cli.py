"""Command-line entry point ``kirchhoff-well``."""

from __future__ import annotations

import argparse
import logging
import sys

from .config import load_config
from .discretization import first_eigenvalue
from .errors import ConfigError, DomainError, NumericalError
from .experiment import (
    EXIT_CONFIG,
    EXIT_NUMERICAL,
    EXIT_OK,
    EXIT_CHECK_FAILED,
    FAIL,
    bounds_analysis,
    initial_field,
    output_dir,
    run_experiment,
    run_sweep,
    write_field_csv,
    write_json,
    write_summary_csv,
)
from .functionals import d0_lower_bound, energy_J, nehari_I, sobolev_search, validate_params
from .stationary import GroundStateConfig, ground_state, lagrange_consistency_check
from .well import classify, well_depth

log = logging.getLogger("kirchhoff_well")


def _overrides(args) -> dict:
    return {} if args.seed is None else {"seed": args.seed}


def cmd_simulate(args) -> int:
    cfg = load_config(args.config, _overrides(args))
    rep = run_experiment(cfg)
    print(f"outcome: {rep.outcome}" + (f" at t={rep.blowup_time:.6g}" if rep.blowup_time else ""))
    print(f"u0: {rep.classification} (relative to {rep.d_reference})")
    for k, v in rep.checks.items():
        print(f"  {k}: {v}")
    print(f"report: {output_dir(cfg) / 'report.json'}")
    return rep.exit_code


def cmd_ground_state(args) -> int:
    cfg = load_config(args.config, _overrides(args))
    out = output_dir(cfg)
    out.mkdir(parents=True, exist_ok=True)
    gs = ground_state(cfg.mesh, cfg.params, GroundStateConfig(starts=cfg.analysis.starts, seed=cfg.seed))
    pairing, I = lagrange_consistency_check(gs.field, cfg.params)
    write_field_csv(gs.field, out / "ground_state.csv")
    summary = {"J": gs.J, "abs_I": gs.abs_I, "residual": gs.residual, "iterations": gs.iterations,
               "start_id": gs.start_id, "I_prime_pairing": pairing}
    write_summary_csv(summary, out / "ground_state_summary.csv")
    write_json({**summary, "starts": [r.__dict__ for r in gs.starts], "config": cfg.echo()}, out / "ground_state.json")
    print(f"J = {gs.J:.12g}  |I| = {gs.abs_I:.3g}  residual = {gs.residual:.3g}")
    return EXIT_OK


def cmd_well_depth(args) -> int:
    cfg = load_config(args.config, _overrides(args))
    out = output_dir(cfg)
    out.mkdir(parents=True, exist_ok=True)
    wr = well_depth(cfg.mesh, cfg.params, GroundStateConfig(starts=cfg.analysis.starts, seed=cfg.seed),
                    sobolev_starts=cfg.analysis.starts)
    summary = {"d_est": wr.d_est, "d0": wr.d0, "S": wr.S, "spread": wr.spread,
               "num_starts": wr.num_starts, "best_start_id": wr.best_start_id}
    write_summary_csv(summary, out / "well_depth.csv")
    write_json({**summary, "start_J": list(wr.start_J), "config": cfg.echo()}, out / "well_depth.json")
    print(f"d_est = {wr.d_est:.12g}  d0 = {wr.d0:.12g}  S = {wr.S:.12g}")
    return EXIT_OK if wr.d_est >= wr.d0 * (1 - 1e-12) else EXIT_CHECK_FAILED


def cmd_classify(args) -> int:
    cfg = load_config(args.config, _overrides(args))
    u0 = initial_field(cfg)
    S = sobolev_search(cfg.mesh, cfg.params.q, starts=cfg.analysis.starts, seed=cfg.seed).S
    validate_params(cfg.params, S)
    if args.d is not None:
        d, ref = args.d, "given"
    elif cfg.analysis.well_depth:
        d, ref = well_depth(cfg.mesh, cfg.params, GroundStateConfig(starts=cfg.analysis.starts, seed=cfg.seed)).d_est, "d_est"
    else:
        d, ref = d0_lower_bound(cfg.params, S), "d0"
    c = classify(u0, cfg.params, d)
    print(f"{c.value}  J={energy_J(u0, cfg.params):.12g}  I={nehari_I(u0, cfg.params):.12g}  d={d:.12g} ({ref})")
    return EXIT_OK


def cmd_bounds(args) -> int:
    cfg = load_config(args.config, _overrides(args))
    out = output_dir(cfg)
    out.mkdir(parents=True, exist_ok=True)
    wr = well_depth(cfg.mesh, cfg.params, GroundStateConfig(starts=cfg.analysis.starts, seed=cfg.seed))
    values = {"d_est": wr.d_est, "S": wr.S, "lambda1_h": first_eigenvalue(cfg.mesh)}
    checks: dict[str, str] = {}
    bounds_analysis(cfg, wr.d_est, wr.S, values, checks)
    write_summary_csv({**values, **{f"check.{k}": v for k, v in checks.items()}}, out / "bounds.csv")
    write_json({"values": values, "checks": checks, "config": cfg.echo()}, out / "bounds.json")
    for k, v in values.items():
        print(f"{k} = {v}")
    for k, v in checks.items():
        print(f"  {k}: {v}")
    return EXIT_CHECK_FAILED if FAIL in checks.values() else EXIT_OK


def cmd_sweep(args) -> int:
    with open(args.config, encoding="utf-8") as fh:
        text = fh.read()
    values = [v.strip() for v in args.values.split(",") if v.strip()]
    rows = run_sweep(text, args.axis, values, workers=args.workers, overrides=_overrides(args))
    for r in rows:
        print(f"{args.axis}={r['value']}: {r['outcome'] or 'error'} exit={r['exit_code']} {r['error']}")
    codes = {r["exit_code"] for r in rows}
    for code in (EXIT_CONFIG, EXIT_NUMERICAL, EXIT_CHECK_FAILED):
        if code in codes:
            return code
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="kirchhoff-well", description="Numerical laboratory for the nonlocal parabolic Kirchhoff equation.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def add(name, fn, help):
        sp = sub.add_parser(name, help=help)
        sp.add_argument("config", help="experiment configuration file")
        sp.add_argument("--seed", type=int, default=None, help="override the global seed")
        sp.set_defaults(func=fn)
        return sp

    add("simulate", cmd_simulate, "run one experiment and its enabled analyses")
    add("ground-state", cmd_ground_state, "compute a ground state of the stationary problem")
    add("well-depth", cmd_well_depth, "estimate the potential well depth")
    c = add("classify", cmd_classify, "classify the configured initial data")
    c.add_argument("--d", type=float, default=None, help="well depth to classify against")
    add("bounds", cmd_bounds, "Nehari level-set bounds and their empirical check")
    s = add("sweep", cmd_sweep, "run a parameter sweep")
    s.add_argument("--axis", required=True, help="config key to vary")
    s.add_argument("--values", required=True, help="comma-separated values")
    s.add_argument("--workers", type=int, default=1)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print("configuration error:\n  " + "\n  ".join(exc.errors), file=sys.stderr)
        return EXIT_CONFIG
    except DomainError as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())

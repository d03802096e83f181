"""``cbo`` command-line front end.

Exit codes: 0 success, 1 verification failure, 2 configuration error,
3 numerical blow-up, 4 Picard non-convergence.
"""

from __future__ import annotations

import argparse
import json
import sys
import time

from . import io, verify
from .config import ConfigError, load_config
from .dynamics import run_particle_cbo
from .exceptions import DataError, NumericalBlowUpError, UsageError
from .meanfield import (
    PicardConfig,
    constants_report,
    derive_seed,
    picard_fixed_point,
    propagation_of_chaos,
    verify_moment_bound,
)
from .measure import moment_p

EXIT_OK = 0
EXIT_VERIFY = 1
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_PICARD = 4


def _parse_set(items):
    out = {}
    for item in items or ():
        key, sep, value = item.partition("=")
        if not sep or not key:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        try:
            out[key] = json.loads(value)
        except json.JSONDecodeError:
            out[key] = value
    return out


def _overrides(args):
    over = _parse_set(args.set)
    if args.seed is not None:
        over["seed"] = args.seed
    if args.out is not None:
        over["output_dir"] = args.out
    return over


def _initial(cfg, n):
    return cfg.sampler(n, cfg.dim, derive_seed(cfg.seed, 1))


def _prepare_out(cfg):
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    return cfg.output_dir


def cmd_optimize(cfg):
    X0 = _initial(cfg, cfg.params.n)
    trunc = cfg.truncation_for(moment_p(X0, cfg.truncation["p"])) if cfg.truncation else None
    out = _prepare_out(cfg)
    start = time.perf_counter()
    traj = run_particle_cbo(cfg.params, cfg.model, cfg.objective, X0, trunc)
    wall = time.perf_counter() - start
    io.save_trajectory(traj, out / "trajectory.csv")
    io.save_ensemble(traj.final_ensemble, out / "final_ensemble.csv")
    io.write_json(out / "summary.json", {
        "best_f": float(traj.best_f[-1]),
        "consensus": traj.consensus[-1].tolist(),
        "wall_time": wall,
        "n_steps": cfg.params.n_steps,
    })
    return EXIT_OK


def _meanfield_inputs(cfg):
    picard = cfg.picard or PicardConfig()
    X0 = _initial(cfg, picard.m_samples)
    trunc = None
    if cfg.truncation is not None:
        trunc = cfg.truncation_for(moment_p(X0, cfg.truncation["p"]))
    return picard, X0, trunc


def cmd_meanfield(cfg):
    if cfg.truncation is None or cfg.picard is None:
        raise ConfigError("meanfield needs 'truncation' and 'picard' sections")
    picard, X0, trunc = _meanfield_inputs(cfg)
    report = constants_report(cfg.objective, cfg.model, cfg.params, trunc,
                              cfg.constants["C_M"], cfg.constants["L_M_R"])
    out = _prepare_out(cfg)
    start = time.perf_counter()
    res = picard_fixed_point(picard, cfg.params, cfg.model, cfg.objective, trunc, X0)
    wall = time.perf_counter() - start
    sol = res.solution
    io.save_solution(sol, out, stride=cfg.curve_stride)
    io.write_json(out / "constants.json", report.as_dict())
    bound = verify_moment_bound(sol, report.C_0)
    io.write_json(out / "summary.json", {
        "converged": res.converged,
        "iterations": res.iterations,
        "final_path_dist": res.history[-1] if res.history else None,
        "exit_index": sol.exit_index,
        "R": trunc.R,
        "p": trunc.p,
        "phi_min": float(sol.phi.min()),
        "moment_bound": {"sup_moment": bound.sup_moment, "initial_moment": bound.initial_moment,
                         "bound": bound.bound, "margin": bound.margin, "passed": bound.passed},
        "wall_time": wall,
    })
    if not res.converged:
        print(f"cbo: Picard iteration did not reach tol={picard.tol} in "
              f"{picard.max_iters} iterations (last {res.history[-1]:.3g})", file=sys.stderr)
        return EXIT_PICARD
    return EXIT_OK


def cmd_verify(cfg, fault=None):
    seeds = tuple(cfg.verify.get("seeds", (0, 1, 2)))
    out = _prepare_out(cfg)
    results = verify.run_all(seed=cfg.seed, fault=fault, seeds=seeds)
    report = verify.report_dict(results)
    io.write_json(out / "verify_report.json", report)
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'}  {r.name}  margin={r.margin:.3g}")
    return EXIT_OK if report["passed"] else EXIT_VERIFY


def cmd_chaos(cfg):
    n_list, reps = cfg.chaos["n_list"], cfg.chaos["reps"]
    picard, X0, trunc = _meanfield_inputs(cfg)
    out = _prepare_out(cfg)
    ref = picard_fixed_point(picard, cfg.params, cfg.model, cfg.objective, trunc, X0)
    if not ref.converged:
        io.save_history(ref.history, out / "picard_history.csv")
        print("cbo: mean-field reference did not converge", file=sys.stderr)
        return EXIT_PICARD
    table = propagation_of_chaos(n_list, reps, cfg.params, cfg.model, cfg.objective,
                                 ref.solution, cfg.sampler, p=picard.p)
    io.write_csv(out / "chaos.csv", ["N", "rep", "w_p"], table.rows)
    io.write_json(out / "chaos_summary.json", {
        "p": table.p,
        "medians": {str(N): v for N, v in table.medians.items()},
        "inversions": table.inversions,
        "max_inversions": table.max_inversions,
        "trend_holds": table.trend_holds,
        "reps": reps,
    })
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="cbo", description="Consensus-based optimization runs.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_ in (("optimize", "run the particle system"),
                        ("meanfield", "solve the truncated mean-field problem"),
                        ("verify", "run the invariant checks"),
                        ("chaos", "particle vs mean-field distance as N grows")):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", help="JSON config file (defaults apply if omitted)")
        p.add_argument("--seed", type=int, help="override the top-level seed")
        p.add_argument("--out", help="output directory")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override a top-level field; VALUE is parsed as JSON")
        if name == "chaos":
            p.add_argument("--n-list", help="comma-separated ascending particle counts")
            p.add_argument("--reps", type=int)
        if name == "verify":
            p.add_argument("--inject-fault", choices=verify.FAULTS, help=argparse.SUPPRESS)
    return parser


def _chaos_section(args, raw):
    chaos = {"n_list": [64, 256], "reps": 10, **(raw.get("chaos") or {})}
    if args.n_list is not None:
        try:
            chaos["n_list"] = [int(v) for v in args.n_list.split(",") if v.strip()]
        except ValueError:
            raise ConfigError(f"--n-list must be integers, got {args.n_list!r}") from None
    if args.reps is not None:
        chaos["reps"] = args.reps
    return chaos


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        over = _overrides(args)
        if args.command == "chaos":
            over["chaos"] = _chaos_section(args, load_config(args.config, over).raw)
        cfg = load_config(args.config, over)
        if args.command == "optimize":
            return cmd_optimize(cfg)
        if args.command == "meanfield":
            return cmd_meanfield(cfg)
        if args.command == "verify":
            return cmd_verify(cfg, args.inject_fault)
        return cmd_chaos(cfg)
    except (NumericalBlowUpError, DataError) as exc:
        print(f"cbo: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigError, UsageError) as exc:
        print(f"cbo: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FloatingPointError as exc:
        print(f"cbo: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())

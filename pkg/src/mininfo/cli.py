"""Command-line interface.

Exit codes: 0 ok, 1 usage error, 2 model/file validation error,
3 solver did not converge.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path

from .builtin import BUILTINS, builtin
from .core import check_policy, model_to_dict
from .io import check_model, load_policy, read_json, save_model, save_policy, write_json
from .reduction import build_reduced_pomdp, check_equivalence, embed_retentive_policy, setup_from_dict
from .simulator import crosscheck, rollout
from .solver import SolverOptions, evaluate_state, solve
from .sweep import detect_bifurcations, log_grid, refine_bifurcation, sweep, write_events_csv, write_sweep_csv

EXIT_OK, EXIT_USAGE, EXIT_INVALID, EXIT_NONCONVERGED = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _positive(text):
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError(f"must be positive, got {text}")
    return v


def _add_solver_flags(p, beta_required=True):
    if beta_required:
        p.add_argument("--beta", type=_positive, required=True, help="inverse temperature")
    p.add_argument("--clock-cost", action=argparse.BooleanOptionalAction, default=True,
                   help="charge the clock information I[t;a] (default on)")
    p.add_argument("--max-period", type=int, default=16)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--perturbation", type=float, default=1e-3)
    p.add_argument("--tol-fe", type=_positive, default=1e-9)
    p.add_argument("--tol-cycle", type=_positive, default=1e-8)
    p.add_argument("--max-iter", type=int, default=10_000)


def _options(args, beta) -> SolverOptions:
    if args.max_period < 1:
        raise UsageError("--max-period must be >= 1")
    if args.perturbation < 0:
        raise UsageError("--perturbation must be non-negative")
    return SolverOptions(
        beta=beta,
        clock_aware=args.clock_cost,
        max_period=args.max_period,
        cycle_tolerance=args.tol_cycle,
        fe_tolerance=args.tol_fe,
        max_outer_iterations=args.max_iter,
        perturbation_scale=args.perturbation,
        rng_seed=args.seed,
    )


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="mininfo", description="Minimum-information reactive policies for finite POMDPs")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("solve", help="solve at one beta")
    p.add_argument("--model", required=True, help="model JSON path or builtin:<name>")
    _add_solver_flags(p)
    p.add_argument("--out", default="out")

    p = sub.add_parser("sweep", help="solve over a log-spaced beta grid")
    p.add_argument("--model", required=True)
    _add_solver_flags(p, beta_required=False)
    p.add_argument("--beta-min", type=_positive, default=0.1)
    p.add_argument("--beta-max", type=_positive, default=10.0)
    p.add_argument("--beta-steps", type=int, default=64)
    mode = p.add_mutually_exclusive_group()
    mode.add_argument("--warm", dest="mode", action="store_const", const="warm")
    mode.add_argument("--cold", dest="mode", action="store_const", const="cold")
    p.set_defaults(mode="warm")
    p.add_argument("--refine", type=_positive, default=None, metavar="WIDTH",
                   help="bisect every bifurcation bracket down to WIDTH")
    p.add_argument("--jobs", type=int, default=1, help="parallel workers for --cold")
    p.add_argument("--out", default="out")

    p = sub.add_parser("reduce", help="flatten a retentive setup into a two-phase model")
    p.add_argument("--setup", required=True, help="retentive setup JSON")
    p.add_argument("--mode", choices=("mask", "penalty"), default="mask")
    p.add_argument("--penalty", type=float, default=10.0)
    p.add_argument("--tolerance", type=_positive, default=1e-9)
    p.add_argument("--out", default="out")

    p = sub.add_parser("simulate", help="Monte Carlo rollout of a policy")
    p.add_argument("--model", required=True)
    p.add_argument("--policy", help="policy JSON; solved at --beta when omitted")
    p.add_argument("--beta", type=_positive, default=None)
    _add_solver_flags(p, beta_required=False)
    p.add_argument("--steps", type=int, default=1_000_000)
    p.add_argument("--burn-in", type=int, default=1000)
    p.add_argument("--out", default="out")

    p = sub.add_parser("example", help="write a built-in model as JSON")
    p.add_argument("name")
    p.add_argument("--out", default=None, help="output file (stdout when omitted)")
    return parser


def _outdir(path) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_solve(args) -> int:
    model = check_model(args.model)
    policy, _, report = solve(model, _options(args, args.beta))
    out = _outdir(args.out)
    write_json(out / "report.json", report.to_dict())
    save_policy(out / "policy.json", model, policy)
    print(f"period={report.detected_period} free_energy={report.free_energy:.10g} "
          f"external_cost={report.external_cost:.10g} converged={report.converged}")
    return EXIT_OK if report.converged else EXIT_NONCONVERGED


def cmd_sweep(args) -> int:
    if args.beta_steps < 1:
        raise UsageError("--beta-steps must be >= 1")
    if args.beta_steps > 1 and args.beta_max <= args.beta_min:
        raise UsageError("--beta-max must exceed --beta-min")
    model = check_model(args.model)
    opts = _options(args, args.beta_min)
    grid = log_grid(args.beta_min, args.beta_max, args.beta_steps)
    points = sweep(model, grid, opts, args.mode, args.jobs)
    events = detect_bifurcations(points)
    if args.refine:
        by_beta = {p.beta: p for p in points}
        events = [refine_bifurcation(model, e, opts, args.refine, by_beta[e.beta_low].policy) for e in events]
    out = _outdir(args.out)
    write_sweep_csv(out / "sweep.csv", model, points)
    write_events_csv(out / "bifurcations.csv", events)
    for e in events:
        print(f"period {e.period_before} -> {e.period_after} in [{e.beta_low:.6g}, {e.beta_high:.6g}]")
    return EXIT_OK


def cmd_reduce(args) -> int:
    setup = setup_from_dict(read_json(args.setup))
    reduced = build_reduced_pomdp(setup, args.mode, args.penalty)
    policy = embed_retentive_policy(setup, reduced)
    eq = check_equivalence(setup, args.tolerance, reduced, policy)
    out = _outdir(args.out)
    save_model(out / "reduced_model.json", reduced.model)
    save_policy(out / "embedded_policy.json", reduced.model, policy)
    write_json(out / "equivalence.json", asdict(eq))
    print(f"states={reduced.model.n_states} observations={reduced.model.n_obs} "
          f"actions={reduced.model.n_actions} deviation={eq.deviation}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    model = check_model(args.model)
    if args.policy:
        policy = check_policy(model, load_policy(args.policy))
        state = evaluate_state(model, policy, args.beta or 1.0, args.clock_cost)
    else:
        if args.beta is None:
            raise UsageError("simulate needs --policy or --beta")
        policy, state, _ = solve(model, _options(args, args.beta))
    stats = rollout(model, policy, args.steps, args.burn_in, args.seed)
    check = crosscheck(model, policy, stats, state)
    out = _outdir(args.out)
    write_json(out / "simulation.json", {"rollout": stats.to_dict(), "crosscheck": check.to_dict()})
    print(f"empirical_cost={stats.cost_mean:.6g} se={stats.cost_se:.3g} "
          f"analytic_cost={check.analytic_cost:.6g} z={check.cost_z:.3g}")
    return EXIT_OK


def cmd_example(args) -> int:
    if args.name not in BUILTINS:
        raise UsageError(f"unknown example {args.name!r}; available: {', '.join(sorted(BUILTINS))}")
    doc = model_to_dict(builtin(args.name))
    if args.out:
        write_json(args.out, doc)
    else:
        print(json.dumps(doc, indent=2, sort_keys=True))
    return EXIT_OK


COMMANDS = {
    "solve": cmd_solve,
    "sweep": cmd_sweep,
    "reduce": cmd_reduce,
    "simulate": cmd_simulate,
    "example": cmd_example,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"mininfo {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, OSError, KeyError) as exc:
        print(f"mininfo {args.command}: invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())

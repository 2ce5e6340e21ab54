#!/usr/bin/env python3
"""
mpe-split - CLI Entry Point

Operator splitting and multi-product expansion integrators with a
convergence-study harness.
"""

import argparse
import json
import logging
import sys
from typing import Optional

import numpy as np

from mpe_split.config import LOG_LEVEL, REPORTS_DIR, TABLE1_REFERENCE, validate_config
from mpe_split.core import advance, error_norms, reference_flow
from mpe_split.harness import (
    ExperimentConfig,
    build_stepper,
    emit,
    format_table,
    run_convergence,
    table1_config,
    table1_title,
)
from mpe_split.mpe import mpe_weights
from mpe_split.problems import PROBLEM_IDS, build_problem
from mpe_split.utils import Event, EventEmitter

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NUMERIC = 2


def log_level(debug: bool = False) -> int:
    """DEBUG under --debug, otherwise the level named by MPE_LOG_LEVEL."""
    if debug:
        return logging.DEBUG
    return logging.getLevelName(LOG_LEVEL.upper())


def setup_logging(debug: bool = False):
    """Setup logging configuration."""
    logging.basicConfig(
        level=log_level(debug),
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
    )


def print_header():
    print("""
    ╔═══════════════════════════════════════════════════════════════╗
    ║                          mpe-split                            ║
    ║     Operator splitting & multi-product expansion studies      ║
    ╚═══════════════════════════════════════════════════════════════╝
    """)


def print_event(event: Event):
    """Print study progress to the console."""
    event_type = event.type.value
    data = event.data

    if event_type == "study_started":
        print(f"\n[Study] {data.get('study_id')}: {data.get('description')}")
    elif event_type == "row_started":
        print(f"  [+] {data.get('row_id')} {data.get('description')}")
    elif event_type == "row_complete":
        print(f"  [-] {data.get('description')}")
    elif event_type == "row_failed":
        print(f"  [!] {data.get('description')}")
    elif event_type == "study_complete":
        print(f"\n[Study] {data.get('description')}")


def _parse_pairs(pairs: Optional[list[str]]) -> dict:
    """``key=value`` arguments; values are read as JSON when possible."""
    params = {}
    for pair in pairs or []:
        key, sep, raw = pair.partition("=")
        if not sep or not key:
            raise ValueError(f"expected key=value, got '{pair}'")
        try:
            params[key] = json.loads(raw)
        except json.JSONDecodeError:
            params[key] = raw
    return params


def cmd_coeffs(args) -> int:
    weights = mpe_weights(args.k, mode=args.mode)
    weights.verify()
    print(f"MPE weights for k = {{{weights.k}}} (order {weights.k.order})")
    for k, value, exact in zip(weights.k.values, weights.values, weights.exact or [None] * len(weights.values)):
        if args.rational and exact is not None:
            print(f"  k={k:<3d} c={str(exact):>22}  {value!r}")
        else:
            print(f"  k={k:<3d} c={value!r}")
    return EXIT_OK


def cmd_step(args) -> int:
    params = _parse_pairs(args.param)
    params["t_end"] = args.t_end
    if args.u0 is not None:
        params["u0"] = args.u0
    problem = build_problem(args.problem, params, dt=args.h)
    stepper = build_stepper(args.scheme, problem.system, _parse_pairs(args.scheme_param))
    final = advance(stepper, problem.t0, problem.t_end, args.h, problem.initial_state)
    if problem.exact is not None:
        expected = problem.exact(problem.t_end)
    else:
        expected = reference_flow(problem.system, problem.t0, problem.t_end - problem.t0, problem.initial_state)
    err_l1, err_max = error_norms(final, expected)

    with np.printoptions(precision=12):
        print(f"{args.scheme} on {args.problem}, h={args.h}, t_end={problem.t_end}")
        print(f"final state: {final}")
        print(f"exact:       {expected}")
    print(f"err_l1={err_l1:.6e} err_max={err_max:.6e}")
    return EXIT_OK


def _run_study(cfg: ExperimentConfig, show_events: bool):
    emitter = EventEmitter()
    if show_events:
        emitter.add_listener(print_event)
    return run_convergence(cfg, emitter=emitter)


def cmd_converge(args) -> int:
    cfg = ExperimentConfig.from_json(args.config)
    print_header()
    report = _run_study(cfg, show_events=not args.no_events)
    print()
    print(format_table(report))

    out = args.out or cfg.output
    if out:
        emit(report, args.format or cfg.format, out)
        print(f"\nReport written to {out}")
    return EXIT_NUMERIC if report.failed else EXIT_OK


def cmd_table1(args) -> int:
    cfg = table1_config(mu=args.mu)
    print_header()
    report = _run_study(cfg, show_events=not args.no_events)
    print()
    print(format_table(report, title=table1_title(cfg)))
    print("\nPublished values (mu=0.05):")
    for dx, dt, l1, mx in TABLE1_REFERENCE:
        print(f"  dx=1/{round(1 / dx):<3d} dt=1/{round(1 / dt):<3d} err_L1={l1:.4f} err_max={mx:.4f}")
    out = args.out or REPORTS_DIR / f"table1.{args.format}"
    emit(report, args.format, out)
    print(f"\nReport written to {out}")
    return EXIT_NUMERIC if report.failed else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="mpe-split - operator splitting and MPE convergence studies")
    parser.add_argument("--debug", action="store_true", help="Enable debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    coeffs = sub.add_parser("coeffs", help="Print MPE extrapolation weights")
    coeffs.add_argument("--k", required=True, help="Comma separated substep counts, e.g. 1,2,3")
    coeffs.add_argument("--rational", action="store_true", help="Also print exact fractions")
    coeffs.add_argument("--mode", choices=("closed-form", "solve"), default="closed-form")
    coeffs.set_defaults(handler=cmd_coeffs)

    converge = sub.add_parser("converge", help="Run a convergence study from a JSON config")
    converge.add_argument("--config", required=True)
    converge.add_argument("--out")
    converge.add_argument("--format", choices=("csv", "json"))
    converge.add_argument("--no-events", action="store_true", help="Suppress progress output")
    converge.set_defaults(handler=cmd_converge)

    step = sub.add_parser("step", help="Integrate a single trajectory")
    step.add_argument("--problem", required=True, choices=PROBLEM_IDS)
    step.add_argument("--scheme", required=True)
    step.add_argument("--h", type=float, required=True)
    step.add_argument("--t-end", type=float, default=1.0)
    step.add_argument("--u0", type=float)
    step.add_argument("--param", action="append", help="Problem parameter key=value")
    step.add_argument("--scheme-param", action="append", help="Scheme parameter key=value")
    step.set_defaults(handler=cmd_step)

    table1 = sub.add_parser("table1", help="Burgers (dx, dt) ladder with two iterations per step")
    table1.add_argument("--mu", type=float, default=0.05)
    table1.add_argument("--out", help="Report path (default: reports/table1.<format>)")
    table1.add_argument("--format", choices=("csv", "json"), default="csv")
    table1.add_argument("--no-events", action="store_true", help="Suppress progress output")
    table1.set_defaults(handler=cmd_table1)
    return parser


def main(argv: Optional[list[str]] = None) -> int:
    """Main entry point; returns the process exit code."""
    args = build_parser().parse_args(argv)
    setup_logging(args.debug)

    try:
        validate_config()
    except ValueError as e:
        print(f"\nConfiguration Error: {e}")
        return EXIT_CONFIG

    try:
        return args.handler(args)
    except (ValueError, OSError) as e:
        print(f"\nConfiguration Error: {e}")
        return EXIT_CONFIG
    except (ArithmeticError, RuntimeError) as e:
        print(f"\nNumerical Failure: {e}")
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())

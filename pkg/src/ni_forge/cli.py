"""Command-line interface.

Exit codes: 0 success (or NI), 1 property does not hold, 2 input error,
3 iteration budget exhausted (results still written), 4 synthesis failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .analysis import ni_sample_check
from .io import SystemFileError, read_system, write_csv, write_json, write_system
from .lqg import LqgWeights, RiccatiError, lqg_controller
from .lti import (DEFAULT_POINTS, DEFAULT_WMAX, DEFAULT_WMIN, ModeSpec, PoleEvaluationError, dc_gain, default_grid,
                  flex_plant, make_grid)
from .pipeline import PipelineOptions, bode_table, run_pipeline, step_table
from .solver import DcConstraint, NearestNiProblem, SolverConfig, solve

EXIT_OK, EXIT_FAIL, EXIT_INPUT, EXIT_BUDGET, EXIT_SYNTH = 0, 1, 2, 3, 4

log = logging.getLogger("ni_forge")


class InputError(Exception):
    pass


def _grid(args):
    if args.wmin is None and args.wmax is None and args.points is None:
        return default_grid()
    wmin = DEFAULT_WMIN if args.wmin is None else args.wmin
    wmax = DEFAULT_WMAX if args.wmax is None else args.wmax
    points = DEFAULT_POINTS if args.points is None else args.points
    try:
        return make_grid(wmin, wmax, points)
    except ValueError as exc:
        raise InputError(str(exc)) from exc


def _load(path, what="system"):
    try:
        return read_system(path)
    except SystemFileError as exc:
        raise InputError(f"{what} file {path}: {exc}") from exc


def parse_modes(text: str):
    """Parse ``"w:z,w:z,..."`` into :class:`ModeSpec` objects."""
    modes = []
    for item in text.split(","):
        parts = item.strip().split(":")
        if len(parts) != 2:
            raise InputError(f"malformed mode {item!r}; expected omega:zeta")
        try:
            modes.append(ModeSpec(float(parts[0]), float(parts[1])))
        except ValueError as exc:
            raise InputError(f"mode {item!r}: {exc}") from exc
    if not modes:
        raise InputError("no modes given")
    return modes


def _weight(text, name):
    if text is None:
        return None
    try:
        value = np.asarray(json.loads(text), dtype=float)
    except (json.JSONDecodeError, ValueError, TypeError) as exc:
        raise InputError(f"--{name} must be a JSON number or nested list") from exc
    if not np.all(np.isfinite(value)):
        raise InputError(f"--{name} contains non-finite entries")
    return value


def _weights(args, plant):
    base = LqgWeights.default_for(plant)
    n, m = plant.n, plant.m
    values = {}
    for attr, flag, size in (("Qc", "qc", n), ("Rc", "rc", m), ("Nc", "nc", None), ("W", "w", n), ("V", "v", m)):
        v = _weight(getattr(args, flag), flag)
        if v is None:
            values[attr] = getattr(base, attr)
        elif v.ndim == 0 and size is not None:
            values[attr] = float(v) * np.eye(size)
        else:
            values[attr] = v
    try:
        return LqgWeights(**values)
    except ValueError as exc:
        raise InputError(f"invalid LQG weights: {exc}") from exc


# -- subcommands ---------------------------------------------------------------

def cmd_check_ni(args):
    sys_ = _load(args.system)
    verdict = ni_sample_check(sys_, _grid(args), tol=args.tol)
    print(json.dumps(verdict.to_dict(), indent=2))
    return EXIT_OK if verdict.is_ni else EXIT_FAIL


def cmd_nearest_ni(args):
    target = _load(args.system)
    dc = None
    if args.dc_plant is not None:
        plant = _load(args.dc_plant, "DC plant")
        if not (target.is_siso and plant.is_siso):
            raise InputError("--dc-plant requires SISO system and plant")
        dc = DcConstraint(float(dc_gain(plant)[0, 0]), args.epsilon)
    try:
        problem = NearestNiProblem(target, args.w1, args.w2, dc)
        config = SolverConfig(max_iter=args.max_iter, init_kind=args.init)
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    result = solve(problem, config)
    write_system(args.out, result.nearest, "nearest NI system")
    if args.trace:
        write_csv(args.trace, ["iter", "objective"], enumerate(result.objective_trace))
    report_path = args.report or Path(args.out).with_suffix(".report.json")
    write_json(report_path, {
        "objective": result.objective,
        "initial_objective": result.init_objective,
        "iterations": result.iterations,
        "converged": result.converged,
        "stop_reason": result.stop_reason,
        "restarts": result.restarts,
        "dc_rescalings": result.dc_rescalings,
        "perturbation": result.report.to_dict(),
    })
    if not result.converged:
        print(f"warning: iteration budget exhausted after {result.iterations} iterations", file=sys.stderr)
        return EXIT_BUDGET
    return EXIT_OK


def cmd_flex_plant(args):
    write_system(args.out, flex_plant(parse_modes(args.modes)), args.modes)
    return EXIT_OK


def cmd_lqg(args):
    plant = _load(args.plant, "plant")
    weights = _weights(args, plant)
    try:
        ctrl = lqg_controller(plant, weights)
    except RiccatiError as exc:
        print(f"error: LQG synthesis failed: {exc}", file=sys.stderr)
        return EXIT_SYNTH
    write_system(args.out, ctrl, "LQG controller")
    return EXIT_OK


def cmd_pipeline(args):
    plant = _load(args.plant, "plant")
    evals = {}
    for path in args.eval_plant or []:
        name = Path(path).stem
        if name in evals or name == "design":
            name = f"{name}_{len(evals)}"
        evals[name] = _load(path, "evaluation plant")
    controller = _load(args.controller, "controller") if args.controller else None
    if controller is not None and controller.m != plant.m:
        raise InputError("controller and plant have different numbers of channels")
    if any(p.m != plant.m for p in evals.values()):
        raise InputError("evaluation plants must have the same number of channels as the design plant")
    weights = _weights(args, plant) if controller is None else None
    opts = PipelineOptions(w1=args.w1, w2=args.w2, init=args.init, max_iter=args.max_iter,
                           epsilon=args.epsilon, dc_margin=args.dc_margin, horizon=args.horizon, dt=args.dt)
    try:
        report = run_pipeline(plant, args.out, evals, controller, weights, opts)
    except RiccatiError as exc:
        print(f"error: LQG synthesis failed: {exc}", file=sys.stderr)
        return EXIT_SYNTH
    summary = {k: v["closed_loop_hurwitz"] for k, v in report["loops"].items()}
    print(json.dumps({"closed_loop_hurwitz": summary,
                      "controller_ni": report["verdicts"]["controller_ni"]["is_ni"],
                      "report": str(Path(args.out) / "report.json")}, indent=2))
    return EXIT_OK if report["solver"]["converged"] else EXIT_BUDGET


def cmd_bode(args):
    sys_ = _load(args.system)
    header, rows = bode_table(sys_, _grid(args))
    write_csv(args.out, header, rows)
    return EXIT_OK


def cmd_step(args):
    sys_ = _load(args.system)
    try:
        header, rows = step_table(sys_, args.horizon, args.dt)
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    write_csv(args.out, header, rows)
    return EXIT_OK


# -- parser --------------------------------------------------------------------

def _add_grid(p):
    p.add_argument("--wmin", type=float, help=f"lowest frequency in rad/s (default {DEFAULT_WMIN:g})")
    p.add_argument("--wmax", type=float, help=f"highest frequency in rad/s (default {DEFAULT_WMAX:g})")
    p.add_argument("--points", type=int, help=f"number of log-spaced points (default {DEFAULT_POINTS})")


def _add_solver(p):
    p.add_argument("--w1", type=float, default=1.0, help="weight on the A mismatch")
    p.add_argument("--w2", type=float, default=1.0, help="weight on the B mismatch")
    p.add_argument("--init", choices=["standard", "lmi"], default="standard")
    p.add_argument("--max-iter", type=int, default=100_000)
    p.add_argument("--epsilon", type=float, default=1e-2, help="DC-gain rescaling margin")


def _add_weights(p):
    for flag, what in (("qc", "state cost"), ("rc", "input cost"), ("nc", "cross cost"),
                       ("w", "process noise covariance"), ("v", "measurement noise covariance")):
        p.add_argument(f"--{flag}", help=f"{what}, as a JSON number (times identity) or matrix")


def build_parser():
    parser = argparse.ArgumentParser(prog="ni-forge", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("check-ni", help="sampled NI check of a system file")
    p.add_argument("--system", required=True)
    _add_grid(p)
    p.add_argument("--tol", type=float, default=1e-8)
    p.set_defaults(func=cmd_check_ni)

    p = sub.add_parser("nearest-ni", help="compute the nearest NI system")
    p.add_argument("--system", required=True)
    _add_solver(p)
    p.add_argument("--dc-plant", help="plant file whose DC gain the result must respect (SISO)")
    p.add_argument("--out", required=True)
    p.add_argument("--trace", help="CSV file for the objective trace")
    p.add_argument("--report", help="JSON perturbation report (default: OUT with .report.json suffix)")
    p.set_defaults(func=cmd_nearest_ni)

    p = sub.add_parser("flex-plant", help="modal flexible-structure plant")
    p.add_argument("--modes", required=True, help='comma separated omega:zeta pairs, e.g. "2:0.02,4:0.02"')
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_flex_plant)

    p = sub.add_parser("lqg", help="design an LQG controller")
    p.add_argument("--plant", required=True)
    _add_weights(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_lqg)

    p = sub.add_parser("pipeline", help="design, convert to NI and verify")
    p.add_argument("--plant", required=True)
    p.add_argument("--eval-plant", action="append", help="evaluation plant file (repeatable)")
    p.add_argument("--controller", help="controller file; an LQG controller is designed if omitted")
    p.add_argument("--out", required=True, help="output directory")
    _add_solver(p)
    _add_weights(p)
    p.add_argument("--dc-margin", type=float, default=0.1,
                   help="relative inflation of the largest plant DC gain used for the DC constraint")
    p.add_argument("--horizon", type=float, default=60.0)
    p.add_argument("--dt", type=float, default=0.01)
    p.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("bode", help="frequency-response CSV")
    p.add_argument("--system", required=True)
    _add_grid(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_bode)

    p = sub.add_parser("step", help="step-response CSV")
    p.add_argument("--system", required=True)
    p.add_argument("--horizon", type=float, default=60.0)
    p.add_argument("--dt", type=float, default=0.01)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_step)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except PoleEvaluationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except OSError as exc:
        print(f"error: cannot write output: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())

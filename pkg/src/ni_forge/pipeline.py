"""Near-optimal NI controller pipeline.

Design (or load) an optimal controller, replace it by the nearest NI
controller, then check both against every evaluation plant: NI/SNI
verdicts, the DC-gain condition, closed-loop stability and, where the
interconnection theorem applies, whether its stability prediction holds.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .analysis import dc_gain_condition, ni_sample_check, sni_check
from .io import write_csv, write_json, write_system
from .lqg import LqgWeights, lqg_controller
from .lti import StateSpace, dc_gain, default_grid, freq_response, is_hurwitz, positive_feedback, step_response
from .solver import DcConstraint, NearestNiProblem, SolverConfig, solve

__all__ = ["PipelineOptions", "bode_table", "step_table", "loop_verdict", "run_pipeline"]

log = logging.getLogger(__name__)


@dataclass
class PipelineOptions:
    w1: float = 1.0
    w2: float = 1.0
    init: str = "standard"
    max_iter: int = 100_000
    epsilon: float = 1e-2
    # DC constraint is taken against the largest known plant DC gain, inflated by this fraction
    dc_margin: float = 0.1
    use_dc_constraint: bool = True
    horizon: float = 60.0
    dt: float = 0.01
    grid: np.ndarray | None = field(default=None, repr=False)


def bode_table(sys: StateSpace, grid):
    """Rows ``omega, |G| dB, phase deg (unwrapped), Re G, Im G`` for a SISO system.

    For MIMO systems the five value columns repeat per channel ``(i, j)``.
    """
    G = freq_response(sys, grid)
    m = sys.m
    header = ["omega_rad_s"]
    cols = [np.asarray(grid, dtype=float)]
    for i in range(m):
        for j in range(m):
            g = G[:, i, j]
            suffix = "" if m == 1 else f"_{i}_{j}"
            with np.errstate(divide="ignore"):
                mag = 20.0 * np.log10(np.abs(g))
            phase = np.degrees(np.unwrap(np.angle(g))) if g.size else g.real
            header += [f"magnitude_db{suffix}", f"phase_deg{suffix}", f"re{suffix}", f"im{suffix}"]
            cols += [mag, phase, g.real, g.imag]
    return header, np.column_stack(cols) if cols[0].size else np.empty((0, len(header)))


def step_table(sys: StateSpace, horizon, dt):
    t, y = step_response(sys, horizon, dt)
    m = sys.m
    if m == 1:
        return ["t_s", "y"], np.column_stack([t, y[:, 0, 0]])
    header = ["t_s"] + [f"y_{i}_{j}" for i in range(m) for j in range(m)]
    return header, np.column_stack([t, y.reshape(t.size, m * m)])


def loop_verdict(plant: StateSpace, controller: StateSpace, grid=None) -> dict:
    """Closed-loop facts for one plant/controller pair, including the stability-theorem cross-check.

    The theorem predicts internal stability when the plant is NI without
    poles at the origin, the controller is SNI, ``G(inf) Gbar(inf) = 0``,
    ``Gbar(inf) >= 0`` and ``lambda_max(G(0) Gbar(0)) < 1``.
    """
    loop = positive_feedback(plant, controller)
    stable = is_hurwitz(loop)
    eig = np.linalg.eigvals(loop.A) if loop.n else np.empty(0)
    try:
        dc_ok, dc_value = dc_gain_condition(plant, controller)
    except ValueError:
        dc_ok, dc_value = False, None
    plant_ni = ni_sample_check(plant, grid).is_ni
    ctrl_sni = sni_check(controller, grid).is_ni
    feedthrough_ok = (np.allclose(plant.D @ controller.D, 0.0)
                      and np.linalg.eigvalsh(0.5 * (controller.D + controller.D.T))[0] >= -1e-12)
    applicable = bool(plant_ni and ctrl_sni and feedthrough_ok and dc_value is not None)
    return {
        "closed_loop_hurwitz": stable,
        "max_real_pole": float(np.max(eig.real)) if eig.size else None,
        "dc_condition": dc_ok,
        "dc_lambda_max": dc_value,
        "theorem_applicable": applicable,
        "theorem_predicts_stable": bool(applicable and dc_ok),
        "theorem_consistent": (not applicable) or (dc_ok == stable),
    }


def run_pipeline(plant: StateSpace, out_dir, eval_plants=None, controller: StateSpace | None = None,
                 weights: LqgWeights | None = None, options: PipelineOptions | None = None) -> dict:
    """Run design, nearest-NI conversion and verification; write artifacts to ``out_dir``.

    ``eval_plants`` maps names to plants; the design plant is always
    evaluated too, under the name ``"design"``. Returns the report that is
    also written to ``report.json``.
    """
    opts = options or PipelineOptions()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    grid = default_grid() if opts.grid is None else opts.grid
    evals = {"design": plant}
    evals.update(eval_plants or {})

    designed = controller is None
    if designed:
        weights = weights or LqgWeights.default_for(plant)
        controller = lqg_controller(plant, weights)
    write_system(out / "controller_raw.json", controller, "raw controller")
    for name, p in evals.items():
        write_system(out / f"plant_{name}.json", p, name)

    dc = None
    dc_reference = None
    if opts.use_dc_constraint and controller.is_siso:
        gains = [float(dc_gain(p)[0, 0]) for p in evals.values()]
        dc_reference = max(gains) * (1.0 + opts.dc_margin)
        dc = DcConstraint(dc_reference, opts.epsilon)
    problem = NearestNiProblem(controller, opts.w1, opts.w2, dc)
    result = solve(problem, SolverConfig(max_iter=opts.max_iter, init_kind=opts.init))
    ni_ctrl = result.nearest
    write_system(out / "controller_ni.json", ni_ctrl, "nearest NI controller")
    write_csv(out / "trace.csv", ["iter", "objective"], enumerate(result.objective_trace))

    for name, sys in [("controller_raw", controller), ("controller_ni", ni_ctrl)] + \
            [(f"plant_{k}", p) for k, p in evals.items()]:
        header, rows = bode_table(sys, grid)
        write_csv(out / f"bode_{name}.csv", header, rows)

    loops = {}
    for pname, p in evals.items():
        for cname, c in (("raw", controller), ("ni", ni_ctrl)):
            key = f"{cname}@{pname}"
            loops[key] = loop_verdict(p, c, grid)
            header, rows = step_table(positive_feedback(p, c), opts.horizon, opts.dt)
            write_csv(out / f"step_{cname}_{pname}.csv", header, rows)

    report = {
        "controller_source": "lqg" if designed else "file",
        "verdicts": {
            "plant": ni_sample_check(plant, grid).to_dict(),
            "controller_raw": ni_sample_check(controller, grid).to_dict(),
            "controller_ni": ni_sample_check(ni_ctrl, grid).to_dict(),
            "controller_ni_sni": sni_check(ni_ctrl, grid).to_dict(),
        },
        "solver": {
            "converged": result.converged,
            "stop_reason": result.stop_reason,
            "iterations": result.iterations,
            "restarts": result.restarts,
            "dc_rescalings": result.dc_rescalings,
            "initial_objective": result.init_objective,
            "final_objective": result.objective,
            "init": opts.init,
            "weights": [opts.w1, opts.w2],
            "dc_reference_gain": dc_reference,
            "epsilon": opts.epsilon if dc else None,
        },
        "perturbation": result.report.to_dict(),
        "dc_condition_design": loops["ni@design"]["dc_lambda_max"],
        "loops": loops,
        "eval_plants": {k: {"n": p.n, "dc_gain": float(dc_gain(p)[0, 0]) if p.is_siso else None}
                        for k, p in evals.items()},
        "theorem_violations": [k for k, v in loops.items() if not v["theorem_consistent"]],
    }
    write_json(out / "report.json", report)
    log.info("pipeline finished: NI controller objective %.4g, loops %s", result.objective,
             {k: v["closed_loop_hurwitz"] for k, v in loops.items()})
    return report

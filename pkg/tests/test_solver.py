import warnings

import numpy as np
import pytest

from ni_forge.analysis import dc_gain_condition, ni_lmi_matrix, ni_sample_check
from ni_forge.lti import StateSpace, dc_gain
from ni_forge.ph import PhForm, assemble_system
from ni_forge.solver import (DcConstraint, DcRescaleWarning, NearestNiProblem, SolverConfig, SolverDivergenceError,
                             dc_gain_rescale, gradients, init_lmi, init_standard, lmi_relaxation_gap, objective,
                             perturbation_report, solve)


def assembled_target(rng, n, m, D=None):
    ph = PhForm.random(n, rng)
    D = np.zeros((m, m)) if D is None else D
    return ph, assemble_system(ph, rng.standard_normal((m, n)), D)


def test_objective_examples(rng):
    ph, target = assembled_target(rng, 3, 1)
    assert objective(NearestNiProblem(target), ph) == 0.0
    n = 4
    sys = StateSpace(np.eye(n), np.zeros((n, 1)), np.zeros((1, n)), [[0.0]])
    zero = PhForm(np.zeros((n, n)), np.zeros((n, n)), np.eye(n))
    assert objective(NearestNiProblem(sys), zero) == pytest.approx(n)
    assert objective(NearestNiProblem(sys, w1=2.0), zero) == pytest.approx(2 * n)


def test_objective_dimension_mismatch(rng):
    _, target = assembled_target(rng, 3, 1)
    with pytest.raises(ValueError):
        objective(NearestNiProblem(target), PhForm.random(2, rng))


def test_gradients_vanish_at_minimizer(rng):
    ph, target = assembled_target(rng, 4, 2)
    for G in gradients(NearestNiProblem(target, 1.5, 0.5), ph):
        assert not G.any()


def test_gradient_j_is_minus_gradient_r(rng):
    sys = StateSpace(*(rng.standard_normal(s) for s in [(3, 3), (3, 1), (1, 3), (1, 1)]))
    GJ, GR, _ = gradients(NearestNiProblem(sys, 1.0, 1e-9), PhForm.random(3, rng))
    assert np.array_equal(GJ, -GR)


def test_problem_validation(rng):
    _, target = assembled_target(rng, 2, 2)
    with pytest.raises(ValueError):
        NearestNiProblem(target, w1=0.0)
    with pytest.raises(ValueError):
        NearestNiProblem(target, dc_constraint=DcConstraint(1.0))
    with pytest.raises(ValueError):
        DcConstraint(1.0, epsilon=0.0)


@pytest.mark.parametrize("kwargs", [{"max_iter": 0}, {"rel_tol": 0.0}, {"pd_floor": -1.0}, {"init_kind": "magic"},
                                    {"step_rule": "other"}])
def test_config_validation(kwargs):
    with pytest.raises(ValueError):
        SolverConfig(**kwargs)


def _problem_from_a(A):
    n = A.shape[0]
    return NearestNiProblem(StateSpace(A, np.zeros((n, 1)), np.zeros((1, n)), [[0.0]]))


def test_init_standard_examples():
    ph = init_standard(_problem_from_a(-np.eye(3)))
    assert not ph.J.any() and np.array_equal(ph.R, np.eye(3)) and np.array_equal(ph.Q, np.eye(3))
    K = np.array([[0.0, 2.0], [-2.0, 0.0]])
    ph = init_standard(_problem_from_a(K))
    assert np.array_equal(ph.J, K) and not ph.R.any()


def test_init_standard_exact_for_normal_hurwitz(rng):
    U, _ = np.linalg.qr(rng.standard_normal((4, 4)))
    # real normal matrix: orthogonal similarity of 2x2 blocks [[a, b], [-b, a]] with a < 0
    blocks = np.zeros((4, 4))
    blocks[:2, :2] = [[-1.0, 3.0], [-3.0, -1.0]]
    blocks[2:, 2:] = [[-0.5, 0.2], [-0.2, -0.5]]
    A = U @ blocks @ U.T
    problem = _problem_from_a(A)
    assert objective(problem, init_standard(problem)) <= 1e-24


def test_lmi_gap_definition(lqg1):
    P = np.eye(lqg1.n)
    lam = np.linalg.eigvalsh(-ni_lmi_matrix(lqg1, P))[0]
    assert lmi_relaxation_gap(lqg1, P) == max(0.0, -lam)


def test_init_lmi_accepts_certificate(rng):
    ph, target = assembled_target(rng, 3, 1)
    assert lmi_relaxation_gap(target, ph.Q) <= 1e-10
    out = init_lmi(NearestNiProblem(target), inner_iters=50)
    assert isinstance(out, PhForm)


def test_init_lmi_reduces_gap_on_published_controller(lqg1):
    out = init_lmi(NearestNiProblem(lqg1))
    assert np.linalg.eigvalsh(out.Q)[0] > 0


def test_warm_start_at_truth_stops_immediately(rng):
    ph, target = assembled_target(rng, 4, 1)
    result = solve(NearestNiProblem(target), SolverConfig(init_kind=ph))
    assert result.iterations == 0 and result.objective == 0.0 and result.converged


def test_warm_start_order_mismatch(rng):
    _, target = assembled_target(rng, 4, 1)
    with pytest.raises(ValueError):
        solve(NearestNiProblem(target), SolverConfig(init_kind=PhForm.random(3, rng)))


def test_published_controller_nearest_is_ni(lqg1):
    result = solve(NearestNiProblem(lqg1), SolverConfig(max_iter=3000))
    assert ni_sample_check(result.nearest).is_ni
    assert np.all(np.diff(result.objective_trace) <= 0)
    assert result.objective < result.init_objective
    assert not result.converged and result.stop_reason == "max_iter"


def test_lmi_init_on_published_controller_is_sound(lqg1):
    result = solve(NearestNiProblem(lqg1), SolverConfig(max_iter=2000, init_kind="lmi"))
    assert ni_sample_check(result.nearest).is_ni


@pytest.mark.parametrize("config", [SolverConfig(max_iter=2000, restart=False),
                                    SolverConfig(max_iter=2000, step_rule="uniform")], ids=["plain", "uniform-step"])
def test_solver_variants_stay_feasible(rng, config):
    sys = StateSpace(*(rng.standard_normal(s) for s in [(4, 4), (4, 2), (2, 4), (2, 2)]))
    result = solve(NearestNiProblem(sys), config)
    assert ni_sample_check(result.nearest).is_ni
    assert np.all(np.diff(result.objective_trace) <= 0)


def test_nearest_keeps_c_and_symmetrizes_d(rng):
    sys = StateSpace(*(rng.standard_normal(s) for s in [(3, 3), (3, 2), (2, 3), (2, 2)]))
    result = solve(NearestNiProblem(sys), SolverConfig(max_iter=500))
    assert np.array_equal(result.nearest.C, sys.C)
    assert np.array_equal(result.nearest.D, 0.5 * (sys.D + sys.D.T))
    M = result.ph.J - result.ph.R
    assert np.array_equal(result.nearest.A, M @ result.ph.Q)
    assert np.array_equal(result.nearest.B, -M @ sys.C.T)


def test_weight_homogeneity(rng):
    sys = StateSpace(*(rng.standard_normal(s) for s in [(3, 3), (3, 1), (1, 3), (1, 1)]))
    a = solve(NearestNiProblem(sys, 1.0, 1.0), SolverConfig(max_iter=5000)).nearest
    b = solve(NearestNiProblem(sys, 10.0, 10.0), SolverConfig(max_iter=5000)).nearest
    assert np.linalg.norm(a.A - b.A) + np.linalg.norm(a.B - b.B) <= 1e-6


def test_divergence_guard():
    sys = StateSpace([[1e160]], [[1.0]], [[1.0]], [[0.0]])
    with pytest.raises(SolverDivergenceError) as info:
        solve(NearestNiProblem(sys))
    assert len(info.value.trace) >= 1


def test_dc_rescale_scalar_example():
    Q = dc_gain_rescale([[1.0]], [[1.0]], [[0.0]], 2.0, 0.1)
    assert Q[0, 0] == pytest.approx(2.1)
    assert 2.0 / Q[0, 0] == pytest.approx(0.952, abs=1e-3)


def test_dc_rescale_noop_when_satisfied():
    Q = np.array([[4.0]])
    assert dc_gain_rescale(Q, [[1.0]], [[0.0]], 2.0, 0.1) is Q


def test_dc_rescale_rejects_mimo():
    with pytest.raises(ValueError):
        dc_gain_rescale(np.eye(2), np.eye(2), np.zeros((2, 2)), 1.0, 0.1)


def test_dc_rescale_unsatisfiable_warns():
    Q = np.array([[1.0]])
    with pytest.warns(DcRescaleWarning):
        out = dc_gain_rescale(Q, [[1.0]], [[1.0]], 2.0, 0.1)
    assert out is Q


def test_dc_rescale_with_feedthrough_restores_condition():
    # alpha = (c + d) g + eps falls short here, the corrected scaling does not
    Q = dc_gain_rescale([[1.0]], [[1.0]], [[0.45]], 2.0, 0.01)
    assert (1.0 / Q[0, 0] + 0.45) * 2.0 < 1.0


def test_solve_with_dc_constraint(lqg1, plant_n2):
    g = float(dc_gain(plant_n2)[0, 0])
    with warnings.catch_warnings():
        warnings.simplefilter("error", DcRescaleWarning)
        result = solve(NearestNiProblem(lqg1, dc_constraint=DcConstraint(g, 1e-2)), SolverConfig(max_iter=2000))
    ok, value = dc_gain_condition(plant_n2, result.nearest)
    assert ok and value < 1.0
    assert result.dc_rescalings >= 1
    assert ni_sample_check(result.nearest).is_ni


def test_perturbation_report(rng):
    ph, target = assembled_target(rng, 3, 1, D=np.array([[0.5]]))
    exact = solve(NearestNiProblem(target), SolverConfig(init_kind=ph))
    rep = exact.report
    assert rep.total == 0.0 and all(v == 0.0 for v in rep.absolute.values())

    dB = rng.standard_normal((3, 1))
    moved = NearestNiProblem(StateSpace(target.A, target.B + dB, target.C, target.D))
    rep = perturbation_report(moved, exact)
    assert rep.absolute["B"] == pytest.approx(np.linalg.norm(dB))
    assert rep.relative["B"] == pytest.approx(np.linalg.norm(dB) / np.linalg.norm(target.B + dB))
    assert rep.absolute["C"] == 0.0 and rep.absolute["D"] == 0.0


def test_report_counts_antisymmetric_d(rng):
    sys = StateSpace(-np.eye(2), np.eye(2), np.eye(2), [[0.0, 1.0], [0.0, 0.0]])
    result = solve(NearestNiProblem(sys), SolverConfig(max_iter=200))
    assert result.report.absolute["D"] == pytest.approx(np.linalg.norm([[0.0, 0.5], [-0.5, 0.0]]))
    assert result.report.to_dict()["relative"]["C"] == 0.0

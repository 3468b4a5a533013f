import numpy as np
import pytest
import scipy.linalg

from ni_forge.analysis import ni_sample_check
from ni_forge.lqg import (LqgWeights, RiccatiError, care_residual, kalman_gain, lqg_controller, lqr_gain,
                          solve_care)
from ni_forge.lti import StateSpace, is_hurwitz, positive_feedback


def test_scalar_cases():
    assert solve_care([[0.0]], [[1.0]], [[1.0]], [[1.0]])[0, 0] == pytest.approx(1.0, abs=1e-10)
    assert solve_care([[1.0]], [[1.0]], [[0.0]], [[1.0]])[0, 0] == pytest.approx(2.0, abs=1e-10)


def test_scalar_filter_cases():
    assert kalman_gain([[-1.0]], [[1.0]], [[0.0]], [[1.0]])[0, 0] == pytest.approx(0.0, abs=1e-12)
    assert kalman_gain([[0.0]], [[1.0]], [[1.0]], [[1.0]])[0, 0] == pytest.approx(1.0, abs=1e-10)


def test_no_stabilizing_solution():
    with pytest.raises(RiccatiError):
        solve_care([[0.0]], [[1.0]], [[0.0]], [[1.0]])
    with pytest.raises(RiccatiError):
        # unstabilizable: unstable mode not reachable from the input
        solve_care(np.diag([1.0, -1.0]), [[0.0], [1.0]], np.eye(2), [[1.0]])


def test_degenerate_weights_rejected():
    w = LqgWeights([[0.0]], [[1.0]], [[0.0]], [[1.0]], [[1.0]])
    with pytest.raises(RiccatiError):
        lqr_gain([[0.0]], [[1.0]], w)


def test_matches_scipy_and_is_symmetric_psd():
    rng = np.random.default_rng(0)
    for _ in range(20):
        n, m = rng.integers(1, 8), rng.integers(1, 3)
        A, B = rng.standard_normal((n, n)), rng.standard_normal((n, m))
        G = rng.standard_normal((n, n))
        Q, R = G @ G.T + 0.1 * np.eye(n), np.eye(m)
        N = 0.1 * rng.standard_normal((n, m))
        P = solve_care(A, B, Q, R, N)
        ref = scipy.linalg.solve_continuous_are(A, B, Q, R, s=N)
        assert np.allclose(P, ref, rtol=1e-6, atol=1e-8)
        assert np.max(np.abs(P - P.T)) <= 1e-12 * max(1.0, np.abs(P).max())
        assert np.linalg.eigvalsh(P)[0] >= -1e-10
        assert np.linalg.norm(care_residual(A, B, Q, R, N, P)) <= 1e-8 * (1 + np.linalg.norm(Q))


def test_cross_term_gain():
    rng = np.random.default_rng(1)
    A, B = rng.standard_normal((3, 3)), rng.standard_normal((3, 1))
    Nc = np.array([[0.1], [0.0], [0.2]])
    w = LqgWeights(np.eye(3), [[1.0]], Nc, np.eye(3), [[1.0]])
    P = solve_care(A, B, w.Qc, w.Rc, w.Nc)
    assert np.allclose(lqr_gain(A, B, w), B.T @ P + Nc.T)
    assert np.all(np.linalg.eigvals(A - B @ lqr_gain(A, B, w)).real < 0)


def test_kalman_duality():
    rng = np.random.default_rng(2)
    A, C = rng.standard_normal((4, 4)), rng.standard_normal((2, 4))
    W, V = np.eye(4), np.diag([1.0, 2.0])
    dual = LqgWeights(W, V, np.zeros((4, 2)), np.eye(4), np.eye(2))
    assert np.allclose(kalman_gain(A, C, W, V), lqr_gain(A.T, C.T, dual).T, atol=1e-12)
    L = kalman_gain(A, C, W, V)
    assert np.all(np.linalg.eigvals(A - L @ C).real < 0)


@pytest.mark.parametrize("kwargs", [
    {"Rc": [[0.0]]},
    {"V": [[-1.0]]},
    {"Qc": [[1.0, 2.0], [0.0, 1.0]]},
    {"W": -np.eye(2)},
    {"Nc": [[5.0], [0.0]]},
    {"Qc": np.eye(3)},
])
def test_weight_validation(kwargs):
    base = {"Qc": np.eye(2), "Rc": [[1.0]], "Nc": np.zeros((2, 1)), "W": np.eye(2), "V": [[1.0]]}
    base.update(kwargs)
    with pytest.raises(ValueError):
        LqgWeights(**base)


def test_weights_shape_must_match_plant(plant_n2):
    w = LqgWeights(np.eye(2), [[1.0]], np.zeros((2, 1)), np.eye(2), [[1.0]])
    with pytest.raises(ValueError):
        lqg_controller(plant_n2, w)


def test_flex_plant_default_controller(plant_n2):
    ctrl = lqg_controller(plant_n2, LqgWeights.default_for(plant_n2))
    assert ctrl.n == plant_n2.n == 4
    assert not ctrl.D.any()
    assert is_hurwitz(positive_feedback(plant_n2, ctrl))
    assert not ni_sample_check(ctrl).is_ni


def test_closed_loop_hurwitz_random():
    rng = np.random.default_rng(3)
    for _ in range(20):
        n, m = rng.integers(1, 11), rng.integers(1, 3)
        A = rng.standard_normal((n, n))
        B, C = rng.standard_normal((n, m)), rng.standard_normal((m, n))
        plant = StateSpace(A, B, C, np.zeros((m, m)))
        w = LqgWeights(np.eye(n), np.eye(m), np.zeros((n, m)), np.eye(n), np.eye(m))
        assert is_hurwitz(positive_feedback(plant, lqg_controller(plant, w)))

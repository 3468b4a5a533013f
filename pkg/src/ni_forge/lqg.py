"""LQG controller synthesis.

Riccati equations are solved through the ordered real Schur form of the
Hamiltonian matrix, followed by up to three Newton (Kleinman) refinement
steps, each kept only if it lowers the residual.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .lti import StateSpace

__all__ = [
    "RiccatiError",
    "LqgWeights",
    "care_residual",
    "solve_care",
    "lqr_gain",
    "kalman_gain",
    "lqg_controller",
]


NEWTON_STEPS = 3


class RiccatiError(ArithmeticError):
    """No stabilizing Riccati solution could be computed."""


def _sym(X):
    return 0.5 * (X + X.T)


def _mat(X, shape, name):
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape != shape:
        raise ValueError(f"{name} must be {shape[0]}x{shape[1]}, got {X.shape[0]}x{X.shape[1]}")
    return X


@dataclass(frozen=True)
class LqgWeights:
    """Cost ``x'Qc x + 2 x'Nc u + u'Rc u`` and noise covariances ``W`` (process), ``V`` (measurement)."""

    Qc: np.ndarray
    Rc: np.ndarray
    Nc: np.ndarray
    W: np.ndarray
    V: np.ndarray

    def __post_init__(self):
        Qc = np.atleast_2d(np.asarray(self.Qc, dtype=float))
        n = Qc.shape[0]
        Rc = np.atleast_2d(np.asarray(self.Rc, dtype=float))
        m = Rc.shape[0]
        Nc = np.asarray(self.Nc, dtype=float)
        if Nc.ndim < 2 and Nc.size == n * m:
            Nc = Nc.reshape(n, m)
        mats = {
            "Qc": _mat(Qc, (n, n), "Qc"),
            "Rc": _mat(Rc, (m, m), "Rc"),
            "Nc": _mat(Nc, (n, m), "Nc"),
            "W": _mat(self.W, (n, n), "W"),
            "V": _mat(self.V, (m, m), "V"),
        }
        for name in ("Qc", "Rc", "W", "V"):
            X = mats[name]
            if np.linalg.norm(X - X.T) > 1e-10 * (1 + np.linalg.norm(X)):
                raise ValueError(f"{name} must be symmetric")
            mats[name] = _sym(X)
        for name in ("Rc", "V"):
            if np.linalg.eigvalsh(mats[name])[0] <= 0:
                raise ValueError(f"{name} must be positive definite")
        if n and np.linalg.eigvalsh(mats["W"])[0] < -1e-10 * (1 + np.linalg.norm(mats["W"])):
            raise ValueError("W must be positive semidefinite")
        joint = np.block([[mats["Qc"], mats["Nc"]], [mats["Nc"].T, mats["Rc"]]])
        if np.linalg.eigvalsh(joint)[0] < -1e-10 * (1 + np.linalg.norm(joint)):
            raise ValueError("[[Qc, Nc], [Nc', Rc]] must be positive semidefinite")
        for name, X in mats.items():
            object.__setattr__(self, name, X)

    @property
    def n(self):
        return self.Qc.shape[0]

    @property
    def m(self):
        return self.Rc.shape[0]

    @classmethod
    def default_for(cls, plant: StateSpace, rc: float = 1e-2, v: float = 1e-2):
        """``Qc = C'C, Rc = rc I, Nc = 0, W = BB', V = v I``."""
        n, m = plant.n, plant.m
        return cls(plant.C.T @ plant.C, rc * np.eye(m), np.zeros((n, m)), plant.B @ plant.B.T, v * np.eye(m))


def care_residual(A, B, Q, R, N, P) -> np.ndarray:
    """``A'P + PA - (PB + N) R^{-1} (B'P + N') + Q``."""
    PBN = P @ B + N
    return A.T @ P + P @ A - PBN @ np.linalg.solve(R, PBN.T) + Q


def solve_care(A, B, Q, R, N=None) -> np.ndarray:
    """Stabilizing solution of ``A'P + PA - (PB+N) R^{-1} (B'P+N') + Q = 0``.

    Raises
    ------
    RiccatiError
        If the Hamiltonian has eigenvalues on the imaginary axis (no
        stabilizing solution) or its stable invariant subspace is too
        ill-conditioned to produce ``P``.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    n = A.shape[0]
    B = np.asarray(B, dtype=float).reshape(n, -1)
    m = B.shape[1]
    Q = _mat(Q, (n, n), "Q")
    R = _mat(R, (m, m), "R")
    N = np.zeros((n, m)) if N is None else _mat(N, (n, m), "N")
    if n == 0:
        return np.zeros((0, 0))

    Ah = A - B @ np.linalg.solve(R, N.T)
    G = B @ np.linalg.solve(R, B.T)
    Qh = Q - N @ np.linalg.solve(R, N.T)
    H = np.block([[Ah, -_sym(G)], [-_sym(Qh), -Ah.T]])
    Hnorm = np.linalg.norm(H, 1)
    eig = np.linalg.eigvals(H)
    if np.min(np.abs(eig.real)) <= 1e-8 * (1.0 + Hnorm):
        raise RiccatiError("Hamiltonian matrix has eigenvalues on the imaginary axis; no stabilizing solution")
    T, Z, sdim = scipy.linalg.schur(H, output="real", sort="lhp")
    if sdim != n:
        raise RiccatiError(f"stable invariant subspace has dimension {sdim}, expected {n}")
    U1, U2 = Z[:n, :n], Z[n:, :n]
    if np.linalg.cond(U1) > 1e12:
        raise RiccatiError("stable invariant subspace is ill-conditioned")
    P = _sym(np.linalg.solve(U1.T, U2.T).T)

    # Kleinman refinement in correction form: (A-BK)' dP + dP (A-BK) = -Res(P).
    # Same iterate as the textbook step, with far less cancellation when ||P|| is large.
    res = np.linalg.norm(care_residual(A, B, Q, R, N, P))
    for _ in range(NEWTON_STEPS):
        Ak = A - B @ np.linalg.solve(R, B.T @ P + N.T)
        try:
            dP = scipy.linalg.solve_continuous_lyapunov(Ak.T, -care_residual(A, B, Q, R, N, P))
        except (np.linalg.LinAlgError, scipy.linalg.LinAlgError):
            break
        P2 = _sym(P + dP)
        res2 = np.linalg.norm(care_residual(A, B, Q, R, N, P2)) if np.all(np.isfinite(P2)) else np.inf
        if not res2 < res:
            break
        P, res = P2, res2
    Acl = A - B @ np.linalg.solve(R, B.T @ P + N.T)
    if not np.all(np.linalg.eigvals(Acl).real < 0):
        raise RiccatiError("computed Riccati solution is not stabilizing")
    return P


def lqr_gain(A, B, weights: LqgWeights) -> np.ndarray:
    """State-feedback gain ``K = Rc^{-1}(B'P + Nc')`` for ``u = -Kx``."""
    P = solve_care(A, B, weights.Qc, weights.Rc, weights.Nc)
    B = np.asarray(B, dtype=float).reshape(P.shape[0], -1)
    return np.linalg.solve(weights.Rc, B.T @ P + weights.Nc.T)


def kalman_gain(A, C, W, V) -> np.ndarray:
    """Steady-state Kalman gain ``L = Pf C' V^{-1}`` (dual control Riccati equation)."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    C = np.asarray(C, dtype=float).reshape(-1, A.shape[0])
    V = np.atleast_2d(np.asarray(V, dtype=float))
    Pf = solve_care(A.T, C.T, W, V)
    return np.linalg.solve(V, C @ Pf).T


def lqg_controller(plant: StateSpace, weights: LqgWeights) -> StateSpace:
    """Observer-based LQG controller for the positive-feedback loop.

    ``A_c = A - BK - LC + LDK``, ``B_c = L``, ``C_c = -K``, ``D_c = 0``; the
    plant input is ``u = +y_c = -K xhat``.
    """
    if weights.n != plant.n or weights.m != plant.m:
        raise ValueError(f"weights are for n={weights.n}, m={weights.m}; plant has n={plant.n}, m={plant.m}")
    A, B, C, D = plant.A, plant.B, plant.C, plant.D
    K = lqr_gain(A, B, weights)
    L = kalman_gain(A, C, weights.W, weights.V)
    Ac = A - B @ K - L @ C + L @ D @ K
    return StateSpace(Ac, L, -K, np.zeros((plant.m, plant.m)))

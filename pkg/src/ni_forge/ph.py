"""Port-Hamiltonian parameterization of NI systems.

A system admits the form when ``A = (J - R) Q`` and ``B = -(J - R) C^T``
with ``J`` skew, ``R`` symmetric PSD and ``Q`` symmetric PD; every such
system is negative imaginary once ``D`` is symmetric.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .lti import StateSpace

__all__ = [
    "PhForm",
    "project_skew",
    "project_psd",
    "project_pd",
    "assemble",
    "assemble_system",
    "admissibility_residual",
]


def project_skew(M) -> np.ndarray:
    """Frobenius-nearest skew-symmetric matrix, ``(M - M^T)/2``."""
    M = np.asarray(M, dtype=float)
    return 0.5 * (M - M.T)


def _clamped(M, floor, guard=False):
    M = np.asarray(M, dtype=float)
    S = 0.5 * (M + M.T)
    if S.size == 0:
        return S
    w, V = np.linalg.eigh(S)
    # guard: stay clear of the floor by a round-off allowance so that
    # recomputed eigenvalues of the result never dip below it
    slack = 16.0 * S.shape[0] * np.finfo(float).eps * max(abs(w[0]), abs(w[-1]), floor) if guard else 0.0
    if w[0] >= floor + slack:
        return S
    X = (V * np.maximum(w, floor + 2.0 * slack)) @ V.T
    return 0.5 * (X + X.T)


def project_psd(M) -> np.ndarray:
    """Frobenius-nearest symmetric PSD matrix (negative eigenvalues of the symmetric part set to 0)."""
    return _clamped(M, 0.0)


def project_pd(M, floor: float) -> np.ndarray:
    """Like :func:`project_psd` but with eigenvalues clamped to at least ``floor``.

    Eigenvalues are lifted a few ulps (relative to ``||M||_2``) above
    ``floor`` so the bound survives round-off when the spectrum is
    recomputed.
    """
    if not floor > 0:
        raise ValueError(f"floor must be positive, got {floor}")
    return _clamped(M, floor, guard=True)


@dataclass(frozen=True, eq=False)
class PhForm:
    """Structured triple ``(J, R, Q)``; structure is checked on construction."""

    J: np.ndarray
    R: np.ndarray
    Q: np.ndarray

    def __post_init__(self):
        J, R, Q = (np.array(x, dtype=float) for x in (self.J, self.R, self.Q))
        n = J.shape[0]
        for name, X in (("J", J), ("R", R), ("Q", Q)):
            if X.shape != (n, n):
                raise ValueError(f"{name} must be {n}x{n}, got {X.shape}")
            if not np.all(np.isfinite(X)):
                raise ValueError(f"{name} has non-finite entries")
        if np.linalg.norm(J + J.T) > 1e-12 * (1 + np.linalg.norm(J)):
            raise ValueError("J must be skew-symmetric")
        for name, X in (("R", R), ("Q", Q)):
            if np.linalg.norm(X - X.T) > 1e-12 * (1 + np.linalg.norm(X)):
                raise ValueError(f"{name} must be symmetric")
        if n:
            if np.linalg.eigvalsh(R)[0] < -1e-10 * (1 + np.linalg.norm(R, 2)):
                raise ValueError("R must be positive semidefinite")
            if np.linalg.eigvalsh(Q)[0] <= 0:
                raise ValueError("Q must be positive definite")
        for name, X in (("J", J), ("R", R), ("Q", Q)):
            X.setflags(write=False)
            object.__setattr__(self, name, X)

    @property
    def n(self) -> int:
        return self.J.shape[0]

    @classmethod
    def random(cls, n, rng, r_rank=None, q_cond=10.0):
        """Random valid form; handy for tests and benchmarks."""
        J = project_skew(rng.standard_normal((n, n)))
        G = rng.standard_normal((n, n if r_rank is None else r_rank))
        R = G @ G.T / n
        U, _ = np.linalg.qr(rng.standard_normal((n, n)))
        Q = (U * np.geomspace(1.0, q_cond, n)) @ U.T
        return cls(J, 0.5 * (R + R.T), 0.5 * (Q + Q.T))


def assemble(ph: PhForm, C) -> tuple[np.ndarray, np.ndarray]:
    """``(A, B) = ((J - R) Q, -(J - R) C^T)``."""
    M = ph.J - ph.R
    C = np.atleast_2d(np.asarray(C, dtype=float))
    return M @ ph.Q, -M @ C.T


def assemble_system(ph: PhForm, C, D) -> StateSpace:
    """NI state-space system from a PH form, output map ``C`` and symmetric part of ``D``."""
    A, B = assemble(ph, C)
    D = np.atleast_2d(np.asarray(D, dtype=float))
    return StateSpace(A, B, C, 0.5 * (D + D.T))


def admissibility_residual(sys: StateSpace, ph: PhForm) -> float:
    """Unweighted ``||A - (J-R)Q||_F^2 + ||B - (R-J)C^T||_F^2``."""
    if ph.n != sys.n:
        raise ValueError(f"PH form has order {ph.n}, system has {sys.n}")
    M = ph.J - ph.R
    return float(np.linalg.norm(sys.A - M @ ph.Q) ** 2 + np.linalg.norm(sys.B + M @ sys.C.T) ** 2)

"""Square continuous-time LTI systems in state-space form.

Everything here is a pure function of immutable :class:`StateSpace` values:
transfer-function evaluation, frequency sampling, poles, the
positive-feedback interconnection, exact zero-order-hold step responses and
the lightly damped modal plant used for flexible structures.
"""

from __future__ import annotations

import os
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.linalg
import scipy.signal

__all__ = [
    "StateSpace",
    "ModeSpec",
    "PoleEvaluationError",
    "IllPosedInterconnectionError",
    "MinimalityWarning",
    "ss_new",
    "default_grid",
    "make_grid",
    "tf_eval",
    "freq_response",
    "poles",
    "is_hurwitz",
    "dc_gain",
    "positive_feedback",
    "step_response",
    "flex_plant",
    "tf_to_ss",
]

DEFAULT_WMIN = 1e-2
DEFAULT_WMAX = 1e3
DEFAULT_POINTS = 500


class PoleEvaluationError(ArithmeticError):
    """Raised when a transfer function is evaluated at (or next to) a pole."""

    def __init__(self, s, message=None):
        self.s = s
        super().__init__(message or f"transfer function evaluated at a pole: s = {s}")


class IllPosedInterconnectionError(ArithmeticError):
    """Raised when ``I - D_plant D_controller`` is singular."""


class MinimalityWarning(UserWarning):
    """Realization is not controllable or not observable."""


def _as_matrix(x, name):
    arr = np.array(x, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1 and arr.size == 0:
        arr = arr.reshape(0, 0)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be a 2-D matrix, got shape {arr.shape}")
    return arr


@dataclass(frozen=True, eq=False)
class StateSpace:
    """Square LTI system ``x' = Ax + Bu, y = Cx + Du``.

    Matrices are copied, validated and made read-only on construction, so a
    ``StateSpace`` can be shared freely.
    """

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray

    def __post_init__(self):
        A = _as_matrix(self.A, "A")
        D = _as_matrix(self.D, "D")
        n = A.shape[0]
        m = D.shape[0]
        if n == 0:
            # static gain: B and C are empty whatever shape they came in with
            B = np.zeros((0, m))
            C = np.zeros((m, 0))
        else:
            B = _as_matrix(self.B, "B")
            C = _as_matrix(self.C, "C")
        if A.shape != (n, n):
            raise ValueError(f"A must be square, got shape {A.shape}")
        if D.shape != (m, m):
            raise ValueError(f"D must be square (m x m), got shape {D.shape}")
        if B.shape != (n, m):
            raise ValueError(f"B must be {n}x{m}, got shape {B.shape}")
        if C.shape != (m, n):
            raise ValueError(f"C must be {m}x{n}, got shape {C.shape}")
        for name, mat in zip("ABCD", (A, B, C, D)):
            if not np.all(np.isfinite(mat)):
                raise ValueError(f"{name} contains non-finite entries")
            mat.setflags(write=False)
            object.__setattr__(self, name, mat)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.D.shape[0]

    @property
    def is_siso(self) -> bool:
        return self.m == 1

    def __repr__(self):
        return f"StateSpace(n={self.n}, m={self.m})"


def ss_new(A, B, C, D) -> StateSpace:
    """Build a validated :class:`StateSpace`; raises ``ValueError`` on bad input."""
    return StateSpace(A, B, C, D)


@dataclass(frozen=True)
class ModeSpec:
    """One lightly damped structural mode ``1/(s^2 + 2 zeta omega s + omega^2)``."""

    omega: float
    zeta: float

    def __post_init__(self):
        if not (np.isfinite(self.omega) and self.omega > 0):
            raise ValueError(f"mode frequency must be > 0, got {self.omega}")
        if not (np.isfinite(self.zeta) and self.zeta > 0):
            raise ValueError(f"mode damping must be > 0, got {self.zeta}")


def make_grid(wmin=DEFAULT_WMIN, wmax=DEFAULT_WMAX, points=DEFAULT_POINTS) -> np.ndarray:
    """Logarithmically spaced, strictly increasing positive frequency grid."""
    if not (0 < wmin < wmax):
        raise ValueError(f"need 0 < wmin < wmax, got {wmin}, {wmax}")
    if points < 1:
        raise ValueError("grid needs at least one point")
    return np.logspace(np.log10(wmin), np.log10(wmax), int(points))


def default_grid() -> np.ndarray:
    """500 log points on [1e-2, 1e3] rad/s; ``NI_FORGE_GRID_POINTS`` overrides the count."""
    points = int(os.environ.get("NI_FORGE_GRID_POINTS", DEFAULT_POINTS))
    return make_grid(DEFAULT_WMIN, DEFAULT_WMAX, points)


def _check_grid(grid) -> np.ndarray:
    w = np.asarray(grid, dtype=float).ravel()
    if w.size and (np.any(w <= 0) or np.any(np.diff(w) <= 0)):
        raise ValueError("frequency grid must be positive and strictly increasing")
    return w


def _resolvent_tol(sys: StateSpace, s) -> float:
    return 1e-13 * (1.0 + np.linalg.norm(sys.A, 2) + abs(s))


def tf_eval(sys: StateSpace, s: complex) -> np.ndarray:
    """Evaluate ``G(s) = C (sI - A)^{-1} B + D`` as a complex m x m matrix."""
    if sys.n == 0:
        return sys.D.astype(complex)
    M = s * np.eye(sys.n) - sys.A
    if np.linalg.svd(M, compute_uv=False)[-1] <= _resolvent_tol(sys, s):
        raise PoleEvaluationError(s)
    return sys.C @ np.linalg.solve(M, sys.B.astype(complex)) + sys.D


def freq_response(sys: StateSpace, grid) -> np.ndarray:
    """Sample ``G(jw)`` on ``grid``; returns an array of shape ``(len(grid), m, m)``."""
    w = _check_grid(grid)
    out = np.empty((w.size, sys.m, sys.m), dtype=complex)
    if w.size == 0:
        return out
    if sys.n == 0:
        out[:] = sys.D
        return out
    M = 1j * w[:, None, None] * np.eye(sys.n) - sys.A
    smin = np.linalg.svd(M, compute_uv=False)[:, -1]
    tol = 1e-13 * (1.0 + np.linalg.norm(sys.A, 2) + w)
    bad = np.flatnonzero(smin <= tol)
    if bad.size:
        raise PoleEvaluationError(1j * w[bad[0]], f"grid point omega = {w[bad[0]]} rad/s sits on a pole")
    X = np.linalg.solve(M, np.broadcast_to(sys.B.astype(complex), (w.size, sys.n, sys.m)))
    return sys.C @ X + sys.D


def _is_minimal(sys: StateSpace, rtol: float = 1e-10) -> bool:
    """PBH rank test at every eigenvalue of A."""
    n = sys.n
    if n == 0:
        return True
    scale = 1.0 + np.linalg.norm(sys.A, 2)
    for lam in np.linalg.eigvals(sys.A):
        M = lam * np.eye(n) - sys.A
        tol = rtol * (scale + abs(lam))
        ctrb = np.linalg.svd(np.hstack([M, sys.B]), compute_uv=False)
        obsv = np.linalg.svd(np.vstack([M, sys.C]), compute_uv=False)
        if ctrb[n - 1] <= tol * (1 + np.linalg.norm(sys.B)) or obsv[n - 1] <= tol * (1 + np.linalg.norm(sys.C)):
            return False
    return True


def poles(sys: StateSpace, check_minimal: bool = True) -> np.ndarray:
    """Eigenvalues of ``A`` (with multiplicity).

    Minimality is not enforced; a :class:`MinimalityWarning` is emitted when
    the realization fails the controllability or observability rank test.
    """
    if check_minimal and not _is_minimal(sys):
        warnings.warn("realization is not minimal; poles of G(s) may be fewer than eig(A)",
                      MinimalityWarning, stacklevel=2)
    return np.linalg.eigvals(sys.A)


def is_hurwitz(sys: StateSpace, margin: float = 0.0) -> bool:
    if sys.n == 0:
        return True
    return bool(np.all(np.linalg.eigvals(sys.A).real < -margin))


def dc_gain(sys: StateSpace) -> np.ndarray:
    """Real DC gain ``-C A^{-1} B + D``; raises :class:`PoleEvaluationError` if A is singular."""
    return tf_eval(sys, 0.0).real


def positive_feedback(plant: StateSpace, controller: StateSpace) -> StateSpace:
    """Positive-feedback loop of ``plant`` and ``controller`` (controller in the feedback path).

    The external input ``r`` is added to the plant input (``u_p = r + y_c``,
    ``u_c = y_p``) and the output is the plant output, so the closed loop maps
    ``r`` to ``y_p`` with transfer ``P (I - K P)^{-1}``. The state is
    ``[x_plant; x_controller]``.
    """
    if plant.m != controller.m:
        raise ValueError(f"plant has {plant.m} channels, controller has {controller.m}")
    m = plant.m
    Ap, Bp, Cp, Dp = plant.A, plant.B, plant.C, plant.D
    Ac, Bc, Cc, Dc = controller.A, controller.B, controller.C, controller.D
    W = np.eye(m) - Dp @ Dc
    if np.linalg.cond(W) > 1e12:
        raise IllPosedInterconnectionError("I - D_plant D_controller is singular")
    E = np.linalg.inv(W)
    # y_p = E (Cp xp + Dp Cc xc + Dp r)
    Yx = np.hstack([E @ Cp, E @ Dp @ Cc])
    Yr = E @ Dp
    # u_p = r + Cc xc + Dc y_p ; u_c = y_p
    Upx = np.hstack([np.zeros((m, plant.n)), Cc]) + Dc @ Yx
    Upr = np.eye(m) + Dc @ Yr
    A = np.block([
        [Ap, np.zeros((plant.n, controller.n))],
        [np.zeros((controller.n, plant.n)), Ac],
    ]) + np.vstack([Bp @ Upx, Bc @ Yx])
    B = np.vstack([Bp @ Upr, Bc @ Yr])
    return StateSpace(A, B, Yx, Yr)


def step_response(sys: StateSpace, horizon: float, dt: float):
    """Unit-step response from rest, sampled every ``dt`` up to ``horizon``.

    Uses the exact zero-order-hold discretization (matrix exponential of the
    augmented ``[[A, B], [0, 0]]``). Returns ``(t, y)`` with ``y`` of shape
    ``(len(t), m, m)``; ``y[k, i, j]`` is output ``i`` for a step on input ``j``.
    """
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    if not horizon >= dt:
        raise ValueError(f"horizon must be >= dt, got {horizon}")
    steps = int(np.floor(horizon / dt + 1e-9))
    t = dt * np.arange(steps + 1)
    n, m = sys.n, sys.m
    y = np.empty((t.size, m, m))
    if n == 0:
        y[:] = sys.D
        return t, y
    aug = np.zeros((n + m, n + m))
    aug[:n, :n] = sys.A
    aug[:n, n:] = sys.B
    Phi = scipy.linalg.expm(aug * dt)
    Ad, Bd = Phi[:n, :n], Phi[:n, n:]
    X = np.zeros((n, m))
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(t.size):
            y[k] = sys.C @ X + sys.D
            X = Ad @ X + Bd
    return t, y


def flex_plant(modes: Sequence[ModeSpec]) -> StateSpace:
    """Collocated flexible structure ``sum_n 1/(s^2 + 2 zeta_n omega_n s + omega_n^2)``.

    One companion block ``[[0, 1], [-omega^2, -2 zeta omega]]`` per mode with
    input ``[0, 1]^T`` and output ``[1, 0]``; block outputs are summed.
    """
    modes = [m if isinstance(m, ModeSpec) else ModeSpec(*m) for m in modes]
    if not modes:
        raise ValueError("flex_plant needs at least one mode")
    blocks = [np.array([[0.0, 1.0], [-m.omega**2, -2.0 * m.zeta * m.omega]]) for m in modes]
    A = scipy.linalg.block_diag(*blocks)
    B = np.tile([[0.0], [1.0]], (len(modes), 1))
    C = np.tile([[1.0, 0.0]], (1, len(modes)))
    return StateSpace(A, B, C, np.zeros((1, 1)))


def tf_to_ss(numerator, denominator) -> StateSpace:
    """SISO rational function (descending powers of s) to a controllable-canonical realization."""
    num = np.trim_zeros(np.atleast_1d(np.asarray(numerator, dtype=float)), "f")
    den = np.atleast_1d(np.asarray(denominator, dtype=float))
    if den.size == 0 or den[0] == 0:
        raise ValueError("leading denominator coefficient must be nonzero")
    if num.size == 0:
        num = np.zeros(1)
    if num.size > den.size:
        raise ValueError("improper transfer function: numerator degree exceeds denominator degree")
    if den.size == 1:
        return StateSpace(np.zeros((0, 0)), np.zeros((0, 1)), np.zeros((1, 0)), [[num[-1] / den[0]]])
    A, B, C, D = scipy.signal.tf2ss(num, den)
    return StateSpace(A, B, C, D)

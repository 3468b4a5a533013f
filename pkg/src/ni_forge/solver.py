"""Nearest negative-imaginary system by fast projected gradient.

Given ``(A, B, C, D)`` the solver minimizes

    w1 * ||A - (J - R) Q||_F^2 + w2 * ||B - (R - J) C^T||_F^2

over skew ``J``, PSD ``R`` and PD ``Q`` (eigenvalues >= ``pd_floor``). The
output keeps ``C`` and replaces ``D`` by its symmetric part, so the
assembled system is NI by construction.

Each iteration takes a projected gradient step in ``(J, R)`` from the
extrapolated point, then one in ``Q`` with the new ``(J, R)`` held fixed,
each with step ``1/L`` for that block's Lipschitz constant. Nesterov
momentum is dropped (restart) whenever a step would increase the
objective, so accepted iterates never get worse.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .analysis import ni_lmi_matrix
from .lti import StateSpace
from .ph import PhForm, assemble_system, project_pd, project_psd, project_skew

__all__ = [
    "DcConstraint",
    "NearestNiProblem",
    "SolverConfig",
    "SolverResult",
    "PerturbationReport",
    "SolverDivergenceError",
    "DcRescaleWarning",
    "objective",
    "gradients",
    "init_standard",
    "init_lmi",
    "lmi_relaxation_gap",
    "dc_gain_rescale",
    "solve",
    "perturbation_report",
]

log = logging.getLogger(__name__)

ALPHA0 = 0.5
MAX_BACKTRACK = 30


class SolverDivergenceError(ArithmeticError):
    """Objective became non-finite; ``trace`` holds the accepted objective values so far."""

    def __init__(self, message, trace):
        super().__init__(message)
        self.trace = np.asarray(trace)


class DcRescaleWarning(UserWarning):
    """The DC-gain condition could not be restored by scaling Q."""


@dataclass(frozen=True)
class DcConstraint:
    """Keep ``lambda_max(G(0) Gbar(0)) < 1`` against a plant with DC gain ``plant_dc_gain``."""

    plant_dc_gain: float
    epsilon: float = 1e-2

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        g = np.asarray(self.plant_dc_gain, dtype=float)
        if g.size != 1:
            raise ValueError("DC-gain rescaling is defined for SISO systems only")
        object.__setattr__(self, "plant_dc_gain", float(g.ravel()[0]))


@dataclass(frozen=True)
class NearestNiProblem:
    target: StateSpace
    w1: float = 1.0
    w2: float = 1.0
    dc_constraint: DcConstraint | None = None

    def __post_init__(self):
        if not (self.w1 > 0 and self.w2 > 0):
            raise ValueError("weights w1 and w2 must be positive")
        if self.dc_constraint is not None and not self.target.is_siso:
            raise ValueError("DC-gain rescaling is defined for SISO systems only")


@dataclass(frozen=True)
class SolverConfig:
    """Solver knobs.

    ``init_kind`` is ``"standard"``, ``"lmi"`` or a :class:`PhForm` warm
    start. ``step_rule="uniform"`` uses the single step ``1/||Q||_2^2`` for every
    block instead of the block Lipschitz steps. ``restart=False`` turns the
    method into plain (unaccelerated) projected gradient.
    """

    max_iter: int = 100_000
    rel_tol: float = 1e-10
    window: int = 100
    abs_tol: float = 0.0
    pd_floor: float | None = None
    restart: bool = True
    init_kind: Union[str, PhForm] = "standard"
    step_rule: str = "blockwise"
    lmi_inner_iters: int = 500

    def __post_init__(self):
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if not self.rel_tol > 0:
            raise ValueError("rel_tol must be positive")
        if self.window < 1:
            raise ValueError("window must be >= 1")
        if self.pd_floor is not None and not self.pd_floor > 0:
            raise ValueError("pd_floor must be positive")
        if self.step_rule not in ("blockwise", "uniform"):
            raise ValueError(f"unknown step rule {self.step_rule!r}")
        if not isinstance(self.init_kind, PhForm) and self.init_kind not in ("standard", "lmi", "lmi_relaxed"):
            raise ValueError(f"unknown init kind {self.init_kind!r}")


@dataclass
class PerturbationReport:
    absolute: dict
    relative: dict
    total: float

    def to_dict(self):
        return {"absolute": self.absolute, "relative": self.relative, "total": self.total}


@dataclass
class SolverResult:
    ph: PhForm
    nearest: StateSpace
    objective_trace: np.ndarray
    report: PerturbationReport
    converged: bool
    iterations: int
    pd_floor: float
    restarts: int = 0
    dc_rescalings: int = 0
    stop_reason: str = ""
    init_objective: float = field(default=float("nan"))

    @property
    def objective(self) -> float:
        return float(self.objective_trace[-1])


# -- objective and gradients ---------------------------------------------------

def _residuals(A, B, C, J, R, Q):
    M = J - R
    return A - M @ Q, B + M @ C.T


def _objective(A, B, C, w1, w2, J, R, Q):
    E, F = _residuals(A, B, C, J, R, Q)
    with np.errstate(over="ignore", invalid="ignore"):  # overflow is caught by the divergence guard
        return w1 * float(np.sum(E * E)) + w2 * float(np.sum(F * F))


def objective(problem: NearestNiProblem, ph: PhForm) -> float:
    """Weighted distance ``w1 ||A - (J-R)Q||^2 + w2 ||B - (R-J)C^T||^2``."""
    sys = problem.target
    if ph.n != sys.n:
        raise ValueError(f"PH form has order {ph.n}, target has {sys.n}")
    return _objective(sys.A, sys.B, sys.C, problem.w1, problem.w2, ph.J, ph.R, ph.Q)


def _gradients(A, B, C, w1, w2, J, R, Q):
    E, F = _residuals(A, B, C, J, R, Q)
    GM = -2.0 * w1 * E @ Q.T + 2.0 * w2 * F @ C
    GQ = -2.0 * w1 * (J - R).T @ E
    return GM, -GM, GQ


def gradients(problem: NearestNiProblem, ph: PhForm):
    """Unconstrained gradients ``(G_J, G_R, G_Q)`` of :func:`objective`."""
    sys = problem.target
    return _gradients(sys.A, sys.B, sys.C, problem.w1, problem.w2, ph.J, ph.R, ph.Q)


# -- initializations -----------------------------------------------------------

def _split(AQinv):
    return project_skew(AQinv), project_psd(-0.5 * (AQinv + AQinv.T))


def init_standard(problem: NearestNiProblem) -> PhForm:
    """``Q = I``, ``J`` = skew part of A, ``R`` = PSD projection of minus the symmetric part."""
    A = problem.target.A
    J, R = _split(A)
    return PhForm(J, R, np.eye(A.shape[0]))


def lmi_relaxation_gap(sys: StateSpace, P) -> float:
    """``max(0, -lambda_min)`` of the negated NI LMI matrix at ``P``."""
    if sys.n + sys.m == 0:
        return 0.0
    lam = np.linalg.eigvalsh(-ni_lmi_matrix(sys, P))[0]
    return max(0.0, -float(lam))


def _lmi_subgradient(sys, P):
    M = -ni_lmi_matrix(sys, P)
    lam, V = np.linalg.eigh(M)
    v = V[:, 0]
    v1, v2 = v[: sys.n], v[sys.n:]
    w = sys.A @ v1 + sys.B @ v2
    return max(0.0, -float(lam[0])), np.outer(v1, w) + np.outer(w, v1)


def _fit_jr(A, B, C, w1, w2, J, R, Q, iters):
    """Accelerated projected gradient on ``(J, R)`` with ``Q`` held fixed (a convex subproblem)."""
    step = 1.0 / max(2.0 * (w1 * _spec_norm_sym(Q) ** 2 + w2 * (np.linalg.norm(C, 2) ** 2 if C.size else 0.0)), 1e-300)
    f = _objective(A, B, C, w1, w2, J, R, Q)
    Yj, Yr, t = J, R, 1.0
    for _ in range(iters):
        GM, _, _ = _gradients(A, B, C, w1, w2, Yj, Yr, Q)
        Jn, Rn = project_skew(Yj - step * GM), project_psd(Yr + step * GM)
        fn = _objective(A, B, C, w1, w2, Jn, Rn, Q)
        if fn > f:
            Yj, Yr, t = J, R, 1.0
            continue
        t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        beta = (t - 1.0) / t_next
        Yj, Yr = Jn + beta * (Jn - J), Rn + beta * (Rn - R)
        J, R, f, t = Jn, Rn, fn, t_next
    return J, R


def init_lmi(problem: NearestNiProblem, inner_iters: int = 500, pd_floor: float | None = None) -> PhForm:
    """Storage-matrix initialization from a relaxed NI LMI.

    Minimizes the LMI violation over PSD ``P`` by projected subgradient
    descent from ``P = I`` (normalized steps, ``1/sqrt(k)`` decay, best
    iterate kept). ``Q`` is the best ``P`` pushed into the PD cone with
    condition number at most 1e6, and ``(J, R)`` split ``A Q^{-1}`` the way
    :func:`init_standard` splits ``A``, then refined for that fixed ``Q``
    (a convex problem in ``J - R``). Falls back to :func:`init_standard` if
    no usable ``P`` comes out.
    """
    sys = problem.target
    n = sys.n
    if n == 0:
        return init_standard(problem)
    P = np.eye(n)
    best_gap, best_P = lmi_relaxation_gap(sys, P), P
    t0 = 0.5 * np.linalg.norm(P)
    for k in range(inner_iters):
        if best_gap == 0.0:
            break
        gap, g = _lmi_subgradient(sys, P)
        if gap < best_gap:
            best_gap, best_P = gap, P
        gnorm = np.linalg.norm(g)
        if gap == 0.0 or gnorm == 0.0:
            if gap < best_gap:
                best_gap, best_P = gap, P
            break
        P = project_psd(P - (t0 / np.sqrt(k + 1.0)) * g / gnorm)
    gap = lmi_relaxation_gap(sys, P)
    if gap < best_gap:
        best_gap, best_P = gap, P
    scale = np.linalg.norm(best_P, 2)
    if not np.isfinite(scale) or scale < 1e-12:
        log.info("LMI initialization produced no usable P; using the standard initialization")
        return init_standard(problem)
    floor = max(pd_floor or 0.0, 1e-6 * scale, 1e-8)
    Q = project_pd(best_P, floor)
    J, R = _split(np.linalg.solve(Q.T, sys.A.T).T)
    J, R = _fit_jr(sys.A, sys.B, sys.C, problem.w1, problem.w2, J, R, Q, inner_iters)
    log.debug("LMI initialization: relaxation gap %.3e (at P = I: %.3e)", best_gap, lmi_relaxation_gap(sys, np.eye(n)))
    return PhForm(J, R, Q)


# -- DC-gain rescaling ---------------------------------------------------------

def dc_gain_rescale(Q, C, D, plant_dc, epsilon):
    """Scale ``Q`` so the loop DC-gain condition ``(C Q^{-1} C^T + D) G(0) < 1`` holds.

    Leaves ``Q`` untouched when the condition already holds. Otherwise
    ``Q <- alpha Q`` with ``alpha = (C Q^{-1} C^T + D) G(0) + epsilon``. That
    choice restores the condition whenever ``D = 0``; for ``D != 0`` it may
    fall short, and ``alpha = (C Q^{-1} C^T G(0) + epsilon) / (1 - D G(0))``
    is used instead. If no positive scaling can work (``D G(0) >= 1``) a
    :class:`DcRescaleWarning` is issued and ``Q`` is returned unchanged.
    """
    Q = np.asarray(Q, dtype=float)
    C = np.atleast_2d(np.asarray(C, dtype=float))
    D = np.atleast_2d(np.asarray(D, dtype=float))
    g = np.asarray(plant_dc, dtype=float)
    if C.shape[0] != 1 or D.shape != (1, 1) or g.size != 1:
        raise ValueError("DC-gain rescaling is defined for SISO systems only")
    g = float(g.ravel()[0])
    d = float(D[0, 0])
    c = (C @ np.linalg.solve(Q, C.T)).item()
    if (c + d) * g < 1.0:
        return Q
    alpha = (c + d) * g + epsilon
    if alpha > 0 and (c / alpha + d) * g < 1.0:
        return alpha * Q
    if d * g < 1.0 and c * g > 0:
        alpha = (c * g + epsilon) / (1.0 - d * g)
        if (c / alpha + d) * g < 1.0:
            return alpha * Q
    warnings.warn(f"DC-gain condition cannot be met by scaling Q (alpha = {alpha:.3g}, D*G(0) = {d * g:.3g})",
                  DcRescaleWarning, stacklevel=2)
    return Q


# -- main loop -----------------------------------------------------------------

def _spec_norm_sym(X):
    if X.size == 0:
        return 0.0
    return float(np.max(np.abs(np.linalg.eigvalsh(0.5 * (X + X.T)))))


def _initial_form(problem, config):
    kind = config.init_kind
    if isinstance(kind, PhForm):
        if kind.n != problem.target.n:
            raise ValueError(f"warm start has order {kind.n}, target has {problem.target.n}")
        return kind
    if kind == "standard":
        return init_standard(problem)
    return init_lmi(problem, config.lmi_inner_iters, config.pd_floor)


def solve(problem: NearestNiProblem, config: SolverConfig | None = None) -> SolverResult:
    """Find the nearest NI system to ``problem.target``; see the module docstring."""
    config = config or SolverConfig()
    sys = problem.target
    A, B, C = sys.A, sys.B, sys.C
    w1, w2 = problem.w1, problem.w2
    D_sym = 0.5 * (sys.D + sys.D.T)
    dc = problem.dc_constraint

    ph0 = _initial_form(problem, config)
    floor = config.pd_floor or 1e-8 * max(1.0, _spec_norm_sym(ph0.Q))
    J, R = np.array(ph0.J), np.array(ph0.R)
    Q = ph0.Q if np.linalg.eigvalsh(ph0.Q)[0] >= floor else project_pd(ph0.Q, floor)
    Q = np.array(Q)

    def rescale(Qx):
        if dc is None:
            return Qx, False
        Qs = dc_gain_rescale(Qx, C, D_sym, dc.plant_dc_gain, dc.epsilon)
        return Qs, Qs is not Qx

    Q, scaled = rescale(Q)
    dc_count = int(scaled)
    f = _objective(A, B, C, w1, w2, J, R, Q)
    init_f = f
    if not np.isfinite(f):
        raise SolverDivergenceError("objective is not finite at the initial point", [f])
    trace = [f]
    C_norm2 = np.linalg.norm(C, 2) ** 2 if C.size else 0.0

    def trial(Yj, Yr, Yq, shrink=1.0):
        # (J, R) block at the extrapolated point
        GM, _, _ = _gradients(A, B, C, w1, w2, Yj, Yr, Yq)
        qn2 = _spec_norm_sym(Yq) ** 2
        if config.step_rule == "uniform":
            step = 1.0 / max(qn2, 1e-300)
        else:
            step = 1.0 / max(2.0 * (w1 * qn2 + w2 * C_norm2), 1e-300)
        Jn = project_skew(Yj - shrink * step * GM)
        Rn = project_psd(Yr + shrink * step * GM)
        # Q block with the new (J, R)
        Mn = Jn - Rn
        Mn2 = np.linalg.norm(Mn, 2) ** 2 if Mn.size else 0.0
        if Mn2 > 0:
            GQ = -2.0 * w1 * Mn.T @ (A - Mn @ Yq)
            step_q = 1.0 / max(qn2, 1e-300) if config.step_rule == "uniform" else 1.0 / (2.0 * w1 * Mn2)
            Qn = project_pd(Yq - shrink * step_q * GQ, floor)
        else:
            Qn = project_pd(Yq, floor)
        Qn, scaled = rescale(Qn)
        fn = _objective(A, B, C, w1, w2, Jn, Rn, Qn)
        if not np.isfinite(fn):
            raise SolverDivergenceError(f"objective became non-finite at iteration {k}", trace)
        return Jn, Rn, Qn, fn, scaled

    Yj, Yr, Yq = J, R, Q
    alpha = ALPHA0
    at_x = True  # extrapolated point coincides with the current iterate
    restarts = 0
    converged, reason = False, "max_iter"
    k = 0
    while k < config.max_iter:
        if f <= config.abs_tol:
            converged, reason = True, "objective at zero"
            break
        k += 1
        Jn, Rn, Qn, fn, scaled = trial(Yj, Yr, Yq)
        if fn > f and at_x:
            # A 1/L step from the iterate itself can only fail through DC
            # rescaling or rounding; retry with shorter steps.
            shrink = 1.0
            for _ in range(MAX_BACKTRACK):
                shrink *= 0.5
                Jn, Rn, Qn, fn, scaled = trial(J, R, Q, shrink)
                if fn <= f:
                    break
            if fn > f:
                trace.append(f)
                converged, reason = True, "no descent from current iterate"
                break
            Yj, Yr, Yq = Jn, Rn, Qn
            J, R, Q, f = Jn, Rn, Qn, fn
            dc_count += scaled
        elif fn <= f:
            if config.restart:
                alpha_next = 0.5 * (np.sqrt(alpha**4 + 4.0 * alpha**2) - alpha**2)
                beta = alpha * (1.0 - alpha) / (alpha**2 + alpha_next)
                alpha = alpha_next
            else:
                beta = 0.0
            Yj = Jn + beta * (Jn - J)
            Yr = Rn + beta * (Rn - R)
            Yq = Qn + beta * (Qn - Q)
            at_x = beta == 0.0
            J, R, Q, f = Jn, Rn, Qn, fn
            dc_count += scaled
        else:
            Yj, Yr, Yq = J, R, Q
            alpha = ALPHA0
            at_x = True
            restarts += 1
        trace.append(f)
        if k >= config.window:
            old = trace[k - config.window]
            if old - f <= config.rel_tol * old:
                converged, reason = True, "relative decrease below tolerance"
                break

    ph = PhForm(J, 0.5 * (R + R.T), 0.5 * (Q + Q.T))
    nearest = assemble_system(ph, C, D_sym)
    result = SolverResult(
        ph=ph,
        nearest=nearest,
        objective_trace=np.asarray(trace),
        report=None,
        converged=converged,
        iterations=k,
        pd_floor=floor,
        restarts=restarts,
        dc_rescalings=dc_count,
        stop_reason=reason,
        init_objective=init_f,
    )
    result.report = perturbation_report(problem, result)
    log.info("nearest NI: objective %.6e -> %.6e in %d iterations (%s)", init_f, result.objective, k, reason)
    return result


def perturbation_report(problem: NearestNiProblem, result: SolverResult) -> PerturbationReport:
    """Absolute and relative Frobenius change of each of ``A, B, C, D``, plus the total squared distance."""
    src, out = problem.target, result.nearest
    absolute, relative = {}, {}
    total = 0.0
    for name in "ABCD":
        X, Y = getattr(src, name), getattr(out, name)
        err = float(np.linalg.norm(X - Y))
        ref = float(np.linalg.norm(X))
        absolute[name] = err
        relative[name] = err / ref if ref > 0 else (0.0 if err == 0 else float("inf"))
        total += err**2
    return PerturbationReport(absolute, relative, total)

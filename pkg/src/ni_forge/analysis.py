"""Negative-imaginary property checks.

The frequency-sampling checks are necessary-condition tests on a finite
grid; :func:`ni_lmi_residual` turns a candidate storage matrix ``P`` into a
sufficient certificate. Residue conditions for imaginary-axis poles are not
verified: grid points next to such poles are skipped and reported.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .lti import StateSpace, default_grid, dc_gain, freq_response, poles

__all__ = [
    "NiVerdict",
    "DEFAULT_TOL",
    "DEFAULT_POLE_TOL",
    "DEFAULT_SNI_MARGIN",
    "ni_margins",
    "ni_sample_check",
    "sni_check",
    "ni_lmi_matrix",
    "ni_lmi_residual",
    "dc_gain_condition",
]

DEFAULT_TOL = 1e-8
DEFAULT_POLE_TOL = 1e-9
DEFAULT_SNI_MARGIN = 1e-12
AXIS_POLE_REL_DIST = 1e-6


@dataclass
class NiVerdict:
    is_ni: bool
    worst_omega: float
    min_margin: float
    rhp_pole_count: int
    kind: str = "NI"
    reason: str | None = None
    skipped_omegas: list = field(default_factory=list)

    def to_dict(self):
        d = asdict(self)
        for key in ("worst_omega", "min_margin"):
            if not np.isfinite(d[key]):
                d[key] = None
        return d


def ni_margins(sys: StateSpace, grid) -> np.ndarray:
    """Smallest eigenvalue of ``j(G(jw) - G(jw)^H)`` at every grid point."""
    G = freq_response(sys, grid)
    H = 1j * (G - np.conj(np.swapaxes(G, -1, -2)))
    H = 0.5 * (H + np.conj(np.swapaxes(H, -1, -2)))
    if H.shape[0] == 0:
        return np.empty(0)
    return np.linalg.eigvalsh(H)[:, 0]


def _scan(sys, grid, pole_tol):
    w = default_grid() if grid is None else np.asarray(grid, dtype=float).ravel()
    eig = poles(sys) if sys.n else np.empty(0, dtype=complex)
    rhp = int(np.sum(eig.real > pole_tol))
    axis = eig[np.abs(eig.real) <= pole_tol]
    axis_freqs = np.abs(axis.imag)
    keep = np.ones(w.size, dtype=bool)
    for wp in axis_freqs:
        keep &= np.abs(w - wp) > AXIS_POLE_REL_DIST * max(wp, 1.0)
    margins = ni_margins(sys, w[keep])
    return eig, rhp, w[keep], margins, [float(x) for x in w[~keep]]


def _worst(wk, margins):
    if margins.size == 0:
        return float("nan"), float("inf")
    k = int(np.argmin(margins))
    return float(wk[k]), float(margins[k])


def ni_sample_check(sys: StateSpace, grid=None, tol: float = DEFAULT_TOL,
                    pole_tol: float = DEFAULT_POLE_TOL) -> NiVerdict:
    """Sampled NI test: no open-RHP poles and ``j(G - G^H) >= -tol`` on the grid.

    ``grid`` defaults to :func:`~ni_forge.lti.default_grid`. A non-symmetric
    ``D`` makes the verdict false with a reason rather than raising.
    """
    _, rhp, wk, margins, skipped = _scan(sys, grid, pole_tol)
    worst_omega, min_margin = _worst(wk, margins)
    reason = None
    if np.linalg.norm(sys.D - sys.D.T) > tol:
        reason = "D is not symmetric"
    elif rhp:
        reason = f"{rhp} pole(s) in the open right half-plane"
    elif min_margin < -tol:
        reason = f"j(G - G*) has eigenvalue {min_margin:.3e} at omega = {worst_omega:.6g}"
    return NiVerdict(reason is None, worst_omega, min_margin, rhp, "NI", reason, skipped)


def sni_check(sys: StateSpace, grid=None, margin: float = DEFAULT_SNI_MARGIN,
              pole_tol: float = DEFAULT_POLE_TOL) -> NiVerdict:
    """Sampled SNI test: all poles strictly stable and ``j(G - G^H) >= margin`` on the grid."""
    if not margin > 0:
        raise ValueError("SNI margin must be strictly positive")
    eig, rhp, wk, margins, skipped = _scan(sys, grid, pole_tol)
    worst_omega, min_margin = _worst(wk, margins)
    closed_rhp = int(np.sum(eig.real >= -pole_tol))
    reason = None
    if np.linalg.norm(sys.D - sys.D.T) > DEFAULT_TOL:
        reason = "D is not symmetric"
    elif closed_rhp:
        reason = f"{closed_rhp} pole(s) in the closed right half-plane"
    elif min_margin < margin:
        reason = f"j(G - G*) has eigenvalue {min_margin:.3e} < {margin:.1e} at omega = {worst_omega:.6g}"
    return NiVerdict(reason is None, worst_omega, min_margin, rhp, "SNI", reason, skipped)


def ni_lmi_matrix(sys: StateSpace, P) -> np.ndarray:
    """Block matrix ``[[PA + A'P, PB - A'C'], [B'P - CA, -(CB + B'C')]]``."""
    A, B, C = sys.A, sys.B, sys.C
    P = np.asarray(P, dtype=float)
    top = np.hstack([P @ A + A.T @ P, P @ B - A.T @ C.T])
    bottom = np.hstack([B.T @ P - C @ A, -(C @ B + B.T @ C.T)])
    M = np.vstack([top, bottom])
    return 0.5 * (M + M.T)


def ni_lmi_residual(sys: StateSpace, P, sym_tol: float = 1e-10) -> float:
    """Largest eigenvalue of the NI LMI matrix at ``P``; a value ``<= 0`` certifies NI."""
    P = np.asarray(P, dtype=float)
    if P.shape != (sys.n, sys.n):
        raise ValueError(f"P must be {sys.n}x{sys.n}, got {P.shape}")
    scale = 1.0 + np.linalg.norm(P)
    if np.linalg.norm(P - P.T) > sym_tol * scale:
        raise ValueError("P must be symmetric")
    if np.linalg.norm(sys.D - sys.D.T) > sym_tol * (1.0 + np.linalg.norm(sys.D)):
        raise ValueError("D must be symmetric")
    if sys.n and np.linalg.eigvalsh(0.5 * (P + P.T))[0] < -sym_tol * scale:
        raise ValueError("P must be positive semidefinite")
    return float(np.linalg.eigvalsh(ni_lmi_matrix(sys, P))[-1])


def dc_gain_condition(plant: StateSpace, controller: StateSpace):
    """Interconnection DC-gain test ``lambda_max(G(0) Gbar(0)) < 1``.

    Returns ``(holds, lambda_max)`` where ``lambda_max`` is the largest real
    part of the spectrum of the DC-gain product.
    """
    for name, sys in (("plant", plant), ("controller", controller)):
        if sys.n and np.linalg.matrix_rank(sys.A) < sys.n:
            raise ValueError(f"{name} has a pole at the origin; DC gain undefined")
    product = dc_gain(plant) @ dc_gain(controller)
    lam = float(np.max(np.linalg.eigvals(product).real))
    return lam < 1.0, lam

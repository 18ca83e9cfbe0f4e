"""Small-signal stability certificates for solved operating points.

Local exponential stability of the closed loop is governed by the Jacobian
of the reduced power flow equation. Two independent routes are provided: the
reduced Jacobian spectrum (with a cheap sufficient matrix inequality), and
the generalized eigenvalue problem of the full differential-algebraic
linearization, whose signs are invariant to the inverter time constants.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import AlgebraicSingularityError
from .loads import LoadKind, LoadSpec, eval_load, load_jacobian
from .reduction import ReducedNetwork

logger = logging.getLogger(__name__)

#: Hurwitz margins are compared against this fraction of the spectral radius.
TOL_HURWITZ_REL = 1e-9
#: Relative eigenvalue tolerance for definiteness tests.
TOL_EIG = 1e-9
#: Condition-number ceiling for the algebraic block of a DAE linearization.
COND_LIMIT = 1e12

SUFFICIENT_TRUE = "true"
SUFFICIENT_FALSE = "false"
SUFFICIENT_INAPPLICABLE = "inapplicable"


@dataclass
class StabilityReport:
    """Bundle of stability diagnostics at one operating point."""

    J_red: np.ndarray
    spectrum: np.ndarray
    hurwitz: bool
    margin: float
    sufficient: str
    gep_spectrum: np.ndarray
    consistent: bool | None
    ds_spectrum: np.ndarray | None = None
    notes: list[str] = field(default_factory=list)


def reduced_jacobian(red: ReducedNetwork, spec: LoadSpec, E_L: np.ndarray) -> np.ndarray:
    """Jacobian of the reduced power flow equation at load voltages ``E_L``."""
    E_L = np.atleast_1d(np.asarray(E_L, dtype=float))
    return (
        load_jacobian(spec, E_L)
        + np.diag(E_L) @ red.B_red
        + np.diag(red.B_red @ (E_L - red.E_load_open))
    )


def certify_hurwitz(J: np.ndarray, tol_rel: float = TOL_HURWITZ_REL) -> tuple[bool, float]:
    """Decide whether ``J`` is Hurwitz; returns (verdict, margin).

    The margin is the largest eigenvalue real part; the verdict requires it
    to clear zero by ``tol_rel`` times the spectral radius, so a zero matrix
    is not certified.
    """
    eig = np.linalg.eigvals(np.asarray(J, dtype=float))
    margin = float(np.max(eig.real))
    rho = float(np.max(np.abs(eig)))
    return margin < -tol_rel * rho, margin


def sufficient_condition(
    red: ReducedNetwork, spec: LoadSpec, E_L: np.ndarray, tol_eig: float = TOL_EIG
) -> str:
    """Cheap matrix inequality that certifies a Hurwitz reduced Jacobian.

    Requires nonincreasing load power at every bus; otherwise the test does
    not apply and ``"inapplicable"`` is returned rather than a verdict. When
    applicable the verdict is ``"true"`` iff the load-normalized comparison
    matrix is positive definite.
    """
    E_L = np.atleast_1d(np.asarray(E_L, dtype=float))
    slopes = np.diag(load_jacobian(spec, E_L))
    if np.any(slopes > 0):
        return SUFFICIENT_INAPPLICABLE
    A = np.diag(eval_load(spec, E_L) / E_L**2) - red.B_red
    w = np.linalg.eigvalsh(0.5 * (A + A.T))
    scale = float(np.max(np.abs(w))) or 1.0
    return SUFFICIENT_TRUE if w[0] > tol_eig * scale else SUFFICIENT_FALSE


def full_dae_spectrum(
    red: ReducedNetwork,
    spec: LoadSpec,
    E_L: np.ndarray,
    E_I: np.ndarray,
    tau: np.ndarray | None = None,
) -> np.ndarray:
    """Generalized eigenvalues of the full DAE linearization, ascending.

    Eliminates the algebraic load rows from the symmetrized bus-level
    Jacobian and solves the resulting symmetric-definite generalized
    eigenvalue problem, so the returned eigenvalues are real. Their signs do
    not depend on the (positive) inverter time constants ``tau``. A singular
    algebraic block raises :class:`AlgebraicSingularityError`.
    """
    blocks = red.blocks
    n, m = blocks.n_loads, blocks.n_inverters
    E_L = np.atleast_1d(np.asarray(E_L, dtype=float))
    E_I = np.atleast_1d(np.asarray(E_I, dtype=float))
    if tau is None:
        tau = np.ones(m)
    tau = np.atleast_1d(np.asarray(tau, dtype=float))
    if np.any(tau <= 0):
        raise ValueError("inverter time constants must be positive")

    B = blocks.full
    E = np.concatenate([E_L, E_I])
    BE = B @ E
    d_load = np.diag(load_jacobian(spec, E_L))
    d_inv = red.gains * (2.0 * E_I - red.setpoints)
    D = np.concatenate([d_load, d_inv])
    M = B + np.diag((BE + D) / E)

    M_LL = M[:n, :n]
    # judge singularity against the scale of the whole Jacobian: a block that
    # is tiny relative to the rest makes the Schur complement meaningless even
    # when its own condition number looks fine (any 1x1 block has cond 1)
    scale = float(np.max(np.abs(M))) or 1.0
    sigma_min = float(np.linalg.svd(M_LL, compute_uv=False)[-1])
    if sigma_min <= scale / COND_LIMIT:
        raise AlgebraicSingularityError(
            "algebraic block of the DAE linearization is singular: the operating "
            "point sits at a singularity-induced bifurcation"
        )
    M_red = M[n:, n:] - M[n:, :n] @ np.linalg.solve(M_LL, M[:n, n:])
    M_red = 0.5 * (M_red + M_red.T)
    R = np.diag(tau / E_I)
    return scipy.linalg.eigh(M_red, R, eigvals_only=True)


def dynamic_shunt_spectrum(
    red: ReducedNetwork,
    spec: LoadSpec,
    E_L: np.ndarray,
    E_I: np.ndarray,
    b_dyn: np.ndarray,
    tau: np.ndarray | None = None,
) -> np.ndarray:
    """Eigenvalues of the dynamic-shunt linearization, descending real part.

    States are the inverter voltages followed by the adaptive shunts of the
    modeled buses; the algebraic load-balance rows are eliminated first.
    """
    if spec.kind is not LoadKind.DYNAMIC_SHUNT:
        raise ValueError("dynamic_shunt_spectrum requires a dynamic-shunt load")
    blocks = red.blocks
    n, m = blocks.n_loads, blocks.n_inverters
    E_L = np.atleast_1d(np.asarray(E_L, dtype=float))
    E_I = np.atleast_1d(np.asarray(E_I, dtype=float))
    b_dyn = np.atleast_1d(np.asarray(b_dyn, dtype=float))
    if tau is None:
        tau = np.ones(m)
    tau = np.atleast_1d(np.asarray(tau, dtype=float))
    active = np.flatnonzero(spec.ds_mask)
    n_a = active.size

    BE_L = blocks.B_LL @ E_L + blocks.B_LI @ E_I
    BE_I = blocks.B_IL @ E_L + blocks.B_II @ E_I
    d_static = 2.0 * spec.b_shunt * E_L + spec.I_shunt

    g_EL = np.diag(d_static + 2.0 * b_dyn * E_L) + np.diag(E_L) @ blocks.B_LL + np.diag(BE_L)
    g_EI = np.diag(E_L) @ blocks.B_LI
    g_b = np.diag(E_L**2)[:, active]

    fI_EI = (np.diag(red.gains * (2.0 * E_I - red.setpoints) + BE_I) + np.diag(E_I) @ blocks.B_II) / tau[:, None]
    fI_EL = (np.diag(E_I) @ blocks.B_IL) / tau[:, None]

    fb_EL = np.zeros((n_a, n))
    fb_EL[np.arange(n_a), active] = -2.0 * E_L[active] * b_dyn[active] / spec.T[active]
    fb_b = np.diag(-(E_L[active] ** 2) / spec.T[active])

    scale = max(float(np.max(np.abs(g_EL))), float(np.max(np.abs(fI_EI))), 1e-30)
    sigma_min = float(np.linalg.svd(g_EL, compute_uv=False)[-1])
    if sigma_min <= scale / COND_LIMIT:
        raise AlgebraicSingularityError(
            "algebraic block of the dynamic-shunt linearization is singular"
        )
    Gx = np.hstack([g_EI, g_b])
    FL = np.vstack([fI_EL, fb_EL])
    Fx = np.block([
        [fI_EI, np.zeros((m, n_a))],
        [np.zeros((n_a, m)), fb_b],
    ])
    A = Fx - FL @ np.linalg.solve(g_EL, Gx)
    eig = np.linalg.eigvals(A)
    return eig[np.argsort(-eig.real)]


def analyze(
    red: ReducedNetwork,
    spec: LoadSpec,
    E_L: np.ndarray,
    E_I: np.ndarray,
    b_dyn: np.ndarray | None = None,
    tau: np.ndarray | None = None,
) -> StabilityReport:
    """Run every applicable certificate at one operating point.

    The consistency flag records whether the reduced-Jacobian verdict and the
    DAE eigenvalue signs agree; it is left undecided (None) when the margin
    is within tolerance of zero, where the two routes may legitimately
    disagree numerically.
    """
    J = reduced_jacobian(red, spec, E_L)
    spectrum = np.linalg.eigvals(J)
    spectrum = spectrum[np.argsort(-spectrum.real)]
    hurwitz, margin = certify_hurwitz(J)
    sufficient = sufficient_condition(red, spec, E_L)
    gep = full_dae_spectrum(red, spec, E_L, E_I, tau=tau)

    rho = float(np.max(np.abs(spectrum))) or 1.0
    gep_scale = float(np.max(np.abs(gep))) or 1.0
    marginal = abs(margin) <= 10 * TOL_HURWITZ_REL * rho or (
        float(np.max(gep)) > -10 * TOL_HURWITZ_REL * gep_scale and bool(np.all(gep < 0))
    )
    gep_stable = bool(np.max(gep) < -TOL_HURWITZ_REL * gep_scale)
    if marginal:
        consistent = None
        logger.warning(
            "stability margin %.3g is within tolerance of zero; route comparison skipped",
            margin,
        )
    else:
        consistent = hurwitz == gep_stable

    ds_spec = None
    if b_dyn is not None:
        ds_spec = dynamic_shunt_spectrum(red, spec, E_L, E_I, b_dyn, tau=tau)

    return StabilityReport(
        J_red=J,
        spectrum=spectrum,
        hurwitz=hurwitz,
        margin=margin,
        sufficient=sufficient,
        gep_spectrum=gep,
        consistent=consistent,
        ds_spectrum=ds_spec,
    )

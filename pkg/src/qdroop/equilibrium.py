"""Equilibrium solvers for the reduced reactive power flow equation.

All solvers operate on the Kron-reduced network: they find load voltages
``E_L > 0`` satisfying ``Q(E_L) + [E_L] B_red (E_L - E_load_open) = 0`` and
recover the inverter voltages through the row-stochastic averaging weights.
Accepted solutions are always re-verified against the full bus-level fixed
point equations; the acceptance threshold ``tol_fixed`` defaults to 1e-9 and
can be overridden through the ``QDROOP_TOL`` environment variable.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, replace

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import (
    CapacitiveLoadError,
    HeavyLoadingError,
    InductiveCurrentError,
    InternalConsistencyError,
    NonconvergenceError,
    VoltageCollapseError,
)
from .loads import LoadKind, LoadSpec, dyn_shunt_equilibrium, eval_load
from .reduction import ReducedNetwork
from .stability import reduced_jacobian

#: Default full-equation acceptance threshold (env ``QDROOP_TOL`` overrides).
TOL_FIXED_DEFAULT = 1e-9
#: Largest normalized constant-power loading the perturbative solvers accept.
Q_MAX_DEFAULT = 0.25
#: A Newton iterate below this fraction of the smallest open-circuit voltage
#: is treated as voltage collapse.
COLLAPSE_FRACTION = 0.1
#: Reduced-equation convergence threshold for the Newton solver.
NEWTON_TOL = 1e-10
NEWTON_MAX_ITER = 100
MAX_HALVINGS = 30


def fixed_residual_tol() -> float:
    """Acceptance threshold for full-equation residuals of solutions."""
    raw = os.environ.get("QDROOP_TOL")
    if raw is None:
        return TOL_FIXED_DEFAULT
    try:
        tol = float(raw)
    except ValueError as exc:
        raise ValueError(f"QDROOP_TOL must be a floating point number, got {raw!r}") from exc
    if tol <= 0:
        raise ValueError("QDROOP_TOL must be positive")
    return tol


@dataclass
class EquilibriumSolution:
    """Solved operating point with verification residuals.

    ``residual_reduced`` is the max-norm of the reduced power flow equation,
    ``residual_full`` the max-norm of the full bus-level fixed point
    equations. ``epsilon_norm`` carries the second-order correction magnitude
    for perturbative solves, ``E_L_first_order`` the uncorrected first-order
    voltage estimate and ``b_dyn`` the adapted shunt values for dynamic-shunt
    equilibria.
    """

    E_L: np.ndarray
    E_I: np.ndarray
    residual_reduced: float
    residual_full: float
    method: str
    epsilon_norm: float | None = None
    E_L_first_order: np.ndarray | None = None
    b_dyn: np.ndarray | None = None
    newton_iterations: int = 0


@dataclass(frozen=True)
class ShortCircuitMatrix:
    """Short-circuit capacity matrix and the base voltages it was scaled at."""

    Q_sc: np.ndarray
    E_base: np.ndarray


def reduced_residual(red: ReducedNetwork, spec: LoadSpec, E_L: np.ndarray) -> np.ndarray:
    """Residual vector of the reduced power flow equation at ``E_L``."""
    return eval_load(spec, E_L) + E_L * (red.B_red @ (E_L - red.E_load_open))


def recover_inverter_voltages(red: ReducedNetwork, E_L: np.ndarray) -> np.ndarray:
    """Inverter voltages consistent with load voltages ``E_L``.

    Each inverter voltage is a convex combination of the load voltages and
    the set points, so the result lies between the extremes of those inputs.
    """
    stacked = np.concatenate([np.atleast_1d(E_L), red.setpoints])
    return red.W_inv @ stacked


def verify_full_equilibrium(
    red: ReducedNetwork, spec: LoadSpec, E_L: np.ndarray, E_I: np.ndarray
) -> float:
    """Max-norm residual of the full bus-level fixed point equations."""
    blocks = red.blocks
    BE_L = blocks.B_LL @ E_L + blocks.B_LI @ E_I
    BE_I = blocks.B_IL @ E_L + blocks.B_II @ E_I
    top = eval_load(spec, E_L) + E_L * BE_L
    bottom = E_I * (red.gains * (E_I - red.setpoints)) + E_I * BE_I
    return float(max(np.max(np.abs(top)), np.max(np.abs(bottom))))


def _solve_zi_voltages(
    red: ReducedNetwork, b_shunt: np.ndarray, I_shunt: np.ndarray, tol_eig: float = 1e-9
) -> np.ndarray:
    """Closed-form load voltages for the shunt/current part of a load.

    Checks the two solvability hypotheses: the shunt-augmented reduced matrix
    must remain (negated) an M-matrix, and the current draw must stay above
    the open-circuit source term componentwise.
    """
    A = red.B_red + np.diag(b_shunt)
    w = np.linalg.eigvalsh(-0.5 * (A + A.T))
    if w[0] <= tol_eig * abs(w[-1]):
        raise CapacitiveLoadError(
            f"shunt loading destroys the M-matrix structure: smallest eigenvalue "
            f"of the negated reduced matrix is {w[0]:.6g}"
        )
    source = red.B_red @ red.E_load_open
    rhs = I_shunt - source
    # the M-matrix inverse is entrywise positive, so rhs >= 0 with at least
    # one genuinely positive entry keeps every voltage positive; equality at
    # zero (an unloaded interior bus) is harmless and must not be rejected
    tol = 1e-12 * max(1.0, float(np.max(np.abs(source))))
    bad = np.flatnonzero(rhs < -tol)
    if bad.size:
        raise InductiveCurrentError(
            f"constant-current draw exceeds the network source term at load "
            f"buses {bad.tolist()} (need I_shunt > {np.round(source[bad], 6).tolist()})"
        )
    if float(np.max(rhs)) <= tol:
        raise InductiveCurrentError(
            "constant-current draw balances the network source term everywhere; "
            "the closed-form voltages degenerate to zero"
        )
    fac = cho_factor(-A)
    E_L = cho_solve(fac, rhs)
    if np.any(E_L <= 0):
        raise InternalConsistencyError("closed-form load voltages were not positive")
    return E_L


def _finalize(
    red: ReducedNetwork, spec: LoadSpec, E_L: np.ndarray, method: str, **extra
) -> EquilibriumSolution:
    E_I = recover_inverter_voltages(red, E_L)
    res_red = float(np.max(np.abs(reduced_residual(red, spec, E_L))))
    res_full = verify_full_equilibrium(red, spec, E_L, E_I)
    tol = fixed_residual_tol()
    if res_full > tol:
        raise InternalConsistencyError(
            f"solution failed full-equation verification: residual {res_full:.3g} "
            f"exceeds tol_fixed {tol:.3g}"
        )
    return EquilibriumSolution(
        E_L=E_L,
        E_I=E_I,
        residual_reduced=res_red,
        residual_full=res_full,
        method=method,
        **extra,
    )


def solve_zi(red: ReducedNetwork, spec: LoadSpec) -> EquilibriumSolution:
    """Closed-form equilibrium for constant-impedance/current loads."""
    if np.any(spec.Q_const != 0):
        raise ValueError(
            "load carries constant-power terms; use solve_zip_perturbative or solve_newton"
        )
    E_L = _solve_zi_voltages(red, spec.b_shunt, spec.I_shunt)
    return _finalize(red, spec, E_L, "closed_form_zi")


def solve_newton(
    red: ReducedNetwork,
    spec: LoadSpec,
    x0: np.ndarray | None = None,
    tol: float = NEWTON_TOL,
    max_iter: int = NEWTON_MAX_ITER,
) -> EquilibriumSolution:
    """Damped Newton iteration on the reduced power flow equation.

    Starts from the open-circuit voltages unless ``x0`` is given. Step
    halving (up to ``MAX_HALVINGS``) enforces a decreasing max-norm residual;
    a stalled line search or a singular Jacobian is diagnosed as the absence
    of a nearby high-voltage solution, and any iterate falling below
    ``COLLAPSE_FRACTION`` of the smallest open-circuit voltage is diagnosed
    as voltage collapse.
    """
    E = np.array(red.E_load_open if x0 is None else x0, dtype=float)
    floor = COLLAPSE_FRACTION * float(red.E_load_open.min())
    F = reduced_residual(red, spec, E)
    norm_F = float(np.max(np.abs(F)))
    for iteration in range(max_iter):
        if norm_F <= tol:
            return _finalize(red, spec, E, "newton", newton_iterations=iteration)
        J = reduced_jacobian(red, spec, E)
        try:
            step = np.linalg.solve(J, -F)
        except np.linalg.LinAlgError:
            raise VoltageCollapseError(
                "reduced Jacobian is singular: the loading sits on a fold of "
                "the high-voltage solution branch"
            ) from None
        t = 1.0
        for _ in range(MAX_HALVINGS):
            E_new = E + t * step
            if np.min(E_new) > 0:
                F_new = reduced_residual(red, spec, E_new)
                if float(np.max(np.abs(F_new))) < norm_F:
                    break
            t *= 0.5
        else:
            raise VoltageCollapseError(
                f"no high-voltage solution found: Newton stalled at residual "
                f"{norm_F:.6g} after {iteration} iterations"
            )
        E, F = E_new, F_new
        norm_F = float(np.max(np.abs(F)))
        if float(np.min(E)) <= floor:
            raise VoltageCollapseError(
                f"iterate fell to {float(np.min(E)):.6g}, below the collapse "
                f"threshold {floor:.6g}"
            )
    raise NonconvergenceError(
        f"Newton did not reach residual {tol:.1g} within {max_iter} iterations "
        f"(final residual {norm_F:.6g})"
    )


def short_circuit_matrix(red: ReducedNetwork, spec: LoadSpec) -> ShortCircuitMatrix:
    """Short-circuit capacity matrix at the static-part base voltages.

    The base point solves the shunt/current part of the load alone; with no
    static terms it is the open-circuit point. Constant-power demands are
    normalized against this matrix to decide perturbative solvability.
    """
    E_base = _solve_zi_voltages(red, spec.b_shunt, spec.I_shunt)
    A = red.B_red + np.diag(spec.b_shunt)
    Q_sc = E_base[:, None] * A * E_base[None, :]
    return ShortCircuitMatrix(Q_sc=Q_sc, E_base=E_base)


def solve_zip_perturbative(
    red: ReducedNetwork, spec: LoadSpec, q_max: float = Q_MAX_DEFAULT
) -> EquilibriumSolution:
    """Perturbative equilibrium for loads with constant-power terms.

    Normalizes the constant-power demand by the short-circuit capacity
    matrix, rejects loadings beyond ``q_max`` in max-norm, forms the
    first-order voltage estimate and polishes it with the damped Newton
    solver. The second-order correction magnitude is reported as
    ``epsilon_norm``; it scales quadratically with the normalized loading.
    """
    sc = short_circuit_matrix(red, spec)
    q = np.linalg.solve(sc.Q_sc, spec.Q_const)
    q_norm = float(np.max(np.abs(q)))
    if q_norm > q_max:
        raise HeavyLoadingError(
            f"normalized constant-power loading {q_norm:.4g} exceeds the "
            f"perturbative bound {q_max:.4g}"
        )
    E_first = sc.E_base * (1.0 - q)
    try:
        sol = solve_newton(red, spec, x0=E_first)
    except NonconvergenceError as exc:
        raise VoltageCollapseError(
            f"no high-voltage equilibrium found near the first-order estimate: {exc}"
        ) from exc
    eps = sol.E_L / sc.E_base - 1.0 + q
    return replace(
        sol,
        method="perturbative_zip",
        epsilon_norm=float(np.max(np.abs(eps))),
        E_L_first_order=E_first,
    )


def solve_dynamic_shunt(
    red: ReducedNetwork, spec: LoadSpec, q_max: float = Q_MAX_DEFAULT
) -> EquilibriumSolution:
    """Steady state of the dynamic-shunt load model.

    In steady state each adaptive shunt draws exactly its constant demand, so
    the equilibrium coincides with the constant-power one; the adapted shunt
    values are recovered afterwards and are strictly negative wherever a
    demand is modeled.
    """
    if spec.kind is not LoadKind.DYNAMIC_SHUNT:
        raise ValueError("solve_dynamic_shunt requires a dynamic-shunt load")
    sol = solve_zip_perturbative(red, spec, q_max=q_max)
    state = dyn_shunt_equilibrium(spec, sol.E_L)
    if np.any(state.b_dyn[spec.ds_mask] >= 0):
        raise InternalConsistencyError("adapted shunts must be negative where modeled")
    return replace(sol, method="dynamic_shunt", b_dyn=state.b_dyn)

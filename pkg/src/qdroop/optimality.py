"""Inverse optimality of the closed-loop equilibrium.

For constant-impedance loads, the droop equilibrium is the unique positive
minimizer of a quadratic cost: series branch losses, plus shunt load power,
minus a set-point deviation penalty weighted by coefficients ``kappa``. The
identification holds exactly when the penalty weights equal the droop gains.
The minimizer is verified here by a projected gradient descent that never
touches the equilibrium solvers, so the two routes stay independent.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import HypothesisError
from .netmodel import NetworkModel, build_susceptance

#: Gradient max-norm below which a point counts as stationary.
GRAD_TOL = 1e-10
#: Voltage floor for the projected iterates.
PROJECTION_FLOOR = 1e-9


@dataclass
class CostBreakdown:
    """Cost terms at one voltage profile: losses, load power, penalty."""

    Q_loss: float
    Q_load: float
    C_volt: float
    C_total: float
    gradient_norm: float


@dataclass
class OptimalityVerdict:
    """Outcome of checking an operating point against the cost minimizer."""

    passed: bool
    status: str
    gradient_norm: float
    hessian_min_eig: float
    minimizer_gap: float


def _coefficient_matrix(
    model: NetworkModel, b_shunt: np.ndarray, kappa: np.ndarray
) -> np.ndarray:
    """Stationarity-system coefficient matrix over (load, inverter) voltages."""
    blocks = build_susceptance(model)
    n, m = model.n_loads, model.n_inverters
    A = np.zeros((n + m, n + m))
    A[:n, :n] = blocks.B_LL + np.diag(b_shunt)
    A[:n, n:] = blocks.B_LI
    A[n:, :n] = blocks.B_IL
    A[n:, n:] = blocks.B_II + np.diag(kappa)
    return A


def _resolve_kappa(model: NetworkModel, kappa) -> np.ndarray:
    if kappa is None:
        return model.gains.copy()
    kappa = np.atleast_1d(np.asarray(kappa, dtype=float))
    if kappa.shape != (model.n_inverters,):
        raise ValueError("kappa must have one entry per inverter")
    return kappa


def evaluate_cost(
    model: NetworkModel, b_shunt: np.ndarray, E: np.ndarray, kappa=None
) -> CostBreakdown:
    """Evaluate the cost and its terms at the stacked voltages ``E``.

    ``E`` stacks load then inverter voltages. Branch losses accumulate
    ``b_ij (E_i - E_j)^2`` over the series branches, the load term is the
    shunt power ``-sum(b_shunt E_L^2)`` and the penalty term
    ``-sum(kappa (E_I - E_set)^2)``; with negative ``kappa`` the penalty is a
    positive cost on set-point deviations.
    """
    E = np.atleast_1d(np.asarray(E, dtype=float))
    n, m = model.n_loads, model.n_inverters
    if E.shape != (n + m,):
        raise ValueError("E must stack the load and inverter voltages")
    kappa = _resolve_kappa(model, kappa)
    b_shunt = np.atleast_1d(np.asarray(b_shunt, dtype=float))

    Q_loss = float(sum(br.b * (E[br.i] - E[br.j]) ** 2 for br in model.branches))
    Q_load = float(-(b_shunt @ E[:n] ** 2))
    dev = E[n:] - model.setpoints
    C_volt = float(-(kappa @ dev**2))
    grad = cost_gradient(model, b_shunt, E, kappa)
    return CostBreakdown(
        Q_loss=Q_loss,
        Q_load=Q_load,
        C_volt=C_volt,
        C_total=Q_loss + Q_load + C_volt,
        gradient_norm=float(np.max(np.abs(grad))),
    )


def cost_quadratic_form(
    model: NetworkModel, b_shunt: np.ndarray, E: np.ndarray, kappa=None
) -> float:
    """Cost evaluated as one quadratic form over (E_L, E_I, setpoints).

    Exists as an independent algebraic route for verifying
    :func:`evaluate_cost`; both must agree to machine precision.
    """
    E = np.atleast_1d(np.asarray(E, dtype=float))
    kappa = _resolve_kappa(model, kappa)
    b_shunt = np.atleast_1d(np.asarray(b_shunt, dtype=float))
    n, m = model.n_loads, model.n_inverters
    Kd = np.diag(kappa)
    A = _coefficient_matrix(model, b_shunt, kappa)
    big = np.zeros((n + 2 * m, n + 2 * m))
    big[: n + m, : n + m] = A
    big[n : n + m, n + m :] = -Kd
    big[n + m :, n : n + m] = -Kd
    big[n + m :, n + m :] = Kd
    x = np.concatenate([E, model.setpoints])
    return float(-(x @ big @ x))


def cost_gradient(
    model: NetworkModel, b_shunt: np.ndarray, E: np.ndarray, kappa=None
) -> np.ndarray:
    """Gradient of the cost with respect to the stacked voltages."""
    E = np.atleast_1d(np.asarray(E, dtype=float))
    kappa = _resolve_kappa(model, kappa)
    b_shunt = np.atleast_1d(np.asarray(b_shunt, dtype=float))
    n, m = model.n_loads, model.n_inverters
    A = _coefficient_matrix(model, b_shunt, kappa)
    rhs = np.concatenate([np.zeros(n), kappa * model.setpoints])
    return -2.0 * (A @ E - rhs)


def cost_hessian(model: NetworkModel, b_shunt: np.ndarray, kappa=None) -> np.ndarray:
    """Hessian of the cost: twice the negated stationarity coefficient matrix."""
    kappa = _resolve_kappa(model, kappa)
    b_shunt = np.atleast_1d(np.asarray(b_shunt, dtype=float))
    return -2.0 * _coefficient_matrix(model, b_shunt, kappa)


def minimize_cost(
    model: NetworkModel,
    b_shunt: np.ndarray,
    kappa=None,
    x0: np.ndarray | None = None,
    grad_tol: float = GRAD_TOL,
    max_iter: int = 50000,
) -> np.ndarray:
    """Minimize the cost over positive voltages by projected gradient descent.

    Uses the exact line-search step for a quadratic, halved whenever the
    projected step fails to decrease the cost. This routine is a
    verification oracle: it shares no code path with the equilibrium
    solvers.
    """
    kappa = _resolve_kappa(model, kappa)
    b_shunt = np.atleast_1d(np.asarray(b_shunt, dtype=float))
    n, m = model.n_loads, model.n_inverters
    H = cost_hessian(model, b_shunt, kappa)
    # gradient is affine: g(E) = H E + g0, cost differences need only the
    # quadratic part phi(E) = E' H E / 2 + g0' E
    g0 = 2.0 * np.concatenate([np.zeros(n), kappa * model.setpoints])
    E = np.ones(n + m) if x0 is None else np.array(x0, dtype=float)

    def phi(x):
        return 0.5 * float(x @ H @ x) + float(g0 @ x)

    c = phi(E)
    for _ in range(max_iter):
        g = H @ E + g0
        if float(np.max(np.abs(g))) <= grad_tol:
            break
        curvature = float(g @ H @ g)
        t = float(g @ g) / curvature if curvature > 0 else 1.0
        for _ in range(60):
            E_new = np.maximum(E - t * g, PROJECTION_FLOOR)
            c_new = phi(E_new)
            if c_new < c or np.array_equal(E_new, E):
                break
            t *= 0.5
        if np.array_equal(E_new, E):
            break
        E, c = E_new, c_new
    return E


def verify_optimality(
    model: NetworkModel,
    b_shunt: np.ndarray,
    E_L: np.ndarray,
    E_I: np.ndarray,
    kappa=None,
    n_starts: int = 10,
    seed: int = 0,
    gap_tol: float = 1e-6,
    grad_tol: float = 1e-8,
) -> OptimalityVerdict:
    """Check that an operating point minimizes the cost.

    Requires the penalty weights to equal the droop gains (the
    identification does not hold otherwise) and a positive definite Hessian;
    then confirms stationarity and agreement with projected gradient descent
    from ``n_starts`` random positive starting points.
    """
    kappa = _resolve_kappa(model, kappa)
    if not np.allclose(kappa, model.gains, rtol=0, atol=0):
        raise HypothesisError(
            "cost identification requires the penalty weights to equal the droop gains"
        )
    b_shunt = np.atleast_1d(np.asarray(b_shunt, dtype=float))
    E = np.concatenate([np.atleast_1d(E_L), np.atleast_1d(E_I)])

    H = cost_hessian(model, b_shunt, kappa)
    hess_eigs = np.linalg.eigvalsh(0.5 * (H + H.T))
    hess_min = float(hess_eigs[0])
    grad_norm = float(np.max(np.abs(cost_gradient(model, b_shunt, E, kappa))))
    if hess_min <= 0:
        return OptimalityVerdict(
            passed=False,
            status="hypothesis_violated: cost is not strictly convex",
            gradient_norm=grad_norm,
            hessian_min_eig=hess_min,
            minimizer_gap=float("nan"),
        )

    rng = np.random.default_rng(seed)
    gap = 0.0
    for _ in range(n_starts):
        x0 = rng.uniform(0.2, 2.0, size=E.shape)
        minimizer = minimize_cost(model, b_shunt, kappa, x0=x0)
        gap = max(gap, float(np.max(np.abs(minimizer - E))))
    passed = gap <= gap_tol and grad_norm <= grad_tol
    status = "pass" if passed else (
        f"mismatch: minimizer gap {gap:.3g}, gradient norm {grad_norm:.3g}"
    )
    return OptimalityVerdict(
        passed=passed,
        status=status,
        gradient_norm=grad_norm,
        hessian_min_eig=hess_min,
        minimizer_gap=gap,
    )

"""Controller-circuit augmentation and Kron reduction onto the load buses.

Closing the quadratic droop loop is electrically equivalent to attaching to
each inverter a fictitious bus pinned at the set point voltage through a
branch of susceptance ``K_i``. Kron-eliminating the inverter buses from that
augmented circuit yields a reduced network among the load buses whose matrix
``B_red`` and averaging weights ``W_load``/``W_inv`` drive every equilibrium
computation downstream.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import IllConditionedError, InternalConsistencyError, ModelError
from .netmodel import NetworkModel, SusceptanceBlocks, build_susceptance
from .validation import ValidationReport

#: Condition-number ceiling above which a reduction is refused.
COND_LIMIT = 1e12
#: Absolute tolerance for row-stochasticity of the averaging matrices.
TOL_ROWSUM = 1e-10


@dataclass(frozen=True, eq=False)
class ReducedNetwork:
    """Kron reduction of the droop-augmented circuit onto the load buses.

    ``B_red`` is the reduced susceptance matrix (its negation is an
    M-matrix), ``W_load`` the row-stochastic n x m matrix averaging inverter
    set points into open-circuit load voltages ``E_load_open``, and ``W_inv``
    the row-stochastic m x (n+m) matrix recovering inverter voltages from
    ``(E_L, setpoints)``. The droop gains, set points and original blocks are
    cached for downstream solvers.
    """

    B_red: np.ndarray
    W_load: np.ndarray
    W_inv: np.ndarray
    E_load_open: np.ndarray
    gains: np.ndarray
    setpoints: np.ndarray
    blocks: SusceptanceBlocks

    @property
    def n_loads(self) -> int:
        return self.B_red.shape[0]

    @property
    def n_inverters(self) -> int:
        return self.gains.shape[0]


@dataclass(frozen=True, eq=False)
class EffectiveReactanceMap:
    """Pairwise electrical distances seen from the load buses.

    ``X_eff`` is the inverse of the negated load-load susceptance block
    (symmetric positive definite). ``X_direct`` maps branch endpoint pairs to
    reciprocal branch susceptances; absent branches simply have no entry, so
    no infinities ever enter arithmetic.
    """

    X_eff: np.ndarray
    X_direct: dict[tuple[int, int], float]

    def direct(self, i: int, j: int) -> float | None:
        """Direct reactance between buses ``i`` and ``j``, or None if no branch."""
        key = (i, j) if i <= j else (j, i)
        return self.X_direct.get(key)


def kron_reduce(
    blocks: SusceptanceBlocks,
    gains: np.ndarray,
    setpoints: np.ndarray,
    cond_limit: float = COND_LIMIT,
) -> ReducedNetwork:
    """Eliminate the inverter buses from the droop-augmented circuit.

    Returns the reduced network. All factorizations act on symmetric
    positive definite negations, so Cholesky is used throughout; explicit
    inverses are never formed. Raises :class:`IllConditionedError` when the
    reduced matrix is numerically untrustworthy and
    :class:`InternalConsistencyError` if any guaranteed structural property
    of the result fails its check.
    """
    gains = np.atleast_1d(np.asarray(gains, dtype=float))
    setpoints = np.atleast_1d(np.asarray(setpoints, dtype=float))
    n, m = blocks.n_loads, blocks.n_inverters
    if gains.shape != (m,) or setpoints.shape != (m,):
        raise ModelError("gains and setpoints must have one entry per inverter")
    if np.any(gains >= 0) or np.any(setpoints <= 0):
        raise ModelError("require strictly negative gains and positive set points")

    K = np.diag(gains)
    # -(B_II + K) is symmetric positive definite: factor once, reuse.
    shifted = cho_factor(-(blocks.B_II + K))
    X = cho_solve(shifted, blocks.B_IL)  # -(B_II+K)^{-1} B_IL
    B_red = blocks.B_LL + blocks.B_LI @ X

    cond = float(np.linalg.cond(B_red))
    if not np.isfinite(cond) or cond > cond_limit:
        raise IllConditionedError(
            f"reduced susceptance matrix has condition number {cond:.3g} "
            f"(limit {cond_limit:.1g}); results would not be trustworthy"
        )

    W_inv = cho_solve(shifted, np.hstack([blocks.B_IL, -K]))
    Y = -cho_solve(shifted, K)  # (B_II+K)^{-1} K, entrywise nonnegative
    neg_red = cho_factor(-B_red)
    W_load = cho_solve(neg_red, blocks.B_LI @ Y)
    E_load_open = W_load @ setpoints

    red = ReducedNetwork(
        B_red=B_red,
        W_load=W_load,
        W_inv=W_inv,
        E_load_open=E_load_open,
        gains=gains,
        setpoints=setpoints,
        blocks=blocks,
    )
    report = check_reduced_properties(red)
    if not report.passed:
        raise InternalConsistencyError(
            "Kron reduction produced a structurally invalid result:\n" + str(report)
        )
    return red


def reduce_network(model: NetworkModel) -> ReducedNetwork:
    """Convenience wrapper: assemble the susceptance blocks and reduce."""
    return kron_reduce(build_susceptance(model), model.gains, model.setpoints)


def check_reduced_properties(red: ReducedNetwork, tol_eig: float = 1e-9) -> ValidationReport:
    """Verify the structural guarantees of a reduced network.

    Checks, in order: the negated reduced matrix is an M-matrix (sign
    pattern plus positive definiteness); both averaging matrices are
    entrywise nonnegative with unit row sums; open-circuit load voltages are
    positive and inside the convex hull of the set points.
    """
    report = ValidationReport()
    B_red = red.B_red
    scale = float(np.max(np.abs(B_red))) or 1.0

    off = B_red - np.diag(np.diag(B_red))
    min_off = float(off.min())
    w = np.linalg.eigvalsh(-0.5 * (B_red + B_red.T))
    z_pattern = min_off >= -1e-12 * scale
    pos_def = bool(w[0] > tol_eig * w[-1])
    report.add(
        "negated_B_red_is_M_matrix",
        z_pattern and pos_def,
        f"min off-diagonal {min_off:.3g}, eigenvalue range [{w[0]:.3g}, {w[-1]:.3g}]",
    )

    for name, W in (("W_load", red.W_load), ("W_inv", red.W_inv)):
        rowsum_err = float(np.max(np.abs(W.sum(axis=1) - 1.0)))
        min_entry = float(W.min())
        report.add(
            f"{name}_row_stochastic",
            rowsum_err <= TOL_ROWSUM and min_entry >= -TOL_ROWSUM,
            f"max row-sum deviation {rowsum_err:.3g}, min entry {min_entry:.3g}",
        )

    lo, hi = float(red.setpoints.min()), float(red.setpoints.max())
    e = red.E_load_open
    inside = bool(np.all(e > 0) and np.all(e >= lo - TOL_ROWSUM) and np.all(e <= hi + TOL_ROWSUM))
    report.add(
        "open_circuit_voltages_in_setpoint_hull",
        inside,
        f"E_load_open in [{e.min():.6g}, {e.max():.6g}], set points in [{lo:.6g}, {hi:.6g}]",
    )
    return report


def effective_reactances(blocks: SusceptanceBlocks) -> EffectiveReactanceMap:
    """Build the effective and direct reactance maps of the network.

    The effective map inverts the negated load-load block; the direct map
    collects reciprocal branch susceptances keyed by (sorted) endpoint pair,
    for all branches of the full network.
    """
    fac = cho_factor(-blocks.B_LL)
    X_eff = cho_solve(fac, np.eye(blocks.n_loads))
    X_eff = 0.5 * (X_eff + X_eff.T)

    # Each row of an M-matrix inverse is maximized on the diagonal.
    diag = np.diag(X_eff)
    if np.any(X_eff > diag[:, None] + 1e-12 * max(diag.max(), 1.0)):
        raise InternalConsistencyError("effective reactance row maximum left the diagonal")

    B = blocks.full
    N = B.shape[0]
    X_direct: dict[tuple[int, int], float] = {}
    for i in range(N):
        for j in range(i + 1, N):
            if B[i, j] > 0.0:
                X_direct[(i, j)] = 1.0 / B[i, j]
    return EffectiveReactanceMap(X_eff=X_eff, X_direct=X_direct)


def controller_augmented_matrix(blocks: SusceptanceBlocks, gains: np.ndarray) -> np.ndarray:
    """Susceptance matrix of the circuit with fictitious set-point buses.

    Orders buses as (loads, inverters, set-point buses) and returns the
    (n+2m) x (n+2m) matrix in which each inverter is tied to its set-point
    bus through a branch of susceptance ``K_i``.
    """
    gains = np.atleast_1d(np.asarray(gains, dtype=float))
    n, m = blocks.n_loads, blocks.n_inverters
    K = np.diag(gains)
    A = np.zeros((n + 2 * m, n + 2 * m))
    A[:n, :n] = blocks.B_LL
    A[:n, n:n + m] = blocks.B_LI
    A[n:n + m, :n] = blocks.B_IL
    A[n:n + m, n:n + m] = blocks.B_II + K
    A[n:n + m, n + m:] = -K
    A[n + m:, n:n + m] = -K
    A[n + m:, n + m:] = K
    return A


def kron_eliminate(M: np.ndarray, eliminate: np.ndarray) -> np.ndarray:
    """Schur complement of ``M`` after eliminating the given index set.

    Kept indices retain their relative order. Raises
    :class:`AlgebraicSingularityError` semantics via LinAlgError if the
    eliminated block is singular.
    """
    eliminate = np.asarray(eliminate, dtype=int)
    keep = np.setdiff1d(np.arange(M.shape[0]), eliminate)
    A = M[np.ix_(keep, keep)]
    Bk = M[np.ix_(keep, eliminate)]
    Ck = M[np.ix_(eliminate, keep)]
    D = M[np.ix_(eliminate, eliminate)]
    return A - Bk @ np.linalg.solve(D, Ck)

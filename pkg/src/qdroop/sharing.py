"""Steady-state reactive power sharing among the inverters.

To linear order the inverter injections respond to the load demands through
a sharing matrix that depends on the droop gains only through a scalar scale
factor. Scaling all gains up drives the injections to a purely electrical
distance rule; scaling them down makes every inverter pick up a fixed
fraction of the total demand, proportional to its gain, regardless of where
in the network the demand sits.

Sign convention: load demands are negative (consumption), inverter
injections positive, so the sharing matrices are entrywise nonpositive and
their columns sum to -1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .loads import LoadSpec, eval_load
from .reduction import EffectiveReactanceMap, ReducedNetwork
from .netmodel import SusceptanceBlocks


@dataclass
class SharingReport:
    """Realized injections compared against the two limiting share rules."""

    Q_I: np.ndarray
    shares: np.ndarray
    proportional_error: float
    distance_error: float
    uniform_setpoints: bool
    approximate: bool
    notes: list[str]


def sharing_matrix(
    blocks: SusceptanceBlocks, gains: np.ndarray, gain_scale: float = 1.0
) -> np.ndarray:
    """Linearized map from load demands to inverter injections.

    ``gain_scale`` multiplies every droop gain; at scale 1 this is the
    sharing rule of the network as built. The scale must be positive: at
    zero the reduced matrix is singular (use :func:`low_gain_matrix` for the
    limit instead).
    """
    if gain_scale <= 0:
        raise ValueError(
            "gain_scale must be positive; the zero-gain limit is available "
            "through low_gain_matrix"
        )
    gains = np.atleast_1d(np.asarray(gains, dtype=float))
    K = np.diag(gain_scale * gains)
    shifted = blocks.B_II + K
    X = np.linalg.solve(shifted, blocks.B_IL)  # (B_II + eps K)^{-1} B_IL
    B_red_eps = blocks.B_LL - blocks.B_LI @ X
    return np.linalg.solve(B_red_eps.T, (K @ X).T).T


def high_gain_limit(blocks: SusceptanceBlocks) -> np.ndarray:
    """Limit of the sharing matrix as the droop gains grow without bound.

    Purely topological: injections are set by electrical distances alone.
    Columns sum to -1.
    """
    return np.linalg.solve(blocks.B_LL.T, blocks.B_IL.T).T


def low_gain_matrix(gains: np.ndarray, n_loads: int) -> np.ndarray:
    """Limit of the sharing matrix as the droop gains shrink to zero.

    Every column equals the negated vector of proportional shares: each
    inverter covers a gain-proportional fraction of any demand, independent
    of network topology.
    """
    shares = proportional_shares(gains)
    return -np.outer(shares, np.ones(n_loads))


def proportional_shares(gains: np.ndarray) -> np.ndarray:
    """Gain-proportional share fractions (positive, summing to one)."""
    gains = np.atleast_1d(np.asarray(gains, dtype=float))
    return gains / gains.sum()


def low_gain_limit(gains: np.ndarray, Q_L: np.ndarray) -> np.ndarray:
    """Split the total demand across inverters in proportion to their gains.

    Returns each inverter's gain-proportional slice of ``sum(Q_L)`` in the
    load sign convention (negative for consumption); the physical injections
    at the low-gain operating point are the negation.
    """
    Q_L = np.atleast_1d(np.asarray(Q_L, dtype=float))
    return proportional_shares(gains) * Q_L.sum()


def distance_sharing_matrix(
    blocks: SusceptanceBlocks, reactances: EffectiveReactanceMap
) -> np.ndarray:
    """High-gain sharing matrix assembled from per-branch reactances.

    Entry (i, j) accumulates, over the load buses ``k`` directly tied to
    inverter ``i``, the effective reactance from ``k`` to ``j`` divided by
    the direct branch reactance. This explicit double sum agrees with
    :func:`high_gain_limit` to machine precision and exists purely as an
    independent route for verification.
    """
    n, m = blocks.n_loads, blocks.n_inverters
    S = np.zeros((m, n))
    for i in range(m):
        for k in range(n):
            X_direct = reactances.direct(n + i, k)
            if X_direct is None:
                continue
            for j in range(n):
                S[i, j] -= reactances.X_eff[k, j] / X_direct
    return S


def distance_based_injections(
    blocks: SusceptanceBlocks, reactances: EffectiveReactanceMap, Q_L: np.ndarray
) -> np.ndarray:
    """High-gain-limit injections from the explicit electrical-distance rule."""
    Q_L = np.atleast_1d(np.asarray(Q_L, dtype=float))
    return distance_sharing_matrix(blocks, reactances) @ Q_L


def realized_injections(red: ReducedNetwork, E_I: np.ndarray) -> np.ndarray:
    """Steady-state reactive injections of the droop controllers.

    At equilibrium the electrical injection of each inverter equals the
    droop law output ``K_i E_i (E_i - E_i^set)``, for any set points.
    """
    E_I = np.atleast_1d(np.asarray(E_I, dtype=float))
    return red.gains * E_I * (E_I - red.setpoints)


def sharing_diagnostics(
    red: ReducedNetwork, spec: LoadSpec, E_L: np.ndarray, E_I: np.ndarray
) -> SharingReport:
    """Compare realized injections against both limiting share rules.

    ``proportional_error`` is the worst deviation of the injection fractions
    from the gain-proportional shares; ``distance_error`` the max-norm gap to
    the electrical-distance injections computed from the realized demands.
    The comparison is flagged approximate when the set points are not
    uniform, since both limiting rules assume a common reference.
    """
    E_L = np.atleast_1d(np.asarray(E_L, dtype=float))
    E_I = np.atleast_1d(np.asarray(E_I, dtype=float))
    spread = float(red.setpoints.max() - red.setpoints.min())
    uniform = spread <= 1e-12
    notes = []
    if not uniform:
        notes.append(
            f"set points not uniform (spread {spread:.3g}); share rules are approximate"
        )
    Q_I = realized_injections(red, E_I)
    total = Q_I.sum()
    shares = Q_I / total if total != 0 else np.full_like(Q_I, np.nan)
    proportional_error = float(np.max(np.abs(shares - proportional_shares(red.gains))))
    Q_L = eval_load(spec, E_L)
    Q_high = high_gain_limit(red.blocks) @ Q_L
    distance_error = float(np.max(np.abs(Q_I - Q_high)))
    return SharingReport(
        Q_I=Q_I,
        shares=shares,
        proportional_error=proportional_error,
        distance_error=distance_error,
        uniform_setpoints=uniform,
        approximate=not uniform,
        notes=notes,
    )

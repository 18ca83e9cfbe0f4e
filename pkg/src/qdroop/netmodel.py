"""Bus-level network model and susceptance matrix assembly.

A microgrid is a connected weighted graph over ``n`` load buses followed by
``m`` inverter buses. Branch weights are per-unit inductive susceptances
(positive numbers); every quantity downstream of this module is per-unit, and
physical bases are handled only at the file-ingestion layer.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .errors import DisconnectedNetworkError, ModelError
from .validation import ValidationReport

#: Relative eigenvalue tolerance for definiteness checks.
TOL_EIG = 1e-9
#: Required gap ratio between the two smallest eigenvalue magnitudes for the
#: simple-zero-eigenvalue test.
ZERO_GAP_RATIO = 1e6
#: Allowed relative spread of branch reactance/resistance ratios.
TOL_RATIO = 1e-6


@dataclass(frozen=True)
class Branch:
    """Series branch between buses ``i`` and ``j``.

    ``b`` is the (positive) susceptance magnitude of the branch and ``g`` an
    optional conductance for networks that have not been rotated to a purely
    inductive equivalent yet.
    """

    i: int
    j: int
    b: float
    g: float = 0.0


@dataclass(frozen=True, eq=False)
class NetworkModel:
    """Immutable microgrid description in canonical bus order.

    Buses ``0 .. n_loads-1`` are loads, buses ``n_loads .. n_loads+n_inverters-1``
    are inverters. ``gains`` holds the (strictly negative) droop coefficients
    ``K_i`` and ``setpoints`` the (strictly positive) voltage set points of the
    inverters. ``bus_labels`` optionally carries user-facing bus names.
    """

    n_loads: int
    n_inverters: int
    branches: tuple[Branch, ...]
    gains: np.ndarray
    setpoints: np.ndarray
    bus_labels: tuple[str, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "branches", tuple(self.branches))
        object.__setattr__(self, "gains", np.atleast_1d(np.asarray(self.gains, dtype=float)))
        object.__setattr__(self, "setpoints", np.atleast_1d(np.asarray(self.setpoints, dtype=float)))
        n, m = self.n_loads, self.n_inverters
        if n < 1 or m < 1:
            raise ModelError("need at least one load bus and one inverter bus")
        if self.gains.shape != (m,) or self.setpoints.shape != (m,):
            raise ModelError("gains and setpoints must have one entry per inverter")
        if np.any(self.gains >= 0):
            bad = np.flatnonzero(self.gains >= 0).tolist()
            raise ModelError(f"droop gains must be strictly negative, offending inverters {bad}")
        if np.any(self.setpoints <= 0):
            bad = np.flatnonzero(self.setpoints <= 0).tolist()
            raise ModelError(f"voltage set points must be strictly positive, offending inverters {bad}")
        if self.bus_labels is not None:
            object.__setattr__(self, "bus_labels", tuple(self.bus_labels))
            if len(self.bus_labels) != self.n_buses:
                raise ModelError("bus_labels must name every bus")
        N = self.n_buses
        for br in self.branches:
            if not (0 <= br.i < N and 0 <= br.j < N):
                raise ModelError(f"branch ({br.i},{br.j}) references an unknown bus")
            if br.i == br.j:
                raise ModelError(f"self-loop on bus {br.i}")
            if br.b <= 0:
                raise ModelError(f"branch ({br.i},{br.j}) has nonpositive susceptance {br.b}")
        self._check_connected()

    @property
    def n_buses(self) -> int:
        return self.n_loads + self.n_inverters

    @property
    def load_indices(self) -> range:
        return range(self.n_loads)

    @property
    def inverter_indices(self) -> range:
        return range(self.n_loads, self.n_buses)

    def label(self, bus: int) -> str:
        if self.bus_labels is not None:
            return self.bus_labels[bus]
        return f"load{bus + 1}" if bus < self.n_loads else f"inv{bus - self.n_loads + 1}"

    def _check_connected(self) -> None:
        N = self.n_buses
        rows = [br.i for br in self.branches] + [br.j for br in self.branches]
        cols = [br.j for br in self.branches] + [br.i for br in self.branches]
        adj = csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(N, N))
        n_comp, labels = connected_components(adj, directed=False)
        if n_comp > 1:
            comps = [np.flatnonzero(labels == k).tolist() for k in range(n_comp)]
            raise DisconnectedNetworkError(comps)

    def __eq__(self, other) -> bool:
        if not isinstance(other, NetworkModel):
            return NotImplemented
        return (
            self.n_loads == other.n_loads
            and self.n_inverters == other.n_inverters
            and self.branches == other.branches
            and np.array_equal(self.gains, other.gains)
            and np.array_equal(self.setpoints, other.setpoints)
            and self.bus_labels == other.bus_labels
        )


@dataclass(frozen=True, eq=False)
class SusceptanceBlocks:
    """Partition of the bus susceptance matrix into load/inverter blocks."""

    B_LL: np.ndarray
    B_LI: np.ndarray
    B_IL: np.ndarray
    B_II: np.ndarray

    @property
    def n_loads(self) -> int:
        return self.B_LL.shape[0]

    @property
    def n_inverters(self) -> int:
        return self.B_II.shape[0]

    @property
    def full(self) -> np.ndarray:
        """Assembled (n+m) x (n+m) susceptance matrix."""
        top = np.hstack([self.B_LL, self.B_LI])
        bottom = np.hstack([self.B_IL, self.B_II])
        return np.vstack([top, bottom])


def build_susceptance(model: NetworkModel) -> SusceptanceBlocks:
    """Assemble the bus susceptance matrix of ``model`` and partition it.

    Off-diagonal entries carry the branch susceptances, diagonal entries are
    set to the negated row sums so the matrix annihilates the all-ones vector.
    Parallel branches accumulate. The matrix is symmetric by construction.
    """
    N = model.n_buses
    B = np.zeros((N, N))
    for br in model.branches:
        B[br.i, br.j] += br.b
        B[br.j, br.i] += br.b
    off_sum = B.sum(axis=1)
    B[np.diag_indices(N)] = -off_sum
    n = model.n_loads
    return SusceptanceBlocks(
        B_LL=B[:n, :n].copy(),
        B_LI=B[:n, n:].copy(),
        B_IL=B[n:, :n].copy(),
        B_II=B[n:, n:].copy(),
    )


def validate_susceptance(blocks: SusceptanceBlocks, tol_eig: float = TOL_EIG) -> ValidationReport:
    """Check the structural properties a bus susceptance matrix must satisfy.

    Items checked, in order: symmetry and off-diagonal sign pattern; negative
    semidefiniteness with a simple zero eigenvalue whose eigenvector is the
    all-ones direction; negative definiteness of the load-load and
    inverter-inverter principal blocks. Definiteness thresholds are relative
    to the spectral radius; the simple-zero test requires a magnitude gap of
    at least ``ZERO_GAP_RATIO`` between the two smallest eigenvalues.
    """
    report = ValidationReport()
    B = blocks.full
    N = B.shape[0]

    asym = float(np.max(np.abs(B - B.T))) if N else 0.0
    scale = float(np.max(np.abs(B))) or 1.0
    report.add("symmetry", asym <= 1e-12 * scale, f"max |B - B^T| = {asym:.3g}")

    off = B - np.diag(np.diag(B))
    min_off = float(off.min())
    report.add(
        "offdiagonal_sign",
        min_off >= -1e-12 * scale,
        f"smallest off-diagonal entry = {min_off:.3g}",
    )

    w, V = np.linalg.eigh(0.5 * (B + B.T))
    rho = float(np.max(np.abs(w))) or 1.0
    tol = tol_eig * rho
    mags = np.sort(np.abs(w))
    near_zero = mags[0] <= tol
    gap_ok = N == 1 or mags[1] >= ZERO_GAP_RATIO * max(mags[0], np.finfo(float).tiny)
    rest_negative = bool(np.sum(w > -tol) == 1)
    k0 = int(np.argmin(np.abs(w)))
    ones = np.ones(N) / np.sqrt(N)
    align = float(np.abs(V[:, k0] @ ones))
    kernel_ok = align >= 1.0 - 1e-8
    report.add(
        "negative_semidefinite_simple_kernel",
        near_zero and gap_ok and rest_negative and kernel_ok,
        f"eigenvalues in [{w[0]:.3g}, {w[-1]:.3g}], kernel alignment {align:.12g}",
    )

    for name, block in (("B_LL_negative_definite", blocks.B_LL), ("B_II_negative_definite", blocks.B_II)):
        wb = np.linalg.eigvalsh(0.5 * (block + block.T))
        report.add(name, bool(wb[-1] < -tol), f"largest eigenvalue = {wb[-1]:.6g}")

    return report


def rotate_uniform_ratio(model: NetworkModel, tol_ratio: float = TOL_RATIO) -> NetworkModel:
    """Map a resistive-inductive network to its purely inductive equivalent.

    Requires every branch to have the same reactance/resistance ratio up to a
    relative spread of ``tol_ratio``; the rotated branch weights are
    ``sqrt(g**2 + b**2)``. Purely inductive models pass through unchanged.
    Mixed ratios raise :class:`ModelError` reporting the spread.
    """
    gs = np.array([br.g for br in model.branches])
    bs = np.array([br.b for br in model.branches])
    if np.all(gs == 0.0):
        return model
    if np.any(gs == 0.0):
        raise ModelError(
            "mixed purely inductive and resistive branches: "
            "reactance/resistance ratios are not uniform"
        )
    ratios = bs / gs
    ref = float(np.median(np.abs(ratios)))
    spread = float(ratios.max() - ratios.min())
    if spread > tol_ratio * ref:
        raise ModelError(
            f"non-uniform reactance/resistance ratios: relative spread "
            f"{spread / ref:.3g} exceeds {tol_ratio:.1g}"
        )
    rotated = tuple(
        Branch(br.i, br.j, float(np.hypot(br.g, br.b)), 0.0) for br in model.branches
    )
    return NetworkModel(
        n_loads=model.n_loads,
        n_inverters=model.n_inverters,
        branches=rotated,
        gains=model.gains.copy(),
        setpoints=model.setpoints.copy(),
        bus_labels=model.bus_labels,
    )

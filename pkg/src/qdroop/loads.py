"""Static and dynamic reactive load models at the load buses.

All vectors are indexed by load bus. Consumption is negative: an inductive
load has ``b_shunt <= 0``, ``I_shunt <= 0`` and ``Q_const <= 0``. The library
itself does not forbid capacitive (positive) entries; solvers reject them
when a hypothesis actually needs the inductive sign.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import ModelError


class LoadKind(enum.Enum):
    ZI = "zi"
    ZIP = "zip"
    CONSTANT_POWER = "cp"
    DYNAMIC_SHUNT = "ds"


@dataclass(frozen=True, eq=False)
class LoadSpec:
    """Per-bus load parameters for one of the supported models.

    ``b_shunt`` and ``I_shunt`` are the shunt-susceptance and constant-current
    coefficients, ``Q_const`` the constant reactive power demand and ``T`` the
    dynamic-shunt time constants (used only by the dynamic-shunt model, where
    a bus with ``Q_const == 0`` has its adaptation state deleted).
    """

    kind: LoadKind
    b_shunt: np.ndarray
    I_shunt: np.ndarray
    Q_const: np.ndarray
    T: np.ndarray | None = None

    def __post_init__(self):
        for name in ("b_shunt", "I_shunt", "Q_const"):
            object.__setattr__(self, name, np.atleast_1d(np.asarray(getattr(self, name), dtype=float)))
        n = self.b_shunt.shape[0]
        if self.I_shunt.shape != (n,) or self.Q_const.shape != (n,):
            raise ModelError("load parameter vectors must share one length")
        if self.kind is LoadKind.ZI and np.any(self.Q_const != 0):
            raise ModelError("constant-impedance/current model cannot carry constant power")
        if self.kind is LoadKind.CONSTANT_POWER and (np.any(self.b_shunt != 0) or np.any(self.I_shunt != 0)):
            raise ModelError("constant-power model cannot carry shunt or current terms")
        if self.kind is LoadKind.DYNAMIC_SHUNT:
            if self.T is None:
                raise ModelError("dynamic-shunt model needs time constants T")
            object.__setattr__(self, "T", np.atleast_1d(np.asarray(self.T, dtype=float)))
            if self.T.shape != (n,):
                raise ModelError("T must have one entry per load bus")
            if np.any(self.Q_const > 0):
                raise ModelError("dynamic-shunt demands must be nonpositive")
            if np.any(self.T[self.Q_const < 0] <= 0):
                raise ModelError("dynamic-shunt time constants must be positive where modeled")
        elif self.T is not None:
            raise ModelError("time constants only apply to the dynamic-shunt model")

    @property
    def n(self) -> int:
        return self.b_shunt.shape[0]

    @property
    def ds_mask(self) -> np.ndarray:
        """Boolean mask of buses carrying an adaptive shunt state."""
        if self.kind is not LoadKind.DYNAMIC_SHUNT:
            return np.zeros(self.n, dtype=bool)
        return self.Q_const < 0

    @property
    def has_static_terms(self) -> bool:
        return bool(np.any(self.b_shunt != 0) or np.any(self.I_shunt != 0))


def zi(b_shunt, I_shunt=None) -> LoadSpec:
    b_shunt = np.atleast_1d(np.asarray(b_shunt, dtype=float))
    if I_shunt is None:
        I_shunt = np.zeros_like(b_shunt)
    return LoadSpec(LoadKind.ZI, b_shunt, I_shunt, np.zeros_like(b_shunt))


def zip_load(b_shunt, I_shunt, Q_const) -> LoadSpec:
    return LoadSpec(LoadKind.ZIP, b_shunt, I_shunt, Q_const)


def constant_power(Q_const) -> LoadSpec:
    Q_const = np.atleast_1d(np.asarray(Q_const, dtype=float))
    zeros = np.zeros_like(Q_const)
    return LoadSpec(LoadKind.CONSTANT_POWER, zeros, zeros.copy(), Q_const)


def dynamic_shunt(Q_const, T, b_shunt=None, I_shunt=None) -> LoadSpec:
    """Dynamic-shunt load; optional static shunt/current terms may coexist."""
    Q_const = np.atleast_1d(np.asarray(Q_const, dtype=float))
    T = np.broadcast_to(np.asarray(T, dtype=float), Q_const.shape).copy()
    if b_shunt is None:
        b_shunt = np.zeros_like(Q_const)
    if I_shunt is None:
        I_shunt = np.zeros_like(Q_const)
    return LoadSpec(LoadKind.DYNAMIC_SHUNT, b_shunt, I_shunt, Q_const, T)


@dataclass
class DynShuntState:
    """Adaptation state of the dynamic shunts (zero on deleted buses)."""

    b_dyn: np.ndarray

    def __post_init__(self):
        self.b_dyn = np.atleast_1d(np.asarray(self.b_dyn, dtype=float))


def eval_load(spec: LoadSpec, E_L: np.ndarray) -> np.ndarray:
    """Reactive power drawn at each load bus at voltages ``E_L``.

    For the dynamic-shunt model this returns the steady-state equivalent
    (the constant demand); instantaneous shunt power during transients is
    :func:`dyn_shunt_power` of the current state.
    """
    E_L = np.atleast_1d(np.asarray(E_L, dtype=float))
    if np.any(E_L <= 0):
        raise ValueError("load voltages must be strictly positive")
    return spec.b_shunt * E_L**2 + spec.I_shunt * E_L + spec.Q_const


def load_jacobian(spec: LoadSpec, E_L: np.ndarray) -> np.ndarray:
    """Diagonal Jacobian d(load power)/d(voltage) as an n x n matrix.

    Constant-power terms (including the dynamic-shunt steady-state
    equivalent) contribute nothing.
    """
    E_L = np.atleast_1d(np.asarray(E_L, dtype=float))
    return np.diag(2.0 * spec.b_shunt * E_L + spec.I_shunt)


def dyn_shunt_power(b_dyn: np.ndarray, E_L: np.ndarray) -> np.ndarray:
    """Instantaneous reactive power of adaptive shunts ``b_dyn`` at ``E_L``."""
    return np.asarray(b_dyn, dtype=float) * np.asarray(E_L, dtype=float) ** 2


def dyn_shunt_rate(spec: LoadSpec, b_dyn: np.ndarray, E_L: np.ndarray) -> np.ndarray:
    """Right-hand side of the shunt adaptation law, zero on deleted buses."""
    rate = np.zeros(spec.n)
    mask = spec.ds_mask
    rate[mask] = (spec.Q_const[mask] - b_dyn[mask] * E_L[mask] ** 2) / spec.T[mask]
    return rate


def dyn_shunt_equilibrium(spec: LoadSpec, E_L: np.ndarray) -> DynShuntState:
    """Shunt values that reproduce the demand exactly at voltages ``E_L``."""
    E_L = np.atleast_1d(np.asarray(E_L, dtype=float))
    b = np.zeros(spec.n)
    mask = spec.ds_mask
    b[mask] = spec.Q_const[mask] / E_L[mask] ** 2
    return DynShuntState(b)

"""Time-domain simulation of the closed loop as a semi-explicit DAE.

Inverter voltages (and adaptive shunts, when present) are differential
states advanced by implicit Euler; the load voltages are algebraic unknowns
re-solved by damped Newton at every step, warm-started from the previous
step. Failure of the algebraic solve, or load voltages falling below the
collapse threshold, terminates the run with ``collapsed`` status instead of
raising.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .equilibrium import COLLAPSE_FRACTION
from .errors import NonconvergenceError
from .loads import LoadKind, LoadSpec, dyn_shunt_equilibrium, load_jacobian
from .netmodel import NetworkModel
from .reduction import ReducedNetwork, reduce_network

_PARAMETERS = ("b_shunt", "I_shunt", "Q_const")

STATUS_RUNNING = "running"
STATUS_CONVERGED = "converged"
STATUS_COLLAPSED = "collapsed"


@dataclass(frozen=True)
class StepChange:
    """Overwrite one load parameter at one bus from ``time`` onwards."""

    time: float
    bus: int
    parameter: str
    value: float

    def __post_init__(self):
        if self.parameter not in _PARAMETERS:
            raise ValueError(f"unknown load parameter {self.parameter!r}")


@dataclass(frozen=True)
class SinusoidalSegment:
    """Multiply one load parameter by ``1 + amplitude*sin(2*pi*(t-start)/period)``.

    Active on ``start <= t < end``; the base value is whatever the step
    changes have set by time ``t``. Amplitudes above one would flip the sign
    of the load and are rejected when applied.
    """

    start: float
    end: float
    bus: int
    parameter: str
    amplitude: float
    period: float

    def __post_init__(self):
        if self.parameter not in _PARAMETERS:
            raise ValueError(f"unknown load parameter {self.parameter!r}")
        if self.period <= 0:
            raise ValueError("sinusoid period must be positive")
        if self.end <= self.start:
            raise ValueError("sinusoid segment must end after it starts")


@dataclass
class DisturbanceSchedule:
    """Deterministic load disturbances plus optional seeded jitter.

    ``jitter_fraction`` is the standard deviation of a multiplicative
    uniform jitter applied to every nonzero load parameter each step
    (0 disables it; 0.15 is the conventional choice when enabled).
    """

    steps: tuple[StepChange, ...] = ()
    sines: tuple[SinusoidalSegment, ...] = ()
    jitter_fraction: float = 0.0
    jitter_seed: int = 0

    def __post_init__(self):
        self.steps = tuple(sorted(self.steps, key=lambda ev: ev.time))
        self.sines = tuple(self.sines)
        if self.jitter_fraction < 0:
            raise ValueError("jitter_fraction must be nonnegative")


@dataclass
class SimConfig:
    """Integration settings: time constants, step size, horizon, tolerances."""

    tau: np.ndarray
    dt: float
    t_end: float
    algebraic_tol: float = 1e-10
    settle_rate: float = 1e-6
    schedule: DisturbanceSchedule | None = None

    def __post_init__(self):
        self.tau = np.atleast_1d(np.asarray(self.tau, dtype=float))
        if np.any(self.tau <= 0):
            raise ValueError("inverter time constants must be positive")
        if self.dt <= 0 or self.t_end <= 0:
            raise ValueError("dt and t_end must be positive")
        if self.algebraic_tol <= 0 or self.algebraic_tol > 1e-8:
            raise ValueError("algebraic_tol must lie in (0, 1e-8]")


@dataclass
class SimTrace:
    """Stored trajectory with per-step algebraic residuals and final status."""

    t: np.ndarray
    E_L: np.ndarray
    E_I: np.ndarray
    Q_I: np.ndarray
    b_dyn: np.ndarray | None
    algebraic_residuals: np.ndarray
    status: str
    notes: list[str] = field(default_factory=list)

    def to_csv(self, path) -> None:
        """Write the trace as CSV with 9 significant digits and LF endings.

        Columns: time, load voltages, inverter voltages, adaptive shunts
        (dynamic-shunt runs only), inverter injections, and a status column
        that reads ``running`` until the final row carries the terminal
        status.
        """
        n = self.E_L.shape[1]
        m = self.E_I.shape[1]
        header = ["t"]
        header += [f"E_L_{i + 1}" for i in range(n)]
        header += [f"E_I_{i + 1}" for i in range(m)]
        if self.b_dyn is not None:
            header += [f"bdyn_{i + 1}" for i in range(n)]
        header += [f"Q_I_{i + 1}" for i in range(m)]
        header.append("status")
        rows = [",".join(header)]
        last = len(self.t) - 1
        for k in range(len(self.t)):
            values = [self.t[k], *self.E_L[k], *self.E_I[k]]
            if self.b_dyn is not None:
                values += list(self.b_dyn[k])
            values += list(self.Q_I[k])
            cells = [f"{v:.9g}" for v in values]
            cells.append(self.status if k == last else STATUS_RUNNING)
            rows.append(",".join(cells))
        with open(path, "w", newline="\n") as fh:
            fh.write("\n".join(rows) + "\n")


def _apply_schedule(
    spec: LoadSpec,
    schedule: DisturbanceSchedule | None,
    t: float,
    rng: np.random.Generator | None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Effective (b_shunt, I_shunt, Q_const) at time ``t``."""
    arrays = {
        "b_shunt": spec.b_shunt.copy(),
        "I_shunt": spec.I_shunt.copy(),
        "Q_const": spec.Q_const.copy(),
    }
    if schedule is not None:
        for ev in schedule.steps:
            if t >= ev.time:
                base = arrays[ev.parameter][ev.bus]
                if base != 0.0 and np.sign(ev.value) == -np.sign(base):
                    raise ValueError(
                        f"step at t={ev.time} flips the sign of {ev.parameter} "
                        f"at bus {ev.bus}"
                    )
                arrays[ev.parameter][ev.bus] = ev.value
        for seg in schedule.sines:
            if seg.start <= t < seg.end:
                factor = 1.0 + seg.amplitude * np.sin(
                    2.0 * np.pi * (t - seg.start) / seg.period
                )
                if factor < 0:
                    raise ValueError(
                        f"sinusoid on {seg.parameter} at bus {seg.bus} flips the load sign"
                    )
                arrays[seg.parameter][seg.bus] *= factor
        if rng is not None and schedule.jitter_fraction > 0:
            half_width = schedule.jitter_fraction * np.sqrt(3.0)
            for name in _PARAMETERS:
                arr = arrays[name]
                nz = arr != 0
                arr[nz] *= 1.0 + rng.uniform(-half_width, half_width, size=int(nz.sum()))
    return arrays["b_shunt"], arrays["I_shunt"], arrays["Q_const"]


def _algebraic_solve(
    red: ReducedNetwork,
    is_ds: bool,
    b_eff: np.ndarray,
    I_eff: np.ndarray,
    Q_eff: np.ndarray,
    b_dyn: np.ndarray,
    E_I: np.ndarray,
    E_start: np.ndarray,
    floor: float,
    tol: float,
    max_iter: int = 50,
) -> tuple[np.ndarray | None, float]:
    """Damped Newton on the load balance rows; None signals collapse."""
    blocks = red.blocks
    inflow = blocks.B_LI @ E_I

    def residual(E):
        power = b_eff * E**2 + I_eff * E
        power += b_dyn * E**2 if is_ds else Q_eff
        return power + E * (blocks.B_LL @ E + inflow)

    E = E_start.copy()
    g = residual(E)
    norm_g = float(np.max(np.abs(g)))
    for _ in range(max_iter):
        if norm_g <= tol:
            return E, norm_g
        slope = 2.0 * (b_eff + (b_dyn if is_ds else 0.0)) * E + I_eff
        J = np.diag(slope + blocks.B_LL @ E + inflow) + np.diag(E) @ blocks.B_LL
        try:
            step = np.linalg.solve(J, -g)
        except np.linalg.LinAlgError:
            return None, norm_g
        t = 1.0
        for _ in range(30):
            E_new = E + t * step
            if np.min(E_new) > 0:
                g_new = residual(E_new)
                if float(np.max(np.abs(g_new))) < norm_g:
                    break
            t *= 0.5
        else:
            return None, norm_g
        E, g = E_new, g_new
        norm_g = float(np.max(np.abs(g)))
        if float(np.min(E)) <= floor:
            return None, norm_g
    return None, norm_g


def _implicit_inverter_step(
    red: ReducedNetwork,
    E_I: np.ndarray,
    E_L: np.ndarray,
    dt: float,
    tau: np.ndarray,
    tol: float = 1e-12,
    max_iter: int = 30,
) -> np.ndarray:
    """Implicit Euler update of the inverter voltages with frozen ``E_L``."""
    blocks = red.blocks
    K, E_set = red.gains, red.setpoints
    c = blocks.B_IL @ E_L
    m = E_I.shape[0]
    y = E_I.copy()
    for _ in range(max_iter):
        rhs = K * y * (y - E_set) + y * (c + blocks.B_II @ y)
        G = y - E_I - (dt / tau) * rhs
        if float(np.max(np.abs(G))) <= tol:
            return y
        J_rhs = np.diag(K * (2.0 * y - E_set) + c + blocks.B_II @ y) + np.diag(y) @ blocks.B_II
        J = np.eye(m) - (dt / tau)[:, None] * J_rhs
        y = y + np.linalg.solve(J, -G)
    raise NonconvergenceError("implicit inverter update did not converge")


def simulate(
    model: NetworkModel,
    spec: LoadSpec,
    config: SimConfig,
    E_I0: np.ndarray | None = None,
    b_dyn0: np.ndarray | None = None,
) -> SimTrace:
    """Integrate the closed loop from the open-circuit point (or given states).

    Differential states start at the set points (and, for dynamic shunts, at
    the shunt values matching the demand at open circuit) unless overridden;
    the load voltages are initialized by one consistent algebraic solve. The
    terminal status is ``converged`` when the final state rate is below
    ``settle_rate``, ``collapsed`` when the algebraic solve fails or the
    voltages cross the collapse threshold, and ``running`` otherwise.
    """
    red = reduce_network(model)
    n, m = red.n_loads, red.n_inverters
    if config.tau.shape != (m,):
        raise ValueError("config.tau must have one entry per inverter")
    is_ds = spec.kind is LoadKind.DYNAMIC_SHUNT
    schedule = config.schedule
    if schedule is not None and is_ds:
        modeled = spec.ds_mask
        for ev in schedule.steps:
            if ev.parameter == "Q_const" and not modeled[ev.bus]:
                raise ValueError(
                    f"cannot schedule a demand on bus {ev.bus}: no shunt state is modeled there"
                )
    rng = (
        np.random.default_rng(schedule.jitter_seed)
        if schedule is not None and schedule.jitter_fraction > 0
        else None
    )

    E_I = red.setpoints.copy() if E_I0 is None else np.array(E_I0, dtype=float)
    if is_ds:
        b_dyn = (
            dyn_shunt_equilibrium(spec, red.E_load_open).b_dyn
            if b_dyn0 is None
            else np.array(b_dyn0, dtype=float)
        )
    else:
        b_dyn = np.zeros(n)

    floor = COLLAPSE_FRACTION * float(red.E_load_open.min())
    steps = int(round(config.t_end / config.dt))
    t_grid = np.arange(steps + 1) * config.dt

    E_L_hist = np.empty((steps + 1, n))
    E_I_hist = np.empty((steps + 1, m))
    b_hist = np.empty((steps + 1, n)) if is_ds else None
    Q_I_hist = np.empty((steps + 1, m))
    res_hist = np.empty(steps + 1)

    def record(k, E_L, E_I, b, res):
        E_L_hist[k] = E_L
        E_I_hist[k] = E_I
        if is_ds:
            b_hist[k] = b
        Q_I_hist[k] = -E_I * (red.blocks.B_IL @ E_L + red.blocks.B_II @ E_I)
        res_hist[k] = res

    b_eff, I_eff, Q_eff = _apply_schedule(spec, schedule, 0.0, rng)
    E_L, res = _algebraic_solve(
        red, is_ds, b_eff, I_eff, Q_eff, b_dyn, E_I, red.E_load_open, floor,
        config.algebraic_tol,
    )
    status = STATUS_RUNNING
    if E_L is None:
        return SimTrace(
            t=t_grid[:0], E_L=E_L_hist[:0], E_I=E_I_hist[:0], Q_I=Q_I_hist[:0],
            b_dyn=b_hist[:0] if is_ds else None,
            algebraic_residuals=res_hist[:0], status=STATUS_COLLAPSED,
            notes=["initial algebraic solve failed"],
        )
    record(0, E_L, E_I, b_dyn, res)

    last = steps
    for k in range(1, steps + 1):
        t = t_grid[k]
        b_eff, I_eff, Q_eff = _apply_schedule(spec, schedule, t, rng)
        if is_ds:
            mask = spec.ds_mask
            b_new = b_dyn.copy()
            b_new[mask] = (
                b_dyn[mask] + config.dt * Q_eff[mask] / spec.T[mask]
            ) / (1.0 + config.dt * E_L[mask] ** 2 / spec.T[mask])
            b_dyn = b_new
        E_I = _implicit_inverter_step(red, E_I, E_L, config.dt, config.tau)
        E_L_next, res = _algebraic_solve(
            red, is_ds, b_eff, I_eff, Q_eff, b_dyn, E_I, E_L, floor,
            config.algebraic_tol,
        )
        if E_L_next is None:
            status = STATUS_COLLAPSED
            last = k - 1
            break
        E_L = E_L_next
        record(k, E_L, E_I, b_dyn, res)

    if status != STATUS_COLLAPSED and last >= 1:
        dx = [
            np.max(np.abs(E_L_hist[last] - E_L_hist[last - 1])),
            np.max(np.abs(E_I_hist[last] - E_I_hist[last - 1])),
        ]
        if is_ds:
            dx.append(np.max(np.abs(b_hist[last] - b_hist[last - 1])))
        rate = float(max(dx)) / config.dt
        status = STATUS_CONVERGED if rate <= config.settle_rate else STATUS_RUNNING

    upto = last + 1
    return SimTrace(
        t=t_grid[:upto],
        E_L=E_L_hist[:upto],
        E_I=E_I_hist[:upto],
        Q_I=Q_I_hist[:upto],
        b_dyn=b_hist[:upto] if is_ds else None,
        algebraic_residuals=res_hist[:upto],
        status=status,
    )


def linearize_at(
    red: ReducedNetwork, spec: LoadSpec, E_L: np.ndarray, E_I: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Jacobian of the bus-level fixed point map and its diagonal load part.

    Returns ``(J, D)`` where ``J`` is the (n+m) x (n+m) Jacobian of the
    stacked load-balance and droop equations and ``D`` the diagonal matrix
    collecting the load power slopes and the droop terms. ``J`` feeds the
    generalized eigenvalue analysis.
    """
    blocks = red.blocks
    E_L = np.atleast_1d(np.asarray(E_L, dtype=float))
    E_I = np.atleast_1d(np.asarray(E_I, dtype=float))
    B = blocks.full
    E = np.concatenate([E_L, E_I])
    d_load = np.diag(load_jacobian(spec, E_L))
    d_inv = red.gains * (2.0 * E_I - red.setpoints)
    D = np.diag(np.concatenate([d_load, d_inv]))
    J = np.diag(E) @ B + np.diag(B @ E) + D
    return J, D

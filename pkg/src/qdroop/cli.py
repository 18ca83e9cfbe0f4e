"""Command line interface and the network file format.

Network files are YAML documents with sections ``buses``, ``branches``,
``loads``, ``simulation`` and ``bases``. Parsing is strict: unknown keys are
fatal and semantic problems are aggregated into one error listing every
violation. Reports are JSON with sorted keys and embed the tool version, the
input digest and every tolerance used.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from dataclasses import dataclass

import numpy as np
import yaml

from . import __version__
from .equilibrium import (
    NEWTON_TOL,
    Q_MAX_DEFAULT,
    EquilibriumSolution,
    fixed_residual_tol,
    solve_dynamic_shunt,
    solve_newton,
    solve_zi,
    solve_zip_perturbative,
)
from .errors import (
    HeavyLoadingError,
    HypothesisError,
    MicrogridError,
    ModelError,
    NetworkFileError,
    NonconvergenceError,
    IllConditionedError,
    AlgebraicSingularityError,
    InternalConsistencyError,
    VoltageCollapseError,
)
from .loads import LoadKind, LoadSpec
from .netmodel import (
    TOL_EIG,
    Branch,
    NetworkModel,
    build_susceptance,
    validate_susceptance,
)
from .optimality import evaluate_cost, verify_optimality
from .reduction import check_reduced_properties, reduce_network
from .sharing import (
    high_gain_limit,
    low_gain_limit,
    proportional_shares,
    sharing_diagnostics,
    sharing_matrix,
)
from .simulate import (
    DisturbanceSchedule,
    SimConfig,
    SinusoidalSegment,
    StepChange,
    simulate,
)
from .stability import TOL_HURWITZ_REL, analyze

EXIT_OK = 0
EXIT_NEGATIVE = 1
EXIT_INPUT = 2
EXIT_NUMERIC = 3

_DEFAULT_TAU = 0.05

_BUS_KEYS = {"id", "kind", "K", "E_star", "tau"}
_BRANCH_KEYS = {"i", "j", "b", "g"}
_LOAD_KEYS = {"bus", "model", "b_shunt", "I_shunt", "Q", "T", "capacitive"}
_SIM_KEYS = {"dt", "t_end", "algebraic_tol", "settle_rate", "jitter", "jitter_seed", "schedule"}
_STEP_KEYS = {"type", "time", "bus", "parameter", "value"}
_SINE_KEYS = {"type", "start", "end", "bus", "parameter", "amplitude", "period"}
_BASES_KEYS = {"V_base", "S_base"}
_TOP_KEYS = {"buses", "branches", "loads", "simulation", "bases"}
_PARAM_NAMES = {"b_shunt": "b_shunt", "I_shunt": "I_shunt", "Q": "Q_const"}


@dataclass
class ParsedNetwork:
    """Everything a network file describes, in canonical form."""

    model: NetworkModel
    spec: LoadSpec
    tau: np.ndarray
    sim: SimConfig | None
    bases: dict
    path: str
    digest: str
    mixed_models: bool = False


def _as_float(value, what: str, errors: list[str]) -> float | None:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        errors.append(f"{what} must be a number, got {value!r}")
        return None
    return float(value)


def parse_network(path: str) -> ParsedNetwork:
    """Parse and validate a network file; all problems raise at once."""
    with open(path, "rb") as fh:
        raw = fh.read()
    digest = hashlib.sha256(raw).hexdigest()
    try:
        doc = yaml.safe_load(raw)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f" at line {mark.line + 1}, column {mark.column + 1}" if mark else ""
        raise NetworkFileError([f"YAML syntax error{where}: {exc}"]) from exc
    parsed = _parse_document(doc, path, digest)
    return parsed


def _parse_document(doc, path: str, digest: str) -> ParsedNetwork:
    errors: list[str] = []
    if not isinstance(doc, dict):
        raise NetworkFileError(["document root must be a mapping of sections"])
    unknown = set(doc) - _TOP_KEYS
    if unknown:
        errors.append(f"unknown top-level sections: {sorted(unknown)}")
    for required in ("buses", "branches"):
        if required not in doc:
            errors.append(f"missing required section {required!r}")
    if errors:
        raise NetworkFileError(errors)

    loads_idx: list[str] = []
    inverters: list[dict] = []
    for pos, entry in enumerate(doc["buses"] or []):
        if not isinstance(entry, dict):
            errors.append(f"bus #{pos}: entry must be a mapping")
            continue
        unknown = set(entry) - _BUS_KEYS
        if unknown:
            errors.append(f"bus #{pos}: unknown keys {sorted(unknown)}")
        bus_id = entry.get("id")
        if not isinstance(bus_id, str) or not bus_id:
            errors.append(f"bus #{pos}: needs a nonempty string id")
            continue
        kind = entry.get("kind")
        if kind == "load":
            extra = set(entry) & {"K", "E_star", "tau"}
            if extra:
                errors.append(f"bus {bus_id!r}: load buses cannot set {sorted(extra)}")
            loads_idx.append(bus_id)
        elif kind == "inverter":
            K = _as_float(entry.get("K"), f"bus {bus_id!r}: K", errors)
            E_star = _as_float(entry.get("E_star"), f"bus {bus_id!r}: E_star", errors)
            tau = entry.get("tau", _DEFAULT_TAU)
            tau = _as_float(tau, f"bus {bus_id!r}: tau", errors)
            if K is not None and K >= 0:
                errors.append(f"bus {bus_id!r}: droop gain K must be negative, got {K}")
            if E_star is not None and E_star <= 0:
                errors.append(f"bus {bus_id!r}: set point E_star must be positive, got {E_star}")
            if tau is not None and tau <= 0:
                errors.append(f"bus {bus_id!r}: tau must be positive, got {tau}")
            inverters.append({"id": bus_id, "K": K, "E_star": E_star, "tau": tau})
        else:
            errors.append(f"bus {bus_id!r}: kind must be 'load' or 'inverter', got {kind!r}")

    labels = loads_idx + [inv["id"] for inv in inverters]
    duplicates = {b for b in labels if labels.count(b) > 1}
    if duplicates:
        errors.append(f"duplicate bus ids: {sorted(duplicates)}")
    index = {bus_id: k for k, bus_id in enumerate(labels)}
    n, m = len(loads_idx), len(inverters)
    if n == 0:
        errors.append("need at least one load bus")
    if m == 0:
        errors.append("need at least one inverter bus")

    branches: list[Branch] = []
    for pos, entry in enumerate(doc["branches"] or []):
        if not isinstance(entry, dict):
            errors.append(f"branch #{pos}: entry must be a mapping")
            continue
        unknown = set(entry) - _BRANCH_KEYS
        if unknown:
            errors.append(f"branch #{pos}: unknown keys {sorted(unknown)}")
        ends = []
        for key in ("i", "j"):
            bus_id = entry.get(key)
            if bus_id not in index:
                errors.append(f"branch #{pos}: endpoint {key}={bus_id!r} is not a bus id")
            else:
                ends.append(index[bus_id])
        b = _as_float(entry.get("b"), f"branch #{pos}: b", errors)
        g = _as_float(entry.get("g", 0.0), f"branch #{pos}: g", errors)
        if b is not None and b <= 0:
            errors.append(f"branch #{pos}: susceptance b must be positive, got {b}")
        if g is not None and g < 0:
            errors.append(f"branch #{pos}: conductance g must be nonnegative, got {g}")
        if len(ends) == 2 and b is not None and g is not None:
            branches.append(Branch(ends[0], ends[1], b, g))

    b_shunt = np.zeros(max(n, 1))
    I_shunt = np.zeros(max(n, 1))
    Q_const = np.zeros(max(n, 1))
    T = np.ones(max(n, 1))
    entry_models: list[str] = []
    ds_buses: list[int] = []
    seen_buses: set[str] = set()
    for pos, entry in enumerate(doc.get("loads") or []):
        if not isinstance(entry, dict):
            errors.append(f"load #{pos}: entry must be a mapping")
            continue
        unknown = set(entry) - _LOAD_KEYS
        if unknown:
            errors.append(f"load #{pos}: unknown keys {sorted(unknown)}")
        bus_id = entry.get("bus")
        if bus_id not in index or index[bus_id] >= n:
            errors.append(f"load #{pos}: bus {bus_id!r} is not a load bus")
            continue
        if bus_id in seen_buses:
            errors.append(f"load #{pos}: duplicate entry for bus {bus_id!r}")
            continue
        seen_buses.add(bus_id)
        k = index[bus_id]
        modelname = entry.get("model")
        if modelname not in ("zi", "zip", "cp", "ds"):
            errors.append(f"load #{pos}: model must be one of zi/zip/cp/ds, got {modelname!r}")
            continue
        entry_models.append(modelname)
        allowed = {
            "zi": {"b_shunt", "I_shunt"},
            "zip": {"b_shunt", "I_shunt", "Q"},
            "cp": {"Q"},
            "ds": {"Q", "T"},
        }[modelname]
        stray = (set(entry) & {"b_shunt", "I_shunt", "Q", "T"}) - allowed
        if stray:
            errors.append(f"load #{pos}: model {modelname!r} does not take {sorted(stray)}")
        capacitive = bool(entry.get("capacitive", False))
        for key, target in (("b_shunt", b_shunt), ("I_shunt", I_shunt), ("Q", Q_const)):
            if key in entry and key in allowed:
                value = _as_float(entry[key], f"load #{pos}: {key}", errors)
                if value is None:
                    continue
                if value > 0 and not capacitive:
                    errors.append(
                        f"load #{pos}: positive {key} needs an explicit 'capacitive: true' flag"
                    )
                target[k] = value
        if modelname == "ds":
            ds_buses.append(k)
            tval = _as_float(entry.get("T", 1.0), f"load #{pos}: T", errors)
            if tval is not None:
                if tval <= 0:
                    errors.append(f"load #{pos}: T must be positive, got {tval}")
                else:
                    T[k] = tval
            if entry.get("Q", 0) == 0:
                errors.append(f"load #{pos}: dynamic-shunt entries need a negative Q")

    sim_doc = doc.get("simulation")
    bases = {}
    if "bases" in doc:
        entry = doc["bases"] or {}
        unknown = set(entry) - _BASES_KEYS
        if unknown:
            errors.append(f"bases: unknown keys {sorted(unknown)}")
        for key in _BASES_KEYS & set(entry):
            value = _as_float(entry[key], f"bases: {key}", errors)
            if value is not None:
                if value <= 0:
                    errors.append(f"bases: {key} must be positive, got {value}")
                else:
                    bases[key] = value

    if ds_buses:
        static_q = [pos for pos, name in enumerate(entry_models) if name in ("zip", "cp")]
        if static_q:
            errors.append(
                "dynamic-shunt files cannot mix in static constant-power entries; "
                "model those demands as ds as well"
            )
        kind = LoadKind.DYNAMIC_SHUNT
    elif np.any(Q_const != 0):
        kind = LoadKind.ZIP if (np.any(b_shunt != 0) or np.any(I_shunt != 0)) else LoadKind.CONSTANT_POWER
    else:
        kind = LoadKind.ZI

    if errors:
        raise NetworkFileError(errors)

    try:
        model = NetworkModel(
            n_loads=n,
            n_inverters=m,
            branches=tuple(branches),
            gains=np.array([inv["K"] for inv in inverters]),
            setpoints=np.array([inv["E_star"] for inv in inverters]),
            bus_labels=tuple(labels),
        )
    except ModelError as exc:
        raise NetworkFileError([str(exc)]) from exc
    try:
        spec = LoadSpec(
            kind=kind,
            b_shunt=b_shunt,
            I_shunt=I_shunt,
            Q_const=Q_const,
            T=T if kind is LoadKind.DYNAMIC_SHUNT else None,
        )
    except ModelError as exc:
        raise NetworkFileError([str(exc)]) from exc
    tau = np.array([inv["tau"] for inv in inverters])
    mixed = bool(ds_buses) and (np.any(b_shunt != 0) or np.any(I_shunt != 0))

    sim = None
    if sim_doc is not None:
        sim = _parse_simulation(sim_doc, index, n, spec, tau)

    return ParsedNetwork(
        model=model,
        spec=spec,
        tau=tau,
        sim=sim,
        bases=bases,
        path=path,
        digest=digest,
        mixed_models=mixed,
    )


def _parse_simulation(sim_doc, index, n, spec, tau) -> SimConfig:
    errors: list[str] = []
    if not isinstance(sim_doc, dict):
        raise NetworkFileError(["simulation: section must be a mapping"])
    unknown = set(sim_doc) - _SIM_KEYS
    if unknown:
        errors.append(f"simulation: unknown keys {sorted(unknown)}")
    dt = _as_float(sim_doc.get("dt"), "simulation: dt", errors)
    t_end = _as_float(sim_doc.get("t_end"), "simulation: t_end", errors)
    steps: list[StepChange] = []
    sines: list[SinusoidalSegment] = []
    for pos, ev in enumerate(sim_doc.get("schedule") or []):
        if not isinstance(ev, dict):
            errors.append(f"schedule #{pos}: event must be a mapping")
            continue
        ev_type = ev.get("type")
        keys = _STEP_KEYS if ev_type == "step" else _SINE_KEYS
        unknown = set(ev) - keys
        if unknown:
            errors.append(f"schedule #{pos}: unknown keys {sorted(unknown)}")
        bus_id = ev.get("bus")
        if bus_id not in index or index[bus_id] >= n:
            errors.append(f"schedule #{pos}: bus {bus_id!r} is not a load bus")
            continue
        bus = index[bus_id]
        parameter = ev.get("parameter")
        if parameter not in _PARAM_NAMES:
            errors.append(
                f"schedule #{pos}: parameter must be one of {sorted(_PARAM_NAMES)}, got {parameter!r}"
            )
            continue
        parameter = _PARAM_NAMES[parameter]
        if ev_type == "step":
            time = _as_float(ev.get("time"), f"schedule #{pos}: time", errors)
            value = _as_float(ev.get("value"), f"schedule #{pos}: value", errors)
            if time is not None and value is not None:
                steps.append(StepChange(time, bus, parameter, value))
        elif ev_type == "sine":
            fields = {}
            for key in ("start", "end", "amplitude", "period"):
                fields[key] = _as_float(ev.get(key), f"schedule #{pos}: {key}", errors)
            if all(v is not None for v in fields.values()):
                try:
                    sines.append(SinusoidalSegment(bus=bus, parameter=parameter, **fields))
                except ValueError as exc:
                    errors.append(f"schedule #{pos}: {exc}")
        else:
            errors.append(f"schedule #{pos}: type must be 'step' or 'sine', got {ev_type!r}")
    jitter = sim_doc.get("jitter", 0.0)
    jitter = _as_float(jitter, "simulation: jitter", errors) or 0.0
    jitter_seed = sim_doc.get("jitter_seed", 0)
    if not isinstance(jitter_seed, int) or isinstance(jitter_seed, bool):
        errors.append("simulation: jitter_seed must be an integer")
        jitter_seed = 0
    algebraic_tol = _as_float(
        sim_doc.get("algebraic_tol", 1e-10), "simulation: algebraic_tol", errors
    )
    settle_rate = _as_float(sim_doc.get("settle_rate", 1e-6), "simulation: settle_rate", errors)
    if errors:
        raise NetworkFileError(errors)
    schedule = DisturbanceSchedule(
        steps=tuple(steps),
        sines=tuple(sines),
        jitter_fraction=jitter,
        jitter_seed=jitter_seed,
    )
    try:
        return SimConfig(
            tau=tau,
            dt=dt,
            t_end=t_end,
            algebraic_tol=algebraic_tol,
            settle_rate=settle_rate,
            schedule=schedule,
        )
    except ValueError as exc:
        raise NetworkFileError([f"simulation: {exc}"]) from exc


def serialize_network(parsed: ParsedNetwork) -> str:
    """Canonical YAML form of a parsed network; parse(serialize(x)) == x."""
    model, spec = parsed.model, parsed.spec
    n = model.n_loads
    buses = [{"id": model.label(k), "kind": "load"} for k in range(n)]
    for j in range(model.n_inverters):
        buses.append(
            {
                "id": model.label(n + j),
                "kind": "inverter",
                "K": float(model.gains[j]),
                "E_star": float(model.setpoints[j]),
                "tau": float(parsed.tau[j]),
            }
        )
    branches = []
    for br in model.branches:
        entry = {"i": model.label(br.i), "j": model.label(br.j), "b": float(br.b)}
        if br.g != 0.0:
            entry["g"] = float(br.g)
        branches.append(entry)
    doc = {"buses": buses, "branches": branches}

    loads = []
    for k in range(n):
        fields = {}
        if spec.b_shunt[k] != 0:
            fields["b_shunt"] = float(spec.b_shunt[k])
        if spec.I_shunt[k] != 0:
            fields["I_shunt"] = float(spec.I_shunt[k])
        if spec.Q_const[k] != 0:
            fields["Q"] = float(spec.Q_const[k])
        if not fields:
            continue
        if spec.kind is LoadKind.DYNAMIC_SHUNT and spec.ds_mask[k]:
            entry = {"bus": model.label(k), "model": "ds", "Q": fields.pop("Q")}
            entry["T"] = float(spec.T[k])
            if fields:
                # static terms on a dynamic-shunt bus are carried by a zi entry
                loads.append({"bus": model.label(k), "model": "zi", **fields})
            loads.append(entry)
        elif spec.kind is LoadKind.DYNAMIC_SHUNT:
            loads.append({"bus": model.label(k), "model": "zi", **fields})
        else:
            name = {"zi": "zi", "zip": "zip", "cp": "cp"}[spec.kind.value]
            loads.append({"bus": model.label(k), "model": name, **fields})
        if any(v > 0 for v in fields.values()):
            loads[-1]["capacitive"] = True
    if loads:
        doc["loads"] = loads

    if parsed.sim is not None:
        sim = parsed.sim
        sim_doc = {"dt": float(sim.dt), "t_end": float(sim.t_end)}
        sim_doc["algebraic_tol"] = float(sim.algebraic_tol)
        sim_doc["settle_rate"] = float(sim.settle_rate)
        schedule = sim.schedule or DisturbanceSchedule()
        events = []
        reverse = {v: k for k, v in _PARAM_NAMES.items()}
        for ev in schedule.steps:
            events.append(
                {
                    "type": "step",
                    "time": float(ev.time),
                    "bus": model.label(ev.bus),
                    "parameter": reverse[ev.parameter],
                    "value": float(ev.value),
                }
            )
        for seg in schedule.sines:
            events.append(
                {
                    "type": "sine",
                    "start": float(seg.start),
                    "end": float(seg.end),
                    "bus": model.label(seg.bus),
                    "parameter": reverse[seg.parameter],
                    "amplitude": float(seg.amplitude),
                    "period": float(seg.period),
                }
            )
        if events:
            sim_doc["schedule"] = events
        if schedule.jitter_fraction:
            sim_doc["jitter"] = float(schedule.jitter_fraction)
            sim_doc["jitter_seed"] = int(schedule.jitter_seed)
        doc["simulation"] = sim_doc
    if parsed.bases:
        doc["bases"] = {k: float(v) for k, v in sorted(parsed.bases.items())}
    return yaml.safe_dump(doc, sort_keys=False)


def _sig12(x: float) -> float:
    return float(f"{x:.12g}")


def _eig_list(values: np.ndarray) -> list[list[float]]:
    values = np.atleast_1d(values)
    order = np.argsort(-values.real)
    return [[_sig12(float(v.real)), _sig12(float(np.imag(v)))] for v in values[order]]


def _base_tolerances() -> dict:
    return {"tol_fixed": fixed_residual_tol(), "tol_eig": TOL_EIG}


def _default_solver(parsed: ParsedNetwork) -> str:
    return {
        LoadKind.ZI: "zi",
        LoadKind.ZIP: "zip",
        LoadKind.CONSTANT_POWER: "cp",
        LoadKind.DYNAMIC_SHUNT: "ds",
    }[parsed.spec.kind]


def _solve(parsed: ParsedNetwork, solver: str) -> EquilibriumSolution:
    red = reduce_network(parsed.model)
    spec = parsed.spec
    if solver == "zi":
        return solve_zi(red, spec)
    if solver == "zip":
        return solve_zip_perturbative(red, spec)
    if solver == "cp":
        return solve_newton(red, spec)
    if solver == "ds":
        return solve_dynamic_shunt(red, spec)
    raise ValueError(f"unknown solver {solver!r}")


def _solution_payload(sol: EquilibriumSolution, parsed: ParsedNetwork) -> dict:
    payload = {
        "method": sol.method,
        "E_L": sol.E_L.tolist(),
        "E_I": sol.E_I.tolist(),
        "residual_reduced": sol.residual_reduced,
        "residual_full": sol.residual_full,
        "newton_iterations": sol.newton_iterations,
    }
    if sol.epsilon_norm is not None:
        payload["epsilon_norm"] = sol.epsilon_norm
    if sol.E_L_first_order is not None:
        payload["E_L_first_order"] = sol.E_L_first_order.tolist()
    if sol.b_dyn is not None:
        payload["b_dyn"] = sol.b_dyn.tolist()
    if parsed.mixed_models:
        payload["mixed_models"] = True
    return payload


def _cmd_validate(parsed: ParsedNetwork, args) -> tuple[dict, int]:
    report = validate_susceptance(build_susceptance(parsed.model))
    payload = {"susceptance_checks": report.as_dict()}
    code = EXIT_OK if report.passed else EXIT_NEGATIVE
    return payload, code


def _cmd_reduce(parsed: ParsedNetwork, args) -> tuple[dict, int]:
    red = reduce_network(parsed.model)
    checks = check_reduced_properties(red)
    payload = {
        "B_red": red.B_red.tolist(),
        "W_load": red.W_load.tolist(),
        "W_inv": red.W_inv.tolist(),
        "E_load_open": red.E_load_open.tolist(),
        "checks": checks.as_dict(),
    }
    return payload, EXIT_OK


def _cmd_solve(parsed: ParsedNetwork, args) -> tuple[dict, int]:
    solver = args.model or _default_solver(parsed)
    sol = _solve(parsed, solver)
    return _solution_payload(sol, parsed), EXIT_OK


def _cmd_stability(parsed: ParsedNetwork, args) -> tuple[dict, int]:
    red = reduce_network(parsed.model)
    sol = _solve(parsed, _default_solver(parsed))
    report = analyze(
        red, parsed.spec, sol.E_L, sol.E_I, b_dyn=sol.b_dyn, tau=parsed.tau
    )
    payload = {
        "solution": _solution_payload(sol, parsed),
        "hurwitz": report.hurwitz,
        "margin": _sig12(report.margin),
        "sufficient_condition": report.sufficient,
        "eigenvalues": _eig_list(report.spectrum),
        "gep_spectrum": [_sig12(float(v)) for v in sorted(report.gep_spectrum, reverse=True)],
        "routes_consistent": report.consistent,
    }
    if report.ds_spectrum is not None:
        payload["ds_spectrum"] = _eig_list(report.ds_spectrum)
    return payload, EXIT_OK if report.hurwitz else EXIT_NEGATIVE


def _cmd_share(parsed: ParsedNetwork, args) -> tuple[dict, int]:
    red = reduce_network(parsed.model)
    blocks = red.blocks
    payload: dict = {"shares_proportional": proportional_shares(red.gains).tolist()}
    if args.limit == "high":
        S = high_gain_limit(blocks)
        payload["regime"] = "high_gain_limit"
        payload["S"] = S.tolist()
    elif args.limit == "low":
        payload["regime"] = "low_gain_limit"
        payload["shares"] = proportional_shares(red.gains).tolist()
        total = float(parsed.spec.Q_const.sum())
        if total:
            payload["Q_split_of_total_demand"] = low_gain_limit(red.gains, parsed.spec.Q_const).tolist()
    else:
        S = sharing_matrix(blocks, red.gains, args.gain_scale)
        payload["regime"] = f"gain_scale={args.gain_scale:g}"
        payload["S"] = S.tolist()
        sol = _solve(parsed, _default_solver(parsed))
        diag = sharing_diagnostics(red, parsed.spec, sol.E_L, sol.E_I)
        payload["Q_I"] = diag.Q_I.tolist()
        payload["shares_realized"] = diag.shares.tolist()
        payload["proportional_error"] = diag.proportional_error
        payload["distance_error"] = diag.distance_error
        payload["approximate"] = diag.approximate
        if diag.notes:
            payload["notes"] = diag.notes
    return payload, EXIT_OK


def _cmd_optimality(parsed: ParsedNetwork, args) -> tuple[dict, int]:
    spec = parsed.spec
    if np.any(spec.I_shunt != 0) or np.any(spec.Q_const != 0):
        raise HypothesisError(
            "the cost identification applies to constant-impedance loads only"
        )
    red = reduce_network(parsed.model)
    sol = solve_zi(red, spec)
    E = np.concatenate([sol.E_L, sol.E_I])
    breakdown = evaluate_cost(parsed.model, spec.b_shunt, E)
    verdict = verify_optimality(parsed.model, spec.b_shunt, sol.E_L, sol.E_I)
    payload = {
        "solution": _solution_payload(sol, parsed),
        "cost": {
            "Q_loss": breakdown.Q_loss,
            "Q_load": breakdown.Q_load,
            "C_volt": breakdown.C_volt,
            "C_total": breakdown.C_total,
        },
        "gradient_norm": verdict.gradient_norm,
        "hessian_min_eig": verdict.hessian_min_eig,
        "minimizer_gap": verdict.minimizer_gap,
        "passed": verdict.passed,
        "status": verdict.status,
    }
    return payload, EXIT_OK if verdict.passed else EXIT_NEGATIVE


def _cmd_simulate(parsed: ParsedNetwork, args) -> tuple[dict, int]:
    if parsed.sim is None:
        raise NetworkFileError(["file has no simulation section"])
    trace = simulate(parsed.model, parsed.spec, parsed.sim)
    if args.csv:
        trace.to_csv(args.csv)
    payload = {
        "status": trace.status,
        "steps_stored": int(len(trace.t)),
        "t_final": float(trace.t[-1]) if len(trace.t) else 0.0,
        "max_algebraic_residual": float(np.max(trace.algebraic_residuals)) if len(trace.t) else None,
    }
    if len(trace.t):
        payload["E_L_final"] = trace.E_L[-1].tolist()
        payload["E_I_final"] = trace.E_I[-1].tolist()
        if trace.b_dyn is not None:
            payload["b_dyn_final"] = trace.b_dyn[-1].tolist()
    if trace.notes:
        payload["notes"] = trace.notes
    if args.csv:
        payload["csv"] = args.csv
    return payload, EXIT_NEGATIVE if trace.status == "collapsed" else EXIT_OK


_COMMANDS = {
    "validate": (_cmd_validate, "check the structural properties of the network"),
    "reduce": (_cmd_reduce, "Kron-reduce the droop-augmented network onto the loads"),
    "solve": (_cmd_solve, "solve for the operating point"),
    "stability": (_cmd_stability, "certify small-signal stability of the operating point"),
    "share": (_cmd_share, "analyze steady-state reactive power sharing"),
    "optimality": (_cmd_optimality, "check the operating point against the network cost minimum"),
    "simulate": (_cmd_simulate, "integrate the closed loop through the disturbance schedule"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qdroop",
        description="Microgrid analysis under quadratic voltage droop control.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in _COMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("network", help="network description file")
        p.add_argument("-o", "--output", help="write the JSON report here instead of stdout")
        if name == "solve":
            p.add_argument(
                "--model",
                choices=["zi", "zip", "cp", "ds"],
                help="solver to use (default: inferred from the load entries)",
            )
        if name == "share":
            group = p.add_mutually_exclusive_group()
            group.add_argument(
                "--gain-scale", type=float, default=1.0,
                help="scale factor applied to every droop gain (default 1)",
            )
            group.add_argument(
                "--limit", choices=["high", "low"],
                help="report a limiting share rule instead of the finite-gain matrix",
            )
        if name == "simulate":
            p.add_argument("--csv", help="also write the trace as CSV here")
    return parser


def _tolerances_for(command: str) -> dict:
    tol = _base_tolerances()
    if command in ("solve", "stability", "simulate", "share", "optimality"):
        tol["newton_tol"] = NEWTON_TOL
        tol["q_max"] = Q_MAX_DEFAULT
    if command == "stability":
        tol["tol_hurwitz_rel"] = TOL_HURWITZ_REL
    return tol


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handler, _ = _COMMANDS[args.command]
    try:
        parsed = parse_network(args.network)
        payload, code = handler(parsed, args)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (NetworkFileError, ModelError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (HypothesisError, HeavyLoadingError, VoltageCollapseError) as exc:
        print(f"analysis failed: {exc}", file=sys.stderr)
        return EXIT_NEGATIVE
    except (
        NonconvergenceError,
        IllConditionedError,
        AlgebraicSingularityError,
        InternalConsistencyError,
        np.linalg.LinAlgError,
    ) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC

    report = {
        "command": args.command,
        "meta": {
            "tool": "qdroop",
            "version": __version__,
            "input": args.network,
            "input_sha256": parsed.digest,
            "tolerances": _tolerances_for(args.command),
        },
        "result": payload,
    }
    text = json.dumps(report, indent=2, sort_keys=True)
    if args.output:
        with open(args.output, "w", newline="\n") as fh:
            fh.write(text + "\n")
    else:
        print(text)
    return code


if __name__ == "__main__":
    sys.exit(main())

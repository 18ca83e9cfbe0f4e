"""End-to-end acceptance checks.

Each criterion runs as one test that prints a visible pass/fail line (via
``capsys.disabled``) in addition to the usual pytest verdict. Tolerances are
pinned here on purpose; loosening them is not an option when one fails.
"""

import dataclasses
import math
import time

import numpy as np
import pytest

from conftest import random_network, random_zi_loads
from qdroop import (
    analyze,
    build_susceptance,
    certify_hurwitz,
    distance_sharing_matrix,
    effective_reactances,
    evaluate_cost,
    full_dae_spectrum,
    high_gain_limit,
    low_gain_matrix,
    proportional_shares,
    reduce_network,
    reduced_jacobian,
    sharing_matrix,
    short_circuit_matrix,
    simulate,
    solve_dynamic_shunt,
    solve_newton,
    solve_zi,
    solve_zip_perturbative,
    sufficient_condition,
    verify_optimality,
)
from qdroop import loads
from qdroop.cli import parse_network
from qdroop.simulate import SimConfig


def announce(capsys, number, label, passed):
    with capsys.disabled():
        verdict = "pass" if passed else "FAIL"
        print(f"\n[criterion {number}] {label}: {verdict}")


def full_system_newton(model, spec, rng, tol=1e-12, max_iter=200):
    """Independent damped Newton on the stacked bus equations.

    Assembled from scratch against the raw susceptance matrix; shares no code
    with the reduced solvers. Starts from a randomly perturbed open-circuit
    profile.
    """
    blocks = build_susceptance(model)
    B = blocks.full
    n = model.n_loads
    K, E_set = model.gains, model.setpoints
    b, I = spec.b_shunt, spec.I_shunt
    red = reduce_network(model)
    x = np.concatenate([red.E_load_open, E_set])
    x *= rng.uniform(0.9, 1.1, size=x.shape)

    def residual(x):
        E_L, E_I = x[:n], x[n:]
        BE = B @ x
        return np.concatenate(
            [
                b * E_L**2 + I * E_L + E_L * BE[:n],
                K * E_I * (E_I - E_set) + E_I * BE[n:],
            ]
        )

    F = residual(x)
    norm_F = float(np.max(np.abs(F)))
    for _ in range(max_iter):
        if norm_F <= tol:
            return x
        E_L, E_I = x[:n], x[n:]
        slopes = np.concatenate([2.0 * b * E_L + I, K * (2.0 * E_I - E_set)])
        J = np.diag(x) @ B + np.diag(B @ x) + np.diag(slopes)
        step = np.linalg.solve(J, -F)
        t = 1.0
        for _ in range(40):
            x_new = x + t * step
            if np.min(x_new) > 0:
                F_new = residual(x_new)
                if float(np.max(np.abs(F_new))) < norm_F:
                    break
            t *= 0.5
        else:
            raise AssertionError("independent Newton stalled")
        x, F = x_new, F_new
        norm_F = float(np.max(np.abs(F)))
    raise AssertionError("independent Newton did not converge")


def test_criterion_1_closed_form_corpus_and_independent_newton(capsys):
    rng = np.random.default_rng(101)
    start = time.perf_counter()
    worst_residual = 0.0
    worst_gap = 0.0
    for _ in range(100):
        model = random_network(rng)
        red = reduce_network(model)
        spec = random_zi_loads(rng, red)
        sol = solve_zi(red, spec)
        worst_residual = max(worst_residual, sol.residual_full)
        x = full_system_newton(model, spec, rng)
        gap = float(np.max(np.abs(x - np.concatenate([sol.E_L, sol.E_I]))))
        worst_gap = max(worst_gap, gap)
    elapsed = time.perf_counter() - start
    ok = worst_residual <= 1e-9 and worst_gap <= 1e-7 and elapsed < 10.0
    announce(
        capsys,
        1,
        f"100 closed-form points: residual {worst_residual:.2e}, "
        f"independent-Newton gap {worst_gap:.2e}, {elapsed:.1f}s",
        ok,
    )
    assert worst_residual <= 1e-9
    assert worst_gap <= 1e-7
    assert elapsed < 10.0


def test_criterion_2_closed_form_equals_newton_and_jacobian_identity(capsys):
    rng = np.random.default_rng(202)
    worst_gap = 0.0
    worst_identity = 0.0
    all_hurwitz = True
    for _ in range(100):
        model = random_network(rng)
        red = reduce_network(model)
        spec = random_zi_loads(rng, red)
        closed = solve_zi(red, spec)
        newton = solve_newton(red, spec)
        worst_gap = max(
            worst_gap, float(np.max(np.abs(closed.E_L - newton.E_L)))
        )
        J = reduced_jacobian(red, spec, closed.E_L)
        identity = np.diag(closed.E_L) @ (red.B_red + np.diag(spec.b_shunt))
        scale = max(1.0, float(np.max(np.abs(identity))))
        worst_identity = max(
            worst_identity, float(np.max(np.abs(J - identity))) / scale
        )
        hurwitz, _ = certify_hurwitz(J)
        all_hurwitz = all_hurwitz and hurwitz
    ok = worst_gap <= 1e-8 and worst_identity <= 1e-12 and all_hurwitz
    announce(
        capsys,
        2,
        f"closed form vs Newton gap {worst_gap:.2e}, Jacobian identity "
        f"{worst_identity:.2e}, all Hurwitz {all_hurwitz}",
        ok,
    )
    assert worst_gap <= 1e-8
    assert worst_identity <= 1e-12
    assert all_hurwitz


def test_criterion_3_perturbative_accuracy_and_quadratic_error(capsys, two_bus_model):
    red = reduce_network(two_bus_model)
    spec = loads.zip_load(np.array([-0.1]), np.zeros(1), np.array([-0.05]))
    sol = solve_zip_perturbative(red, spec)
    exact = (0.5 + math.sqrt(0.13)) / 1.2
    first = float(sol.E_L_first_order[0])
    two_bus_ok = (
        abs(float(sol.E_L[0]) - exact) <= 1e-10
        and abs(first - 11.0 / 15.0) <= 1e-12
    )

    rng = np.random.default_rng(303)
    min_slope = np.inf
    for _ in range(20):
        model = random_network(rng)
        red = reduce_network(model)
        n = red.n_loads
        b_shunt = -rng.uniform(0.05, 0.2, size=n)
        base = loads.zi(b_shunt)
        sc = short_circuit_matrix(red, base)
        c = float(rng.uniform(0.02, 0.06))
        Q_full = sc.Q_sc @ np.full(n, c)
        eps_norms, q_norms = [], []
        for scale in (1.0, 0.5, 0.25, 0.125):
            spec = loads.zip_load(b_shunt, np.zeros(n), scale * Q_full)
            sol = solve_zip_perturbative(red, spec)
            eps_norms.append(sol.epsilon_norm)
            q_norms.append(scale * c)
        slope = np.polyfit(np.log(q_norms), np.log(eps_norms), 1)[0]
        min_slope = min(min_slope, float(slope))
    ok = two_bus_ok and min_slope >= 1.8
    announce(
        capsys,
        3,
        f"two-bus first order 11/15 and exact root matched: {two_bus_ok}; "
        f"min error-vs-load slope {min_slope:.3f}",
        ok,
    )
    assert two_bus_ok
    assert min_slope >= 1.8


def test_criterion_4_stability_certificates_agree(capsys):
    rng = np.random.default_rng(404)
    sufficient_counterexamples = 0
    route_mismatches = 0
    tau_sign_changes = 0
    checked = 0
    while checked < 200:
        model = random_network(rng)
        red = reduce_network(model)
        spec = random_zi_loads(rng, red, current_fraction=0.5)
        if rng.uniform() < 0.5:
            sc = short_circuit_matrix(red, spec)
            c = float(rng.uniform(0.01, 0.05))
            Q = sc.Q_sc @ np.full(red.n_loads, c)
            spec = loads.zip_load(spec.b_shunt, spec.I_shunt, Q)
            sol = solve_zip_perturbative(red, spec)
        else:
            sol = solve_zi(red, spec)
        checked += 1
        tau = rng.uniform(0.01, 0.1, size=red.n_inverters)
        report = analyze(red, spec, sol.E_L, sol.E_I, tau=tau)
        if report.sufficient == "true" and not report.hurwitz:
            sufficient_counterexamples += 1
        if report.consistent is False:
            route_mismatches += 1
        gep_slow = full_dae_spectrum(red, spec, sol.E_L, sol.E_I, tau=10.0 * tau)
        if int((report.gep_spectrum < 0).sum()) != int((gep_slow < 0).sum()):
            tau_sign_changes += 1
    ok = (
        sufficient_counterexamples == 0
        and route_mismatches == 0
        and tau_sign_changes == 0
    )
    announce(
        capsys,
        4,
        f"200 instances: sufficient-condition counterexamples "
        f"{sufficient_counterexamples}, route mismatches {route_mismatches}, "
        f"tau-scaling sign changes {tau_sign_changes}",
        ok,
    )
    assert sufficient_counterexamples == 0
    assert route_mismatches == 0
    assert tau_sign_changes == 0


def test_criterion_5_equilibria_minimize_network_cost(capsys, two_bus_model):
    rng = np.random.default_rng(505)
    worst_gap = 0.0
    worst_grad = 0.0
    all_passed = True
    for _ in range(100):
        model = random_network(rng)
        red = reduce_network(model)
        b_shunt = -rng.uniform(0.05, 0.3, size=red.n_loads)
        sol = solve_zi(red, loads.zi(b_shunt))
        verdict = verify_optimality(model, b_shunt, sol.E_L, sol.E_I, n_starts=3)
        all_passed = all_passed and verdict.passed
        worst_gap = max(worst_gap, verdict.minimizer_gap)
        worst_grad = max(worst_grad, verdict.gradient_norm)

    red = reduce_network(two_bus_model)
    sol = solve_zi(red, loads.zi(np.array([-0.1])))
    cost = evaluate_cost(
        two_bus_model, np.array([-0.1]), np.concatenate([sol.E_L, sol.E_I])
    )
    two_bus_ok = abs(cost.C_total - 1.0 / 12.0) <= 1e-9
    ok = all_passed and worst_grad <= 1e-8 and worst_gap <= 1e-6 and two_bus_ok
    announce(
        capsys,
        5,
        f"100 instances minimize the cost (gap {worst_gap:.2e}, gradient "
        f"{worst_grad:.2e}); two-bus cost equals 1/12: {two_bus_ok}",
        ok,
    )
    assert all_passed
    assert worst_grad <= 1e-8
    assert worst_gap <= 1e-6
    assert two_bus_ok


def test_criterion_6_sharing_limits(capsys, star_model):
    rng = np.random.default_rng(606)
    worst_high = 0.0
    worst_low = 0.0
    for _ in range(30):
        model = random_network(rng)
        blocks = build_susceptance(model)
        S_inf = high_gain_limit(blocks)
        S_stiff = sharing_matrix(blocks, model.gains, gain_scale=1e8)
        scale = float(np.max(np.abs(S_inf)))
        worst_high = max(
            worst_high, float(np.max(np.abs(S_stiff - S_inf))) / scale
        )
        S_soft = sharing_matrix(blocks, model.gains, gain_scale=1e-6)
        S_zero = low_gain_matrix(model.gains, model.n_loads)
        worst_low = max(worst_low, float(np.max(np.abs(S_soft - S_zero))))

    star_blocks = build_susceptance(star_model)
    S_star = high_gain_limit(star_blocks)
    star_gap = float(
        np.max(np.abs(S_star.ravel() - np.array([-2.0 / 3.0, -1.0 / 3.0])))
    )
    shares = proportional_shares(np.array([-2.0, -2.0, -1.0]))
    ratios_exact = np.array_equal(shares, np.array([0.4, 0.4, 0.2]))
    ok = (
        worst_high <= 1e-6
        and worst_low <= 1e-4
        and star_gap <= 1e-10
        and ratios_exact
    )
    announce(
        capsys,
        6,
        f"high-gain error {worst_high:.2e}, low-gain error {worst_low:.2e}, "
        f"star shares gap {star_gap:.1e}, 2:2:1 -> 0.4/0.4/0.2 exact: {ratios_exact}",
        ok,
    )
    assert worst_high <= 1e-6
    assert worst_low <= 1e-4
    assert star_gap <= 1e-10
    assert ratios_exact


def test_criterion_7_simulation_reaches_equilibria_and_separates_gains(
    capsys, two_bus_model, fig1b_path
):
    start = time.perf_counter()
    spec = loads.dynamic_shunt(np.array([-0.05]), 0.4)
    trace = simulate(
        two_bus_model,
        spec,
        SimConfig(tau=np.array([0.05]), dt=1e-3, t_end=8.0),
    )
    red = reduce_network(two_bus_model)
    sol = solve_dynamic_shunt(red, spec)
    settle_gap = max(
        float(np.max(np.abs(trace.E_L[-1] - sol.E_L))),
        float(np.max(np.abs(trace.E_I[-1] - sol.E_I))),
        float(np.max(np.abs(trace.b_dyn[-1] - sol.b_dyn))),
    )
    settle_ok = trace.status == "converged" and settle_gap <= 1e-6

    parsed = parse_network(fig1b_path)
    stiff = simulate(parsed.model, parsed.spec, parsed.sim)
    weak_model = dataclasses.replace(parsed.model, gains=0.05 * parsed.model.gains)
    weak = simulate(weak_model, parsed.spec, parsed.sim)
    elapsed = time.perf_counter() - start
    scenario_ok = stiff.status == "converged" and weak.status == "collapsed"
    ok = settle_ok and scenario_ok and elapsed < 30.0
    announce(
        capsys,
        7,
        f"dynamic-shunt settling gap {settle_gap:.2e} ({trace.status}); "
        f"disturbance scenario stiff={stiff.status} weak={weak.status}; "
        f"{elapsed:.1f}s",
        ok,
    )
    assert settle_ok
    assert scenario_ok
    assert elapsed < 30.0


def test_criterion_8_distance_rule_matches_matrix_form(capsys):
    rng = np.random.default_rng(808)
    worst = 0.0
    for _ in range(50):
        model = random_network(rng)
        blocks = build_susceptance(model)
        direct = high_gain_limit(blocks)
        double_sum = distance_sharing_matrix(blocks, effective_reactances(blocks))
        scale = max(1.0, float(np.max(np.abs(direct))))
        worst = max(worst, float(np.max(np.abs(direct - double_sum))) / scale)
    ok = worst <= 1e-12
    announce(
        capsys,
        8,
        f"electrical-distance double sum vs matrix inverse on 50 networks: "
        f"max gap {worst:.2e}",
        ok,
    )
    assert worst <= 1e-12


def test_newton_starts_all_converge_to_the_closed_form_point():
    # the high-voltage equilibrium is unique: random positive initializations
    # of the generic solver all land on the closed-form point
    rng = np.random.default_rng(909)
    model = random_network(rng, n=4, m=3)
    red = reduce_network(model)
    spec = random_zi_loads(rng, red, current_fraction=0.5)
    target = solve_zi(red, spec).E_L
    for _ in range(50):
        x0 = red.E_load_open * rng.uniform(0.6, 1.4, size=red.n_loads)
        sol = solve_newton(red, spec, x0=x0)
        assert np.max(np.abs(sol.E_L - target)) <= 1e-8

    # extreme starts may be refused by the collapse guard, but the solver
    # never silently returns a second fixed point
    from qdroop import VoltageCollapseError

    for _ in range(50):
        x0 = rng.uniform(0.2, 3.0, size=red.n_loads)
        try:
            sol = solve_newton(red, spec, x0=x0)
        except VoltageCollapseError:
            continue
        assert np.max(np.abs(sol.E_L - target)) <= 1e-8

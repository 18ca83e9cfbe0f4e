import numpy as np
import pytest

from qdroop import (
    AlgebraicSingularityError,
    analyze,
    build_susceptance,
    certify_hurwitz,
    dynamic_shunt_spectrum,
    full_dae_spectrum,
    load_jacobian,
    reduce_network,
    reduced_jacobian,
    solve_dynamic_shunt,
    solve_newton,
    solve_zi,
    sufficient_condition,
)
from qdroop import loads

from conftest import random_network, random_zi_loads


def solve_random_zi(rng):
    red = reduce_network(random_network(rng))
    spec = random_zi_loads(rng, red)
    return red, spec, solve_zi(red, spec)


def test_two_bus_margin_and_gep(two_bus_model):
    red = reduce_network(two_bus_model)
    spec = loads.zi(np.array([-0.1]))
    sol = solve_zi(red, spec)
    report = analyze(red, spec, sol.E_L, sol.E_I, tau=np.array([0.05]))
    assert report.hurwitz
    assert report.margin == pytest.approx(-0.5, abs=1e-12)
    assert report.sufficient == "true"
    # reduced-network pencil eigenvalue: -1.0909... * (11/12) / 0.05
    assert report.gep_spectrum[0] == pytest.approx(-20.0, abs=1e-9)
    assert report.consistent is True


def test_jacobian_identity_at_zi_point():
    # at a shunt/current equilibrium the Jacobian collapses to [E](B_red+[b])
    rng = np.random.default_rng(41)
    for _ in range(20):
        red, spec, sol = solve_random_zi(rng)
        J = reduced_jacobian(red, spec, sol.E_L)
        ref = np.diag(sol.E_L) @ (red.B_red + np.diag(spec.b_shunt))
        assert np.max(np.abs(J - ref)) <= 1e-12 * max(1.0, np.abs(ref).max())


def test_sufficient_condition_implies_hurwitz():
    rng = np.random.default_rng(43)
    checked = 0
    for _ in range(60):
        red, spec, sol = solve_random_zi(rng)
        verdict = sufficient_condition(red, spec, sol.E_L)
        J = reduced_jacobian(red, spec, sol.E_L)
        hurwitz, _ = certify_hurwitz(J)
        if verdict == "true":
            checked += 1
            assert hurwitz
    assert checked > 0


def test_sufficient_condition_inapplicable_for_rising_demand(two_bus_model):
    # a positive load slope (capacitive current term) voids the comparison
    red = reduce_network(two_bus_model)
    spec = loads.zi(np.array([-0.05]), np.array([0.3]))
    sol = solve_newton(red, spec)
    assert sufficient_condition(red, spec, sol.E_L) == "inapplicable"


def test_sufficient_condition_false_near_fold(two_bus_model):
    # scalar boundary: b + Q/E^2 - B_red = 0 crosses zero at |Q| = 0.1,
    # before the fold at 0.104167, so just below the fold the test says false
    # while the point is still (barely) stable
    red = reduce_network(two_bus_model)
    spec = loads.zip_load(np.array([-0.1]), np.array([0.0]), np.array([-0.104]))
    sol = solve_newton(red, spec)
    assert sufficient_condition(red, spec, sol.E_L) == "false"
    assert certify_hurwitz(reduced_jacobian(red, spec, sol.E_L))[0]


def test_full_dae_spectrum_matches_reduced_verdict():
    rng = np.random.default_rng(47)
    for _ in range(30):
        red, spec, sol = solve_random_zi(rng)
        m = red.gains.shape[0]
        tau = rng.uniform(0.01, 0.2, size=m)
        gep = full_dae_spectrum(red, spec, sol.E_L, sol.E_I, tau=tau)
        J = reduced_jacobian(red, spec, sol.E_L)
        hurwitz, margin = certify_hurwitz(J)
        if abs(margin) > 1e-8:
            assert (gep.max() < 0) == hurwitz
        # time constants scale rates, never signs
        gep10 = full_dae_spectrum(red, spec, sol.E_L, sol.E_I, tau=10 * tau)
        assert np.all(np.sign(gep10) == np.sign(gep))


def test_dae_matrix_inverter_block_at_equilibrium():
    # the droop rows linearize to B_II + K once E_I solves the fixed point
    rng = np.random.default_rng(53)
    for _ in range(10):
        red, spec, sol = solve_random_zi(rng)
        blocks = red.blocks
        E = np.concatenate([sol.E_L, sol.E_I])
        B = blocks.full
        D_I = red.gains * (2 * sol.E_I - red.setpoints)
        M_II = blocks.B_II + np.diag((B @ E)[len(sol.E_L):] + D_I) / np.diag(
            np.diag(sol.E_I)
        )
        ref = blocks.B_II + np.diag(red.gains)
        assert np.max(np.abs(M_II - ref)) <= 1e-9


def test_margin_shrinks_along_loading_ramp(two_bus_model):
    red = reduce_network(two_bus_model)
    margins = []
    for q in np.linspace(0.01, 0.12, 12):
        spec = loads.constant_power(np.array([-q]))
        sol = solve_newton(red, spec)
        J = reduced_jacobian(red, spec, sol.E_L)
        margins.append(certify_hurwitz(J)[1])
    diffs = np.diff(margins)
    assert np.all(diffs >= -1e-12)  # margin rises toward zero monotonically
    assert margins[-1] > margins[0]
    assert margins[-1] < 0


def test_algebraic_singularity_is_reported(two_bus_model):
    red = reduce_network(two_bus_model)
    # at E_L = I/... choose a state where M_LL = B_LL + ([BE] + D)/[E] vanishes:
    # B_LL = -1; need (BE + D)/E = 1 with D = 2 b E; BE = -E + E_I
    # pick E = 0.5, b = -0.1: BE + D = -0.5 + E_I - 0.1; set E_I = 1.1 -> M_LL = 0
    spec = loads.zi(np.array([-0.1]))
    with pytest.raises(AlgebraicSingularityError):
        full_dae_spectrum(
            red, spec, np.array([0.5]), np.array([1.1]), tau=np.array([0.05])
        )


def test_dynamic_shunt_spectrum_limits(two_bus_model):
    red = reduce_network(two_bus_model)
    # vanishing demand: inverter mode matches the static pencil, shunt mode -> -E^2/T
    spec = loads.dynamic_shunt(np.array([-1e-10]), 0.4)
    sol = solve_dynamic_shunt(red, spec)
    eigs = dynamic_shunt_spectrum(
        red, spec, sol.E_L, sol.E_I, sol.b_dyn, tau=np.array([0.05])
    )
    assert len(eigs) == 2
    static = full_dae_spectrum(
        red, loads.zi(np.zeros(1)), sol.E_L, sol.E_I, tau=np.array([0.05])
    )
    expected = sorted([static[0], -sol.E_L[0] ** 2 / 0.4])
    assert sorted(np.real(eigs)) == pytest.approx(expected, rel=1e-4)
    assert np.max(np.abs(np.imag(eigs))) <= 1e-9


def test_dynamic_shunt_spectrum_counts_active_states(two_bus_model):
    red = reduce_network(two_bus_model)
    spec = loads.dynamic_shunt(np.array([-0.05]), 0.4)
    sol = solve_dynamic_shunt(red, spec)
    eigs = dynamic_shunt_spectrum(
        red, spec, sol.E_L, sol.E_I, sol.b_dyn, tau=np.array([0.05])
    )
    assert len(eigs) == 2  # one inverter + one active shunt state
    assert np.all(np.real(eigs) < 0)


def test_analyze_reports_ds_spectrum(two_bus_model):
    red = reduce_network(two_bus_model)
    spec = loads.dynamic_shunt(np.array([-0.05]), 0.4)
    sol = solve_dynamic_shunt(red, spec)
    report = analyze(red, spec, sol.E_L, sol.E_I, b_dyn=sol.b_dyn, tau=np.array([0.05]))
    assert report.ds_spectrum is not None
    assert report.hurwitz

#!/usr/bin/env python3
"""Trace the high-voltage operating point of a two-bus grid up to its fold.

Sweeps the constant-power demand of a single load fed by one inverter and
follows the Newton solution until the solver diagnoses voltage collapse.
Along the way the perturbative (first-order) estimate is plotted against the
exact branch, showing the quadratic growth of its error, and the closed-form
impedance-load and dynamic-shunt points are cross-checked.
"""

import logging
import pathlib

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from qdroop import (
    Branch,
    HeavyLoadingError,
    NetworkModel,
    VoltageCollapseError,
    reduce_network,
    solve_dynamic_shunt,
    solve_newton,
    solve_zi,
    solve_zip_perturbative,
)
from qdroop import loads

logger = logging.getLogger(__name__)
OUT = pathlib.Path(__file__).resolve().parent / "output"


def main() -> None:
    model = NetworkModel(
        n_loads=1,
        n_inverters=1,
        branches=(Branch(0, 1, 1.0),),
        gains=np.array([-1.0]),
        setpoints=np.array([1.0]),
    )
    red = reduce_network(model)

    zi = solve_zi(red, loads.zi(np.array([-0.1])))
    logger.info("impedance load closed form: E_L = %.6f (5/6 = %.6f)",
                zi.E_L[0], 5 / 6)

    ds = solve_dynamic_shunt(red, loads.dynamic_shunt(np.array([-0.05]), 0.4))
    logger.info("dynamic shunt steady state: E_L = %.6f, b_dyn = %.6f",
                ds.E_L[0], ds.b_dyn[0])

    # sweep the constant-power demand toward the fold at |Q| = 1/8
    Q_grid = np.linspace(0.0, 0.14, 141)[1:]
    exact, first = [], []
    for Qm in Q_grid:
        spec = loads.constant_power(np.array([-Qm]))
        try:
            sol = solve_newton(red, spec)
        except VoltageCollapseError:
            logger.info("collapse diagnosed at |Q| = %.4f (fold at 0.1250)", Qm)
            Q_grid = Q_grid[: len(exact)]
            break
        exact.append(sol.E_L[0])
        # first-order perturbative estimate for the same demand; it refuses
        # service once the normalized loading reaches its validity bound
        try:
            approx = solve_zip_perturbative(red, spec)
        except HeavyLoadingError:
            first.append(np.nan)
        else:
            first.append(approx.E_L_first_order[0])

    exact = np.array(exact)
    first = np.array(first)

    OUT.mkdir(exist_ok=True)
    fig, (ax0, ax1) = plt.subplots(1, 2, figsize=(9, 3.4))
    ax0.plot(Q_grid, exact, label="exact high branch", lw=2)
    ax0.plot(Q_grid, first, "--", label="first-order estimate")
    ax0.axvline(0.125, color="crimson", ls=":", label="fold $|Q|=1/8$")
    ax0.set_xlabel("constant-power demand $|Q|$")
    ax0.set_ylabel("load voltage")
    ax0.legend(fontsize=8)
    ax0.set_title("operating point vs demand")

    ax1.loglog(Q_grid, np.abs(first - exact), lw=2)
    ref = Q_grid ** 2 * np.abs(first - exact)[10] / Q_grid[10] ** 2
    ax1.loglog(Q_grid, ref, "--", c="gray", label=r"slope 2 reference")
    ax1.set_xlabel("constant-power demand $|Q|$")
    ax1.set_ylabel("first-order error")
    ax1.legend(fontsize=8)
    ax1.set_title("quadratic error of the estimate")
    fig.tight_layout()
    target = OUT / "02_operating_points.png"
    fig.savefig(target, dpi=130)
    logger.info("wrote %s", target)


if __name__ == "__main__":
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    main()

#!/usr/bin/env python3
"""The closed-loop equilibrium is the minimum of a network cost.

For impedance loads the droop equilibrium coincides with the unique
minimizer of a convex cost: branch losses, plus delivered load power, plus a
gain-weighted penalty on set-point deviations. The demo solves the two-bus
equilibrium, verifies it against projected gradient descent started from
random points, and draws the cost landscape with the equilibrium sitting at
its bottom.
"""

import logging
import pathlib

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from qdroop import (
    Branch,
    NetworkModel,
    evaluate_cost,
    reduce_network,
    solve_zi,
    verify_optimality,
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
    b_shunt = np.array([-0.1])
    red = reduce_network(model)
    sol = solve_zi(red, loads.zi(b_shunt))
    E = np.concatenate([sol.E_L, sol.E_I])

    cost = evaluate_cost(model, b_shunt, E)
    logger.info("equilibrium: E_L = %.6f, E_I = %.6f", sol.E_L[0], sol.E_I[0])
    logger.info(
        "cost terms: losses %.6f + load %.6f + deviation %.6f = %.6f (1/12 = %.6f)",
        cost.Q_loss, cost.Q_load, cost.C_volt, cost.C_total, 1 / 12,
    )

    verdict = verify_optimality(model, b_shunt, sol.E_L, sol.E_I)
    logger.info(
        "independent minimization: %s (gap %.2e, gradient %.2e)",
        verdict.status, verdict.minimizer_gap, verdict.gradient_norm,
    )

    grid = np.linspace(0.55, 1.15, 121)
    EL, EI = np.meshgrid(grid, grid)
    C = np.empty_like(EL)
    for i in range(EL.shape[0]):
        for j in range(EL.shape[1]):
            C[i, j] = evaluate_cost(
                model, b_shunt, np.array([EL[i, j], EI[i, j]])
            ).C_total

    OUT.mkdir(exist_ok=True)
    fig, ax = plt.subplots(figsize=(5.4, 4.4))
    cs = ax.contour(EL, EI, C, levels=18, cmap="viridis")
    ax.clabel(cs, inline=True, fontsize=6, fmt="%.3f")
    ax.plot(sol.E_L[0], sol.E_I[0], "r*", ms=14, label="droop equilibrium")
    ax.set_xlabel("load voltage $E_L$")
    ax.set_ylabel("inverter voltage $E_I$")
    ax.legend(fontsize=8)
    ax.set_title("network cost landscape")
    fig.tight_layout()
    target = OUT / "05_cost_minimization.png"
    fig.savefig(target, dpi=130)
    logger.info("wrote %s", target)


if __name__ == "__main__":
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    main()

#!/usr/bin/env python3
"""Reduce a small microgrid onto its load buses.

Builds a six-bus network (four loads, two inverters), eliminates the
inverter buses through the controller-augmented Schur complement and prints
the properties that make the reduced model trustworthy: the reduced matrix
is again an (negated) M-matrix, the accompanying weight matrices are
row-stochastic, and the open-circuit load voltages sit inside the hull of
the inverter set points.
"""

import logging
import pathlib

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from qdroop import Branch, NetworkModel, check_reduced_properties, reduce_network

logger = logging.getLogger(__name__)
OUT = pathlib.Path(__file__).resolve().parent / "output"


def build_model() -> NetworkModel:
    # a short feeder chain with two inverters hanging off its ends
    branches = (
        Branch(0, 1, 1.2),
        Branch(1, 2, 0.9),
        Branch(2, 3, 1.1),
        Branch(0, 4, 2.0),   # load1 -- inv1
        Branch(3, 5, 1.5),   # load4 -- inv2
    )
    return NetworkModel(
        n_loads=4,
        n_inverters=2,
        branches=branches,
        gains=np.array([-2.0, -1.0]),
        setpoints=np.array([1.02, 0.98]),
    )


def main() -> None:
    model = build_model()
    red = reduce_network(model)

    np.set_printoptions(precision=4, suppress=True)
    logger.info("reduced susceptance matrix B_red:\n%s", red.B_red)
    logger.info("load weight matrix row sums: %s", red.W_load.sum(axis=1))
    logger.info("open-circuit load voltages:  %s", red.E_load_open)
    logger.info(
        "set-point hull: [%.4f, %.4f]",
        model.setpoints.min(),
        model.setpoints.max(),
    )

    report = check_reduced_properties(red)
    logger.info("structural checks:\n%s", report)

    OUT.mkdir(exist_ok=True)
    fig, (ax0, ax1) = plt.subplots(1, 2, figsize=(9, 3.4))
    im = ax0.imshow(red.B_red, cmap="RdBu", vmin=-np.abs(red.B_red).max(),
                    vmax=np.abs(red.B_red).max())
    ax0.set_title("reduced susceptance $B_{red}$")
    ax0.set_xticks(range(4), [f"l{k+1}" for k in range(4)])
    ax0.set_yticks(range(4), [f"l{k+1}" for k in range(4)])
    fig.colorbar(im, ax=ax0, shrink=0.85)

    ax1.bar(range(4), red.E_load_open, color="steelblue")
    ax1.axhline(model.setpoints.min(), ls="--", c="gray", lw=1)
    ax1.axhline(model.setpoints.max(), ls="--", c="gray", lw=1)
    ax1.set_ylim(0.9, 1.05)
    ax1.set_title("open-circuit voltages inside the set-point hull")
    ax1.set_xticks(range(4), [f"l{k+1}" for k in range(4)])
    fig.tight_layout()
    target = OUT / "01_network_reduction.png"
    fig.savefig(target, dpi=130)
    logger.info("wrote %s", target)


if __name__ == "__main__":
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    main()

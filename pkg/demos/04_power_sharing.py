#!/usr/bin/env python3
"""How droop gain stiffness decides who supplies the load.

One load is fed by two inverters over branches of different susceptance but
with identical droop gains. Stiff controllers split the demand by electrical
distance (the stronger line carries more); soft controllers split it in
proportion to the gains (here equally), no matter the topology. Sweeping a
common scale factor on the gains moves the network continuously between the
two rules.
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
    build_susceptance,
    high_gain_limit,
    low_gain_matrix,
    sharing_matrix,
)

logger = logging.getLogger(__name__)
OUT = pathlib.Path(__file__).resolve().parent / "output"


def main() -> None:
    model = NetworkModel(
        n_loads=1,
        n_inverters=2,
        branches=(Branch(0, 1, 2.0), Branch(0, 2, 1.0)),
        gains=np.array([-1.0, -1.0]),
        setpoints=np.array([1.0, 1.0]),
    )
    blocks = build_susceptance(model)
    S_high = high_gain_limit(blocks)
    S_low = low_gain_matrix(model.gains, model.n_loads)
    logger.info("distance rule (stiff):      %s", S_high.ravel())
    logger.info("proportional rule (soft):   %s", S_low.ravel())

    scales = np.logspace(-4, 6, 51)
    share_of_first = []
    for eps in scales:
        S = sharing_matrix(blocks, model.gains, gain_scale=float(eps))
        share_of_first.append(S[0, 0] / S.sum(axis=0)[0])
    share_of_first = np.array(share_of_first)

    OUT.mkdir(exist_ok=True)
    fig, ax = plt.subplots(figsize=(6.4, 3.8))
    ax.semilogx(scales, share_of_first, lw=2)
    ax.axhline(2 / 3, color="crimson", ls="--",
               label="distance rule: 2/3 on the strong line")
    ax.axhline(1 / 2, color="darkorange", ls="--",
               label="proportional rule: equal gains, 1/2 each")
    ax.set_xlabel("common gain scale")
    ax.set_ylabel("share of inverter 1")
    ax.set_ylim(0.45, 0.72)
    ax.legend(fontsize=8)
    ax.set_title("load pickup between the soft- and stiff-gain limits")
    fig.tight_layout()
    target = OUT / "04_power_sharing.png"
    fig.savefig(target, dpi=130)
    logger.info("wrote %s", target)


if __name__ == "__main__":
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    main()

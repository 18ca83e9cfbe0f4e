import pathlib

import numpy as np
import pytest

from qdroop import Branch, NetworkModel, reduce_network
from qdroop import loads

NETWORKS = pathlib.Path(__file__).resolve().parent.parent / "networks"


@pytest.fixture
def two_bus_path():
    return str(NETWORKS / "two_bus.net")


@pytest.fixture
def fig1b_path():
    return str(NETWORKS / "fig1b.net")


@pytest.fixture
def two_bus_model():
    return NetworkModel(
        n_loads=1,
        n_inverters=1,
        branches=(Branch(0, 1, 1.0),),
        gains=np.array([-1.0]),
        setpoints=np.array([1.0]),
    )


@pytest.fixture
def star_model():
    # one load fed by two inverters over branches of susceptance 2 and 1
    return NetworkModel(
        n_loads=1,
        n_inverters=2,
        branches=(Branch(0, 1, 2.0), Branch(0, 2, 1.0)),
        gains=np.array([-1.0, -1.0]),
        setpoints=np.array([1.0, 1.0]),
    )


def random_network(rng, n=None, m=None):
    """Random connected network with negative gains and near-unit set points."""
    n = int(rng.integers(1, 11)) if n is None else n
    m = int(rng.integers(1, 11)) if m is None else m
    N = n + m
    branches = []
    # random spanning tree, then a few chords
    order = rng.permutation(N)
    for k in range(1, N):
        i = int(order[k])
        j = int(order[rng.integers(0, k)])
        branches.append(Branch(i, j, float(rng.uniform(0.5, 2.0))))
    existing = {(min(br.i, br.j), max(br.i, br.j)) for br in branches}
    for _ in range(int(rng.integers(0, N))):
        i, j = rng.integers(0, N, size=2)
        key = (int(min(i, j)), int(max(i, j)))
        if i != j and key not in existing:
            existing.add(key)
            branches.append(Branch(key[0], key[1], float(rng.uniform(0.5, 2.0))))
    return NetworkModel(
        n_loads=n,
        n_inverters=m,
        branches=tuple(branches),
        gains=-rng.uniform(0.5, 3.0, size=m),
        setpoints=rng.uniform(0.95, 1.05, size=m),
    )


def random_zi_loads(rng, red, current_fraction=0.8):
    """Inductive ZI loads that satisfy both closed-form hypotheses.

    Shunts keep B_red + [b] negative definite (adding nonpositive diagonal
    entries preserves it), and currents sit strictly above the open-circuit
    injection floor.
    """
    n = red.B_red.shape[0]
    b_shunt = -rng.uniform(0.0, 0.3, size=n)
    floor = red.B_red @ red.E_load_open
    I_shunt = rng.uniform(0.0, current_fraction, size=n) * floor
    return loads.zi(b_shunt, I_shunt)

"""Shared test helpers: uniform-op topologies and small seeded samples."""

import numpy as np
import pytest

from msnas.search_space import (
    NUM_EDGES,
    CellTopology,
    Layout,
    OpKind,
    Topology,
    sample_random,
)


def uniform_topology(op: OpKind, layout: Layout = Layout.STAGE_WISE) -> Topology:
    cell = CellTopology((op,) * NUM_EDGES)
    return Topology(layout=layout, cells=(cell,) * layout.num_cells)


def random_topologies(seed: int, n: int, layout: Layout = Layout.STAGE_WISE):
    rng = np.random.default_rng(seed)
    return [sample_random(int(rng.integers(2**63)), layout) for _ in range(n)]


@pytest.fixture
def all_none():
    return uniform_topology(OpKind.NONE)


@pytest.fixture
def all_conv():
    return uniform_topology(OpKind.SEPCONV3X3)

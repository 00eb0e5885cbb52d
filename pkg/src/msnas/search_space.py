"""Densely-connected convolutional cell search space.

A cell is a DAG over 6 nodes: nodes 0 and 1 are inputs, nodes 2..5 are
internal.  Every forward edge into an internal node is admissible, giving
exactly 14 edges per cell, and each edge carries one of 4 operations.
A topology assigns ops to every edge of every cell, either independently
per cell position (cell-wise, 8 cells) or shared per stage (stage-wise,
4 distinct cells: S0, S1, S2 and the reduction cell R).
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

__all__ = [
    "OpKind",
    "Layout",
    "CellTopology",
    "Topology",
    "TopologyFeatures",
    "TopologySchemaError",
    "admissible_edges",
    "sample_random",
    "mutate",
    "edit_distance",
    "space_size",
    "SpaceSize",
    "serialize",
    "deserialize",
    "features",
    "NUM_EDGES",
    "STAGE_CELL_NAMES",
]


class OpKind(Enum):
    """Edge operations.  NONE encodes an absent edge."""

    NONE = "none"
    SKIP = "skip"
    SEPCONV3X3 = "sep_conv_3x3"
    RES_SEPCONV3X3 = "res_sep_conv_3x3"

    @property
    def is_conv(self) -> bool:
        return self in (OpKind.SEPCONV3X3, OpKind.RES_SEPCONV3X3)


#: Fixed op order used for sampling, mutation and hashing.
OPS: tuple[OpKind, ...] = tuple(OpKind)
_OP_BY_NAME = {op.value: op for op in OPS}


class Layout(Enum):
    CELL_WISE = "cell_wise"
    STAGE_WISE = "stage_wise"

    @property
    def num_cells(self) -> int:
        return 8 if self is Layout.CELL_WISE else 4


#: Names of the 4 distinct stage-wise cells, in storage order.
STAGE_CELL_NAMES = ("S0", "S1", "S2", "R")

NUM_NODES = 6
INPUT_NODES = (0, 1)
INTERNAL_NODES = (2, 3, 4, 5)

# Canonical edge order: grouped by target node, source ascending.
_EDGES: tuple[tuple[int, int], ...] = tuple(
    (u, v) for v in INTERNAL_NODES for u in range(v)
)
NUM_EDGES = len(_EDGES)  # 14


class TopologySchemaError(ValueError):
    """Raised when a topology document violates the schema."""


def admissible_edges() -> tuple[tuple[int, int], ...]:
    """All 14 admissible ``(from, to)`` edges in canonical order."""
    return _EDGES


@dataclass(frozen=True)
class CellTopology:
    """Op assignment for the 14 admissible edges, in canonical edge order."""

    ops: tuple[OpKind, ...]

    def __post_init__(self) -> None:
        if len(self.ops) != NUM_EDGES:
            raise TopologySchemaError(
                f"cell must assign exactly {NUM_EDGES} edges, got {len(self.ops)}"
            )
        for op in self.ops:
            if not isinstance(op, OpKind):
                raise TopologySchemaError(f"not an OpKind: {op!r}")

    @property
    def edge_ops(self) -> dict[tuple[int, int], OpKind]:
        return dict(zip(_EDGES, self.ops))

    def replace_op(self, edge_index: int, op: OpKind) -> "CellTopology":
        ops = list(self.ops)
        ops[edge_index] = op
        return CellTopology(tuple(ops))


@dataclass(frozen=True)
class Topology:
    """A full architecture: a layout plus its distinct cells.

    ``id`` is a stable content hash; two topologies with identical cells and
    layout always share it.
    """

    layout: Layout
    cells: tuple[CellTopology, ...]
    id: str = field(init=False, compare=False, repr=True)

    def __post_init__(self) -> None:
        if len(self.cells) != self.layout.num_cells:
            raise TopologySchemaError(
                f"{self.layout.value} layout requires {self.layout.num_cells} "
                f"cells, got {len(self.cells)}"
            )
        payload = self.layout.value + "|" + ";".join(
            ",".join(op.value for op in cell.ops) for cell in self.cells
        )
        digest = hashlib.sha256(payload.encode("ascii")).hexdigest()[:16]
        object.__setattr__(self, "id", digest)


@dataclass(frozen=True)
class SpaceSize:
    exact: int
    log10: float


def space_size(layout: Layout) -> SpaceSize:
    """Exact cardinality of the space: 4 ops per edge, 14 edges per cell."""
    n_edges = NUM_EDGES * layout.num_cells
    return SpaceSize(exact=4**n_edges, log10=n_edges * math.log10(4))


def sample_random(rng_seed: int, layout: Layout) -> Topology:
    """Uniform topology: each edge op drawn independently from the 4 kinds."""
    rng = np.random.default_rng(rng_seed)
    draws = rng.integers(0, len(OPS), size=(layout.num_cells, NUM_EDGES))
    cells = tuple(
        CellTopology(tuple(OPS[int(i)] for i in row)) for row in draws
    )
    return Topology(layout=layout, cells=cells)


def mutate(topology: Topology, rng_seed: int) -> Topology:
    """Single-edit mutation: one uniformly chosen edge of one uniformly
    chosen cell is flipped to one of the 3 other ops."""
    rng = np.random.default_rng(rng_seed)
    ci = int(rng.integers(len(topology.cells)))
    ei = int(rng.integers(NUM_EDGES))
    old = topology.cells[ci].ops[ei]
    alternatives = [op for op in OPS if op is not old]
    new = alternatives[int(rng.integers(len(alternatives)))]
    cells = list(topology.cells)
    cells[ci] = cells[ci].replace_op(ei, new)
    return Topology(layout=topology.layout, cells=tuple(cells))


def edit_distance(a: Topology, b: Topology) -> int:
    """Number of edge assignments on which two same-layout topologies differ."""
    if a.layout is not b.layout:
        raise ValueError("edit distance requires matching layouts")
    return sum(
        op_a is not op_b
        for ca, cb in zip(a.cells, b.cells)
        for op_a, op_b in zip(ca.ops, cb.ops)
    )


def serialize(topology: Topology) -> str:
    """One JSON document per topology, edges in canonical order."""
    doc = {
        "layout": topology.layout.value,
        "cells": [
            [
                {"from": u, "to": v, "op": op.value}
                for (u, v), op in zip(_EDGES, cell.ops)
            ]
            for cell in topology.cells
        ],
    }
    return json.dumps(doc, indent=2, sort_keys=True)


def deserialize(text: str) -> Topology:
    """Parse a topology document, validating layout, cell count, edge order
    and op names.  Raises TopologySchemaError naming the offending field."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise TopologySchemaError(f"not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise TopologySchemaError("document root must be an object")
    layout_name = doc.get("layout")
    try:
        layout = Layout(layout_name)
    except ValueError:
        raise TopologySchemaError(f"unknown layout: {layout_name!r}") from None
    cells_doc = doc.get("cells")
    if not isinstance(cells_doc, list):
        raise TopologySchemaError("'cells' must be a list")
    if len(cells_doc) != layout.num_cells:
        raise TopologySchemaError(
            f"layout {layout.value} requires {layout.num_cells} cells, "
            f"document has {len(cells_doc)}"
        )
    cells = []
    for c_i, cell_doc in enumerate(cells_doc):
        if not isinstance(cell_doc, list) or len(cell_doc) != NUM_EDGES:
            raise TopologySchemaError(
                f"cell {c_i}: expected a list of {NUM_EDGES} edge records"
            )
        ops = []
        for e_i, (edge, rec) in enumerate(zip(_EDGES, cell_doc)):
            if not isinstance(rec, dict):
                raise TopologySchemaError(f"cell {c_i} edge {e_i}: not an object")
            got = (rec.get("from"), rec.get("to"))
            if got != edge:
                raise TopologySchemaError(
                    f"cell {c_i} edge {e_i}: expected edge {edge}, got {got}"
                )
            op_name = rec.get("op")
            op = _OP_BY_NAME.get(op_name)
            if op is None:
                raise TopologySchemaError(
                    f"cell {c_i} edge {e_i}: unknown op name {op_name!r}"
                )
            ops.append(op)
        cells.append(CellTopology(tuple(ops)))
    return Topology(layout=layout, cells=tuple(cells))


@dataclass(frozen=True)
class TopologyFeatures:
    """Cheap structural descriptors over all distinct cells of a topology."""

    op_counts: dict[OpKind, int]
    edge_density: float  # fraction of edges that are not NONE
    conv_fraction: float  # fraction of edges carrying a convolution op


def features(topology: Topology) -> TopologyFeatures:
    counts = {op: 0 for op in OPS}
    for cell in topology.cells:
        for op in cell.ops:
            counts[op] += 1
    total = NUM_EDGES * len(topology.cells)
    non_none = total - counts[OpKind.NONE]
    n_conv = counts[OpKind.SEPCONV3X3] + counts[OpKind.RES_SEPCONV3X3]
    return TopologyFeatures(
        op_counts=counts,
        edge_density=non_none / total,
        conv_fraction=n_conv / total,
    )

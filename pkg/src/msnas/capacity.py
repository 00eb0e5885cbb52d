"""Analytic FLOPs cost model and capacity-targeted channel solving.

One FLOP is one multiply-accumulate.  The macro skeleton is fixed: a 3x3
stem convolution, ``num_cells`` cells with stride-2 reductions at the given
positions (width doubles there), and a global-average-pool + linear
classifier.  Inside a cell both inputs are first projected to the stage
width by 1x1 convolutions; internal nodes sum their inputs and the cell
output concatenates the 4 internal nodes.

Per-edge op costs (H, W = output spatial size, C = stage width):
  - full conv:        H * W * k^2 * C_in * C_out
  - depthwise conv:   H * W * k^2 * C
  - pointwise conv:   H * W * C_in * C_out
  - SEPCONV3X3:       two rounds of depthwise 3x3 + pointwise
  - RES_SEPCONV3X3:   SEPCONV3X3 plus an elementwise add (H * W * C)
  - SKIP:             free, except a 1x1 projection on stride-2 edges
  - NONE:             free
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace
from typing import Callable

from .search_space import (
    CellTopology,
    Layout,
    OpKind,
    Topology,
    admissible_edges,
)

__all__ = [
    "MacroConfig",
    "ConfigurationError",
    "flops_total",
    "solve_channels",
    "capacity_profile",
    "DEFAULT_MACRO",
]


class ConfigurationError(ValueError):
    """Raised for inconsistent macro-skeleton configurations."""


@dataclass(frozen=True)
class MacroConfig:
    """Macro skeleton: everything about the network except the cells."""

    init_channels: int
    num_cells: int = 8
    reduction_positions: tuple[int, ...] = (2, 5)
    input_resolution: int = 32
    num_classes: int = 10
    stem_kernel: int = 3
    input_channels: int = 3

    def __post_init__(self) -> None:
        if self.init_channels < 1:
            raise ConfigurationError("init_channels must be a positive integer")
        if self.num_cells < 1:
            raise ConfigurationError("num_cells must be positive")
        for p in self.reduction_positions:
            if not 0 <= p < self.num_cells:
                raise ConfigurationError(
                    f"reduction position {p} outside [0, {self.num_cells})"
                )
        if len(set(self.reduction_positions)) != len(self.reduction_positions):
            raise ConfigurationError("duplicate reduction positions")
        divisor = 2 ** len(self.reduction_positions)
        if self.input_resolution % divisor != 0:
            raise ConfigurationError(
                f"input_resolution {self.input_resolution} not divisible by "
                f"{divisor} (one halving per reduction)"
            )


DEFAULT_MACRO = MacroConfig(init_channels=44)

_EDGES = admissible_edges()


def _unrolled_cells(
    topology: Topology, macro: MacroConfig
) -> list[tuple[CellTopology, bool]]:
    """Cells in network order as (cell, is_reduction) pairs."""
    reductions = set(macro.reduction_positions)
    if topology.layout is Layout.CELL_WISE:
        if macro.num_cells != len(topology.cells):
            raise ConfigurationError(
                f"cell-wise topology has {len(topology.cells)} cells but "
                f"macro expects {macro.num_cells}"
            )
        return [(cell, i in reductions) for i, cell in enumerate(topology.cells)]
    # Stage-wise: cells are (S0, S1, S2, R); stage index = reductions passed.
    if len(macro.reduction_positions) != 2:
        raise ConfigurationError(
            "stage-wise layout requires exactly 2 reduction positions"
        )
    s0, s1, s2, red = topology.cells
    stage_cells = (s0, s1, s2)
    out = []
    stage = 0
    for i in range(macro.num_cells):
        if i in reductions:
            out.append((red, True))
            stage += 1
        else:
            out.append((stage_cells[stage], False))
    return out


def flops_total(topology: Topology, macro: MacroConfig) -> float:
    """Total forward-pass FLOPs of the assembled network, in MFLOPs."""
    c = macro.init_channels
    r = macro.input_resolution
    total = (
        r * r * macro.stem_kernel**2 * macro.input_channels * c
    )  # stem conv, stride 1
    # Channels/resolution of the two skip inputs; both start at the stem.
    ch_pp, res_pp = c, r
    ch_p, res_p = c, r
    w = c
    for cell, is_red in _unrolled_cells(topology, macro):
        if is_red:
            w *= 2
        r_in = res_p
        r_int = r_in // 2 if is_red else r_in
        # 1x1 input projections to the stage width, counted at r_in.
        total += r_in * r_in * (ch_pp + ch_p) * w
        for (u, _v), op in zip(_EDGES, cell.ops):
            strided = is_red and u in (0, 1)
            area = r_int * r_int
            if op is OpKind.NONE:
                continue
            if op is OpKind.SKIP:
                if strided:
                    total += area * w * w  # 1x1 projection across the stride
                continue
            # SEPCONV3X3 and its residual variant.
            total += 2 * area * (9 * w + w * w)
            if op is OpKind.RES_SEPCONV3X3:
                total += area * w  # residual elementwise add
        ch_pp, res_pp = ch_p, res_p
        ch_p, res_p = 4 * w, r_int
    total += 4 * w * macro.num_classes  # GAP + linear classifier
    return total / 1e6


def _argmin_channels(cost_fn: Callable[[int], float], target_mflops: float) -> int:
    """Argmin over positive integer c of |cost_fn(c) - target|, ties toward
    smaller c.  cost_fn must be strictly increasing in c."""
    if target_mflops <= 0:
        raise ValueError("target capacity must be positive")
    if cost_fn(1) >= target_mflops:
        if cost_fn(1) > target_mflops:
            warnings.warn(
                "target capacity below the c=1 network; returning c=1",
                RuntimeWarning,
                stacklevel=2,
            )
        return 1
    lo, hi = 1, 2
    while cost_fn(hi) < target_mflops:
        lo, hi = hi, hi * 2
    best_c, best_err = lo, abs(cost_fn(lo) - target_mflops)
    for cand in range(lo + 1, hi + 1):
        err = abs(cost_fn(cand) - target_mflops)
        if err < best_err:  # strict: ties keep the smaller c
            best_c, best_err = cand, err
    return best_c


def solve_channels(
    topology: Topology, target_mflops: float, macro_template: MacroConfig
) -> int:
    """Smallest-|error| init channel count aligning the topology's capacity
    with the target.  Monotone bracketing, then an exhaustive scan."""

    def cost(ch: int) -> float:
        return flops_total(topology, replace(macro_template, init_channels=ch))

    return _argmin_channels(cost, target_mflops)


def capacity_profile(
    topology: Topology,
    channel_list: tuple[int, ...] | list[int],
    macro_template: MacroConfig,
) -> list[float]:
    """Capacities (MFLOPs) of one topology across a strictly increasing
    channel list."""
    chans = list(channel_list)
    if any(b <= a for a, b in zip(chans, chans[1:])):
        raise ValueError("channel list must be strictly increasing")
    if any(ch < 1 for ch in chans):
        raise ValueError("channel counts must be positive")
    return [
        flops_total(topology, replace(macro_template, init_channels=ch))
        for ch in chans
    ]

"""FLOPs model and channel solving."""

import pytest

from msnas.capacity import (
    MacroConfig,
    _argmin_channels,
    capacity_profile,
    flops_total,
    solve_channels,
)
from msnas.evaluator import DEFAULT_CHANNELS
from msnas.search_space import Layout, OpKind

from conftest import random_topologies, uniform_topology

MACRO = MacroConfig(init_channels=44)


class TestFlopsTotal:
    def test_all_none_is_overhead_only(self, all_none):
        # stem + per-cell input projections + classifier; no edge op terms.
        # An all-SKIP topology must therefore cost strictly more.
        base = flops_total(all_none, MACRO)
        skips = flops_total(uniform_topology(OpKind.SKIP), MACRO)
        assert 0 < base < skips

    def test_width_doubling_ratio(self):
        t = random_topologies(8, 1)[0]
        for c in (16, 22, 32):
            lo = flops_total(t, MacroConfig(init_channels=c))
            hi = flops_total(t, MacroConfig(init_channels=2 * c))
            assert 3.5 <= hi / lo <= 4.0

    def test_population_spread_at_c44(self):
        # Endpoints are calibration data, reported rather than asserted:
        # uniform sampling concentrates edge density near 1/2, so a random
        # sample cannot reach the sparse/dense extremes of the space.
        topos = random_topologies(123, 200, Layout.CELL_WISE)
        macro = MacroConfig(init_channels=44)
        costs = [flops_total(t, macro) for t in topos]
        lo, hi = min(costs), max(costs)
        print(f"c=44 sample range: {lo:.0f}-{hi:.0f} MFLOPs (ratio {hi / lo:.2f})")
        assert 0 < lo < hi

    def test_conv_heavy_beats_sparse(self, all_none, all_conv):
        assert flops_total(all_conv, MACRO) > flops_total(all_none, MACRO)


class TestArgminChannels:
    def test_quadratic_toy_model(self):
        # |45^2 - 2000| = 25 beats |44^2 - 2000| = 64
        assert _argmin_channels(lambda c: float(c * c), 2000.0) == 45

    def test_tie_goes_to_smaller(self):
        # targets 12.5: c=3 err 3.5, c=4 err 3.5 -> pick 3
        assert _argmin_channels(lambda c: float(c * c), 12.5) == 3

    def test_below_c1_warns(self):
        with pytest.warns(RuntimeWarning):
            assert _argmin_channels(lambda c: float(c * c), 0.5) == 1

    def test_nonpositive_target_rejected(self):
        with pytest.raises(ValueError):
            _argmin_channels(lambda c: float(c), 0.0)


class TestSolveChannels:
    def test_exact_hit(self):
        t = random_topologies(21, 1)[0]
        target = flops_total(t, MacroConfig(init_channels=44))
        assert solve_channels(t, target, MACRO) == 44

    def test_near_target_bracket(self):
        t = random_topologies(22, 1)[0]
        c = solve_channels(t, 2000.0, MACRO)
        got = flops_total(t, MacroConfig(init_channels=c))
        below = flops_total(t, MacroConfig(init_channels=c - 1))
        above = flops_total(t, MacroConfig(init_channels=c + 1))
        assert abs(got - 2000.0) <= min(abs(below - 2000.0), abs(above - 2000.0))


class TestCapacityProfile:
    def test_strictly_increasing_conv(self, all_conv):
        prof = capacity_profile(all_conv, DEFAULT_CHANNELS, MACRO)
        assert all(b > a for a, b in zip(prof, prof[1:]))

    def test_strictly_increasing_all_none(self, all_none):
        prof = capacity_profile(all_none, DEFAULT_CHANNELS, MACRO)
        assert all(b > a for a, b in zip(prof, prof[1:]))

    def test_length_matches_channels(self):
        t = random_topologies(30, 1)[0]
        assert len(capacity_profile(t, DEFAULT_CHANNELS, MACRO)) == 8

    def test_non_increasing_list_rejected(self):
        t = random_topologies(31, 1)[0]
        with pytest.raises(ValueError):
            capacity_profile(t, (12, 12, 24), MACRO)


def test_all_none_dominates_everything():
    # the empty topology is the cheapest network at any width
    macro = MacroConfig(init_channels=24)
    base = flops_total(uniform_topology(OpKind.NONE), macro)
    for t in random_topologies(77, 30):
        assert flops_total(t, macro) >= base

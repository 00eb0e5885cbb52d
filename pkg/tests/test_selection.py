"""Rank statistics against brute force, and leave-one-out family selection."""

import itertools
import math

import numpy as np
import pytest

from msnas.curvefit import FunctionFamily, eval_family
from msnas.evaluator import DEFAULT_CHANNELS, RewardTable
from msnas.selection import (
    DegenerateInputError,
    FAMILY_ORDER,
    kendall_tau,
    loo_correlation,
    pairwise_spearman_matrix,
    precision_at_k,
    select_family,
    spearman,
)


def brute_spearman(xs, ys):
    def ranks(v):
        order = sorted(range(len(v)), key=lambda i: v[i])
        r = [0.0] * len(v)
        i = 0
        while i < len(order):
            j = i
            while j + 1 < len(order) and v[order[j + 1]] == v[order[i]]:
                j += 1
            for idx in order[i : j + 1]:
                r[idx] = (i + j) / 2 + 1
            i = j + 1
        return r

    rx, ry = ranks(list(xs)), ranks(list(ys))
    mx, my = sum(rx) / len(rx), sum(ry) / len(ry)
    num = sum((a - mx) * (b - my) for a, b in zip(rx, ry))
    den = math.sqrt(
        sum((a - mx) ** 2 for a in rx) * sum((b - my) ** 2 for b in ry)
    )
    return num / den


def brute_kendall(xs, ys):
    conc = disc = 0
    n = len(xs)
    for i in range(n):
        for j in range(i + 1, n):
            s = (xs[i] - xs[j]) * (ys[i] - ys[j])
            if s > 0:
                conc += 1
            elif s < 0:
                disc += 1
    return (conc - disc) / (n * (n - 1) / 2)


class TestSpearman:
    def test_identity(self):
        assert spearman([3, 1, 2], [3, 1, 2]).value == pytest.approx(1.0)

    def test_reversal(self):
        assert spearman([1, 2, 3, 4], [4, 3, 2, 1]).value == pytest.approx(-1.0)

    def test_single_swap(self):
        assert spearman([1, 2, 3], [1, 3, 2]).value == pytest.approx(0.5)

    def test_all_permutations_small_n(self):
        for n in (2, 3, 4):
            base = list(range(n))
            for perm in itertools.permutations(base):
                got = spearman(base, list(perm)).value
                assert got == pytest.approx(brute_spearman(base, perm), abs=1e-12)

    def test_ties_use_average_ranks(self):
        xs, ys = [1.0, 1.0, 2.0, 3.0], [0.3, 0.1, 0.2, 0.9]
        assert spearman(xs, ys).value == pytest.approx(brute_spearman(xs, ys))

    def test_zero_variance_rejected(self):
        with pytest.raises(DegenerateInputError):
            spearman([1.0, 1.0, 1.0], [1.0, 2.0, 3.0])


class TestKendall:
    def test_identity(self):
        assert kendall_tau([1, 2, 3], [1, 2, 3]).value == pytest.approx(1.0)

    def test_single_swap(self):
        assert kendall_tau([1, 2, 3], [1, 3, 2]).value == pytest.approx(1 / 3)

    def test_reversal(self):
        assert kendall_tau([1, 2, 3, 4], [4, 3, 2, 1]).value == pytest.approx(-1.0)

    def test_all_permutations_small_n(self):
        for n in (2, 3, 4):
            base = list(range(n))
            for perm in itertools.permutations(base):
                got = kendall_tau(base, list(perm)).value
                assert got == pytest.approx(brute_kendall(base, perm), abs=1e-12)


class TestPrecisionAtK:
    def test_identical(self):
        v = [0.3, 0.9, 0.1, 0.5, 0.7]
        for k in (1, 3, 5):
            assert precision_at_k(v, v, k).value == pytest.approx(1.0)

    def test_disjoint_top_sets(self):
        proxy = [10, 9, 8, 7, 6, 0, 0, 0, 0, 0]
        true = [0, 0, 0, 0, 0, 10, 9, 8, 7, 6]
        assert precision_at_k(proxy, true, 5).value == 0.0

    def test_four_of_five_shared(self):
        proxy = [10, 9, 8, 7, 6, 5, 0, 0, 0, 0]
        true = [10, 9, 8, 7, 0, 6, 5, 0, 0, 0]
        assert precision_at_k(proxy, true, 5).value == pytest.approx(0.8)

    def test_matches_set_intersection_oracle(self):
        rng = np.random.default_rng(8)
        for _ in range(100):
            n = int(rng.integers(5, 40))
            k = int(rng.integers(1, n + 1))
            proxy = rng.permutation(n).astype(float)
            true = rng.permutation(n).astype(float)
            top = lambda v: set(np.argsort(-v, kind="stable")[:k])
            want = len(top(proxy) & top(true)) / k
            assert precision_at_k(proxy, true, k).value == pytest.approx(want)


def make_table(n, k=8, sigma=0.0, seed=0, family=FunctionFamily.LOG_POWER):
    """Synthetic reward table drawn directly from curve formulas."""
    rng = np.random.default_rng(seed)
    base_x = np.geomspace(0.05, 2.0, k)
    caps, rewards = [], []
    for _ in range(n):
        scale = rng.uniform(0.7, 1.4)
        level = rng.uniform(0.35, 0.75)
        midpoint = rng.uniform(0.08, 0.35)
        rate = rng.uniform(1.2, 2.2)
        xs = base_x * scale
        ys = np.array(
            [
                eval_family(family, (level, math.log(midpoint), -rate), x)
                for x in xs
            ]
        )
        ys = np.clip(ys + rng.normal(0.0, sigma, k), 0.0, 1.0)
        caps.append(xs * 1000.0)
        rewards.append(ys)
    ids = [f"t{i:04d}" for i in range(n)]
    return RewardTable(ids, DEFAULT_CHANNELS[:k], np.array(caps), np.array(rewards))


class TestLooCorrelation:
    def test_noiseless_generator_is_near_perfect(self):
        table = make_table(60, sigma=0.0, seed=1)
        for j in range(2, 9):
            rep = loo_correlation(FunctionFamily.LOG_POWER, table, j)
            assert rep.tau >= 0.999, (j, rep.tau)

    def test_pure_noise_is_uncorrelated(self):
        rng = np.random.default_rng(5)
        n = 200
        caps = np.tile(np.geomspace(50.0, 2000.0, 8), (n, 1))
        rewards = rng.uniform(0.2, 0.8, size=(n, 8))
        table = RewardTable(
            [f"r{i}" for i in range(n)], DEFAULT_CHANNELS, caps, rewards
        )
        for j in (2, 5, 8):
            rep = loo_correlation(FunctionFamily.LOG_POWER, table, j)
            assert abs(rep.tau) <= 0.2, (j, rep.tau)

    def test_budget_one_fit_per_topology(self):
        table = make_table(25, sigma=0.005, seed=2)
        rep = loo_correlation(FunctionFamily.LOG_POWER, table, 3)
        assert rep.n_fits == 25
        assert rep.leave_out == 3

    def test_leave_out_bounds_checked(self):
        table = make_table(5, seed=3)
        with pytest.raises(ValueError):
            loo_correlation(FunctionFamily.LOG_POWER, table, 9)


class TestSelectFamily:
    def test_generator_family_wins_under_small_noise(self):
        for seed in (1, 2):
            table = make_table(100, sigma=0.005, seed=seed)
            rep = select_family(table)
            assert rep.selected is FunctionFamily.LOG_POWER, rep.averages

    def test_report_shape(self):
        table = make_table(40, sigma=0.005, seed=4)
        rep = select_family(table)
        assert set(rep.taus) == set(FAMILY_ORDER)
        assert all(len(t) == 8 for t in rep.taus.values())
        assert rep.n_topologies == 40

    def test_first_supernet_excluded_from_average(self):
        table = make_table(40, sigma=0.01, seed=6)
        rep = select_family(table)
        for fam, taus in rep.taus.items():
            assert rep.averages[fam] == pytest.approx(
                float(np.mean(taus[1:]))
            )
        with_first = select_family(table, include_first=True)
        for fam, taus in with_first.taus.items():
            assert with_first.averages[fam] == pytest.approx(
                float(np.mean(taus))
            )

    def test_constant_rewards_surface_degenerate_error(self):
        n, k = 20, 8
        caps = np.tile(np.geomspace(50.0, 2000.0, k), (n, 1))
        rewards = np.full((n, k), 0.5)
        table = RewardTable(
            [f"c{i}" for i in range(n)], DEFAULT_CHANNELS, caps, rewards
        )
        with pytest.raises(DegenerateInputError):
            select_family(table)


def test_pairwise_matrix_is_symmetric_with_unit_diagonal():
    table = make_table(50, sigma=0.01, seed=7)
    m = pairwise_spearman_matrix(table)
    assert m.shape == (8, 8)
    assert np.allclose(np.diag(m), 1.0)
    assert np.allclose(m, m.T)

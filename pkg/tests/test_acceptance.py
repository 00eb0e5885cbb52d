"""Release gate: ten end-to-end checks, one test and one printed verdict each.

Every test measures its own wall-clock time and enforces the stated budget.
Numbers here (seeds, population sizes, tolerances) are frozen; loosening them
requires revisiting the calibration notes, not editing this file.
"""

import itertools
import math
import time
from dataclasses import replace

import numpy as np
import pytest

from msnas.capacity import DEFAULT_MACRO, capacity_profile, flops_total
from msnas.controllers import EvoConfig, PredictorConfig, evo_search, predictor_search
from msnas.curvefit import (
    CurvePoint,
    FunctionFamily,
    MultiShotReward,
    fit,
    multi_shot_eval,
    predict_at,
)
from msnas.evaluator import DEFAULT_CHANNELS, SimulatorBackend, SimulatorConfig
from msnas.search_space import OPS, Layout, sample_random, space_size
from msnas.selection import (
    kendall_tau,
    loo_correlation,
    precision_at_k,
    select_family,
    spearman,
)
from msnas.surrogate import SurrogateConfig, SurrogateModel, encode_batch, pairwise_hinge

from conftest import random_topologies, uniform_topology

TARGET_MFLOPS = 2000.0
GENERATOR = FunctionFamily.LOG_POWER


def verdict(num: int, name: str, ok: bool, detail: str = "") -> None:
    print(f"[criterion {num:02d}] {name}: {'PASS' if ok else 'FAIL'} {detail}")
    assert ok, f"criterion {num:02d} {name}: {detail}"


# -- 1: combinatorial size of the two layouts --------------------------------


def test_01_space_size_counts():
    started = time.perf_counter()
    cell = space_size(Layout.CELL_WISE)
    stage = space_size(Layout.STAGE_WISE)
    elapsed = time.perf_counter() - started
    ok = (
        cell.exact == 4**112
        and stage.exact == 4**56
        and f"{cell.exact:.1e}".startswith("2.7e+67")
        and f"{stage.exact:.1e}".startswith("5.2e+33")
        and elapsed < 1.0
    )
    verdict(
        1,
        "layout space sizes are exactly 4^112 and 4^56",
        ok,
        f"(log10 {cell.log10:.2f} / {stage.log10:.2f}, {elapsed:.3f}s)",
    )


# -- 2: noiseless curve recovery for every family ----------------------------

_FORMULAS = {
    FunctionFamily.JANOSCHEK: lambda p, x: p[0] - (p[0] - p[1]) * math.exp(-p[2] * x ** p[3]),
    FunctionFamily.VAPOR_PRESSURE: lambda p, x: math.exp(p[0] + p[1] / x + p[2] * math.log(x)),
    FunctionFamily.LOG_LOG_LINEAR: lambda p, x: math.log(p[0] * math.log(x) + p[1]),
    FunctionFamily.ILOG2: lambda p, x: p[1] - p[0] / math.log(x),
    FunctionFamily.LOG_POWER: lambda p, x: p[0] / (1.0 + (x / math.exp(p[1])) ** p[2]),
    FunctionFamily.MMF: lambda p, x: p[0] - (p[0] - p[1]) / (1.0 + (p[3] * x) ** p[2]),
    FunctionFamily.LOG_POWER_REP: lambda p, x: 1.0
    / ((1.0 + math.exp(-p[0])) * (1.0 + math.exp(p[2]) * x ** math.exp(-p[1]))),
}

# Parameter draws are restricted to well-conditioned instances: the curve has
# visible shape inside the sampled window and stays strictly inside (0, 1).
_DRAWS = {
    FunctionFamily.JANOSCHEK: lambda r: (
        r.uniform(0.5, 0.9), r.uniform(0.05, 0.3), r.uniform(1.0, 5.0), r.uniform(0.5, 1.5),
    ),
    FunctionFamily.VAPOR_PRESSURE: lambda r: _vapor_draw(r),
    FunctionFamily.LOG_LOG_LINEAR: lambda r: _loglog_draw(r),
    FunctionFamily.ILOG2: lambda r: _ilog_draw(r),
    FunctionFamily.LOG_POWER: lambda r: (
        r.uniform(0.45, 0.9), math.log(r.uniform(0.1, 0.9)), r.uniform(-2.5, -0.8),
    ),
    FunctionFamily.MMF: lambda r: (
        r.uniform(0.5, 0.9), r.uniform(0.05, 0.3), r.uniform(1.0, 3.0), r.uniform(0.8, 5.0),
    ),
    FunctionFamily.LOG_POWER_REP: lambda r: (
        r.uniform(0.5, 3.0), r.uniform(-0.5, 1.0), r.uniform(-2.0, 0.0),
    ),
}


def _vapor_draw(r):
    top = r.uniform(0.4, 0.85)
    b = r.uniform(-0.25, -0.03)
    c = r.uniform(0.02, 0.3)
    return (math.log(top) - b / 2.0 - c * math.log(2.0), b, c)


def _loglog_draw(r):
    # keep a*ln(x)+b inside [e^0, e^1] over the whole grid so y lands in (0, 1)
    a = r.uniform(0.05, 0.4)
    lo, hi = 1.02 + 3.0 * a, 2.70 - 0.70 * a
    return (a, r.uniform(lo + 0.05 * (hi - lo), lo + 0.95 * (hi - lo)))


def _ilog_draw(r):
    c = r.uniform(0.5, 0.95)
    return (r.uniform(0.3, 1.0) * c * 0.36, c)


# both formulas with a log(x) term need x > 1 to stay defined and bounded
_GRIDS = {
    FunctionFamily.ILOG2: np.geomspace(1.5, 8.0, 9),
}
_DEFAULT_GRID = np.geomspace(0.05, 2.0, 9)
_HOLD = 5


def test_02_noiseless_recovery_per_family():
    started = time.perf_counter()
    details = []
    ok = True
    for family in FunctionFamily:
        grid = _GRIDS.get(family, _DEFAULT_GRID)
        hits = 0
        worst = 0.0
        for i in range(50):
            rng = np.random.default_rng(10_000 + 97 * i + list(FunctionFamily).index(family))
            for _ in range(200):
                params = _DRAWS[family](rng)
                ys = np.array([_FORMULAS[family](params, x) for x in grid])
                if np.all((ys > 1e-6) & (ys < 1 - 1e-6)):
                    break
            else:
                raise AssertionError(f"no valid draw for {family}")
            keep = [j for j in range(len(grid)) if j != _HOLD]
            points = [CurvePoint(grid[j] * 1000.0, ys[j]) for j in keep]
            result = fit(family, points)
            if not result.converged:
                continue
            pred = predict_at(result, grid[_HOLD] * 1000.0)
            err = abs(pred.value - ys[_HOLD])
            worst = max(worst, err)
            if err <= 1e-4:
                hits += 1
        ok = ok and hits >= 48
        details.append(f"{family.value}:{hits}/50")
    elapsed = time.perf_counter() - started
    ok = ok and elapsed < 30.0
    verdict(
        2,
        "noiseless 8-point fits recover a held-out point to 1e-4",
        ok,
        f"({' '.join(details)}, {elapsed:.1f}s)",
    )


# -- 3: leave-one-out family selection finds the generating family -----------


def test_03_family_selection_recovers_generator():
    started = time.perf_counter()
    hits = {0.0: 0, 0.005: 0}
    for sigma in hits:
        for seed in range(1, 6):
            topos = random_topologies(seed + 40, 200)
            backend = SimulatorBackend(
                SimulatorConfig(seed=seed + 40, noise_sigma=sigma)
            )
            table = backend.population_table(topos)
            if select_family(table).selected is GENERATOR:
                hits[sigma] += 1
    elapsed = time.perf_counter() - started
    ok = hits[0.0] == 5 and hits[0.005] >= 4 and elapsed < 300.0
    verdict(
        3,
        "LOO selection picks the generating family",
        ok,
        f"(exact:{hits[0.0]}/5 noisy:{hits[0.005]}/5, {elapsed:.0f}s)",
    )


# -- 4: refit-and-predict beats any single reward column ---------------------


def test_04_extrapolation_bridges_column_gap():
    started = time.perf_counter()
    seeds = range(1, 6)
    taus = {j: [] for j in range(2, 9)}
    baselines = {j: [] for j in range(2, 9)}
    for seed in seeds:
        topos = random_topologies(seed + 100, 1000)
        backend = SimulatorBackend(
            SimulatorConfig(
                seed=seed + 100,
                noise_sigma=0.01,
                level_conv_weight=0.05,
                level_density_weight=0.01,
                level_noise=0.010,
                midpoint_range=(0.010, 0.030),
                rate_range=(2.0, 3.0),
            )
        )
        table = backend.population_table(topos)
        rewards = table.rewards
        for j in range(2, 9):
            taus[j].append(loo_correlation(GENERATOR, table, j).tau)
            baselines[j].append(
                max(
                    spearman(rewards[:, k], rewards[:, j - 1]).value
                    for k in range(8)
                    if k != j - 1
                )
            )
    margins = {
        j: float(np.mean(taus[j]) - np.mean(baselines[j])) for j in taus
    }
    elapsed = time.perf_counter() - started
    ok = all(m >= 0.03 for m in margins.values()) and elapsed < 600.0
    pretty = " ".join(f"j{j}:{m:+.3f}" for j, m in margins.items())
    verdict(
        4,
        "held-out-column correlation beats the best single column by 0.03",
        ok,
        f"({pretty}, {elapsed:.0f}s)",
    )


# -- 5: planted curve crossings are ordered correctly at the target ----------


def _crossing_orderings(sigma: float) -> tuple[int, int]:
    correct = total = 0
    for seed in range(1, 6):
        topos = random_topologies(seed, 20)
        backend = SimulatorBackend(
            SimulatorConfig(
                seed=seed,
                noise_sigma=sigma,
                crossing_scenario=True,
                n_crossing_pairs=10,
            )
        )
        backend.install_crossing_pairs(topos)
        by_id = {t.id: t for t in topos}
        for pair in backend.crossing_pairs:
            est_low = multi_shot_eval(
                by_id[pair.id_low], backend, GENERATOR, TARGET_MFLOPS
            ).estimate
            est_high = multi_shot_eval(
                by_id[pair.id_high], backend, GENERATOR, TARGET_MFLOPS
            ).estimate
            total += 1
            if est_high > est_low:
                correct += 1
    return correct, total


def test_05_crossing_pairs_ordered_at_target():
    started = time.perf_counter()
    exact = _crossing_orderings(0.0)
    noisy = _crossing_orderings(0.01)
    elapsed = time.perf_counter() - started
    ok = (
        exact[0] == exact[1]
        and noisy[0] >= 0.9 * noisy[1]
        and elapsed < 60.0
    )
    verdict(
        5,
        "capacity-crossing pairs rank correctly at 2000 MFLOPs",
        ok,
        f"(exact:{exact[0]}/{exact[1]} noisy:{noisy[0]}/{noisy[1]}, {elapsed:.1f}s)",
    )


# -- 6: controllers spend exactly their advertised budgets -------------------


def test_06_search_budgets_exact():
    backend = SimulatorBackend(SimulatorConfig(seed=11, noise_sigma=0.01))

    started = time.perf_counter()
    evo = evo_search(
        EvoConfig(seed=11), MultiShotReward(backend, GENERATOR, TARGET_MFLOPS)
    )
    evo_elapsed = time.perf_counter() - started

    started = time.perf_counter()
    pred = predictor_search(
        PredictorConfig(seed=11),
        MultiShotReward(backend, GENERATOR, TARGET_MFLOPS),
    )
    pred_elapsed = time.perf_counter() - started

    ok = (
        evo.n_evaluations == 400
        and len(evo.history) == 400
        and evo.one_shot_queries == 8 * 400
        and pred.n_evaluations == 600
        and pred.one_shot_queries == 8 * 600
        and pred.extras["stage_queries"] == [2500] * 8
        and evo_elapsed < 600.0
        and pred_elapsed < 600.0
    )
    verdict(
        6,
        "evo spends 400 evaluations, predictor 600 plus 2500 queries/stage",
        ok,
        f"(evo {evo.n_evaluations} in {evo_elapsed:.0f}s, "
        f"predictor {pred.n_evaluations} in {pred_elapsed:.0f}s)",
    )


# -- 7: evolved topology lands in the top percentile -------------------------


def test_07_search_reaches_top_percentile():
    started = time.perf_counter()
    wins = 0
    details = []
    for seed in range(1, 6):
        backend = SimulatorBackend(SimulatorConfig(seed=seed, noise_sigma=0.01))
        result = evo_search(
            EvoConfig(seed=seed),
            MultiShotReward(backend, GENERATOR, TARGET_MFLOPS),
        )
        best_gt = backend.ground_truth_at(result.best_topology, TARGET_MFLOPS)
        rng = np.random.default_rng(seed + 500)
        gts = np.array(
            [
                backend.ground_truth_at(
                    sample_random(int(rng.integers(2**63)), Layout.CELL_WISE),
                    TARGET_MFLOPS,
                )
                for _ in range(10_000)
            ]
        )
        threshold = float(np.quantile(gts, 0.99))
        wins += best_gt >= threshold
        details.append(f"{best_gt - threshold:+.3f}")
    elapsed = time.perf_counter() - started
    ok = wins == 5
    verdict(
        7,
        "evolved best beats the 99th percentile of 10k random draws",
        ok,
        f"({wins}/5 margins {' '.join(details)}, {elapsed:.0f}s)",
    )


# -- 8: rank statistics agree with definitional brute force ------------------


def _brute_spearman(xs, ys) -> float:
    def ranks(v):
        order = np.argsort(v)
        r = np.empty(len(v))
        i = 0
        while i < len(v):
            j = i
            while j + 1 < len(v) and v[order[j + 1]] == v[order[i]]:
                j += 1
            r[order[i : j + 1]] = (i + j) / 2.0 + 1.0
            i = j + 1
        return r

    a, b = ranks(np.asarray(xs, float)), ranks(np.asarray(ys, float))
    a -= a.mean()
    b -= b.mean()
    return float(a @ b / math.sqrt((a @ a) * (b @ b)))


def _brute_kendall(xs, ys) -> float:
    n = len(xs)
    num = 0
    for i in range(n):
        for j in range(i + 1, n):
            num += np.sign(xs[i] - xs[j]) * np.sign(ys[i] - ys[j])
    return float(num / (n * (n - 1) / 2))


def test_08_rank_statistics_match_brute_force():
    started = time.perf_counter()
    for n in range(2, 7):
        ys = np.arange(1.0, n + 1)
        for perm in itertools.permutations(range(n)):
            xs = np.array(perm, dtype=float)
            assert spearman(xs, ys).value == pytest.approx(
                _brute_spearman(xs, ys), abs=1e-12
            )
            assert kendall_tau(xs, ys).value == pytest.approx(
                _brute_kendall(xs, ys), abs=1e-12
            )
    rng = np.random.default_rng(8)
    for _ in range(1000):
        n = int(rng.integers(5, 30))
        xs, ys = rng.uniform(size=n), rng.uniform(size=n)
        k = int(rng.integers(1, n + 1))
        top_x = set(np.argsort(-xs, kind="stable")[:k])
        top_y = set(np.argsort(-ys, kind="stable")[:k])
        assert precision_at_k(xs, ys, k).value == pytest.approx(
            len(top_x & top_y) / k, abs=1e-12
        )
    elapsed = time.perf_counter() - started
    ok = elapsed < 10.0
    verdict(
        8,
        "Spearman/Kendall/P@K match brute-force definitions",
        ok,
        f"({elapsed:.1f}s)",
    )


# -- 9: surrogate backward pass against central differences ------------------


def test_09_surrogate_gradients_match_finite_difference():
    started = time.perf_counter()
    config = SurrogateConfig(
        op_dim=4, node_dim=4, hidden_dim=4, cell_out_dim=4, mlp_hidden=8, mlp_layers=2
    )
    worst = 0.0
    for seed in range(10):
        rng = np.random.default_rng(seed)
        model = SurrogateModel.initialize(config, seed=seed)
        ops = encode_batch(random_topologies(seed + 70, 6))
        rewards = rng.uniform(0.0, 1.0, 6)

        def loss_at() -> float:
            scores, _ = model.forward(ops)
            return pairwise_hinge(scores, rewards, margin=0.25)[0]

        scores, cache = model.forward(ops)
        _, dscores, _ = pairwise_hinge(scores, rewards, margin=0.25)
        grads = model.backward(cache, dscores)
        eps = 1e-6
        for name, grad in grads.items():
            p = model.params[name]
            for i in range(p.size):
                orig = p.flat[i]
                p.flat[i] = orig + eps
                hi = loss_at()
                p.flat[i] = orig - eps
                lo = loss_at()
                p.flat[i] = orig
                fd = (hi - lo) / (2 * eps)
                g = grad.flat[i]
                # the guard sits at the difference quotient's roundoff floor
                # (|loss| * machine-eps / eps ~ 2e-10), so parameters with an
                # exactly-zero gradient do not register FD noise as error
                rel = abs(fd - g) / max(abs(fd), abs(g), 1e-6)
                worst = max(worst, rel)
    elapsed = time.perf_counter() - started
    ok = worst <= 1e-3
    verdict(
        9,
        "analytic gradients match central differences on every parameter",
        ok,
        f"(worst rel err {worst:.2e} over 10 seeds, {elapsed:.1f}s)",
    )


# -- 10: capacity-model calibration -------------------------------------------


def test_10_capacity_calibration():
    started = time.perf_counter()
    topos = random_topologies(7, 200, Layout.CELL_WISE)
    costs = np.array([flops_total(t, DEFAULT_MACRO) for t in topos])
    lo, hi = float(costs.min()), float(costs.max())
    ref_lo, ref_hi = 304.0, 1344.0
    dev_lo = (lo - ref_lo) / ref_lo
    dev_hi = (hi - ref_hi) / ref_hi
    within = abs(dev_lo) <= 0.35 and abs(dev_hi) <= 0.35

    # hard invariants: widths strictly increase cost, doubling a width lands
    # in the quadratic regime
    monotone = True
    quad = True
    extremes = [uniform_topology(op, Layout.CELL_WISE) for op in OPS]
    for t in topos[:20] + extremes:
        profile = capacity_profile(t, DEFAULT_CHANNELS, DEFAULT_MACRO)
        monotone = monotone and bool(np.all(np.diff(profile) > 0))
        for c in (16, 22, 32):
            ratio = flops_total(t, replace(DEFAULT_MACRO, init_channels=2 * c)) / flops_total(
                t, replace(DEFAULT_MACRO, init_channels=c)
            )
            quad = quad and 3.5 <= ratio <= 4.0
    elapsed = time.perf_counter() - started
    ok = monotone and quad
    soft_note = "within" if within else "REPORTED-OUTSIDE"
    verdict(
        10,
        "capacity model: monotone, quadratic in width; endpoint calibration reported",
        ok,
        f"(range [{lo:.0f}, {hi:.0f}] MFLOPs vs [304, 1344]: "
        f"{dev_lo:+.0%}/{dev_hi:+.0%} {soft_note} soft +/-35%; "
        f"monotone={monotone} quad={quad}, {elapsed:.1f}s)",
    )

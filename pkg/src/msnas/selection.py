"""Rank statistics and leave-one-out selection of the extrapolation family.

For every candidate family and every left-out supernet j, each topology's
curve is refit on the remaining K-1 points and evaluated at the topology's
own capacity in supernet j; the Spearman correlation between those
predictions and the actual rewards in supernet j, taken over the whole
population, scores the family.  Families are ranked by the average score
over j >= 2 (the smallest supernet is excluded by default as an outlier)
and the best one is selected.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .curvefit import (
    PARAM_COUNTS,
    CurvePoint,
    FunctionFamily,
    X_SCALE,
    _raw,
    fallback_predict,
    fit_many,
)

__all__ = [
    "RankStatistic",
    "DegenerateInputError",
    "spearman",
    "kendall_tau",
    "precision_at_k",
    "LooCorrelation",
    "loo_correlation",
    "LooReport",
    "select_family",
    "pairwise_spearman_matrix",
    "FAMILY_ORDER",
]

#: Fixed family order used for deterministic tie-breaking.
FAMILY_ORDER: tuple[FunctionFamily, ...] = tuple(FunctionFamily)


class DegenerateInputError(ValueError):
    """Rank statistic undefined: a side has zero rank variance."""


@dataclass(frozen=True)
class RankStatistic:
    value: float
    n: int


def _ranks(values: np.ndarray) -> np.ndarray:
    """Fractional ranks (1-based), ties receiving the average rank."""
    order = np.argsort(values, kind="stable")
    ranks = np.empty(len(values))
    sorted_vals = values[order]
    i = 0
    while i < len(values):
        j = i
        while j + 1 < len(values) and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def spearman(xs, ys) -> RankStatistic:
    """Spearman rank correlation: Pearson correlation of fractional ranks."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.shape != ys.shape or xs.ndim != 1:
        raise ValueError("inputs must be equal-length 1-D sequences")
    n = len(xs)
    if n < 2:
        raise ValueError("need at least 2 observations")
    rx, ry = _ranks(xs), _ranks(ys)
    sx, sy = rx.std(), ry.std()
    if sx == 0.0 or sy == 0.0:
        raise DegenerateInputError("constant input: rank variance is zero")
    value = float(((rx - rx.mean()) * (ry - ry.mean())).mean() / (sx * sy))
    return RankStatistic(value=value, n=n)


def kendall_tau(xs, ys) -> RankStatistic:
    """Kendall tau-a: (concordant - discordant) / C(n, 2); ties count as
    neither concordant nor discordant."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.shape != ys.shape or xs.ndim != 1:
        raise ValueError("inputs must be equal-length 1-D sequences")
    n = len(xs)
    if n < 2:
        raise ValueError("need at least 2 observations")
    dx = np.sign(xs[:, None] - xs[None, :])
    dy = np.sign(ys[:, None] - ys[None, :])
    prod = dx * dy
    iu = np.triu_indices(n, k=1)
    concordant = int((prod[iu] > 0).sum())
    discordant = int((prod[iu] < 0).sum())
    value = (concordant - discordant) / (n * (n - 1) / 2)
    return RankStatistic(value=float(value), n=n)


def precision_at_k(proxy, true, k: int) -> RankStatistic:
    """|top-k by proxy  intersect  top-k by true| / k.

    Top-k is by descending score; ties resolve by stable input order.
    """
    proxy = np.asarray(proxy, dtype=float)
    true = np.asarray(true, dtype=float)
    if proxy.shape != true.shape or proxy.ndim != 1:
        raise ValueError("inputs must be equal-length 1-D sequences")
    n = len(proxy)
    if not 1 <= k <= n:
        raise ValueError(f"k must lie in [1, {n}], got {k}")
    top_proxy = set(np.argsort(-proxy, kind="stable")[:k].tolist())
    top_true = set(np.argsort(-true, kind="stable")[:k].tolist())
    return RankStatistic(value=len(top_proxy & top_true) / k, n=n)


@dataclass(frozen=True)
class LooCorrelation:
    """Leave-one-out score of one family against one supernet."""

    family: FunctionFamily
    leave_out: int
    tau: float
    n: int
    n_fits: int
    n_fallbacks: int


def loo_correlation(
    family: FunctionFamily, table, leave_out_j: int
) -> LooCorrelation:
    """Spearman between refit-and-predict estimates and actual rewards in
    the left-out supernet, over the table's whole population.

    ``table`` is a RewardTable (see msnas.evaluator): capacities and rewards
    of N topologies across K supernets.  Unconverged fits fall back to
    flagged piecewise-linear interpolation and stay in the correlation.
    """
    caps, rewards = table.capacities, table.rewards
    n, k = caps.shape
    if not 1 <= leave_out_j <= k:
        raise ValueError(f"leave_out_j must lie in [1, {k}], got {leave_out_j}")
    j0 = leave_out_j - 1
    keep = [i for i in range(k) if i != j0]
    xs, ys = caps[:, keep], rewards[:, keep]
    params, _rss, conv = fit_many(family, xs, ys)
    target = caps[:, j0] / X_SCALE
    preds = np.empty(n)
    fallback_rows = list(np.flatnonzero(~conv))
    rows = np.flatnonzero(conv)
    if rows.size:
        vals = _raw(family, params[rows], target[rows, None])[:, 0]
        good = np.isfinite(vals)
        preds[rows[good]] = np.clip(vals[good], 0.0, 1.0)
        fallback_rows.extend(rows[~good].tolist())
    for i in fallback_rows:
        pts = [CurvePoint(x, y) for x, y in zip(xs[i], ys[i])]
        preds[i] = fallback_predict(pts, caps[i, j0]).value
    tau = spearman(preds, rewards[:, j0]).value
    return LooCorrelation(
        family=family,
        leave_out=leave_out_j,
        tau=tau,
        n=n,
        n_fits=n,
        n_fallbacks=len(fallback_rows),
    )


@dataclass(frozen=True)
class LooReport:
    """Full leave-one-out tau matrix plus the selected family.

    ``taus[family]`` holds (tau_1, ..., tau_K); averages cover j >= 2 when
    the first supernet is excluded (the default), else all j.
    """

    taus: dict[FunctionFamily, tuple[float, ...]]
    averages: dict[FunctionFamily, float]
    selected: FunctionFamily
    include_first: bool
    fallback_counts: dict[FunctionFamily, int]
    n_topologies: int
    supernet_channels: tuple[int, ...]

    def to_json_dict(self) -> dict:
        return {
            "selected": self.selected.value,
            "include_first": self.include_first,
            "n_topologies": self.n_topologies,
            "supernet_channels": list(self.supernet_channels),
            "taus": {f.value: list(t) for f, t in self.taus.items()},
            "averages": {f.value: v for f, v in self.averages.items()},
            "fallback_counts": {
                f.value: c for f, c in self.fallback_counts.items()
            },
        }


def select_family(table, include_first: bool = False) -> LooReport:
    """Score all 7 families by averaged leave-one-out Spearman and pick the
    best; ties break toward fewer parameters, then fixed family order."""
    k = table.capacities.shape[1]
    start_j = 1 if include_first else 2
    taus: dict[FunctionFamily, tuple[float, ...]] = {}
    averages: dict[FunctionFamily, float] = {}
    fallbacks: dict[FunctionFamily, int] = {}
    for family in FAMILY_ORDER:
        per_j = []
        n_fb = 0
        for j in range(1, k + 1):
            res = loo_correlation(family, table, j)
            per_j.append(res.tau)
            n_fb += res.n_fallbacks
        taus[family] = tuple(per_j)
        averages[family] = float(np.mean(per_j[start_j - 1 :]))
        fallbacks[family] = n_fb
    selected = min(
        FAMILY_ORDER,
        key=lambda f: (-averages[f], PARAM_COUNTS[f], FAMILY_ORDER.index(f)),
    )
    return LooReport(
        taus=taus,
        averages=averages,
        selected=selected,
        include_first=include_first,
        fallback_counts=fallbacks,
        n_topologies=table.capacities.shape[0],
        supernet_channels=tuple(table.channels),
    )


def pairwise_spearman_matrix(table) -> np.ndarray:
    """K x K matrix of cross-supernet reward Spearman correlations."""
    k = table.rewards.shape[1]
    out = np.eye(k)
    for i in range(k):
        for j in range(i + 1, k):
            v = spearman(table.rewards[:, i], table.rewards[:, j]).value
            out[i, j] = out[j, i] = v
    return out

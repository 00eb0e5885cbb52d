"""One-shot reward backends: tabular files and a synthetic simulator.

A backend exposes K differently-sized supernets and answers
``one_shot(topology, supernet_index)`` deterministically.  The tabular
backend replays a CSV of recorded rewards.  The simulator assigns every
topology a hidden saturating reward-vs-capacity curve derived from its
structural features, evaluates the curve at the topology's own capacity in
each supernet, and adds seeded per-query Gaussian noise; clean and
adversarial accuracies are combined as
``reward = (1 - lambda) * clean + lambda * adv``.

Simulator curves are defined on normalized capacity (units of 1000 MFLOPs,
matching the fitter's working domain).  The clean/adversarial split is
multiplicative and chosen so the lambda-combination equals the stored
combined curve exactly, which keeps zero-noise tables exactly in-family.
"""

from __future__ import annotations

import csv
import hashlib
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .capacity import MacroConfig, flops_total
from .curvefit import FunctionFamily, eval_family
from .search_space import Topology, features

__all__ = [
    "DEFAULT_CHANNELS",
    "SupernetSpec",
    "OneShotRecord",
    "RewardTable",
    "TableFormatError",
    "DuplicateKeyError",
    "IncompleteTableError",
    "RewardLookupError",
    "UnsupportedBackendOperation",
    "TabularBackend",
    "SimulatorConfig",
    "GroundTruthCurve",
    "CrossingPair",
    "SimulatorBackend",
    "simulate_population",
    "load_table",
    "dump_table",
    "TABLE_HEADER",
]

#: Init channel counts of the K = 8 default supernets, smallest first.
DEFAULT_CHANNELS: tuple[int, ...] = (12, 24, 30, 36, 40, 44, 54, 64)

TABLE_HEADER = ("topology_id", "supernet_index", "init_channels", "mflops", "reward")


class TableFormatError(ValueError):
    """Malformed reward-table file (carries the offending line number)."""


class DuplicateKeyError(TableFormatError):
    """Same (topology_id, supernet_index) appears twice."""


class IncompleteTableError(ValueError):
    """Table is missing (topology, supernet) cells; lists the missing keys."""


class RewardLookupError(KeyError):
    """No recorded reward for (topology_id, supernet_index)."""


class UnsupportedBackendOperation(RuntimeError):
    """Operation not available on this backend (e.g. tabular ground truth)."""


@dataclass(frozen=True)
class SupernetSpec:
    index: int  # 1-based
    init_channels: int


@dataclass(frozen=True)
class OneShotRecord:
    topology_id: str
    supernet_index: int
    init_channels: int
    mflops: float
    reward: float


class RewardTable:
    """Rectangular (topology x supernet) reward table.

    capacities and rewards are (N, K) arrays; rows follow ``ids`` order and
    columns follow ``channels`` order (supernet index = column + 1).
    """

    def __init__(
        self,
        ids: Sequence[str],
        channels: Sequence[int],
        capacities: np.ndarray,
        rewards: np.ndarray,
    ):
        self.ids = list(ids)
        self.channels = tuple(int(c) for c in channels)
        self.capacities = np.asarray(capacities, dtype=float)
        self.rewards = np.asarray(rewards, dtype=float)
        n, k = len(self.ids), len(self.channels)
        if self.capacities.shape != (n, k) or self.rewards.shape != (n, k):
            raise ValueError("capacities/rewards must be (len(ids), len(channels))")
        if len(set(self.ids)) != n:
            raise ValueError("duplicate topology ids")
        if np.any(self.rewards < 0.0) or np.any(self.rewards > 1.0):
            raise ValueError("rewards must lie in [0, 1]")
        if np.any(self.capacities <= 0.0):
            raise ValueError("capacities must be positive")
        self._row = {tid: i for i, tid in enumerate(self.ids)}

    @property
    def n_topologies(self) -> int:
        return len(self.ids)

    @property
    def n_supernets(self) -> int:
        return len(self.channels)

    def row(self, topology_id: str) -> int:
        try:
            return self._row[topology_id]
        except KeyError:
            raise RewardLookupError(
                f"topology {topology_id!r} not present in the table"
            ) from None


def dump_table(table: RewardTable, path) -> None:
    """Write the exact CSV interchange format (sorted by id, then index)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TABLE_HEADER)
        for i in sorted(range(table.n_topologies), key=lambda r: table.ids[r]):
            for j in range(table.n_supernets):
                writer.writerow(
                    [
                        table.ids[i],
                        j + 1,
                        table.channels[j],
                        repr(float(table.capacities[i, j])),
                        repr(float(table.rewards[i, j])),
                    ]
                )


def _parse_table_rows(path) -> tuple[dict, dict]:
    """Parse CSV rows into {(id, j): (channels, mflops, reward)} plus the
    per-index channel map, validating as we go."""
    cells: dict[tuple[str, int], tuple[int, float, float]] = {}
    chan_by_index: dict[int, int] = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise TableFormatError("empty file: missing header") from None
        if tuple(h.strip() for h in header) != TABLE_HEADER:
            raise TableFormatError(
                f"line 1: header must be {','.join(TABLE_HEADER)}"
            )
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 5:
                raise TableFormatError(f"line {lineno}: expected 5 fields")
            tid = row[0].strip()
            try:
                j = int(row[1])
                ch = int(row[2])
                mflops = float(row[3])
                reward = float(row[4])
            except ValueError as exc:
                raise TableFormatError(f"line {lineno}: {exc}") from None
            if j < 1:
                raise TableFormatError(
                    f"line {lineno}: supernet_index must be >= 1"
                )
            if not 0.0 <= reward <= 1.0:
                raise TableFormatError(
                    f"line {lineno}: reward {reward} outside [0, 1]"
                )
            if mflops <= 0:
                raise TableFormatError(f"line {lineno}: mflops must be positive")
            key = (tid, j)
            if key in cells:
                raise DuplicateKeyError(
                    f"line {lineno}: duplicate key (topology {tid!r}, supernet {j})"
                )
            if j in chan_by_index and chan_by_index[j] != ch:
                raise TableFormatError(
                    f"line {lineno}: supernet {j} listed with init_channels "
                    f"{ch}, previously {chan_by_index[j]}"
                )
            chan_by_index[j] = ch
            cells[key] = (ch, mflops, reward)
    return cells, chan_by_index


class TabularBackend:
    """Replays recorded one-shot rewards from a (possibly partial) table."""

    def __init__(self, cells: dict, chan_by_index: dict):
        if not cells:
            raise TableFormatError("table contains no data rows")
        self._cells = cells
        indices = sorted(chan_by_index)
        if indices != list(range(1, len(indices) + 1)):
            raise TableFormatError(
                f"supernet indices must be contiguous from 1, got {indices}"
            )
        self.supernets = tuple(
            SupernetSpec(index=j, init_channels=chan_by_index[j]) for j in indices
        )

    @property
    def channels(self) -> tuple[int, ...]:
        return tuple(s.init_channels for s in self.supernets)

    def one_shot(self, topology, supernet_index: int) -> OneShotRecord:
        tid = topology.id if isinstance(topology, Topology) else str(topology)
        if not 1 <= supernet_index <= len(self.supernets):
            raise ValueError(
                f"supernet_index {supernet_index} outside [1, {len(self.supernets)}]"
            )
        key = (tid, supernet_index)
        if key not in self._cells:
            raise RewardLookupError(
                f"no record for topology {tid!r} in supernet {supernet_index}"
            )
        ch, mflops, reward = self._cells[key]
        return OneShotRecord(
            topology_id=tid,
            supernet_index=supernet_index,
            init_channels=ch,
            mflops=mflops,
            reward=reward,
        )

    def ground_truth_at(self, topology, target_mflops: float) -> float:
        raise UnsupportedBackendOperation(
            "tabular backends have no ground-truth curves"
        )

    def to_reward_table(self) -> RewardTable:
        """Rectangular view; raises IncompleteTableError on missing cells."""
        ids = sorted({tid for tid, _ in self._cells})
        k = len(self.supernets)
        missing = [
            (tid, j)
            for tid in ids
            for j in range(1, k + 1)
            if (tid, j) not in self._cells
        ]
        if missing:
            shown = ", ".join(f"({t!r}, {j})" for t, j in missing[:8])
            more = "" if len(missing) <= 8 else f" and {len(missing) - 8} more"
            raise IncompleteTableError(
                f"table is missing {len(missing)} cells: {shown}{more}"
            )
        caps = np.array(
            [[self._cells[(tid, j)][1] for j in range(1, k + 1)] for tid in ids]
        )
        rewards = np.array(
            [[self._cells[(tid, j)][2] for j in range(1, k + 1)] for tid in ids]
        )
        return RewardTable(ids, self.channels, caps, rewards)


def load_table(path) -> TabularBackend:
    """Load the CSV interchange format; refuses files in any other schema."""
    cells, chan_by_index = _parse_table_rows(path)
    return TabularBackend(cells, chan_by_index)


def table_from_backend(backend: TabularBackend) -> RewardTable:
    return backend.to_reward_table()


# ---------------------------------------------------------------------------
# Synthetic simulator
# ---------------------------------------------------------------------------

#: Families whose generator can express monotone non-decreasing bounded
#: reward curves on the supernet capacity range.  LOG_POWER_REP is decreasing
#: in capacity for every parameter choice, so it cannot serve as ground truth.
_GENERATABLE = (
    FunctionFamily.JANOSCHEK,
    FunctionFamily.VAPOR_PRESSURE,
    FunctionFamily.LOG_LOG_LINEAR,
    FunctionFamily.ILOG2,
    FunctionFamily.LOG_POWER,
    FunctionFamily.MMF,
)


@dataclass(frozen=True)
class SimulatorConfig:
    """Synthetic-backend settings.  ``seed`` fixes everything: curve
    assignment and per-query noise are deterministic functions of
    (topology id, supernet index, seed)."""

    seed: int
    noise_sigma: float = 0.01
    lam: float = 0.5  # adversarial weight in the combined reward
    channel_list: tuple[int, ...] = DEFAULT_CHANNELS
    family: FunctionFamily = FunctionFamily.LOG_POWER
    crossing_scenario: bool = False
    n_crossing_pairs: int = 10
    # Curve-generation knobs (level = asymptotic combined reward).
    base_level: float = 0.30
    level_conv_weight: float = 0.45
    level_density_weight: float = 0.10
    level_noise: float = 0.04
    level_bounds: tuple[float, float] = (0.05, 0.90)
    midpoint_range: tuple[float, float] = (0.05, 0.35)  # normalized capacity
    rate_range: tuple[float, float] = (1.0, 2.5)
    split_range: tuple[float, float] = (0.05, 0.12)

    def __post_init__(self) -> None:
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be non-negative")
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError("lambda must lie in [0, 1]")
        chans = tuple(self.channel_list)
        if any(b <= a for a, b in zip(chans, chans[1:])) or any(
            c < 1 for c in chans
        ):
            raise ValueError("channel_list must be strictly increasing positives")
        fam = self.family
        if isinstance(fam, str):
            object.__setattr__(self, "family", FunctionFamily(fam))
        if self.family not in _GENERATABLE:
            raise ValueError(
                f"cannot generate non-decreasing ground truth from "
                f"{self.family.value}; choose one of "
                f"{[f.value for f in _GENERATABLE]}"
            )

    def to_json_dict(self) -> dict:
        return {
            "seed": self.seed,
            "noise_sigma": self.noise_sigma,
            "lambda": self.lam,
            "channel_list": list(self.channel_list),
            "family": self.family.value,
            "crossing_scenario": self.crossing_scenario,
        }


@dataclass(frozen=True)
class GroundTruthCurve:
    """Hidden reward curve of one topology, on normalized capacity.

    ``params`` define the combined-reward curve; the clean/adversarial pair
    is a multiplicative split around it: clean = (1 + split) * f and adv is
    scaled so that (1 - lam) * clean + lam * adv == f exactly.
    """

    family: FunctionFamily
    params: tuple[float, ...]
    split: float
    lam: float

    def combined_at(self, x_norm: float | np.ndarray):
        return eval_family(self.family, self.params, x_norm)

    def clean_at(self, x_norm):
        return self.combined_at(x_norm) * (1.0 + self.split)

    def adv_at(self, x_norm):
        if self.lam == 0.0:
            return self.combined_at(x_norm)
        scale = 1.0 - self.split * (1.0 - self.lam) / self.lam
        return self.combined_at(x_norm) * scale


@dataclass(frozen=True)
class CrossingPair:
    """Two constructed topologies whose reward curves cross between the two
    probe capacities: ``id_low`` wins at low_mflops, ``id_high`` at high."""

    id_low: str
    id_high: str
    low_mflops: float
    high_mflops: float


def _stable_rng(*parts) -> np.random.Generator:
    digest = hashlib.sha256("|".join(str(p) for p in parts).encode()).digest()
    return np.random.default_rng(int.from_bytes(digest[:8], "big"))


def _curve_params(
    family: FunctionFamily,
    level: float,
    midpoint: float,
    rate: float,
    x_lo: float,
    x_hi: float,
) -> tuple[float, ...]:
    """Map latent (level, midpoint, rate) to family parameters giving a
    non-decreasing curve on [x_lo, x_hi] with value ~level at saturation.

    ILOG2 and LOG_LOG_LINEAR are anchored to the capacity range itself
    (they are not globally bounded/monotone on (0, inf)).
    """
    if family is FunctionFamily.LOG_POWER:
        return (level, float(np.log(midpoint)), -rate)
    if family is FunctionFamily.MMF:
        return (level, 0.05 * level, rate, 1.0 / midpoint)
    if family is FunctionFamily.JANOSCHEK:
        d = min(max(rate / 2.0, 0.6), 2.0)
        c = np.log(2.0) / midpoint**d
        return (level, 0.05 * level, float(c), float(d))
    if family is FunctionFamily.VAPOR_PRESSURE:
        # f = exp(a + b/x): increasing from 0 to exp(a); midpoint at -b/ln2.
        return (float(np.log(level)), float(-midpoint * np.log(2.0)), 0.0)
    if family is FunctionFamily.LOG_LOG_LINEAR:
        lo, hi = np.log(x_lo), np.log(x_hi)
        y_lo, y_hi = 0.45 * level, level
        a = (np.exp(y_hi) - np.exp(y_lo)) / (hi - lo)
        b = np.exp(y_hi) - a * hi
        return (float(a), float(b))
    if family is FunctionFamily.ILOG2:
        # Increasing on x < 1 for a > 0; anchor to the capacity range.
        lo, hi = np.log(x_lo), np.log(x_hi)
        y_lo, y_hi = 0.45 * level, level
        a = (y_hi - y_lo) / (1.0 / lo - 1.0 / hi)
        c = y_hi + a / hi
        return (float(a), float(c))
    raise ValueError(f"no generator for family {family.value}")


class SimulatorBackend:
    """Synthetic one-shot evaluator with per-topology ground-truth curves."""

    def __init__(self, config: SimulatorConfig, macro_template: MacroConfig | None = None):
        self.config = config
        self.macro_template = macro_template or MacroConfig(init_channels=1)
        self.supernets = tuple(
            SupernetSpec(index=i + 1, init_channels=ch)
            for i, ch in enumerate(config.channel_list)
        )
        self._curves: dict[str, GroundTruthCurve] = {}
        self._capacity_cache: dict[tuple[str, int], float] = {}
        self.crossing_pairs: tuple[CrossingPair, ...] = ()

    @property
    def channels(self) -> tuple[int, ...]:
        return tuple(s.init_channels for s in self.supernets)

    def _capacity(self, topology: Topology, init_channels: int) -> float:
        key = (topology.id, init_channels)
        hit = self._capacity_cache.get(key)
        if hit is None:
            hit = flops_total(
                topology, replace(self.macro_template, init_channels=init_channels)
            )
            self._capacity_cache[key] = hit
        return hit

    def _curve(self, topology: Topology) -> GroundTruthCurve:
        curve = self._curves.get(topology.id)
        if curve is not None:
            return curve
        cfg = self.config
        rng = _stable_rng("curve", topology.id, cfg.seed)
        feats = features(topology)
        lo, hi = cfg.level_bounds
        level = float(
            np.clip(
                cfg.base_level
                + cfg.level_conv_weight * feats.conv_fraction
                + cfg.level_density_weight * feats.edge_density
                + rng.normal(0.0, cfg.level_noise),
                lo,
                hi,
            )
        )
        m_lo, m_hi = cfg.midpoint_range
        midpoint = float(np.exp(rng.uniform(np.log(m_lo), np.log(m_hi))))
        rate = float(rng.uniform(*cfg.rate_range))
        split = float(rng.uniform(*cfg.split_range))
        x_lo = self._capacity(topology, cfg.channel_list[0]) / 1000.0
        x_hi = self._capacity(topology, cfg.channel_list[-1]) / 1000.0
        params = _curve_params(cfg.family, level, midpoint, rate, x_lo, x_hi)
        curve = GroundTruthCurve(
            family=cfg.family, params=params, split=split, lam=cfg.lam
        )
        self._curves[topology.id] = curve
        return curve

    def one_shot(self, topology: Topology, supernet_index: int) -> OneShotRecord:
        if not 1 <= supernet_index <= len(self.supernets):
            raise ValueError(
                f"supernet_index {supernet_index} outside [1, {len(self.supernets)}]"
            )
        spec = self.supernets[supernet_index - 1]
        mflops = self._capacity(topology, spec.init_channels)
        curve = self._curve(topology)
        x = mflops / 1000.0
        clean = float(curve.clean_at(x))
        adv = float(curve.adv_at(x))
        reward = (1.0 - self.config.lam) * clean + self.config.lam * adv
        if self.config.noise_sigma > 0:
            rng = _stable_rng("noise", topology.id, supernet_index, self.config.seed)
            reward += float(rng.normal(0.0, self.config.noise_sigma))
        reward = float(np.clip(reward, 0.0, 1.0))
        return OneShotRecord(
            topology_id=topology.id,
            supernet_index=supernet_index,
            init_channels=spec.init_channels,
            mflops=mflops,
            reward=reward,
        )

    def ground_truth_at(self, topology: Topology, target_mflops: float) -> float:
        """Noiseless combined reward at an arbitrary capacity (tests and
        reporting only; searches must go through one_shot)."""
        if target_mflops <= 0:
            raise ValueError("target capacity must be positive")
        return float(self._curve(topology).combined_at(target_mflops / 1000.0))

    # -- population helpers -------------------------------------------------

    def install_crossing_pairs(
        self,
        topologies: Sequence[Topology],
        low_mflops: float = 300.0,
        high_mflops: float = 2000.0,
    ) -> tuple[CrossingPair, ...]:
        """Override curves of the first 2 * n_crossing_pairs topologies with
        constructed fast-saturating / slow-saturating pairs whose order flips
        between the two probe capacities.  Pairs are verified at build time."""
        cfg = self.config
        if cfg.family is not FunctionFamily.LOG_POWER:
            raise ValueError("crossing construction requires LOG_POWER curves")
        n_pairs = cfg.n_crossing_pairs
        if len(topologies) < 2 * n_pairs:
            raise ValueError(
                f"need at least {2 * n_pairs} topologies for "
                f"{n_pairs} crossing pairs"
            )
        pairs = []
        xl, xh = low_mflops / 1000.0, high_mflops / 1000.0
        for i in range(n_pairs):
            t_fast, t_slow = topologies[2 * i], topologies[2 * i + 1]
            fast = GroundTruthCurve(
                family=FunctionFamily.LOG_POWER,
                params=(0.58, float(np.log(0.08 + 0.005 * i)), -2.2),
                split=0.08,
                lam=cfg.lam,
            )
            slow = GroundTruthCurve(
                family=FunctionFamily.LOG_POWER,
                params=(0.75, float(np.log(0.36 + 0.01 * i)), -1.35),
                split=0.08,
                lam=cfg.lam,
            )
            f_lo, s_lo = fast.combined_at(xl), slow.combined_at(xl)
            f_hi, s_hi = fast.combined_at(xh), slow.combined_at(xh)
            assert f_lo > s_lo and s_hi > f_hi, "constructed pair must cross"
            self._curves[t_fast.id] = fast
            self._curves[t_slow.id] = slow
            pairs.append(
                CrossingPair(
                    id_low=t_fast.id,
                    id_high=t_slow.id,
                    low_mflops=low_mflops,
                    high_mflops=high_mflops,
                )
            )
        self.crossing_pairs = tuple(pairs)
        return self.crossing_pairs

    def population_table(self, topologies: Sequence[Topology]) -> RewardTable:
        """Evaluate every topology in every supernet into a RewardTable."""
        if self.config.crossing_scenario and not self.crossing_pairs:
            self.install_crossing_pairs(topologies)
        ids, caps, rewards = [], [], []
        for t in topologies:
            ids.append(t.id)
            row_c, row_r = [], []
            for spec in self.supernets:
                rec = self.one_shot(t, spec.index)
                row_c.append(rec.mflops)
                row_r.append(rec.reward)
            caps.append(row_c)
            rewards.append(row_r)
        return RewardTable(ids, self.channels, np.array(caps), np.array(rewards))

    def ground_truth_sidecar(self, topologies: Sequence[Topology]) -> dict:
        """JSON-ready ground-truth dump.  Deliberately a different schema
        from the reward-table CSV so it can never be loaded as one."""
        curves = {}
        for t in topologies:
            c = self._curve(t)
            curves[t.id] = {
                "family": c.family.value,
                "params": list(c.params),
                "split": c.split,
            }
        return {
            "schema": "msnas-ground-truth-v1",
            "config": self.config.to_json_dict(),
            "curves": curves,
            "crossing_pairs": [
                {
                    "id_low": p.id_low,
                    "id_high": p.id_high,
                    "low_mflops": p.low_mflops,
                    "high_mflops": p.high_mflops,
                }
                for p in self.crossing_pairs
            ],
        }


def simulate_population(
    config: SimulatorConfig,
    topologies: Sequence[Topology],
    macro_template: MacroConfig | None = None,
) -> RewardTable:
    """One-call population evaluation on a fresh simulator backend."""
    return SimulatorBackend(config, macro_template).population_table(topologies)

"""Search controllers: evolutionary search and predictor-guided search.

Both controllers optimize an externally supplied reward callable over the
topology space and account for their evaluation budget exactly:

* ``evo_search``: ``init_samples`` random evaluations seed the population,
  then one mutation + one evaluation per step.
* ``predictor_search``: ``init_samples`` random evaluations train a ranking
  surrogate; each stage runs an inner evolutionary loop scored only by the
  surrogate, earmarks ``picks_per_stage`` distinct candidates, evaluates
  them for real, and fine-tunes the surrogate on everything seen so far.

Tie policies (documented because budget tests depend on determinism):
tournament winners and earmark picks break score ties toward the *older*
member; population eviction removes the *youngest* of the worst-scored
members.  Age is the global evaluation/scoring order.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .curvefit import EvaluationError
from .evaluator import RewardLookupError
from .search_space import Layout, Topology, mutate, sample_random
from .surrogate import SurrogateConfig, SurrogateModel, train_ranking

__all__ = [
    "EvoConfig",
    "PredictorConfig",
    "HistoryEntry",
    "SearchHistory",
    "SearchResult",
    "SearchAborted",
    "evo_search",
    "predictor_search",
]

_MAX_SEED = 2**63

HISTORY_COLUMNS = ("step", "topology_id", "est_reward", "cumulative_one_shot_queries")


class SearchAborted(RuntimeError):
    """Raised after three consecutive candidate evaluation failures."""


@dataclass(frozen=True)
class HistoryEntry:
    step: int
    topology_id: str
    est_reward: float
    cumulative_one_shot_queries: int
    parent_id: str = ""
    phase: str = "init"


class SearchHistory:
    """Ordered record of every real (non-surrogate) evaluation."""

    def __init__(self) -> None:
        self.entries: list[HistoryEntry] = []

    def append(self, entry: HistoryEntry) -> None:
        self.entries.append(entry)

    def __len__(self) -> int:
        return len(self.entries)

    def best_so_far(self) -> np.ndarray:
        rewards = np.array([e.est_reward for e in self.entries], dtype=float)
        return np.maximum.accumulate(rewards) if rewards.size else rewards

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(HISTORY_COLUMNS)
            for e in self.entries:
                writer.writerow(
                    [
                        e.step,
                        e.topology_id,
                        repr(e.est_reward),
                        e.cumulative_one_shot_queries,
                    ]
                )


@dataclass
class SearchResult:
    best_topology: Topology
    best_reward: float
    history: SearchHistory
    n_evaluations: int
    one_shot_queries: int
    extras: dict = field(default_factory=dict)

    def summary_dict(self) -> dict:
        return {
            "best_topology_id": self.best_topology.id,
            "best_est_reward": self.best_reward,
            "n_evaluations": self.n_evaluations,
            "one_shot_queries": self.one_shot_queries,
            **{
                k: v
                for k, v in self.extras.items()
                if isinstance(v, (int, float, str, list))
            },
        }


@dataclass(frozen=True)
class EvoConfig:
    seed: int
    steps: int = 200
    population: int = 100
    tournament: int = 10
    init_samples: int = 200
    layout: Layout = Layout.CELL_WISE

    def __post_init__(self) -> None:
        if self.init_samples < self.population or self.population < 1:
            raise ValueError("need init_samples >= population >= 1")
        if not 1 <= self.tournament <= self.population:
            raise ValueError("need 1 <= tournament <= population")
        if self.steps < 0:
            raise ValueError("steps must be non-negative")


@dataclass(frozen=True)
class PredictorConfig:
    seed: int
    stages: int = 8
    picks_per_stage: int = 50
    inner_steps: int = 2500
    inner_population: int = 20
    inner_tournament: int = 5
    init_samples: int = 200
    surrogate: SurrogateConfig = field(default_factory=SurrogateConfig)
    epochs: int = 100
    tune_epochs: int = 50
    batch_size: int = 50
    lr: float = 1e-3
    margin: float = 0.1

    def __post_init__(self) -> None:
        if self.inner_steps % self.picks_per_stage != 0:
            raise ValueError("inner_steps must be a multiple of picks_per_stage")
        if not 1 <= self.inner_tournament <= self.inner_population:
            raise ValueError("need 1 <= inner_tournament <= inner_population")
        if self.init_samples < 2:
            raise ValueError("init_samples must be >= 2 to form ranking pairs")


@dataclass
class _Member:
    topology: Topology
    score: float
    birth: int


def _tournament_parent(
    pop: list[_Member], k: int, rng: np.random.Generator
) -> _Member:
    idx = rng.choice(len(pop), size=k, replace=False)
    return min((pop[i] for i in idx), key=lambda m: (-m.score, m.birth))


def _evict_worst(pop: list[_Member]) -> None:
    worst = min(range(len(pop)), key=lambda i: (pop[i].score, -pop[i].birth))
    pop.pop(worst)


_FAILURES = (EvaluationError, RewardLookupError)


class _Budget:
    """Counts controller-side evaluations and mirrors the reward callable's
    own one-shot counter when it exposes one."""

    def __init__(self, reward_fn: Callable[[Topology], float]):
        self.reward_fn = reward_fn
        self.n_evaluations = 0
        self.n_failures = 0
        self._consecutive = 0

    def evaluate(self, topology: Topology) -> float | None:
        try:
            value = float(self.reward_fn(topology))
        except _FAILURES as exc:
            self.n_failures += 1
            self._consecutive += 1
            if self._consecutive >= 3:
                raise SearchAborted(
                    f"three consecutive evaluation failures (last: {exc})"
                ) from exc
            return None
        self._consecutive = 0
        self.n_evaluations += 1
        return value

    def one_shot_queries(self) -> int:
        return int(getattr(self.reward_fn, "one_shot_queries", self.n_evaluations))


def evo_search(
    config: EvoConfig,
    reward_fn: Callable[[Topology], float],
    initial_pool: Sequence[Topology] | None = None,
) -> SearchResult:
    """Mutation-only evolutionary search with tournament selection.

    The initial pool (sampled here unless supplied) is fully evaluated, the
    ``population`` best members are kept, and every step evaluates exactly
    one mutated child, so the total budget is ``init_samples + steps``
    evaluations.  History ``step`` is 0 for the seeding phase.
    """
    rng = np.random.default_rng(config.seed)
    budget = _Budget(reward_fn)
    history = SearchHistory()

    if initial_pool is None:
        initial_pool = [
            sample_random(int(rng.integers(_MAX_SEED)), config.layout)
            for _ in range(config.init_samples)
        ]
    elif len(initial_pool) < config.population:
        raise ValueError("initial pool smaller than the population size")

    birth = 0
    seen: list[_Member] = []
    for topology in initial_pool:
        value = budget.evaluate(topology)
        if value is None:
            continue
        seen.append(_Member(topology, value, birth))
        history.append(
            HistoryEntry(0, topology.id, value, budget.one_shot_queries())
        )
        birth += 1

    if len(seen) < config.population:
        raise SearchAborted("too few successful initial evaluations")
    pop = sorted(seen, key=lambda m: (-m.score, m.birth))[: config.population]

    best = min(seen, key=lambda m: (-m.score, m.birth))
    for step in range(1, config.steps + 1):
        parent = _tournament_parent(pop, config.tournament, rng)
        child = mutate(parent.topology, int(rng.integers(_MAX_SEED)))
        value = budget.evaluate(child)
        if value is None:
            continue
        member = _Member(child, value, birth)
        birth += 1
        pop.append(member)
        _evict_worst(pop)
        history.append(
            HistoryEntry(
                step,
                child.id,
                value,
                budget.one_shot_queries(),
                parent_id=parent.topology.id,
                phase="evolve",
            )
        )
        if value > best.score:
            best = member

    return SearchResult(
        best_topology=best.topology,
        best_reward=best.score,
        history=history,
        n_evaluations=budget.n_evaluations,
        one_shot_queries=budget.one_shot_queries(),
        extras={"n_failures": budget.n_failures},
    )


def predictor_search(
    config: PredictorConfig,
    reward_fn: Callable[[Topology], float],
) -> SearchResult:
    """Surrogate-guided staged search over stage-wise topologies.

    Budget: ``init_samples + stages * picks_per_stage`` real evaluations.
    Each stage issues exactly ``inner_steps`` surrogate queries for mutated
    candidates (the ``inner_population`` bootstrap scores are counted
    separately in the extras).  Earmarked picks are distinct from each other
    and from everything already evaluated; a pick round that finds no
    eligible member defers to the first later step that offers one, and a
    stage that still ends short is topped up with fresh random topologies,
    so the query budget never stretches.
    """
    rng = np.random.default_rng(config.seed)
    budget = _Budget(reward_fn)
    history = SearchHistory()

    evaluated: list[tuple[Topology, float]] = []
    evaluated_ids: set[str] = set()

    def record(topology: Topology, value: float, step: int, phase: str) -> None:
        evaluated.append((topology, value))
        evaluated_ids.add(topology.id)
        history.append(
            HistoryEntry(
                step, topology.id, value, budget.one_shot_queries(), phase=phase
            )
        )

    for _ in range(config.init_samples):
        topology = sample_random(int(rng.integers(_MAX_SEED)), Layout.STAGE_WISE)
        value = budget.evaluate(topology)
        if value is not None:
            record(topology, value, 0, "init")
    if len(evaluated) < 2:
        raise SearchAborted("too few successful initial evaluations")

    model = SurrogateModel.initialize(config.surrogate, int(rng.integers(_MAX_SEED)))
    trace, optimizer = train_ranking(
        model,
        [t for t, _ in evaluated],
        [v for _, v in evaluated],
        epochs=config.epochs,
        batch_size=config.batch_size,
        lr=config.lr,
        margin=config.margin,
        seed=int(rng.integers(_MAX_SEED)),
    )
    loss_traces = [trace]

    stage_queries: list[int] = []
    bootstrap_queries: list[int] = []
    pick_interval = config.inner_steps // config.picks_per_stage
    deferred_steps: list[int] = []

    for stage in range(1, config.stages + 1):
        queries = 0

        def score(topology: Topology) -> float:
            nonlocal queries
            queries += 1
            return model.score(topology)

        pop: list[_Member] = []
        for b in range(config.inner_population):
            topology = sample_random(int(rng.integers(_MAX_SEED)), Layout.STAGE_WISE)
            pop.append(_Member(topology, model.score(topology), b))
        bootstrap_queries.append(config.inner_population)
        birth = config.inner_population

        picks: list[Topology] = []
        picked_ids: set[str] = set()
        deferred = 0

        def inner_step() -> None:
            # A child that duplicates a population member or a known topology
            # still consumes its step and its surrogate query, but is not
            # inserted: keeping the population free of duplicates guarantees
            # the earmark rounds keep finding fresh candidates instead of
            # deadlocking on a converged population.
            nonlocal birth
            parent = _tournament_parent(pop, config.inner_tournament, rng)
            child = mutate(parent.topology, int(rng.integers(_MAX_SEED)))
            value = score(child)
            cid = child.id
            if (
                cid in evaluated_ids
                or cid in picked_ids
                or any(m.topology.id == cid for m in pop)
            ):
                return
            pop.append(_Member(child, value, birth))
            birth += 1
            _evict_worst(pop)

        def eligible_best() -> _Member | None:
            candidates = [
                m
                for m in pop
                if m.topology.id not in picked_ids
                and m.topology.id not in evaluated_ids
            ]
            if not candidates:
                return None
            return min(candidates, key=lambda m: (-m.score, m.birth))

        for step in range(1, config.inner_steps + 1):
            inner_step()
            # A pick becomes due every pick_interval steps; when the whole
            # population is already known the pick is deferred to the first
            # later step that offers a fresh member (the query budget stays
            # exactly inner_steps either way).
            while len(picks) < step // pick_interval:
                choice = eligible_best()
                if choice is None:
                    deferred += 1
                    break
                picks.append(choice.topology)
                picked_ids.add(choice.topology.id)
        while len(picks) < config.picks_per_stage:
            # Pathological end-of-stage deficit: fill with unscored fresh
            # random topologies so the stage still yields distinct picks.
            choice = eligible_best()
            if choice is not None:
                picks.append(choice.topology)
                picked_ids.add(choice.topology.id)
                continue
            topology = sample_random(int(rng.integers(_MAX_SEED)), Layout.STAGE_WISE)
            if topology.id not in picked_ids and topology.id not in evaluated_ids:
                picks.append(topology)
                picked_ids.add(topology.id)
        stage_queries.append(queries)
        deferred_steps.append(deferred)

        for topology in picks:
            value = budget.evaluate(topology)
            if value is not None:
                record(topology, value, stage, f"stage-{stage}")

        trace, optimizer = train_ranking(
            model,
            [t for t, _ in evaluated],
            [v for _, v in evaluated],
            epochs=config.tune_epochs,
            batch_size=config.batch_size,
            lr=config.lr,
            margin=config.margin,
            seed=int(rng.integers(_MAX_SEED)),
            optimizer=optimizer,
        )
        loss_traces.append(trace)

    best_topology, best_reward = max(
        enumerate(evaluated), key=lambda iv: (iv[1][1], -iv[0])
    )[1]
    return SearchResult(
        best_topology=best_topology,
        best_reward=best_reward,
        history=history,
        n_evaluations=budget.n_evaluations,
        one_shot_queries=budget.one_shot_queries(),
        extras={
            "n_failures": budget.n_failures,
            "stage_queries": stage_queries,
            "bootstrap_queries": bootstrap_queries,
            "deferred_steps": deferred_steps,
            "final_train_loss": loss_traces[-1][-1] if loss_traces[-1] else 0.0,
        },
    )

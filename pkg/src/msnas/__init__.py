"""msnas: multi-shot architecture search with capacity extrapolation.

A topology is evaluated once in each of several differently sized
supernets; a saturating curve fitted to those (capacity, reward) points
estimates its reward at a target capacity, and search controllers optimize
that estimate over the topology space.
"""

from .capacity import (
    ConfigurationError,
    DEFAULT_MACRO,
    MacroConfig,
    capacity_profile,
    flops_total,
    solve_channels,
)
from .controllers import (
    EvoConfig,
    HistoryEntry,
    PredictorConfig,
    SearchAborted,
    SearchHistory,
    SearchResult,
    evo_search,
    predictor_search,
)
from .curvefit import (
    CurveDomainError,
    CurvePoint,
    EvaluationError,
    FitResult,
    FunctionFamily,
    MultiShotEstimate,
    MultiShotReward,
    PARAM_COUNTS,
    Prediction,
    UnconvergedFitError,
    UnderDeterminedError,
    X_SCALE,
    eval_family,
    fallback_predict,
    fit,
    fit_many,
    multi_shot_eval,
    predict_at,
)
from .evaluator import (
    DEFAULT_CHANNELS,
    DuplicateKeyError,
    IncompleteTableError,
    OneShotRecord,
    RewardLookupError,
    RewardTable,
    SimulatorBackend,
    SimulatorConfig,
    SupernetSpec,
    TABLE_HEADER,
    TableFormatError,
    TabularBackend,
    UnsupportedBackendOperation,
    dump_table,
    load_table,
    simulate_population,
    table_from_backend,
)
from .search_space import (
    CellTopology,
    Layout,
    NUM_EDGES,
    OPS,
    OpKind,
    SpaceSize,
    Topology,
    TopologyFeatures,
    TopologySchemaError,
    admissible_edges,
    deserialize,
    edit_distance,
    features,
    mutate,
    sample_random,
    serialize,
    space_size,
)
from .selection import (
    DegenerateInputError,
    LooCorrelation,
    LooReport,
    RankStatistic,
    kendall_tau,
    loo_correlation,
    pairwise_spearman_matrix,
    precision_at_k,
    select_family,
    spearman,
)
from .surrogate import (
    LossDivergedError,
    SurrogateConfig,
    SurrogateModel,
    UnsupportedLayoutError,
    pairwise_violation_rate,
    train_ranking,
)

__version__ = "0.1.0"

__all__ = [
    # capacity
    "ConfigurationError", "DEFAULT_MACRO", "MacroConfig", "capacity_profile",
    "flops_total", "solve_channels",
    # controllers
    "EvoConfig", "HistoryEntry", "PredictorConfig", "SearchAborted",
    "SearchHistory", "SearchResult", "evo_search", "predictor_search",
    # curvefit
    "CurveDomainError", "CurvePoint", "EvaluationError", "FitResult",
    "FunctionFamily", "MultiShotEstimate", "MultiShotReward", "PARAM_COUNTS",
    "Prediction", "UnconvergedFitError", "UnderDeterminedError", "X_SCALE",
    "eval_family", "fallback_predict", "fit", "fit_many", "multi_shot_eval",
    "predict_at",
    # evaluator
    "DEFAULT_CHANNELS", "DuplicateKeyError", "IncompleteTableError",
    "OneShotRecord", "RewardLookupError", "RewardTable", "SimulatorBackend",
    "SimulatorConfig", "SupernetSpec", "TABLE_HEADER", "TableFormatError",
    "TabularBackend", "UnsupportedBackendOperation", "dump_table",
    "load_table", "simulate_population", "table_from_backend",
    # search_space
    "CellTopology", "Layout", "NUM_EDGES", "OPS", "OpKind", "SpaceSize",
    "Topology", "TopologyFeatures", "TopologySchemaError", "admissible_edges",
    "deserialize", "edit_distance", "features", "mutate", "sample_random",
    "serialize", "space_size",
    # selection
    "DegenerateInputError", "LooCorrelation", "LooReport", "RankStatistic",
    "kendall_tau", "loo_correlation", "pairwise_spearman_matrix",
    "precision_at_k", "select_family", "spearman",
    # surrogate
    "LossDivergedError", "SurrogateConfig", "SurrogateModel",
    "UnsupportedLayoutError", "pairwise_violation_rate", "train_ranking",
    "__version__",
]

"""Sparse group regression at scale.

Group-lasso path fitting with BIC model selection, plus a two-stage
divide-and-conquer estimator: shard the rows, select a support on each
shard, combine supports by majority vote, refit every shard on the voted
support without a penalty, and average the refits.  An overlapping-groups
variant works on a duplicated design and votes on features, keeping only
features whose whole group survived.

Quick start::

    import numpy as np
    from dcglasso import DCGroupLasso

    groups = [np.arange(3 * i, 3 * i + 3) for i in range(100)]
    model = DCGroupLasso(groups=groups, m=5).fit(X, y)
    model.support_groups_, model.coef_
"""

from ._version import __version__
from .bench import (
    BenchRow,
    chebyshev_vote_bound,
    fullset_fit,
    run_benchmark,
    rows_to_csv,
    sample_complexity_rates,
    vote_consistency_mc,
)
from .dc import (
    DcResult,
    ShardPlan,
    ShardVote,
    average_estimates,
    local_select,
    majority_vote,
    run_dc_glasso,
    shard_split,
    stage2_local,
    worker_count,
)
from .design import (
    GroupCoefficients,
    GroupedDesign,
    Standardization,
    SupportPattern,
    standardize,
)
from .estimators import DCGroupLasso, GroupLassoBIC
from .exceptions import (
    AllPathsFailedError,
    AllShardsFailedError,
    DimensionMismatchError,
    EmptyGroupError,
    GroupStructureError,
    IndexOutOfRangeError,
    ModeMismatchError,
    NonFiniteError,
    OverlapInNonOverlapModeError,
    ShardTooSmallError,
    UncoveredFeatureError,
)
from .groups import GroupStructure, validate_structure
from .metrics import degrees_of_freedom, mse, support_metrics
from .overlap import (
    DuplicationMap,
    collapse_duplicates,
    expand_duplicates,
    feature_vote,
    run_dc_oglasso,
    security_check,
)
from .simulate import (
    SCENARIOS,
    GroundTruth,
    ScenarioSpec,
    gen_equicorrelated,
    gen_overlap_scenario,
    gen_scenario,
    scenario_spec,
)
from .solver import (
    FitResult,
    PathFit,
    RefitResult,
    SolverConfig,
    bic_select,
    fit_glasso,
    fit_path,
    kkt_residual,
    lambda_max,
    lambda_path,
    objective_value,
    refit,
)

__all__ = [
    "__version__",
    "AllPathsFailedError",
    "AllShardsFailedError",
    "average_estimates",
    "BenchRow",
    "bic_select",
    "chebyshev_vote_bound",
    "collapse_duplicates",
    "DCGroupLasso",
    "DcResult",
    "degrees_of_freedom",
    "DimensionMismatchError",
    "DuplicationMap",
    "EmptyGroupError",
    "expand_duplicates",
    "feature_vote",
    "fit_glasso",
    "fit_path",
    "FitResult",
    "fullset_fit",
    "gen_equicorrelated",
    "gen_overlap_scenario",
    "gen_scenario",
    "GroundTruth",
    "GroupCoefficients",
    "GroupedDesign",
    "GroupLassoBIC",
    "GroupStructure",
    "GroupStructureError",
    "IndexOutOfRangeError",
    "kkt_residual",
    "lambda_max",
    "lambda_path",
    "local_select",
    "majority_vote",
    "ModeMismatchError",
    "mse",
    "NonFiniteError",
    "objective_value",
    "OverlapInNonOverlapModeError",
    "PathFit",
    "refit",
    "RefitResult",
    "run_benchmark",
    "run_dc_glasso",
    "run_dc_oglasso",
    "rows_to_csv",
    "sample_complexity_rates",
    "scenario_spec",
    "SCENARIOS",
    "ScenarioSpec",
    "security_check",
    "shard_split",
    "ShardPlan",
    "ShardTooSmallError",
    "ShardVote",
    "SolverConfig",
    "stage2_local",
    "standardize",
    "Standardization",
    "SupportPattern",
    "support_metrics",
    "UncoveredFeatureError",
    "validate_structure",
    "vote_consistency_mc",
    "worker_count",
]

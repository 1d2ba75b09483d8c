"""Peer-distance transfer experiments for remaining-useful-life prediction.

The package parses multivariate run-to-failure trajectories, converts raw
sensor rows into distances from a healthy reference group, trains a
deterministic random-forest regressor on the result, and evaluates transfer
between fleet subsets with percentage-error metrics.
"""

from .adapt import CoralTransform, RankDeficiencyWarning, apply_coral, fit_coral, raw_baseline
from .cosmo import (
    DISTANCE_KINDS,
    REFERENCE_MODES,
    CosmoFeatureMatrix,
    DistanceMethod,
    ReferenceGroup,
    ReferenceMode,
    build_mode_groups,
    check_k_condition,
    estimate_num_conditions,
    feature_matrix,
    feature_vector,
    read_features,
    sample_reference_group,
    write_features,
)
from .dataset import (
    SUBSET_IDS,
    CmapssParseError,
    NominalPool,
    RulTarget,
    Subset,
    Trajectory,
    attach_censored_rul,
    censored_rul_target,
    condition_triples,
    extract_nominal,
    label_rul,
    load_subset,
    load_subset_cache,
    parse_cmapss,
    read_rul_file,
    save_subset_cache,
    synthesize_fleet,
    write_cmapss,
    write_rul_file,
)
from .forest import Forest, ForestConfig, fit, load_forest, predict, predict_per_tree, save_forest
from .metrics import (
    RUL_LIMIT_DEFAULT,
    MetricReport,
    UnitPrediction,
    mape_fleet,
    mape_unit,
    mape_vs_rul_limit,
    rmse_last_cycle,
)
from .runner import (
    METHODS,
    SCENARIOS,
    ExperimentResult,
    FoldRecord,
    ScenarioSpec,
    fold_split,
    group_mean_mape,
    matrix_specs,
    run_curves,
    run_matrix,
    run_scenario,
    write_curve_csv,
    write_result_csv,
    write_summary_json,
)

__version__ = "0.1.0"

__all__ = [
    "CoralTransform",
    "RankDeficiencyWarning",
    "apply_coral",
    "fit_coral",
    "raw_baseline",
    "DISTANCE_KINDS",
    "REFERENCE_MODES",
    "CosmoFeatureMatrix",
    "DistanceMethod",
    "ReferenceGroup",
    "ReferenceMode",
    "build_mode_groups",
    "check_k_condition",
    "estimate_num_conditions",
    "feature_matrix",
    "feature_vector",
    "read_features",
    "sample_reference_group",
    "write_features",
    "SUBSET_IDS",
    "CmapssParseError",
    "NominalPool",
    "RulTarget",
    "Subset",
    "Trajectory",
    "attach_censored_rul",
    "censored_rul_target",
    "condition_triples",
    "extract_nominal",
    "label_rul",
    "load_subset",
    "load_subset_cache",
    "parse_cmapss",
    "read_rul_file",
    "save_subset_cache",
    "synthesize_fleet",
    "write_cmapss",
    "write_rul_file",
    "Forest",
    "ForestConfig",
    "fit",
    "load_forest",
    "predict",
    "predict_per_tree",
    "save_forest",
    "RUL_LIMIT_DEFAULT",
    "MetricReport",
    "UnitPrediction",
    "mape_fleet",
    "mape_unit",
    "mape_vs_rul_limit",
    "rmse_last_cycle",
    "METHODS",
    "SCENARIOS",
    "ExperimentResult",
    "FoldRecord",
    "ScenarioSpec",
    "fold_split",
    "group_mean_mape",
    "matrix_specs",
    "run_curves",
    "run_matrix",
    "run_scenario",
    "write_curve_csv",
    "write_result_csv",
    "write_summary_json",
    "__version__",
]

"""Derive and monitor micro KPIs for administrative processes.

The pipeline: load a schema-validated event-log table, train a
deterministic random forest against the macro-KPI target column, rank
the input variables by impurity-based and permutation importance,
filter the stable high-impact variables into micro-KPI candidates for
stakeholder review, and re-check the ranking on fresh data windows to
know when the derived KPIs have gone stale.
"""
from . import errors
from .cart import (
    ModelSchema,
    SplitChoice,
    SplitCriterion,
    TreeModel,
    TreeParams,
    best_split,
    entropy_from_counts,
    fit_tree,
    gini_from_counts,
    node_impurity,
    predict_tree,
    variance_of,
)
from .errors import KpiForgeError
from .forest import (
    ForestModel,
    ForestParams,
    OobReport,
    default_mtry,
    fit_forest,
    load_model,
    model_bytes,
    oob_score,
    predict_forest,
    predict_table,
    save_model,
)
from .importance import (
    ImportanceReport,
    PermutationResult,
    StabilityResult,
    compare_measures,
    importance_report,
    mdi,
    permutation_importance,
    rank_descending,
    spearman_from_ranks,
    stability_selection,
)
from .kpi import (
    DerivationThresholds,
    KpiRegistry,
    MacroKpi,
    MicroKpiCandidate,
    derive_micro_kpis,
    load_registry,
    save_registry,
)
from .monitor import (
    DriftReport,
    EffectSummary,
    detect_drift,
    evaluate_intervention,
    load_drift_report,
    load_effect_summary,
    save_drift_report,
    save_effect_summary,
)
from .seeding import child_rng, derive_seed
from .synth import (
    FeatureSpec,
    GeneratorSpec,
    GroundTruth,
    TargetSpec,
    generate,
    ground_truth,
    read_generator_spec,
    shift_window,
)
from .tabular import (
    ColumnKind,
    ColumnSpec,
    MissingPolicy,
    Role,
    Table,
    clean,
    from_columns,
    load_table,
    read_schema,
    split_holdout,
    validate_schema,
    write_schema,
    write_table,
)

__version__ = "0.1.0"

__all__ = [
    "errors",
    "KpiForgeError",
    # tabular
    "ColumnKind",
    "ColumnSpec",
    "MissingPolicy",
    "Role",
    "Table",
    "clean",
    "from_columns",
    "load_table",
    "read_schema",
    "split_holdout",
    "validate_schema",
    "write_schema",
    "write_table",
    # trees and forests
    "ModelSchema",
    "SplitChoice",
    "SplitCriterion",
    "TreeModel",
    "TreeParams",
    "best_split",
    "entropy_from_counts",
    "fit_tree",
    "gini_from_counts",
    "node_impurity",
    "predict_tree",
    "variance_of",
    "ForestModel",
    "ForestParams",
    "OobReport",
    "default_mtry",
    "fit_forest",
    "load_model",
    "model_bytes",
    "oob_score",
    "predict_forest",
    "predict_table",
    "save_model",
    # importance
    "ImportanceReport",
    "PermutationResult",
    "StabilityResult",
    "compare_measures",
    "importance_report",
    "mdi",
    "permutation_importance",
    "rank_descending",
    "spearman_from_ranks",
    "stability_selection",
    # kpi registry
    "DerivationThresholds",
    "KpiRegistry",
    "MacroKpi",
    "MicroKpiCandidate",
    "derive_micro_kpis",
    "load_registry",
    "save_registry",
    # monitoring
    "DriftReport",
    "EffectSummary",
    "detect_drift",
    "evaluate_intervention",
    "load_drift_report",
    "load_effect_summary",
    "save_drift_report",
    "save_effect_summary",
    # synthetic data
    "FeatureSpec",
    "GeneratorSpec",
    "GroundTruth",
    "TargetSpec",
    "generate",
    "ground_truth",
    "read_generator_spec",
    "shift_window",
    # seeding
    "child_rng",
    "derive_seed",
]

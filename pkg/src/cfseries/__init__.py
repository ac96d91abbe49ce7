"""Counterfactual explanations for black-box multivariate time-series
classifiers: minimal variable substitutions, copied from a real sample of the
target class, that flip a model's prediction."""

from .bridge import (
    BridgeClassifier,
    BridgeConfig,
    BridgeError,
    BridgeExitError,
    BridgeHandshakeError,
    BridgeProtocolError,
    BridgeSpawnError,
    BridgeTimeoutError,
    open_bridge,
)
from .classifier import (
    ClassifierHandle,
    PredictionRule,
    ScoringError,
    decide_label,
    load_builtin,
    make_builtin,
    predict_label,
    predict_scores,
)
from .data import (
    Dataset,
    DatasetError,
    Manifest,
    MultivariateSeries,
    flatten,
    load_dataset,
    quality_filter,
    save_dataset,
)
from .distractors import DistractorError, DistractorStore, build_store, nearest_distractors
from .evaluate import (
    ComprehensibilityReport,
    CoverageGroup,
    CoverageReport,
    EvalError,
    comprehensibility_to_dict,
    coverage_table,
    coverage_to_dict,
    eval_comprehensibility,
    eval_coverage,
    rounded_percent,
)
from .kdtree import KDTree
from .search import (
    Explanation,
    NoCounterfactualError,
    PreconditionError,
    SearchConfig,
    SearchError,
    SearchStats,
    SubstitutionSet,
    apply_substitution,
    explain,
    explanation_from_dict,
    explanation_to_dict,
)
from .svgplot import render_overlay
from .synthetic import Benchmark, coverage_benchmark, planted_benchmark

__version__ = "0.1.0"

__all__ = [
    "Benchmark",
    "BridgeClassifier",
    "BridgeConfig",
    "BridgeError",
    "BridgeExitError",
    "BridgeHandshakeError",
    "BridgeProtocolError",
    "BridgeSpawnError",
    "BridgeTimeoutError",
    "ClassifierHandle",
    "ComprehensibilityReport",
    "CoverageGroup",
    "CoverageReport",
    "Dataset",
    "DatasetError",
    "DistractorError",
    "DistractorStore",
    "EvalError",
    "Explanation",
    "KDTree",
    "Manifest",
    "MultivariateSeries",
    "NoCounterfactualError",
    "PreconditionError",
    "PredictionRule",
    "ScoringError",
    "SearchConfig",
    "SearchError",
    "SearchStats",
    "SubstitutionSet",
    "apply_substitution",
    "build_store",
    "comprehensibility_to_dict",
    "coverage_benchmark",
    "coverage_table",
    "coverage_to_dict",
    "decide_label",
    "eval_comprehensibility",
    "eval_coverage",
    "explain",
    "explanation_from_dict",
    "explanation_to_dict",
    "flatten",
    "load_builtin",
    "load_dataset",
    "make_builtin",
    "nearest_distractors",
    "open_bridge",
    "planted_benchmark",
    "predict_label",
    "predict_scores",
    "quality_filter",
    "rounded_percent",
    "render_overlay",
    "save_dataset",
]

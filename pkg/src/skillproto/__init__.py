"""Self-explainable salary regression over skill sets.

Skill sets are disentangled into multi-view discrete subsets which are matched
against a bank of learned prototype skill sets; context-dependent salary
weights turn the matches into an additive, fully traceable prediction.
"""

from .data import (
    ContextField,
    CooccurrenceGraph,
    DataError,
    EncodedSample,
    FrequentSetPool,
    SkillVocabulary,
    SyntheticSpec,
    build_cooccurrence_graph,
    build_vocabulary,
    encode_posting,
    encode_query,
    generate_synthetic,
    load_dataset,
    mine_frequent_sets,
    split_dataset,
)
from .explain import (
    Explanation,
    MetricReport,
    evaluate,
    explain,
    export_prototypes,
    rank_prototypes,
    rmse_mae,
    scs_report,
    subset_cohesion_score,
)
from .model import DirectRegressor, SetRegressor, collate
from .training import (
    GumbelConfig,
    TrainConfig,
    TrainReport,
    anneal_temperature,
    fit,
    make_ablation,
    project_prototypes,
    total_loss,
)

__version__ = "0.1.0"

__all__ = [
    "ContextField",
    "CooccurrenceGraph",
    "DataError",
    "DirectRegressor",
    "EncodedSample",
    "Explanation",
    "FrequentSetPool",
    "GumbelConfig",
    "MetricReport",
    "SetRegressor",
    "SkillVocabulary",
    "SyntheticSpec",
    "TrainConfig",
    "TrainReport",
    "anneal_temperature",
    "build_cooccurrence_graph",
    "build_vocabulary",
    "collate",
    "encode_posting",
    "encode_query",
    "evaluate",
    "explain",
    "export_prototypes",
    "fit",
    "generate_synthetic",
    "load_dataset",
    "make_ablation",
    "mine_frequent_sets",
    "project_prototypes",
    "rank_prototypes",
    "rmse_mae",
    "scs_report",
    "split_dataset",
    "subset_cohesion_score",
    "total_loss",
]

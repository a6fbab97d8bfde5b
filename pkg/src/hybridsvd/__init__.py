"""HybridSVD: collaborative filtering with side similarities.

The model factors ``L_K^T R L_S`` with a truncated SVD, where ``L_K`` and
``L_S`` are sparse Cholesky factors of user and item similarity matrices.
With identity similarities it is PureSVD.
"""

from .errors import (
    ConfigError,
    ConvergenceError,
    DataError,
    DimensionError,
    HybridSVDError,
    NotPositiveDefiniteError,
    PatternMismatchError,
)
from .evaluation import (
    EvalReport,
    FactorCache,
    HybridSVDFactory,
    InteractionData,
    RandomFactory,
    SplitPlan,
    coverage,
    evaluate,
    evaluate_grid,
    hr_at_n,
    interactions_from_records,
    load_interactions,
    mrr_at_n,
    paired_t_test,
    split,
)
from .model import (
    ColdStartMap,
    HybridSvdModel,
    Recommendations,
    cold_item_embed,
    cold_item_users,
    cold_start_map,
    fit,
    load_model,
    recommend,
    save_model,
    score_items,
    top_n,
    truncate,
)
from .similarity import (
    FeatureCatalog,
    SideSimilarity,
    blend,
    common_neighbors,
    definiteness_guard,
    load_features,
    read_feature_csv,
)
from .sparse import SparseMatrix, from_triplets, scale_columns

__version__ = "0.1.0"

__all__ = [
    "ColdStartMap",
    "ConfigError",
    "ConvergenceError",
    "DataError",
    "DimensionError",
    "EvalReport",
    "FactorCache",
    "FeatureCatalog",
    "HybridSVDError",
    "HybridSVDFactory",
    "HybridSvdModel",
    "InteractionData",
    "NotPositiveDefiniteError",
    "PatternMismatchError",
    "RandomFactory",
    "Recommendations",
    "SideSimilarity",
    "SparseMatrix",
    "SplitPlan",
    "blend",
    "cold_item_embed",
    "cold_item_users",
    "cold_start_map",
    "common_neighbors",
    "coverage",
    "definiteness_guard",
    "evaluate",
    "evaluate_grid",
    "fit",
    "from_triplets",
    "hr_at_n",
    "interactions_from_records",
    "load_features",
    "load_interactions",
    "load_model",
    "mrr_at_n",
    "paired_t_test",
    "read_feature_csv",
    "recommend",
    "save_model",
    "scale_columns",
    "score_items",
    "split",
    "top_n",
    "truncate",
]

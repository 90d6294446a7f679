"""Decision trees whose final split targets a probability threshold.

Upper splits are CART; the last split on each branch can be re-placed with a
penalised (PFS), distance-maximising (MDFS) or weighted-risk (wEFS) criterion, on raw
labels or on a random-forest teacher's probabilities.
"""

from .criteria import (
    NoValidSplit,
    SplitCriterion,
    SplitDecision,
    find_best_split_cart,
    find_final_split,
)
from .data import DataError, Dataset, EmptyDataset, Method, NodeStats, TrainConfig, node_stats, validate_dataset
from .forest import Forest, ForestConfig, fit_forest, predict_proba
from .tree import (
    Internal,
    Leaf,
    PolicyReport,
    grow_tree,
    grow_tree_kd,
    policy_report,
    predict,
    render_tree,
    tree_from_json,
    tree_to_json,
)

__version__ = "0.1.0"

__all__ = [
    "DataError",
    "Dataset",
    "EmptyDataset",
    "Forest",
    "ForestConfig",
    "Internal",
    "Leaf",
    "Method",
    "NoValidSplit",
    "NodeStats",
    "PolicyReport",
    "SplitCriterion",
    "SplitDecision",
    "TrainConfig",
    "find_best_split_cart",
    "find_final_split",
    "fit_forest",
    "grow_tree",
    "grow_tree_kd",
    "node_stats",
    "policy_report",
    "predict",
    "predict_proba",
    "render_tree",
    "tree_from_json",
    "tree_to_json",
    "validate_dataset",
]

"""Random forest regressor built from CART regression trees."""

from smest.forest.ensemble import Forest, ForestParams, bootstrap_indices, check_schema, fit_forest, predict
from smest.forest.io import load_forest, save_forest
from smest.forest.tree import Split, Tree, best_split, fit_tree, n_split_features

__all__ = [
    "Forest", "ForestParams", "Split", "Tree", "best_split", "bootstrap_indices",
    "check_schema", "fit_forest", "fit_tree", "load_forest", "n_split_features",
    "predict", "save_forest",
]

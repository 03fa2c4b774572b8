"""Bagged ensembles of CART trees.

Each tree sees a bootstrap resample of the training rows (size n, with
replacement) plus per-node feature sampling.  Tree seeds are derived from
the master seed and the tree index with a counter-based scheme, so fitting
is reproducible and order-independent: growing trees in parallel or
serially yields bit-identical forests.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .cart import TreeConfig, TreeModel, grow_tree
from .datacore import Dataset

__all__ = ["ForestConfig", "ForestModel", "fit_forest", "predict_forest", "tree_predictions"]


@dataclass(frozen=True)
class ForestConfig:
    n_trees: int = 500
    bootstrap: bool = True
    tree: TreeConfig = field(default_factory=TreeConfig)
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")


@dataclass(frozen=True)
class ForestModel:
    trees: tuple[TreeModel, ...]
    config: ForestConfig
    feature_names: tuple[str, ...]

    def __post_init__(self):
        if len(self.trees) != self.config.n_trees:
            raise ValueError("tree count does not match config")
        dims = {t.n_features for t in self.trees}
        if len(dims) != 1:
            raise ValueError("trees disagree on feature dimensionality")

    @property
    def n_features(self) -> int:
        return self.trees[0].n_features

    def to_json(self) -> str:
        header = {
            "n_trees": self.config.n_trees,
            "bootstrap": self.config.bootstrap,
            "seed": self.config.seed,
            "tree_config": {
                "mtry": self.config.tree.mtry,
                "max_depth": self.config.tree.max_depth,
                "max_leaf_nodes": self.config.tree.max_leaf_nodes,
                "min_samples_leaf": self.config.tree.min_samples_leaf,
                "growth": self.config.tree.growth,
            },
            "feature_names": list(self.feature_names),
        }
        return json.dumps({"config": header, "trees": [t.to_dict() for t in self.trees]})

    @classmethod
    def from_json(cls, text: str) -> "ForestModel":
        doc = json.loads(text)
        cfg = doc["config"]
        tree_cfg = TreeConfig(**cfg["tree_config"])
        config = ForestConfig(
            n_trees=cfg["n_trees"], bootstrap=cfg["bootstrap"], tree=tree_cfg, seed=cfg["seed"]
        )
        return cls(
            trees=tuple(TreeModel.from_dict(d) for d in doc["trees"]),
            config=config,
            feature_names=tuple(cfg["feature_names"]),
        )


def _tree_seed(master_seed: int, tree_index: int) -> np.random.SeedSequence:
    # counter-based: independent of the order trees are grown in
    return np.random.SeedSequence(entropy=master_seed, spawn_key=(tree_index,))


def fit_forest(dataset: Dataset, config: ForestConfig) -> ForestModel:
    """Fit a bagged forest of CART trees.

    Tree b draws its bootstrap row multiset (size n, with replacement) and
    all node-level feature samples from the stream seeded by
    (config.seed, b).  With bootstrap off, every tree sees the full sample
    and trees differ only through feature sampling.
    """
    if dataset.n == 0:
        raise ValueError("empty dataset")
    all_rows = np.arange(dataset.n)
    trees = []
    for b in range(config.n_trees):
        seed = _tree_seed(config.seed, b)
        rng = np.random.default_rng(seed)
        rows = rng.integers(0, dataset.n, size=dataset.n) if config.bootstrap else all_rows
        trees.append(grow_tree(dataset, rows, config.tree, rng))
    return ForestModel(trees=tuple(trees), config=config, feature_names=dataset.feature_names)


def tree_predictions(forest: ForestModel, X) -> np.ndarray:
    """Matrix of per-tree predictions: rows are observations, columns trees."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(1, -1)
    if X.shape[1] != forest.n_features:
        raise ValueError(
            f"expected {forest.n_features} feature columns, got {X.shape[1]}"
        )
    return np.column_stack([t.predict_matrix(X) for t in forest.trees])


def predict_forest(forest: ForestModel, x) -> float | np.ndarray:
    """Arithmetic mean of the per-tree predictions.

    Accepts a single feature vector (returns a float) or a matrix of rows
    (returns a vector).  By construction this equals the row means of
    tree_predictions exactly.
    """
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    preds = tree_predictions(forest, x).mean(axis=1)
    return float(preds[0]) if single else preds

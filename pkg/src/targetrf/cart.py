"""Regression trees grown by the CART impurity-decrease criterion.

Splits maximize the decrease in within-node sum of squared deviations,
normalized by the total training-sample size.  Candidate thresholds are
the observed in-node values of the scanned coordinate, which makes the
criterion exactly enumerable.  Feature sampling draws a fresh candidate
direction set at every node from a seeded stream, so growing a tree is a
pure function of (data, rows, config, seed); the resulting TreeModel is
immutable and safe to share across threads.
"""
from __future__ import annotations

import heapq
import json
import math
from dataclasses import dataclass

import numpy as np

from .datacore import Dataset

__all__ = [
    "SplitSpec",
    "TreeNode",
    "TreeModel",
    "TreeConfig",
    "impurity_decrease",
    "best_split",
    "grow_tree",
    "predict_tree",
    "column_split_scan",
]


@dataclass(frozen=True)
class SplitSpec:
    """A single axis-aligned split: direction, threshold, and its gain."""

    direction: int
    threshold: float
    impurity_decrease: float

    def __post_init__(self):
        if self.impurity_decrease < 0:
            raise ValueError("impurity decrease must be nonnegative")


@dataclass(frozen=True)
class TreeConfig:
    """Tuning knobs for a single tree.

    mtry: number of candidate split directions drawn at each node.  May be
    a count, a fraction of the available predictors, or None for the
    ceil(a/3) default.  max_leaf_nodes requires best_first growth.
    """

    mtry: int | float | None = None
    max_depth: int | None = None
    max_leaf_nodes: int | None = None
    min_samples_leaf: int = 1
    growth: str = "depth_first"

    def __post_init__(self):
        if self.growth not in ("depth_first", "best_first"):
            raise ValueError(f"unknown growth mode: {self.growth!r}")
        if self.min_samples_leaf < 1:
            raise ValueError("min_samples_leaf must be >= 1")
        if self.max_leaf_nodes is not None and self.max_leaf_nodes < 1:
            raise ValueError("max_leaf_nodes must be >= 1")
        if self.max_depth is not None and self.max_depth < 0:
            raise ValueError("max_depth must be >= 0")
        if self.max_leaf_nodes is not None and self.growth != "best_first":
            raise ValueError("max_leaf_nodes requires growth='best_first'")

    def resolve_mtry(self, available: int) -> int:
        """Concrete draw size for `available` predictors (clamped to it).

        A float is read as a fraction of the available predictors, an int
        as a count; None gives the ceil(available/3) default.
        """
        if available < 1:
            raise ValueError("need at least one predictor")
        if self.mtry is None:
            m = math.ceil(available / 3)
        elif isinstance(self.mtry, float):
            if not 0.0 < self.mtry <= 1.0:
                raise ValueError("fractional mtry must lie in (0, 1]")
            m = math.ceil(self.mtry * available)
        else:
            m = int(self.mtry)
        if m < 1:
            raise ValueError(f"resolved mtry {m} < 1")
        return min(m, available)


@dataclass(frozen=True)
class TreeNode:
    """One node of a fitted tree; leaves have feature None."""

    feature: int | None
    threshold: float
    decrease: float
    left: int
    right: int
    value: float
    count: int
    depth: int
    parent: int

    @property
    def is_leaf(self) -> bool:
        return self.feature is None


@dataclass(frozen=True)
class TreeModel:
    """A fitted binary regression tree (immutable)."""

    nodes: tuple[TreeNode, ...]
    n_features: int
    depth: int = 0
    leaf_count: int = 0

    def __post_init__(self):
        object.__setattr__(self, "depth", max(n.depth for n in self.nodes))
        object.__setattr__(
            self, "leaf_count", sum(1 for n in self.nodes if n.is_leaf)
        )

    def predict(self, x) -> float:
        """Leaf mean of the unique leaf containing x (value <= tau goes left)."""
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.n_features,):
            raise ValueError(
                f"expected a vector of length {self.n_features}, got shape {x.shape}"
            )
        i = 0
        node = self.nodes[0]
        while not node.is_leaf:
            i = node.left if x[node.feature] <= node.threshold else node.right
            node = self.nodes[i]
        return node.value

    def predict_matrix(self, X) -> np.ndarray:
        """Vector of predictions for the rows of X."""
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise ValueError(
                f"expected a matrix with {self.n_features} columns, got {X.shape}"
            )
        out = np.empty(X.shape[0], dtype=np.float64)
        stack = [(0, np.arange(X.shape[0]))]
        while stack:
            i, rows = stack.pop()
            node = self.nodes[i]
            if node.is_leaf:
                out[rows] = node.value
                continue
            go_left = X[rows, node.feature] <= node.threshold
            stack.append((node.left, rows[go_left]))
            stack.append((node.right, rows[~go_left]))
        return out

    def to_dict(self) -> dict:
        return {
            "n_features": self.n_features,
            "nodes": [
                {
                    "id": i,
                    "parent": n.parent,
                    "feature": n.feature,
                    "threshold": n.threshold,
                    "decrease": n.decrease,
                    "left": n.left,
                    "right": n.right,
                    "value": n.value,
                    "count": n.count,
                    "depth": n.depth,
                }
                for i, n in enumerate(self.nodes)
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, doc: dict) -> "TreeModel":
        nodes = tuple(
            TreeNode(
                feature=d["feature"],
                threshold=d["threshold"],
                decrease=d["decrease"],
                left=d["left"],
                right=d["right"],
                value=d["value"],
                count=d["count"],
                depth=d["depth"],
                parent=d["parent"],
            )
            for d in sorted(doc["nodes"], key=lambda d: d["id"])
        )
        return cls(nodes=nodes, n_features=doc["n_features"])

    @classmethod
    def from_json(cls, text: str) -> "TreeModel":
        return cls.from_dict(json.loads(text))


def _sse(y: np.ndarray) -> float:
    """Sum of squared deviations from the mean (0 for empty input)."""
    if y.size == 0 or y.min() == y.max():
        return 0.0
    d = y - y.mean()
    return float(d @ d)


def impurity_decrease(
    node_rows,
    direction: int,
    threshold: float,
    dataset: Dataset,
    n_total: int,
    min_samples_leaf: int = 1,
) -> float | None:
    """CART impurity decrease of one candidate split, or None if infeasible.

    Returns (SSE(node) - SSE(left) - SSE(right)) / n_total, where left
    gathers the rows with coordinate value <= threshold.  A split is
    infeasible when either side would hold fewer than min_samples_leaf
    rows (this covers thresholds outside the node's observed range).
    """
    rows = np.asarray(node_rows)
    if rows.size == 0:
        raise ValueError("empty node")
    x = dataset.features[rows, direction]
    y = dataset.response[rows]
    left = x <= threshold
    n_left = int(left.sum())
    if n_left < min_samples_leaf or rows.size - n_left < min_samples_leaf:
        return None
    return (_sse(y) - _sse(y[left]) - _sse(y[~left])) / n_total


def column_split_scan(
    x: np.ndarray, y: np.ndarray, n_total: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Impurity decrease at every candidate threshold of one coordinate.

    Candidates are the unique observed values of x; splitting at the
    largest value leaves the right side empty and scores exactly 0.
    Returns (thresholds ascending, decreases, left-counts).  Responses are
    centered within the node first, which makes the returned decreases
    exactly nonnegative.
    """
    order = np.argsort(x, kind="stable")
    xs = x[order]
    ys = y[order] - y.mean()
    n = xs.size
    cum = np.cumsum(ys)
    ends = np.append(np.nonzero(np.diff(xs))[0], n - 1)
    n_left = ends + 1
    n_right = n - n_left
    s_left = cum[ends]
    # centered sums: decrease = S_L^2 (1/n_L + 1/n_R) / n_total
    dec = np.zeros(ends.size, dtype=np.float64)
    feasible = n_right > 0
    dec[feasible] = (
        s_left[feasible] ** 2
        * (1.0 / n_left[feasible] + 1.0 / n_right[feasible])
        / n_total
    )
    return xs[ends], dec, n_left


def best_split(
    node_rows,
    feasible_dirs,
    dataset: Dataset,
    n_total: int,
    min_samples_leaf: int = 1,
) -> SplitSpec | None:
    """Best feasible split over the given directions, or None.

    The argmax runs over every observed in-node value of each candidate
    coordinate.  Ties break toward the lower predictor index, then the
    smaller threshold.  Returns None when no candidate is feasible or the
    best achievable decrease is zero (e.g. a pure node).
    """
    rows = np.asarray(node_rows)
    dirs = sorted(feasible_dirs)
    if not dirs:
        raise ValueError("no feasible directions")
    y = dataset.response[rows]
    if y.min() == y.max():  # pure node: no variance to explain
        return None
    best: SplitSpec | None = None
    for i in dirs:
        taus, dec, n_left = column_split_scan(
            dataset.features[rows, i], y, n_total
        )
        ok = (n_left >= min_samples_leaf) & (rows.size - n_left >= min_samples_leaf)
        if not ok.any():
            continue
        dec = np.where(ok, dec, -np.inf)
        j = int(np.argmax(dec))  # first max = smallest tau
        if dec[j] > 0 and (best is None or dec[j] > best.impurity_decrease):
            best = SplitSpec(
                direction=i, threshold=float(taus[j]), impurity_decrease=float(dec[j])
            )
    return best


@dataclass
class _GrowingNode:
    rows: np.ndarray
    depth: int
    parent: int
    split: SplitSpec | None = None
    feature: int | None = None
    left: int = -1
    right: int = -1
    value: float = 0.0

    def freeze(self) -> TreeNode:
        return TreeNode(
            feature=self.feature,
            threshold=self.split.threshold if self.feature is not None else 0.0,
            decrease=self.split.impurity_decrease if self.feature is not None else 0.0,
            left=self.left,
            right=self.right,
            value=self.value,
            count=int(self.rows.size),
            depth=self.depth,
            parent=self.parent,
        )


def grow_tree(dataset: Dataset, rows, config: TreeConfig, seed) -> TreeModel:
    """Grow one CART tree on the given row multiset.

    A fresh direction sample of size mtry is drawn without replacement at
    every node from the seeded stream.  depth_first growth recurses left
    before right; best_first growth expands the frontier node whose best
    split has the maximal impurity decrease (insertion order breaks ties).
    Nodes stop splitting at max_depth / max_leaf_nodes, when pure, or when
    no feasible positive-decrease split exists.
    """
    rows = np.asarray(rows, dtype=np.intp)
    if rows.size == 0:
        raise ValueError("empty row set")
    rng = np.random.default_rng(seed)
    n_total = rows.size
    p = dataset.p
    m = config.resolve_mtry(p)
    max_depth = config.max_depth if config.max_depth is not None else np.inf

    nodes: list[_GrowingNode] = []

    def make_node(node_rows: np.ndarray, depth: int, parent: int) -> int:
        node = _GrowingNode(rows=node_rows, depth=depth, parent=parent)
        node.value = float(dataset.response[node_rows].mean())
        nodes.append(node)
        return len(nodes) - 1

    def try_split(idx: int) -> SplitSpec | None:
        node = nodes[idx]
        if node.depth >= max_depth or node.rows.size < 2 * config.min_samples_leaf:
            return None
        dirs = rng.choice(p, size=m, replace=False)
        node.split = best_split(
            node.rows, dirs.tolist(), dataset, n_total, config.min_samples_leaf
        )
        return node.split

    def apply_split(idx: int) -> tuple[int, int]:
        node = nodes[idx]
        spec = node.split
        go_left = dataset.features[node.rows, spec.direction] <= spec.threshold
        node.feature = spec.direction
        node.left = make_node(node.rows[go_left], node.depth + 1, idx)
        node.right = make_node(node.rows[~go_left], node.depth + 1, idx)
        return node.left, node.right

    root = make_node(rows, 0, -1)

    if config.growth == "depth_first":
        stack = [root]
        while stack:
            idx = stack.pop()
            if try_split(idx) is None:
                continue
            left, right = apply_split(idx)
            stack.append(right)  # LIFO: left expands first
            stack.append(left)
    else:
        max_leaves = (
            config.max_leaf_nodes if config.max_leaf_nodes is not None else np.inf
        )
        frontier: list[tuple[float, int, int]] = []
        counter = 0
        leaf_count = 1

        def enqueue(idx: int):
            nonlocal counter
            if leaf_count < max_leaves and try_split(idx) is not None:
                heapq.heappush(
                    frontier, (-nodes[idx].split.impurity_decrease, counter, idx)
                )
                counter += 1

        enqueue(root)
        while frontier and leaf_count < max_leaves:
            _, _, idx = heapq.heappop(frontier)
            left, right = apply_split(idx)
            leaf_count += 1
            enqueue(left)
            enqueue(right)

    return TreeModel(
        nodes=tuple(n.freeze() for n in nodes), n_features=dataset.p
    )


def predict_tree(tree: TreeModel, x) -> float:
    """Prediction of a fitted tree at a single feature vector."""
    return tree.predict(x)

"""From-scratch multi-class gradient boosting with a softmax objective.

Trees are grown by exact greedy split enumeration over sorted feature
values with second-order gain, learned missing-value default directions,
L2-regularized leaf weights, and a minimum child hessian weight. The
trained model is a plain data structure safe for concurrent prediction.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from ._gbt_kernels import scan_level, traverse
from .errors import (CorruptModel, DimensionMismatch, EmptyMatrix,
                     NonFiniteFeature, SingleClass)

MODEL_SCHEMA_VERSION = 1


@dataclass
class GbtParams:
    learning_rate: float = 0.08
    max_depth: int = 7
    min_child_weight: float = 5.0
    n_rounds: int = 200
    l2_lambda: float = 1.0
    n_classes: int = 4
    early_stopping_rounds: int | None = None
    seed: int = 0
    class_weights: list[float] | None = None

    def validate(self) -> None:
        if not 0.0 < self.learning_rate <= 1.0:
            raise ValueError("learning_rate must lie in (0, 1]")
        if self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")
        if self.min_child_weight < 0:
            raise ValueError("min_child_weight must be >= 0")
        if self.n_classes < 2:
            raise ValueError("n_classes must be >= 2")

    def to_dict(self) -> dict:
        return {
            "learning_rate": self.learning_rate,
            "max_depth": self.max_depth,
            "min_child_weight": self.min_child_weight,
            "n_rounds": self.n_rounds,
            "l2_lambda": self.l2_lambda,
            "n_classes": self.n_classes,
            "early_stopping_rounds": self.early_stopping_rounds,
            "seed": self.seed,
            "class_weights": self.class_weights,
        }


@dataclass
class Tree:
    """One regression tree in flat-array form.

    ``feature[i] == -1`` marks a leaf; ``cover`` is the training hessian
    sum at each node (required downstream by the Shapley attribution).
    """
    feature: np.ndarray    # int32
    threshold: np.ndarray  # float64
    miss_left: np.ndarray  # uint8, 1 = missing routed left
    left: np.ndarray       # int32
    right: np.ndarray      # int32
    weight: np.ndarray     # float64, leaf margin increments
    cover: np.ndarray      # float64

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def leaf_of(self, X: np.ndarray) -> np.ndarray:
        return traverse(np.ascontiguousarray(X, dtype=np.float64),
                        self.feature, self.threshold, self.miss_left,
                        self.left, self.right)

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.weight[self.leaf_of(X)]

    def to_nested(self) -> dict:
        def node(i: int) -> dict:
            if self.feature[i] < 0:
                return {"weight": float(self.weight[i]),
                        "cover": float(self.cover[i])}
            return {
                "feature": int(self.feature[i]),
                "threshold": float(self.threshold[i]),
                "default": "left" if self.miss_left[i] else "right",
                "cover": float(self.cover[i]),
                "left": node(int(self.left[i])),
                "right": node(int(self.right[i])),
            }
        return node(0)

    @classmethod
    def from_nested(cls, root: dict) -> "Tree":
        feature, threshold, miss_left = [], [], []
        left, right, weight, cover = [], [], [], []

        def add(nd: dict) -> int:
            i = len(feature)
            feature.append(-1)
            threshold.append(0.0)
            miss_left.append(1)
            left.append(-1)
            right.append(-1)
            weight.append(0.0)
            cover.append(float(nd["cover"]))
            if "feature" in nd:
                feature[i] = int(nd["feature"])
                threshold[i] = float(nd["threshold"])
                miss_left[i] = 1 if nd["default"] == "left" else 0
                left[i] = add(nd["left"])
                right[i] = add(nd["right"])
            else:
                weight[i] = float(nd["weight"])
            return i

        add(root)
        return cls(np.asarray(feature, np.int32),
                   np.asarray(threshold, np.float64),
                   np.asarray(miss_left, np.uint8),
                   np.asarray(left, np.int32), np.asarray(right, np.int32),
                   np.asarray(weight, np.float64),
                   np.asarray(cover, np.float64))


@dataclass
class GbtModel:
    params: GbtParams
    base_score: np.ndarray          # (K,) log-prior margins
    trees: list[list[Tree]]         # rounds x classes
    feature_names: list[str]
    history: dict = field(default_factory=dict)

    @property
    def n_classes(self) -> int:
        return self.params.n_classes

    @property
    def n_rounds(self) -> int:
        return len(self.trees)


def softmax(margins: np.ndarray) -> np.ndarray:
    z = margins - margins.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def mlogloss(proba: np.ndarray, y: np.ndarray) -> float:
    proba = np.asarray(proba, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if proba.ndim != 2 or len(proba) != len(y):
        raise DimensionMismatch("probability matrix and labels disagree")
    p = np.clip(proba[np.arange(len(y)), y], 1e-15, 1.0)
    return float(-np.mean(np.log(p)))


def _validate_matrix(X: np.ndarray) -> np.ndarray:
    X = np.ascontiguousarray(X, dtype=np.float64)
    if X.ndim != 2 or X.size == 0:
        raise EmptyMatrix("feature matrix is empty")
    finite_or_nan = np.isfinite(X) | np.isnan(X)
    if not finite_or_nan.all():
        raise NonFiniteFeature("non-missing non-finite values present")
    return X


def _presort(X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Value-sorted row indices per feature, missing rows excluded (CSR)."""
    n, n_feat = X.shape
    rows_parts = []
    offsets = np.zeros(n_feat + 1, dtype=np.int64)
    for f in range(n_feat):
        col = X[:, f]
        present = np.flatnonzero(~np.isnan(col))
        order = present[np.argsort(col[present], kind="stable")]
        rows_parts.append(order.astype(np.int32))
        offsets[f + 1] = offsets[f] + len(order)
    return np.concatenate(rows_parts) if rows_parts else \
        np.zeros(0, np.int32), offsets


def _grow_tree(X, sorted_rows, feat_offsets, g, h,
               params: GbtParams) -> tuple[Tree, np.ndarray]:
    """Grow one tree; returns (tree, leaf index per training row)."""
    n = X.shape[0]
    max_nodes = 2 ** (params.max_depth + 1)
    feature = np.full(max_nodes, -1, np.int32)
    threshold = np.zeros(max_nodes, np.float64)
    miss_left = np.ones(max_nodes, np.uint8)
    left = np.full(max_nodes, -1, np.int32)
    right = np.full(max_nodes, -1, np.int32)
    weight = np.zeros(max_nodes, np.float64)

    node_of_row = np.zeros(n, np.int32)
    g_tot = np.zeros(max_nodes)
    h_tot = np.zeros(max_nodes)
    g_tot[0] = g.sum()
    h_tot[0] = h.sum()
    n_nodes = 1
    level = [0]
    for _depth in range(params.max_depth):
        if not level:
            break
        is_active = np.zeros(max_nodes, np.uint8)
        is_active[level] = 1
        best_gain = np.full(max_nodes, -np.inf)
        best_feat = np.full(max_nodes, -1, np.int32)
        best_thr = np.zeros(max_nodes)
        best_miss = np.ones(max_nodes, np.uint8)
        scan_level(X, sorted_rows, feat_offsets, g, h, node_of_row, is_active,
                   g_tot, h_tot, params.min_child_weight, params.l2_lambda,
                   best_gain, best_feat, best_thr, best_miss)
        next_level = []
        for nd in level:
            if best_feat[nd] < 0 or best_gain[nd] <= 0.0:
                continue
            feature[nd] = best_feat[nd]
            threshold[nd] = best_thr[nd]
            miss_left[nd] = best_miss[nd]
            left[nd] = n_nodes
            right[nd] = n_nodes + 1
            next_level += [n_nodes, n_nodes + 1]
            n_nodes += 2
        if not next_level:
            break
        # re-route rows of split nodes to their children
        nd_arr = node_of_row
        split_mask = feature[nd_arr] >= 0
        idx = np.flatnonzero(split_mask)
        if len(idx):
            nds = nd_arr[idx]
            vals = X[idx, feature[nds]]
            miss = np.isnan(vals)
            go_left = np.where(miss, miss_left[nds] == 1,
                               vals < threshold[nds])
            node_of_row[idx] = np.where(go_left, left[nds], right[nds])
        g_tot = np.bincount(node_of_row, weights=g, minlength=max_nodes)
        h_tot = np.bincount(node_of_row, weights=h, minlength=max_nodes)
        level = next_level

    # finalize leaves
    for nd in range(n_nodes):
        if feature[nd] < 0:
            weight[nd] = (-g_tot[nd] / (h_tot[nd] + params.l2_lambda)
                          * params.learning_rate)
    # parent covers bottom-up: cover = hessian sum of rows reaching the node
    cover = h_tot.copy()
    for nd in range(n_nodes - 1, -1, -1):
        if feature[nd] >= 0:
            cover[nd] = cover[left[nd]] + cover[right[nd]]
    tree = Tree(feature[:n_nodes], threshold[:n_nodes], miss_left[:n_nodes],
                left[:n_nodes], right[:n_nodes], weight[:n_nodes],
                cover[:n_nodes])
    return tree, node_of_row


def train(X: np.ndarray, y: np.ndarray, params: GbtParams | None = None,
          feature_names: list[str] | None = None,
          val: tuple[np.ndarray, np.ndarray] | None = None) -> GbtModel:
    """Train a softmax-objective boosted ensemble with mlogloss tracking."""
    params = params or GbtParams()
    params.validate()
    X = _validate_matrix(X)
    y = np.asarray(y, dtype=np.int64)
    if len(X) != len(y):
        raise DimensionMismatch("row count differs from label count")
    present = np.unique(y)
    if len(present) < 2:
        raise SingleClass("training labels contain a single class")
    if present.min() < 0 or present.max() >= params.n_classes:
        raise ValueError("labels out of range for n_classes")
    n, n_feat = X.shape
    k_classes = params.n_classes
    if feature_names is None:
        feature_names = [f"f{j}" for j in range(n_feat)]
    if len(feature_names) != n_feat:
        raise DimensionMismatch("feature_names length mismatch")

    priors = np.bincount(y, minlength=k_classes) / n
    base = np.log(np.clip(priors, 1e-6, None))
    margins = np.tile(base, (n, 1))
    onehot = np.zeros((n, k_classes))
    onehot[np.arange(n), y] = 1.0
    sample_w = None
    if params.class_weights is not None:
        cw = np.asarray(params.class_weights, dtype=np.float64)
        sample_w = cw[y]

    has_val = val is not None
    if has_val:
        Xv = _validate_matrix(val[0])
        yv = np.asarray(val[1], dtype=np.int64)
        margins_v = np.tile(base, (len(Xv), 1))

    sorted_rows, feat_offsets = _presort(X)

    trees: list[list[Tree]] = []
    hist_train: list[float] = []
    hist_val: list[float] = []
    best_val = np.inf
    best_round = -1
    for _rnd in range(params.n_rounds):
        p = softmax(margins)
        round_trees = []
        for k in range(k_classes):
            g = p[:, k] - onehot[:, k]
            h = p[:, k] * (1.0 - p[:, k])
            if sample_w is not None:
                g = g * sample_w
                h = h * sample_w
            tree, leaf_idx = _grow_tree(X, sorted_rows, feat_offsets,
                                        np.ascontiguousarray(g),
                                        np.ascontiguousarray(h), params)
            margins[:, k] += tree.weight[leaf_idx]
            if has_val:
                margins_v[:, k] += tree.predict(Xv)
            round_trees.append(tree)
        trees.append(round_trees)
        hist_train.append(mlogloss(softmax(margins), y))
        if has_val:
            vloss = mlogloss(softmax(margins_v), yv)
            hist_val.append(vloss)
            if vloss < best_val - 1e-12:
                best_val = vloss
                best_round = len(trees) - 1
            elif (params.early_stopping_rounds is not None
                  and len(trees) - 1 - best_round
                  >= params.early_stopping_rounds):
                break

    if has_val and params.early_stopping_rounds is not None and best_round >= 0:
        trees = trees[:best_round + 1]
        hist_train = hist_train[:best_round + 1]
        hist_val = hist_val[:best_round + 1]

    history = {"train_mlogloss": hist_train}
    if has_val:
        history["val_mlogloss"] = hist_val
    return GbtModel(params=params, base_score=base, trees=trees,
                    feature_names=feature_names, history=history)


def predict_margin(model: GbtModel, X: np.ndarray) -> np.ndarray:
    """Per-class margins: base score plus summed leaf weights. (n, K)."""
    X = np.ascontiguousarray(np.atleast_2d(X), dtype=np.float64)
    if X.shape[1] != len(model.feature_names):
        raise DimensionMismatch(
            f"expected {len(model.feature_names)} columns, got {X.shape[1]}")
    margins = np.tile(model.base_score, (len(X), 1))
    for round_trees in model.trees:
        for k, tree in enumerate(round_trees):
            margins[:, k] += tree.predict(X)
    return margins


def predict_proba(model: GbtModel, X: np.ndarray) -> np.ndarray:
    return softmax(predict_margin(model, X))


def save_model(model: GbtModel, path) -> None:
    doc = {
        "schema_version": MODEL_SCHEMA_VERSION,
        "params": model.params.to_dict(),
        "base_score": [float(b) for b in model.base_score],
        "feature_names": list(model.feature_names),
        "trees": [[t.to_nested() for t in rnd] for rnd in model.trees],
        "history": model.history,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)


def load_model(path) -> GbtModel:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
        if doc.get("schema_version") != MODEL_SCHEMA_VERSION:
            raise CorruptModel(
                f"unsupported schema version {doc.get('schema_version')}")
        params = GbtParams(**doc["params"])
        trees = [[Tree.from_nested(t) for t in rnd] for rnd in doc["trees"]]
        return GbtModel(params=params,
                        base_score=np.asarray(doc["base_score"]),
                        trees=trees,
                        feature_names=list(doc["feature_names"]),
                        history=doc.get("history", {}))
    except CorruptModel:
        raise
    except (OSError, json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
        raise CorruptModel(f"cannot load model: {e}") from e

"""From-scratch random forest: Gini trees, stratified CV, threshold search.

Trees use axis-aligned splits chosen by Gini impurity decrease over a random
feature subset per split. The forest probability is the fraction of trees
whose leaf majority class is "confusion". A companion model trained on the
metadata-only features handles rows where package content was unavailable
(any PC field at the -1 sentinel).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .features import FEATURE_NAMES, GROUP_INDICES, PC_INDICES, SENTINEL

MODEL_MAGIC = "confuscan-forest/v1"

METADATA_GROUPS = ("SS", "MQ", "CD", "TS")
METADATA_FEATURE_INDICES = tuple(
    i for g in METADATA_GROUPS for i in GROUP_INDICES[g]
)
ALL_FEATURE_INDICES = tuple(range(len(FEATURE_NAMES)))

ROUTE_FULL = "full"
ROUTE_METADATA = "metadata-full"


class DegenerateModelError(ValueError):
    pass


class StratificationError(ValueError):
    pass


class ModelFormatError(ValueError):
    pass


@dataclass(frozen=True)
class Hyperparams:
    n_trees: int = 100
    max_depth: int | None = None
    min_leaf: int = 1
    features_per_split: int | None = None  # None: round(sqrt(|subset|))

    def resolve_features_per_split(self, n_features: int) -> int:
        if self.features_per_split is not None:
            return min(self.features_per_split, n_features)
        return max(1, min(n_features, round(math.sqrt(n_features))))


DEFAULT_GRID = (
    Hyperparams(n_trees=100, max_depth=None, min_leaf=1),
    Hyperparams(n_trees=100, max_depth=None, min_leaf=3),
    Hyperparams(n_trees=100, max_depth=8, min_leaf=1),
    Hyperparams(n_trees=100, max_depth=8, min_leaf=3),
    Hyperparams(n_trees=300, max_depth=None, min_leaf=1),
    Hyperparams(n_trees=300, max_depth=None, min_leaf=3),
    Hyperparams(n_trees=300, max_depth=8, min_leaf=1),
    Hyperparams(n_trees=300, max_depth=8, min_leaf=3),
)

# Tree nodes are flat rows: [feature, threshold, left, right, count0, count1].
# Leaves have feature == -1 and child slots unused.
_LEAF = -1


@dataclass
class TrainedForest:
    trees: list[list[list[float]]]
    feature_subset: tuple[int, ...]
    hyperparams: Hyperparams
    seed: int
    threshold: float | None = None
    companion: "TrainedForest | None" = None


def best_gini_split(
    X: np.ndarray, y: np.ndarray, feature_ids: list[int], min_leaf: int
) -> tuple[int, float] | None:
    """Lowest-weighted-Gini axis split, or None when no valid split improves.

    Ties break toward the lower feature index, then the lower threshold.
    """

    n = len(y)
    pos = int(y.sum())
    parent = n - (pos * pos + (n - pos) * (n - pos)) / n
    best: tuple[float, int, float] | None = None
    for feat in feature_ids:
        x = X[:, feat]
        order = np.argsort(x, kind="stable")
        xs = x[order]
        cum_pos = np.cumsum(y[order])
        left_n = np.arange(1, n)
        right_n = n - left_n
        valid = (xs[1:] > xs[:-1]) & (left_n >= min_leaf) & (right_n >= min_leaf)
        if not valid.any():
            continue
        left_pos = cum_pos[:-1]
        right_pos = pos - left_pos
        gini_left = left_n - (left_pos**2 + (left_n - left_pos) ** 2) / left_n
        gini_right = right_n - (right_pos**2 + (right_n - right_pos) ** 2) / right_n
        weighted = np.where(valid, gini_left + gini_right, np.inf)
        at = int(np.argmin(weighted))
        score = float(weighted[at])
        if score >= parent:
            continue
        threshold = float((xs[at] + xs[at + 1]) / 2.0)
        if best is None or score < best[0]:
            best = (score, feat, threshold)
    if best is None:
        return None
    return best[1], best[2]


def _build_tree(
    X: np.ndarray,
    y: np.ndarray,
    feature_subset: tuple[int, ...],
    hp: Hyperparams,
    rng: np.random.Generator,
) -> list[list[float]]:
    nodes: list[list[float]] = []
    m = hp.resolve_features_per_split(len(feature_subset))

    def grow(idx: np.ndarray, depth: int) -> int:
        node_id = len(nodes)
        yy = y[idx]
        count1 = int(yy.sum())
        count0 = len(yy) - count1
        nodes.append([_LEAF, 0.0, -1, -1, count0, count1])
        if count0 == 0 or count1 == 0:
            return node_id
        if hp.max_depth is not None and depth >= hp.max_depth:
            return node_id
        if len(idx) < 2 * hp.min_leaf:
            return node_id
        feats = sorted(rng.choice(feature_subset, size=m, replace=False).tolist())
        split = best_gini_split(X[idx], yy, feats, hp.min_leaf)
        if split is None:
            return node_id
        feat, threshold = split
        left_mask = X[idx, feat] <= threshold
        left_id = grow(idx[left_mask], depth + 1)
        right_id = grow(idx[~left_mask], depth + 1)
        nodes[node_id][:4] = [feat, threshold, left_id, right_id]
        return node_id

    grow(np.arange(len(y)), 0)
    return nodes


def bootstrap_indices(seed: int, tree_index: int, n_rows: int) -> np.ndarray:
    """Deterministic per-tree bootstrap sample, independent of parallelism."""

    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(tree_index,)))
    return rng.integers(0, n_rows, size=n_rows)


def _tree_rng(seed: int, tree_index: int) -> np.random.Generator:
    return np.random.default_rng(
        np.random.SeedSequence(entropy=seed, spawn_key=(tree_index, 1))
    )


def train(
    X: np.ndarray,
    y: np.ndarray,
    feature_subset: tuple[int, ...] = ALL_FEATURE_INDICES,
    hyperparams: Hyperparams = Hyperparams(),
    seed: int = 0,
    with_companion: bool = False,
) -> TrainedForest:
    """Train a forest; optionally also the metadata-only companion model."""

    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if len(np.unique(y)) < 2:
        raise DegenerateModelError("training data contains a single class")
    trees = []
    for t in range(hyperparams.n_trees):
        idx = bootstrap_indices(seed, t, len(y))
        trees.append(_build_tree(X[idx], y[idx], feature_subset, hyperparams, _tree_rng(seed, t)))
    model = TrainedForest(
        trees=trees, feature_subset=tuple(feature_subset), hyperparams=hyperparams, seed=seed
    )
    if with_companion:
        companion_subset = tuple(i for i in feature_subset if i not in PC_INDICES)
        if companion_subset and companion_subset != tuple(feature_subset):
            model.companion = train(
                X, y, companion_subset, hyperparams, seed=seed + 1, with_companion=False
            )
    return model


def _tree_vote(nodes: list[list[float]], x: np.ndarray) -> int:
    node = nodes[0]
    while node[0] != _LEAF:
        node = nodes[node[2]] if x[int(node[0])] <= node[1] else nodes[node[3]]
    # Leaf majority; an exact tie votes benign.
    return 1 if node[5] > node[4] else 0


def _vote_fraction(model: TrainedForest, x: np.ndarray) -> float:
    votes = sum(_tree_vote(tree, x) for tree in model.trees)
    return votes / len(model.trees)


def predict_proba(model: TrainedForest, x) -> float:
    probability, _ = predict_proba_routed(model, x)
    return probability


def predict_proba_routed(model: TrainedForest, x) -> tuple[float, str]:
    """Confusion probability plus the model route actually used.

    Rows whose PC fields carry the absence sentinel are routed to the
    metadata-only companion when one is attached.
    """

    values = np.asarray(getattr(x, "values", x), dtype=np.float64)
    if model.companion is not None and any(values[i] == SENTINEL for i in PC_INDICES):
        return _vote_fraction(model.companion, values), ROUTE_METADATA
    return _vote_fraction(model, values), ROUTE_FULL


def predict_proba_batch(model: TrainedForest, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    return np.array([predict_proba(model, row) for row in X])


@dataclass
class OOFResult:
    probabilities: np.ndarray
    fold_assignment: np.ndarray
    fold_models: list[TrainedForest] = field(default_factory=list)


def stratified_folds(y: np.ndarray, n_folds: int = 5, seed: int = 0) -> np.ndarray:
    """Deterministic stratified fold assignment; class ratios within +-1 sample."""

    y = np.asarray(y)
    assignment = np.full(len(y), -1, dtype=np.int64)
    rng = np.random.default_rng(seed)
    for cls in np.unique(y):
        idx = np.flatnonzero(y == cls)
        rng.shuffle(idx)
        for slot, row in enumerate(idx):
            assignment[row] = slot % n_folds
    for fold in range(n_folds):
        fold_labels = y[assignment == fold]
        if len(np.unique(fold_labels)) < 2:
            raise StratificationError(f"fold {fold} contains a single class")
    return assignment


def oof_predict(
    fold_models: list[TrainedForest], fold_assignment: np.ndarray, X: np.ndarray
) -> np.ndarray:
    """OOF probabilities for X (possibly transformed) with frozen fold models."""

    probs = np.zeros(len(X))
    for fold, model in enumerate(fold_models):
        mask = fold_assignment == fold
        for row in np.flatnonzero(mask):
            probs[row] = predict_proba(model, X[row])
    return probs


def f1_score(labels: np.ndarray, preds: np.ndarray, positive: int = 1) -> float:
    tp = int(((preds == positive) & (labels == positive)).sum())
    fp = int(((preds == positive) & (labels != positive)).sum())
    fn = int(((preds != positive) & (labels == positive)).sum())
    if 2 * tp + fp + fn == 0:
        return 0.0
    return 2 * tp / (2 * tp + fp + fn)


def cross_validate(
    X: np.ndarray,
    y: np.ndarray,
    feature_subset: tuple[int, ...] = ALL_FEATURE_INDICES,
    grid: tuple[Hyperparams, ...] = DEFAULT_GRID,
    seed: int = 0,
    n_folds: int = 5,
) -> tuple[Hyperparams, OOFResult]:
    """5-fold stratified CV; the grid point with best mean F1 at 0.5 wins."""

    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    assignment = stratified_folds(y, n_folds=n_folds, seed=seed)
    best_choice: tuple[float, int, OOFResult] | None = None
    for grid_idx, hp in enumerate(grid):
        probs = np.zeros(len(y))
        fold_models = []
        fold_f1s = []
        for fold in range(n_folds):
            train_mask = assignment != fold
            model = train(
                X[train_mask], y[train_mask], feature_subset, hp, seed=seed + fold
            )
            fold_models.append(model)
            test_rows = np.flatnonzero(~train_mask)
            for row in test_rows:
                probs[row] = predict_proba(model, X[row])
            fold_f1s.append(
                f1_score(y[test_rows], (probs[test_rows] > 0.5).astype(int))
            )
        mean_f1 = float(np.mean(fold_f1s))
        result = OOFResult(
            probabilities=probs, fold_assignment=assignment, fold_models=fold_models
        )
        # Strict > keeps the earliest grid point on ties (stable, documented).
        if best_choice is None or mean_f1 > best_choice[0]:
            best_choice = (mean_f1, grid_idx, result)
    assert best_choice is not None
    return grid[best_choice[1]], best_choice[2]


THRESHOLD_GRID = tuple(i / 100 for i in range(1, 100))


def threshold_search(probabilities: np.ndarray, labels: np.ndarray) -> float:
    """F1-maximizing threshold over 0.01..0.99; ties go to the lowest value."""

    probabilities = np.asarray(probabilities)
    labels = np.asarray(labels)
    best_threshold = THRESHOLD_GRID[0]
    best_f1 = -1.0
    for threshold in THRESHOLD_GRID:
        score = f1_score(labels, (probabilities > threshold).astype(int))
        if score > best_f1:
            best_f1 = score
            best_threshold = threshold
    return best_threshold


def auc_score(probabilities: np.ndarray, labels: np.ndarray) -> float:
    """Rank-statistic AUC: P(random positive outranks random negative), ties 1/2."""

    probabilities = np.asarray(probabilities, dtype=np.float64)
    labels = np.asarray(labels)
    n_pos = int((labels == 1).sum())
    n_neg = int((labels == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC requires both classes")
    order = np.argsort(probabilities, kind="stable")
    sorted_probs = probabilities[order]
    sorted_labels = labels[order]
    concordant = 0
    tied = 0
    negs_below = 0
    i = 0
    n = len(labels)
    while i < n:
        j = i
        while j < n and sorted_probs[j] == sorted_probs[i]:
            j += 1
        group_pos = int((sorted_labels[i:j] == 1).sum())
        group_neg = (j - i) - group_pos
        concordant += group_pos * negs_below
        tied += group_pos * group_neg
        negs_below += group_neg
        i = j
    return (concordant + 0.5 * tied) / (n_pos * n_neg)


def roc_points(probabilities: np.ndarray, labels: np.ndarray) -> list[tuple[float, float]]:
    """(FPR, TPR) at every distinct probability threshold, plus the endpoints."""

    probabilities = np.asarray(probabilities, dtype=np.float64)
    labels = np.asarray(labels)
    n_pos = int((labels == 1).sum())
    n_neg = int((labels == 0).sum())
    points = [(0.0, 0.0)]
    for threshold in sorted(set(probabilities.tolist()), reverse=True):
        preds = probabilities >= threshold
        tpr = int((preds & (labels == 1)).sum()) / n_pos if n_pos else 0.0
        fpr = int((preds & (labels == 0)).sum()) / n_neg if n_neg else 0.0
        points.append((fpr, tpr))
    if points[-1] != (1.0, 1.0):
        points.append((1.0, 1.0))
    return points


def evaluate(
    probabilities: np.ndarray, labels: np.ndarray, threshold: float = 0.5
) -> dict:
    """Classification metrics at the given threshold plus threshold-free AUC."""

    probabilities = np.asarray(probabilities)
    labels = np.asarray(labels)
    preds = (probabilities > threshold).astype(int)
    per_class = {}
    for cls in (0, 1):
        tp = int(((preds == cls) & (labels == cls)).sum())
        fp = int(((preds == cls) & (labels != cls)).sum())
        fn = int(((preds != cls) & (labels == cls)).sum())
        support = int((labels == cls).sum())
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
        per_class[cls] = {
            "precision": precision,
            "recall": recall,
            "f1": f1,
            "support": support,
        }
    total = len(labels)
    weighted = {
        metric: sum(per_class[c][metric] * per_class[c]["support"] for c in (0, 1)) / total
        for metric in ("precision", "recall", "f1")
    }
    fp_confusion = int(((preds == 1) & (labels == 0)).sum())
    tn = int(((preds == 0) & (labels == 0)).sum())
    return {
        "threshold": threshold,
        "accuracy": float((preds == labels).mean()),
        "per_class": per_class,
        "weighted": weighted,
        "fpr": fp_confusion / (fp_confusion + tn) if fp_confusion + tn else 0.0,
        "auc": auc_score(probabilities, labels),
        "roc": roc_points(probabilities, labels),
    }


def _forest_to_json(model: TrainedForest) -> dict:
    doc = {
        "trees": model.trees,
        "feature_subset": list(model.feature_subset),
        "hyperparams": {
            "n_trees": model.hyperparams.n_trees,
            "max_depth": model.hyperparams.max_depth,
            "min_leaf": model.hyperparams.min_leaf,
            "features_per_split": model.hyperparams.features_per_split,
        },
        "seed": model.seed,
        "threshold": model.threshold,
    }
    if model.companion is not None:
        doc["companion"] = _forest_to_json(model.companion)
    return doc


def _forest_from_json(doc: dict) -> TrainedForest:
    hp = Hyperparams(**doc["hyperparams"])
    companion = _forest_from_json(doc["companion"]) if doc.get("companion") else None
    return TrainedForest(
        trees=doc["trees"],
        feature_subset=tuple(doc["feature_subset"]),
        hyperparams=hp,
        seed=doc["seed"],
        threshold=doc["threshold"],
        companion=companion,
    )


def save(model: TrainedForest, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps({"magic": MODEL_MAGIC, "model": _forest_to_json(model)}, sort_keys=True))
        fh.write("\n")


def load(path: str) -> TrainedForest:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ModelFormatError(f"unreadable model file: {path}") from exc
    if not isinstance(doc, dict) or doc.get("magic") != MODEL_MAGIC:
        raise ModelFormatError(f"{path}: not a {MODEL_MAGIC} file")
    try:
        return _forest_from_json(doc["model"])
    except (KeyError, TypeError) as exc:
        raise ModelFormatError(f"{path}: corrupt model document") from exc

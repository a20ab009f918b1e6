"""Evaluation harness: TDR@k, model training, ablation, adversarial MQ flip."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass

import numpy as np

from . import forest as forest_mod
from .candidate_index import Index, SearchParams, channel_search, hybrid_search
from .features import (
    GROUP_INDICES,
    MQ_FLAG_INDICES,
    VERSION_COUNT_INDEX,
    FeatureVector,
)
from .names import normalize

log = logging.getLogger(__name__)

STRATEGIES = ("semantic", "syntactic", "hybrid")
DEFAULT_TDR_KS = (1, 3, 30)


@dataclass(frozen=True)
class PairRow:
    suspect: str
    target: str | None
    label: int
    ecosystem: str


def load_pair_dataset(path: str) -> list[PairRow]:
    """CSV with columns suspect,target,label,ecosystem (target may be empty)."""

    rows = []
    with open(path, encoding="utf-8", newline="") as fh:
        for doc in csv.DictReader(fh):
            rows.append(
                PairRow(
                    suspect=doc["suspect"],
                    target=doc.get("target") or None,
                    label=int(doc["label"]),
                    ecosystem=doc.get("ecosystem") or "npm",
                )
            )
    return rows


def _retrieve(index: Index, query: str, strategy: str, k: int) -> list[str]:
    # The suspect may itself be indexed; a self-hit is never a target, so
    # retrieve one extra rank and drop it before truncating at k.
    depth = k + 1
    if strategy == "hybrid":
        depth1 = max(100, depth)
        params = SearchParams(n=1, k1=depth1, k2=max(150, depth1 + 50), k=depth)
        matches = hybrid_search(index, query, params)
    elif strategy == "semantic":
        matches = channel_search(index, query, "semantic-only", k=depth)
    elif strategy == "syntactic":
        matches = channel_search(index, query, "syntactic-only", k=depth)
    else:
        raise ValueError(f"unknown strategy: {strategy!r}")
    own = normalize(query).canonical
    names = [m.name.canonical for m in matches if m.name.canonical != own]
    return names[:k]


def tdr_table(
    index: Index, pairs: list[PairRow], strategy: str, ks: tuple[int, ...] = DEFAULT_TDR_KS
) -> dict:
    """Fraction of confusion rows whose true target is retrieved within top-k."""

    ks = tuple(sorted(ks))
    k_max = min(max(ks), len(index))
    hits = {k: 0 for k in ks}
    evaluated = 0
    skipped = 0
    for row in pairs:
        if row.label != 1:
            continue
        if not row.target:
            skipped += 1
            continue
        evaluated += 1
        retrieved = _retrieve(index, row.suspect, strategy, k_max)
        truth = normalize(row.target).canonical
        rank = retrieved.index(truth) + 1 if truth in retrieved else None
        for k in ks:
            if rank is not None and rank <= min(k, k_max):
                hits[k] += 1
    table = {
        "strategy": strategy,
        "evaluated": evaluated,
        "skipped_missing_target": skipped,
        "tdr": {k: (hits[k] / evaluated if evaluated else 0.0) for k in ks},
    }
    if skipped:
        log.warning("%d confusion rows skipped: missing ground-truth target", skipped)
    return table


@dataclass(frozen=True)
class AblationConfig:
    name: str
    groups: tuple[str, ...]

    def __post_init__(self) -> None:
        if "SS" not in self.groups:
            raise ValueError(f"{self.name}: every configuration must include SS")
        unknown = set(self.groups) - set(GROUP_INDICES)
        if unknown:
            raise ValueError(f"{self.name}: unknown groups {sorted(unknown)}")

    @property
    def feature_subset(self) -> tuple[int, ...]:
        return tuple(i for g in self.groups for i in GROUP_INDICES[g])


ABLATION_CONFIGS = (
    AblationConfig("SS-Only", ("SS",)),
    AblationConfig("SS+MQ", ("SS", "MQ")),
    AblationConfig("SS+CD+TS", ("SS", "CD", "TS")),
    AblationConfig("SS+MQ+CD+TS", ("SS", "MQ", "CD", "TS")),
    AblationConfig("SS+CD+TS+PC", ("SS", "CD", "TS", "PC")),
    AblationConfig("All-Features", ("SS", "MQ", "CD", "TS", "PC")),
)


def rows_to_arrays(rows: list[tuple[FeatureVector, int]]) -> tuple[np.ndarray, np.ndarray]:
    X = np.array([list(v.values) for v, _ in rows], dtype=np.float64)
    y = np.array([label for _, label in rows], dtype=np.int64)
    return X, y


def mq_flip(X: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Forge the MQ features of confusion rows to look benign.

    Flags go to 1; version_count goes to the benign median (the least
    informative benign-looking value). Benign rows are untouched, and the
    transform is idempotent.
    """

    transformed = X.copy()
    benign_median = float(np.median(X[y == 0, VERSION_COUNT_INDEX]))
    confusion = y == 1
    for idx in MQ_FLAG_INDICES:
        transformed[confusion, idx] = 1.0
    transformed[confusion, VERSION_COUNT_INDEX] = benign_median
    return transformed


def train_model(
    rows: list[tuple[FeatureVector, int]],
    grid: tuple[forest_mod.Hyperparams, ...] = forest_mod.DEFAULT_GRID,
    seed: int = 0,
) -> tuple[forest_mod.TrainedForest, forest_mod.Hyperparams, forest_mod.OOFResult, dict]:
    """CV + threshold search + final fit on all rows, with companion model."""

    X, y = rows_to_arrays(rows)
    best_hp, oof = forest_mod.cross_validate(X, y, grid=grid, seed=seed)
    threshold = forest_mod.threshold_search(oof.probabilities, y)
    model = forest_mod.train(X, y, hyperparams=best_hp, seed=seed, with_companion=True)
    model.threshold = threshold
    if model.companion is not None:
        model.companion.threshold = threshold
    metrics = forest_mod.evaluate(oof.probabilities, y, threshold=threshold)
    return model, best_hp, oof, metrics


def ablate(
    rows: list[tuple[FeatureVector, int]],
    configs: tuple[AblationConfig, ...] = ABLATION_CONFIGS,
    grid: tuple[forest_mod.Hyperparams, ...] = forest_mod.DEFAULT_GRID,
    seed: int = 0,
) -> list[dict]:
    """Clean-data CV metrics for each feature-group configuration."""

    X, y = rows_to_arrays(rows)
    deduped = []
    seen = set()
    for config in configs:
        if config.name in seen:
            log.warning("duplicate ablation config %s ignored", config.name)
            continue
        seen.add(config.name)
        deduped.append(config)
    results = []
    for config in deduped:
        _, oof = forest_mod.cross_validate(
            X, y, feature_subset=config.feature_subset, grid=grid, seed=seed
        )
        threshold = forest_mod.threshold_search(oof.probabilities, y)
        metrics = forest_mod.evaluate(oof.probabilities, y, threshold=threshold)
        results.append(
            {
                "config": config.name,
                "auc": metrics["auc"],
                "f1": metrics["per_class"][1]["f1"],
                "recall": metrics["per_class"][1]["recall"],
                "threshold": threshold,
            }
        )
    return results


def adversarial_eval(
    rows: list[tuple[FeatureVector, int]],
    configs: tuple[AblationConfig, ...] = ABLATION_CONFIGS,
    grid: tuple[forest_mod.Hyperparams, ...] = forest_mod.DEFAULT_GRID,
    seed: int = 0,
) -> list[dict]:
    """Recall on clean vs MQ-flipped data per configuration, with frozen folds."""

    X, y = rows_to_arrays(rows)
    X_adv = mq_flip(X, y)
    results = []
    for config in configs:
        _, oof = forest_mod.cross_validate(
            X, y, feature_subset=config.feature_subset, grid=grid, seed=seed
        )
        threshold = forest_mod.threshold_search(oof.probabilities, y)
        adv_probs = forest_mod.oof_predict(oof.fold_models, oof.fold_assignment, X_adv)
        recall_clean = forest_mod.evaluate(oof.probabilities, y, threshold)["per_class"][1][
            "recall"
        ]
        recall_adv = forest_mod.evaluate(adv_probs, y, threshold)["per_class"][1]["recall"]
        results.append(
            {
                "config": config.name,
                "recall_clean": recall_clean,
                "recall_adv": recall_adv,
                "delta_recall": recall_clean - recall_adv,
                "threshold": threshold,
            }
        )
    return results

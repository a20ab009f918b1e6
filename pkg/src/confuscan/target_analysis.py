"""Legitimate-target selection: popularity scoring, filtering, top-3 ranking."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

from .candidate_index import CandidateMatch
from .names import NormalizedName
from .registry import PackageRecord
from .textsim import max_syntactic_similarity

POPULARITY_WEIGHTS = {"downloads": 0.5, "dependents": 0.2, "stars": 0.2, "forks": 0.1}
COMBINED_SIM_WEIGHT = 0.7
COMBINED_POP_WEIGHT = 0.3
DEFAULT_MIN_POPULARITY = 0.1

COUNT_FIELDS = ("downloads", "dependents", "stars", "forks")

STATS_MAGIC = "confuscan-stats/v1"


@dataclass(frozen=True)
class EcosystemStats:
    """Min/max of ln(1+count) per count field over one ecosystem snapshot."""

    bounds: dict[str, tuple[float, float]]

    @classmethod
    def from_records(cls, records: list[PackageRecord]) -> "EcosystemStats":
        bounds = {}
        for fieldname in COUNT_FIELDS:
            logs = [math.log1p(getattr(r, fieldname)) for r in records]
            bounds[fieldname] = (min(logs), max(logs)) if logs else (0.0, 0.0)
        return cls(bounds=bounds)

    def save(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump({"magic": STATS_MAGIC, "bounds": self.bounds}, fh, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path: str) -> "EcosystemStats":
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
        if doc.get("magic") != STATS_MAGIC:
            raise ValueError(f"{path}: not a {STATS_MAGIC} file")
        return cls(bounds={k: (v[0], v[1]) for k, v in doc["bounds"].items()})


def popularity_score(record: PackageRecord, stats: EcosystemStats) -> float:
    """Weighted min-max-normalized log counts; a degenerate span contributes 0."""

    score = 0.0
    for fieldname, weight in POPULARITY_WEIGHTS.items():
        lo, hi = stats.bounds[fieldname]
        if hi <= lo:
            continue
        value = math.log1p(getattr(record, fieldname))
        normalized = (value - lo) / (hi - lo)
        score += weight * min(1.0, max(0.0, normalized))
    return score


@dataclass(frozen=True)
class LegitimateTarget:
    record: PackageRecord
    syntactic_max: float
    popularity: float

    @property
    def combined(self) -> float:
        return COMBINED_SIM_WEIGHT * self.syntactic_max + COMBINED_POP_WEIGHT * self.popularity


@dataclass
class ThreatReport:
    input_name: NormalizedName
    ecosystem: str
    candidates: list[CandidateMatch]
    top3: list[LegitimateTarget] = field(default_factory=list)
    best: LegitimateTarget | None = None
    notes: list[str] = field(default_factory=list)


def select_targets(
    input_name: NormalizedName,
    candidates: list[CandidateMatch],
    records: dict[str, PackageRecord],
    stats: EcosystemStats,
    min_popularity: float = DEFAULT_MIN_POPULARITY,
) -> tuple[list[LegitimateTarget], LegitimateTarget | None, list[str]]:
    """Filter candidates to plausible legitimate targets and pick the best.

    records maps canonical candidate names to their metadata. Candidates
    without metadata are dropped (they cannot be scored for popularity).
    """

    notes: list[str] = []
    survivors: list[LegitimateTarget] = []
    for candidate in candidates:
        canonical = candidate.name.canonical
        if canonical == input_name.canonical:
            continue
        record = records.get(canonical)
        if record is None:
            notes.append(f"candidate {canonical}: no metadata, dropped")
            continue
        popularity = popularity_score(record, stats)
        if popularity < min_popularity:
            continue
        if not record.repository_url and popularity < 2 * min_popularity:
            continue
        survivors.append(
            LegitimateTarget(
                record=record,
                syntactic_max=max_syntactic_similarity(input_name, canonical),
                popularity=popularity,
            )
        )
    survivors.sort(
        key=lambda t: (-t.syntactic_max, -t.popularity, t.record.name.lower())
    )
    top3 = survivors[:3]
    best = None
    if top3:
        best = max(top3, key=lambda t: (t.combined, -top3.index(t)))
    else:
        notes.append("no plausible legitimate target after filtering")
    return top3, best, notes

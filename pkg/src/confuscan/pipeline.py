"""End-to-end scan workflow: acquire, retrieve, select, extract, classify.

Every degradation (missing metadata, empty target set, unavailable content)
is recorded as a reason line on the report rather than silently defaulted.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from datetime import datetime, timezone

from . import forest as forest_mod
from .candidate_index import Index, SearchParams, hybrid_search
from .content import ContentProfile, ContentUnavailableError, fetch_archive, profile_archive
from .features import FeatureVector, assemble
from .names import NormalizedName, normalize
from .registry import (
    MetadataStore,
    PackageRecord,
    UnavailableMetadataError,
    acquire,
)
from .target_analysis import EcosystemStats, ThreatReport, select_targets

SCHEMA_VERSION = 1


class ScanError(Exception):
    pass


@dataclass
class ScanConfig:
    ecosystem: str
    store: MetadataStore
    index: Index
    model: forest_mod.TrainedForest
    stats: EcosystemStats
    offline: bool = False
    content_enabled: bool = True
    search_params: SearchParams = field(default_factory=SearchParams)
    cache_dir: str = ".confuscan-cache"
    snapshot_time: datetime | None = None

    def __post_init__(self) -> None:
        if self.model.threshold is None:
            raise ValueError("scan requires a model with a calibrated threshold")


@dataclass
class FinalReport:
    input_name: NormalizedName
    ecosystem: str
    threat: ThreatReport
    features: FeatureVector
    probability: float
    threshold: float
    decision: str
    model_route: str
    reasons: list[str]
    timings: dict[str, float]

    def to_json(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "input": {"name": self.input_name.raw, "ecosystem": self.ecosystem},
            "threat_report": {
                "candidates": [
                    {
                        "name": c.name.raw,
                        "s_sem": c.s_sem,
                        "s_syn": c.s_syn,
                        "s_total": c.s_total,
                        "delta_l": c.delta_l,
                        "channel": c.channel,
                    }
                    for c in self.threat.candidates
                ],
                "top3": [
                    {
                        "name": t.record.name,
                        "syntactic_max": t.syntactic_max,
                        "popularity": t.popularity,
                        "combined": t.combined,
                    }
                    for t in self.threat.top3
                ],
                "best": self.threat.best.record.name if self.threat.best else None,
                "notes": self.threat.notes,
            },
            "feature_vector": self.features.as_dict(),
            "probability": self.probability,
            "threshold": self.threshold,
            "decision": self.decision,
            "model_route": self.model_route,
            "reasons": self.reasons,
            "timings": self.timings,
        }


def _profile_for(
    record: PackageRecord, config: ScanConfig, reasons: list[str], role: str
) -> ContentProfile | None:
    try:
        archive = fetch_archive(record, config.cache_dir)
        return profile_archive(archive, config.ecosystem, config.index.provider)
    except ContentUnavailableError as exc:
        reasons.append(f"content unavailable for {role} {record.name}: {exc}")
        return None


def scan(config: ScanConfig, name: str) -> FinalReport:
    """Scan one package name and emit the full confusion report."""

    input_name = normalize(name)
    reasons: list[str] = []
    timings: dict[str, float] = {}
    now = config.snapshot_time or datetime.now(timezone.utc)

    started = time.monotonic()
    try:
        record = acquire(config.store, config.ecosystem, name, offline=config.offline)
    except UnavailableMetadataError as exc:
        raise ScanError(
            f"{exc}; add the package to the metadata store or rerun without --offline"
        ) from exc
    reasons.append(f"metadata acquired from {record.provenance} source")
    timings["acquire"] = time.monotonic() - started

    started = time.monotonic()
    candidates = hybrid_search(config.index, input_name, config.search_params)
    reasons.append(f"hybrid search returned {len(candidates)} candidates")
    timings["search"] = time.monotonic() - started

    started = time.monotonic()
    candidate_records = {}
    for candidate in candidates:
        found = config.store.lookup(config.ecosystem, candidate.name.canonical)
        if found is not None:
            candidate_records[candidate.name.canonical] = found
    top3, best, notes = select_targets(input_name, candidates, candidate_records, config.stats)
    threat = ThreatReport(
        input_name=input_name,
        ecosystem=config.ecosystem,
        candidates=candidates,
        top3=top3,
        best=best,
        notes=notes,
    )
    reasons.append(
        f"target selection kept {len(top3)} of {len(candidates)} candidates"
        + (f", best={best.record.name}" if best else "")
    )
    timings["select"] = time.monotonic() - started

    started = time.monotonic()
    suspect_profile = target_profile = None
    if not config.content_enabled:
        reasons.append("content analysis disabled; metadata-only model route")
    elif best is None:
        reasons.append("content analysis skipped: no target to compare against")
    else:
        suspect_profile = _profile_for(record, config, reasons, "suspect")
        target_profile = _profile_for(best.record, config, reasons, "target")
        if suspect_profile is not None and target_profile is not None:
            reasons.append("content profiles compared for suspect and target")
    timings["content"] = time.monotonic() - started

    started = time.monotonic()
    features = assemble(
        input_name, candidates, top3, best, record, suspect_profile, target_profile, now
    )
    timings["features"] = time.monotonic() - started

    started = time.monotonic()
    threshold = config.model.threshold
    assert threshold is not None
    if best is None:
        # Nothing plausible to impersonate: benign by policy, low confidence.
        probability, route = 0.0, forest_mod.ROUTE_METADATA
        reasons.append("no plausible legitimate target; benign by default")
    else:
        probability, route = forest_mod.predict_proba_routed(config.model, features)
        if route == forest_mod.ROUTE_METADATA:
            reasons.append("prediction routed to metadata-only companion model")
    decision = "Confusion" if probability > threshold else "Benign"
    timings["classify"] = time.monotonic() - started

    if config.snapshot_time is not None:
        # Pinned-snapshot runs must be byte-reproducible; wall-clock timings
        # would break that, so they are zeroed.
        timings = {stage: 0.0 for stage in timings}

    return FinalReport(
        input_name=input_name,
        ecosystem=config.ecosystem,
        threat=threat,
        features=features,
        probability=probability,
        threshold=threshold,
        decision=decision,
        model_route=route,
        reasons=reasons,
        timings=timings,
    )


def scan_batch(config: ScanConfig, names: list[str]) -> list[FinalReport | ScanError]:
    """Independent scans in input order; one failure never aborts the batch."""

    results: list[FinalReport | ScanError] = []
    for name in names:
        try:
            results.append(scan(config, name))
        except ScanError as exc:
            results.append(exc)
    return results

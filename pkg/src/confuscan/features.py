"""The 18-dimensional classifier input: extraction, assembly, and CSV I/O.

Feature order is fixed and is the contract between extraction and training.
The -1 sentinel marks absent data (missing timestamps, unavailable content)
so a brand-new package (log age 0) stays distinguishable from an unknown one.
"""

from __future__ import annotations

import csv
import math
import re
from dataclasses import dataclass
from datetime import datetime
from urllib.parse import urlparse

from . import textsim
from .candidate_index import CandidateMatch
from .content import ContentProfile, set_jaccard
from .names import NormalizedName
from .namevec import cosine_similarity
from .registry import PackageRecord
from .spdx import is_recognized_license
from .target_analysis import LegitimateTarget

SENTINEL = -1.0
HIGH_SIMILARITY_THRESHOLD = 0.8

SS_FIELDS = ("max_levenshtein", "max_jaro_winkler", "max_homoglyph")
MQ_FIELDS = (
    "maintainer_adequacy",
    "repo_url_validity",
    "version_format_validity",
    "license_validity",
    "version_count",
)
CD_FIELDS = ("high_similarity_count", "min_length_diff_ratio", "target_popularity")
TS_FIELDS = ("package_age_log", "time_since_last_release_log", "time_since_last_update_log")
PC_FIELDS = (
    "package_size_ratio",
    "file_list_similarity",
    "dependency_similarity",
    "code_vector_similarity",
)

FEATURE_NAMES = SS_FIELDS + MQ_FIELDS + CD_FIELDS + TS_FIELDS + PC_FIELDS
LABEL_COLUMN = "label"

GROUPS = {
    "SS": SS_FIELDS,
    "MQ": MQ_FIELDS,
    "CD": CD_FIELDS,
    "TS": TS_FIELDS,
    "PC": PC_FIELDS,
}

GROUP_INDICES = {
    group: tuple(FEATURE_NAMES.index(name) for name in fields)
    for group, fields in GROUPS.items()
}

MQ_FLAG_INDICES = tuple(FEATURE_NAMES.index(n) for n in MQ_FIELDS[:4])
VERSION_COUNT_INDEX = FEATURE_NAMES.index("version_count")
PC_INDICES = GROUP_INDICES["PC"]

_VERSION_RE = re.compile(r"^\d+(\.\d+){0,3}(?:[-+][0-9A-Za-z][0-9A-Za-z.+_-]*)?$")


class ClockSkewError(ValueError):
    pass


@dataclass(frozen=True)
class FeatureVector:
    values: tuple[float, ...]
    group_complete: dict[str, bool] | None = None

    def __post_init__(self) -> None:
        if len(self.values) != len(FEATURE_NAMES):
            raise ValueError(f"expected {len(FEATURE_NAMES)} features, got {len(self.values)}")

    def __getitem__(self, name: str) -> float:
        return self.values[FEATURE_NAMES.index(name)]

    def as_dict(self) -> dict[str, float]:
        return dict(zip(FEATURE_NAMES, self.values))

    def pc_absent(self) -> bool:
        return any(self.values[i] == SENTINEL for i in PC_INDICES)


def extract_ss(
    input_name: NormalizedName, top3: list[LegitimateTarget]
) -> tuple[float, float, float]:
    """Per-metric maximum name similarity over the top-3 targets."""

    if not top3:
        return (0.0, 0.0, 0.0)
    names = [t.record.name for t in top3]
    return (
        max(textsim.levenshtein_similarity(input_name, n) for n in names),
        max(textsim.jaro_winkler_similarity(input_name, n) for n in names),
        max(textsim.homoglyph_similarity(input_name, n) for n in names),
    )


def _valid_repo_url(url: str | None) -> bool:
    if not url:
        return False
    parsed = urlparse(url)
    scheme = parsed.scheme.split("+")[-1]
    return scheme in ("http", "https", "git") and bool(parsed.netloc)


def _valid_version(version: str | None) -> bool:
    return bool(version) and bool(_VERSION_RE.match(version))


def extract_mq(record: PackageRecord | None) -> tuple[float, float, float, float, float]:
    if record is None:
        return (0.0, 0.0, 0.0, 0.0, 0.0)
    return (
        1.0 if record.maintainer_count >= 1 else 0.0,
        1.0 if _valid_repo_url(record.repository_url) else 0.0,
        1.0 if _valid_version(record.latest_version) else 0.0,
        1.0 if is_recognized_license(record.license) else 0.0,
        float(record.version_count),
    )


def extract_cd(
    input_name: NormalizedName,
    candidates: list[CandidateMatch],
    top3: list[LegitimateTarget],
    best: LegitimateTarget | None,
    threshold: float = HIGH_SIMILARITY_THRESHOLD,
) -> tuple[float, float, float]:
    high_count = sum(
        1
        for c in candidates
        if textsim.max_syntactic_similarity(input_name, c.name) > threshold
    )
    if top3:
        min_ratio = min(
            textsim.length_diff_ratio(input_name, t.record.name) for t in top3
        )
    else:
        min_ratio = 1.0
    return (float(high_count), min_ratio, best.popularity if best else 0.0)


def _log_days(then: datetime | None, now: datetime) -> float:
    if then is None:
        return SENTINEL
    seconds = (now - then).total_seconds()
    if seconds < 0:
        raise ClockSkewError(f"timestamp {then.isoformat()} is after now {now.isoformat()}")
    return math.log1p(seconds / 86400.0)


def extract_ts(record: PackageRecord | None, now: datetime) -> tuple[float, float, float]:
    if record is None:
        return (SENTINEL, SENTINEL, SENTINEL)
    return (
        _log_days(record.created_at, now),
        _log_days(record.last_release_at, now),
        _log_days(record.last_updated_at, now),
    )


def extract_pc(
    suspect: ContentProfile | None, target: ContentProfile | None
) -> tuple[float, float, float, float]:
    if suspect is None or target is None:
        return (SENTINEL, SENTINEL, SENTINEL, SENTINEL)
    target_log = math.log1p(target.total_size_bytes)
    if target_log == 0.0:
        size_ratio = SENTINEL
    else:
        size_ratio = math.log1p(suspect.total_size_bytes) / target_log
    if suspect.code_vector is not None and target.code_vector is not None:
        code_sim = max(0.0, cosine_similarity(suspect.code_vector, target.code_vector))
    else:
        code_sim = SENTINEL
    return (
        size_ratio,
        set_jaccard(suspect.file_paths, target.file_paths),
        set_jaccard(suspect.dependency_names, target.dependency_names),
        code_sim,
    )


def assemble(
    input_name: NormalizedName,
    candidates: list[CandidateMatch],
    top3: list[LegitimateTarget],
    best: LegitimateTarget | None,
    record: PackageRecord | None,
    suspect_profile: ContentProfile | None,
    target_profile: ContentProfile | None,
    now: datetime,
) -> FeatureVector:
    """Concatenate the five group extractions in fixed order."""

    ss = extract_ss(input_name, top3)
    mq = extract_mq(record)
    cd = extract_cd(input_name, candidates, top3, best)
    ts = extract_ts(record, now)
    pc = extract_pc(suspect_profile, target_profile)
    complete = {
        "SS": bool(top3),
        "MQ": record is not None,
        "CD": bool(top3),
        "TS": record is not None and SENTINEL not in ts,
        "PC": SENTINEL not in pc,
    }
    return FeatureVector(values=ss + mq + cd + ts + pc, group_complete=complete)


def write_csv(path: str, rows: list[tuple[FeatureVector, int]]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(FEATURE_NAMES) + [LABEL_COLUMN])
        for vector, label in rows:
            writer.writerow([repr(float(v)) for v in vector.values] + [int(label)])


class FeatureSchemaError(ValueError):
    def __init__(self, message: str, columns: list[str] | None = None):
        super().__init__(message)
        self.columns = columns or []


def read_csv(path: str) -> list[tuple[FeatureVector, int]]:
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        expected = list(FEATURE_NAMES) + [LABEL_COLUMN]
        if header != expected:
            missing = [c for c in expected if not header or c not in header]
            extra = [c for c in header or [] if c not in expected]
            raise FeatureSchemaError(
                f"{path}: feature CSV schema mismatch", columns=missing + extra
            )
        rows = []
        for lineno, row in enumerate(reader, 2):
            if len(row) != len(expected):
                raise FeatureSchemaError(f"{path}:{lineno}: wrong column count")
            values = tuple(float(v) for v in row[:-1])
            label = int(row[-1])
            if label not in (0, 1):
                raise FeatureSchemaError(f"{path}:{lineno}: label must be 0 or 1")
            rows.append((FeatureVector(values=values), label))
    return rows

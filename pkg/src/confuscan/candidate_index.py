"""In-memory candidate index with dual-channel hybrid retrieval.

Retrieval runs two channels over the same entries: a semantic channel (name
embedding cosine, restricted to near-equal name lengths) and a hybrid channel
(cosine + trigram Dice, unrestricted). The union is ranked by total score,
then by smaller length difference, then by name for determinism.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import textsim
from .names import NormalizedName, normalize
from .namevec import EmbeddingProvider, NameVector, embed_name

INDEX_MAGIC = "confuscan-index/v1"

SEMANTIC = "semantic"
HYBRID = "hybrid"
BOTH = "both"


@dataclass(frozen=True)
class SearchParams:
    """Retrieval depths and the semantic-channel length constraint."""

    n: int = 1
    k1: int = 100
    k2: int = 150
    k: int = 10

    def __post_init__(self) -> None:
        if not (self.k2 > self.k1 >= self.k >= 1):
            raise ValueError("SearchParams require K2 > K1 >= k >= 1")
        if self.n < 0:
            raise ValueError("SearchParams require n >= 0")


@dataclass(frozen=True)
class IndexEntry:
    name: NormalizedName
    vector: NameVector
    trigram_set: frozenset[str]
    popularity: float


@dataclass(frozen=True)
class CandidateMatch:
    name: NormalizedName
    s_sem: float
    s_syn: float
    s_total: float
    delta_l: int
    channel: str
    popularity: float = 0.0


@dataclass
class Index:
    provider: EmbeddingProvider
    entries: list[IndexEntry] = field(default_factory=list)
    _matrix: np.ndarray | None = field(default=None, repr=False)

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def matrix(self) -> np.ndarray:
        if self._matrix is None:
            if not self.entries:
                self._matrix = np.zeros((0, self.provider.dimension))
            else:
                self._matrix = np.stack([e.vector.values for e in self.entries])
        return self._matrix

    def popularity_of(self, canonical: str) -> float | None:
        for entry in self.entries:
            if entry.name.canonical == canonical:
                return entry.popularity
        return None


class DuplicateNameError(ValueError):
    pass


def build_index(
    entries: list[tuple[str, float]], provider: EmbeddingProvider
) -> Index:
    """Build an index over (raw name, popularity) pairs.

    Duplicate canonical names keep the higher-popularity entry; duplicate raw
    names are an input error.
    """

    seen_raw: set[str] = set()
    by_canonical: dict[str, tuple[NormalizedName, float]] = {}
    for raw, popularity in entries:
        if raw in seen_raw:
            raise DuplicateNameError(f"duplicate raw name: {raw!r}")
        seen_raw.add(raw)
        name = normalize(raw)
        kept = by_canonical.get(name.canonical)
        if kept is None or popularity > kept[1]:
            by_canonical[name.canonical] = (name, popularity)
    built = [
        IndexEntry(
            name=name,
            vector=embed_name(provider, name),
            trigram_set=textsim.trigram_set(name),
            popularity=popularity,
        )
        for name, popularity in (by_canonical[c] for c in sorted(by_canonical))
    ]
    return Index(provider=provider, entries=built)


def _top_k(scored: list[tuple[float, int]], k: int) -> list[int]:
    """Indices of the k best (score desc, canonical-order asc) entries."""

    ranked = sorted(scored, key=lambda pair: (-pair[0], pair[1]))
    return [idx for _, idx in ranked[:k]]


def _score_all(index: Index, query: NormalizedName) -> tuple[np.ndarray, np.ndarray]:
    query_vec = embed_name(index.provider, query)
    s_sem = index.matrix @ query_vec.values
    query_trigrams = textsim.trigram_set(query)
    s_syn = np.array(
        [textsim.dice_coefficient(query_trigrams, e.trigram_set) for e in index.entries]
    )
    return s_sem, s_syn


def hybrid_search(
    index: Index, query: NormalizedName | str, params: SearchParams = SearchParams()
) -> list[CandidateMatch]:
    """Dual-channel retrieval with rank fusion; returns at most params.k matches."""

    if not index.entries:
        raise ValueError("hybrid_search requires a non-empty index")
    if isinstance(query, str):
        query = normalize(query)
    s_sem, s_syn = _score_all(index, query)
    s_total = s_sem + s_syn
    qlen = len(query)

    sem_pool = [
        (float(s_sem[i]), i)
        for i, e in enumerate(index.entries)
        if abs(qlen - len(e.name)) <= params.n
    ]
    channel_sem = set(_top_k(sem_pool, params.k1))
    channel_hyb = set(_top_k([(float(s_total[i]), i) for i in range(len(index.entries))], params.k2))

    matches = []
    for i in sorted(channel_sem | channel_hyb):
        entry = index.entries[i]
        if i in channel_sem and i in channel_hyb:
            channel = BOTH
        elif i in channel_sem:
            channel = SEMANTIC
        else:
            channel = HYBRID
        matches.append(
            CandidateMatch(
                name=entry.name,
                s_sem=float(s_sem[i]),
                s_syn=float(s_syn[i]),
                s_total=float(s_total[i]),
                delta_l=abs(qlen - len(entry.name)),
                channel=channel,
                popularity=entry.popularity,
            )
        )
    matches.sort(key=lambda m: (-m.s_total, m.delta_l, m.name.canonical))
    return matches[: params.k]


def channel_search(
    index: Index, query: NormalizedName | str, channel: str, k: int = 10
) -> list[CandidateMatch]:
    """Single-signal ranking (semantic-only or syntactic-only) for evaluation."""

    if not index.entries:
        raise ValueError("channel_search requires a non-empty index")
    if channel not in ("semantic-only", "syntactic-only"):
        raise ValueError(f"unknown channel: {channel!r}")
    if isinstance(query, str):
        query = normalize(query)
    s_sem, s_syn = _score_all(index, query)
    score = s_sem if channel == "semantic-only" else s_syn
    qlen = len(query)
    order = _top_k([(float(score[i]), i) for i in range(len(index.entries))], k)
    return [
        CandidateMatch(
            name=index.entries[i].name,
            s_sem=float(s_sem[i]),
            s_syn=float(s_syn[i]),
            s_total=float(s_sem[i] + s_syn[i]),
            delta_l=abs(qlen - len(index.entries[i].name)),
            channel=SEMANTIC if channel == "semantic-only" else HYBRID,
            popularity=index.entries[i].popularity,
        )
        for i in order
    ]


def save_index(index: Index, path: str) -> None:
    """Persist the index as JSONL with a versioned header; rebuilds are byte-stable."""

    with open(path, "w", encoding="utf-8") as fh:
        header = {
            "magic": INDEX_MAGIC,
            "provider": {
                "kind": index.provider.kind,
                "dimension": index.provider.dimension,
                "seed": index.provider.seed,
            },
            "count": len(index.entries),
        }
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for entry in index.entries:
            record = {
                "raw": entry.name.raw,
                "popularity": entry.popularity,
                "vector": [repr(x) for x in entry.vector.values.tolist()],
            }
            fh.write(json.dumps(record, sort_keys=True) + "\n")


class IndexFormatError(ValueError):
    pass


def load_index(path: str) -> Index:
    with open(path, encoding="utf-8") as fh:
        header_line = fh.readline()
        try:
            header = json.loads(header_line)
        except json.JSONDecodeError as exc:
            raise IndexFormatError(f"{path}: unreadable header") from exc
        if header.get("magic") != INDEX_MAGIC:
            raise IndexFormatError(f"{path}: not a {INDEX_MAGIC} file")
        provider = EmbeddingProvider(
            kind=header["provider"]["kind"],
            dimension=header["provider"]["dimension"],
            seed=header["provider"]["seed"],
        )
        entries = []
        for lineno, line in enumerate(fh, 2):
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise IndexFormatError(f"{path}:{lineno}: corrupt entry") from exc
            name = normalize(record["raw"])
            values = np.array([float(x) for x in record["vector"]])
            entries.append(
                IndexEntry(
                    name=name,
                    vector=NameVector(values=values, norm=float(np.linalg.norm(values))),
                    trigram_set=textsim.trigram_set(name),
                    popularity=record["popularity"],
                )
            )
        if len(entries) != header["count"]:
            raise IndexFormatError(
                f"{path}: truncated index ({len(entries)} of {header['count']} entries)"
            )
    return Index(provider=provider, entries=entries)

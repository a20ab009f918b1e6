"""Name and code-content embeddings behind pluggable deterministic providers.

The default provider hashes character n-grams (names) or token n-grams (code)
into a fixed number of signed buckets, so no trained weights are needed and
every vector is bit-reproducible from (kind, dimension, seed, input). A
trained model can be swapped in via a word2vec-style text vector file.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass, field

import numpy as np

from .names import NormalizedName

DEFAULT_DIMENSION = 128
DEFAULT_SEED = 42

NAME_BOUNDARY_START = "<"
NAME_BOUNDARY_END = ">"

_TOKEN_RE = re.compile(r"[a-z0-9]+")


class ZeroVectorError(ValueError):
    """Raised when an input produces no embeddable content."""


@dataclass(frozen=True, eq=False)
class NameVector:
    values: np.ndarray
    norm: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "values", np.asarray(self.values, dtype=np.float64))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, NameVector):
            return NotImplemented
        return self.norm == other.norm and np.array_equal(self.values, other.values)


def _normalized(values: np.ndarray) -> NameVector:
    norm = float(np.linalg.norm(values))
    if norm == 0.0:
        raise ZeroVectorError("input produced a zero vector")
    return NameVector(values=values / norm, norm=1.0)


def cosine_similarity(u: NameVector, v: NameVector) -> float:
    """dot(u, v) / (|u| |v|); undefined for zero-norm inputs."""

    nu = float(np.linalg.norm(u.values))
    nv = float(np.linalg.norm(v.values))
    if nu == 0.0 or nv == 0.0:
        raise ZeroVectorError("cosine similarity undefined for zero-norm vectors")
    return float(np.dot(u.values, v.values) / (nu * nv))


def aggregate_package_vector(file_vectors: list[NameVector]) -> NameVector:
    """Element-wise mean of the file vectors, re-normalized."""

    if not file_vectors:
        raise ZeroVectorError("no embeddable files to aggregate")
    stacked = np.stack([v.values for v in file_vectors])
    return _normalized(stacked.mean(axis=0))


_WORD_SPLIT_RE = re.compile(r"[^0-9a-z]+")


def char_ngrams(canonical: str, n_min: int = 3, n_max: int = 5) -> list[str]:
    """Character n-grams of the boundary-marked name, FastText style.

    Subwords are extracted per separator-delimited word (FastText computes
    them per word, not across whitespace), so reordering words or swapping
    "-" for "_" leaves the n-gram multiset unchanged.
    """

    words = [w for w in _WORD_SPLIT_RE.split(canonical) if w] or [canonical]
    grams = []
    for word in words:
        marked = NAME_BOUNDARY_START + word + NAME_BOUNDARY_END
        for n in range(n_min, n_max + 1):
            grams.extend(marked[i : i + n] for i in range(len(marked) - n + 1))
    return grams


@dataclass(frozen=True)
class EmbeddingProvider:
    """Deterministic embedding source for names and code files.

    kind "hashed-subword" needs no data; kind "external-vector-file" averages
    vectors loaded from a text file (see load_vector_file).
    """

    kind: str = "hashed-subword"
    dimension: int = DEFAULT_DIMENSION
    seed: int = DEFAULT_SEED
    vectors: dict[str, np.ndarray] | None = field(default=None, compare=False)

    def __post_init__(self) -> None:
        if self.kind not in ("hashed-subword", "external-vector-file"):
            raise ValueError(f"unknown provider kind: {self.kind!r}")
        if self.dimension <= 0:
            raise ValueError("dimension must be positive")
        if self.kind == "external-vector-file" and not self.vectors:
            raise ValueError("external provider requires loaded vectors")

    def _hash_bucket(self, token: str) -> tuple[int, float]:
        digest = hashlib.blake2b(
            token.encode("utf-8"),
            digest_size=8,
            key=self.seed.to_bytes(8, "little", signed=True),
        ).digest()
        value = int.from_bytes(digest, "little")
        sign = 1.0 if value & 1 else -1.0
        return (value >> 1) % self.dimension, sign

    def _hash_embed(self, tokens: list[str]) -> NameVector:
        if not tokens:
            raise ZeroVectorError("empty token stream")
        values = np.zeros(self.dimension)
        for token in tokens:
            bucket, sign = self._hash_bucket(token)
            values[bucket] += sign
        return _normalized(values)

    def _external_embed(self, tokens: list[str]) -> NameVector:
        assert self.vectors is not None
        matched = [self.vectors[t] for t in tokens if t in self.vectors]
        if not matched:
            raise ZeroVectorError("no subwords matched the external vector file")
        return _normalized(np.stack(matched).mean(axis=0))


def embed_name(provider: EmbeddingProvider, name: NormalizedName | str) -> NameVector:
    """Embed a package name via its character n-grams (n = 3..5)."""

    canonical = name.canonical if isinstance(name, NormalizedName) else name
    if not canonical:
        raise ZeroVectorError("cannot embed an empty name")
    grams = char_ngrams(canonical)
    if provider.kind == "external-vector-file":
        return provider._external_embed(grams)
    return provider._hash_embed(grams)


def code_tokens(source_text: str) -> list[str]:
    """Lowercased alphanumeric tokens plus adjacent-token bigrams."""

    unigrams = _TOKEN_RE.findall(source_text.lower())
    bigrams = [f"{x}\x1f{y}" for x, y in zip(unigrams, unigrams[1:])]
    return unigrams + bigrams


def embed_code_file(provider: EmbeddingProvider, source_text: str) -> NameVector:
    """Embed one source file as a hashed bag of token uni/bigrams."""

    tokens = code_tokens(source_text)
    if provider.kind == "external-vector-file":
        return provider._external_embed(tokens)
    return provider._hash_embed(tokens)


def load_vector_file(path: str, dimension: int, seed: int = DEFAULT_SEED) -> EmbeddingProvider:
    """Load a word2vec-style text vector file: "token v1 ... vD" per line.

    A first line of exactly two integers is treated as a count/dimension
    header and skipped.
    """

    vectors: dict[str, np.ndarray] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split()
            if not parts:
                continue
            if lineno == 1 and len(parts) == 2:
                try:
                    int(parts[0]), int(parts[1])
                    continue
                except ValueError:
                    pass
            token, *numbers = parts
            if len(numbers) != dimension:
                raise ValueError(
                    f"{path}:{lineno}: expected {dimension} components, got {len(numbers)}"
                )
            vectors[token] = np.array([float(x) for x in numbers])
    if not vectors:
        raise ValueError(f"{path}: no vectors loaded")
    return EmbeddingProvider(
        kind="external-vector-file", dimension=dimension, seed=seed, vectors=vectors
    )

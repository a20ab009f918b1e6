"""Package-name normalization shared by every similarity and indexing layer."""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class NormalizedName:
    """A package name in raw and canonical form.

    The canonical form is lowercased and has any npm-style scope prefix
    ("@org/") stripped; the scope is kept separately so records stay faithful
    to the registry while similarity works on the bare name.
    """

    raw: str
    canonical: str
    scope: str | None = None

    def __len__(self) -> int:
        return len(self.canonical)


def normalize(raw: str) -> NormalizedName:
    """Canonicalize a raw package name for similarity and index keys."""

    scope = None
    body = raw.strip()
    if body.startswith("@") and "/" in body:
        scope, _, body = body.partition("/")
    return NormalizedName(raw=raw, canonical=body.lower(), scope=scope)

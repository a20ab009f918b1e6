"""Package metadata acquisition: local JSONL store first, registry APIs second.

The store is the source of truth for reproducible runs; when a record is
missing or lacks the core fields (created_at, version_count, downloads) and
the run is online, the live registry is consulted and the result written
through. Endpoints are overridable by environment variable so tests can
replay fixtures.
"""

from __future__ import annotations

import json
import logging
import os
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone

import requests

log = logging.getLogger(__name__)

ECOSYSTEMS = ("npm", "pypi", "cargo")

USER_AGENT = "confuscan/0.1 (package-confusion scanner)"
FETCH_RETRIES = 3
FETCH_BACKOFF_SECONDS = 0.5
FETCH_TIMEOUT_SECONDS = 15.0

ENDPOINT_ENV = {
    "npm_registry": ("CONFUSCAN_NPM_REGISTRY", "https://registry.npmjs.org"),
    "npm_downloads": ("CONFUSCAN_NPM_DOWNLOADS", "https://api.npmjs.org/downloads"),
    "pypi_api": ("CONFUSCAN_PYPI_API", "https://pypi.org/pypi"),
    "crates_api": ("CONFUSCAN_CRATES_API", "https://crates.io/api/v1/crates"),
}


def endpoint(key: str) -> str:
    env_var, default = ENDPOINT_ENV[key]
    return os.environ.get(env_var, default).rstrip("/")


class StoreError(Exception):
    pass


class PackageNotFoundError(Exception):
    pass


class TransientFetchError(Exception):
    pass


class MetadataParseError(Exception):
    pass


class UnavailableMetadataError(Exception):
    pass


def canonical_key(name: str) -> str:
    from .names import normalize

    return normalize(name).canonical


def _parse_ts(value: str | None) -> datetime | None:
    if not value:
        return None
    try:
        ts = datetime.fromisoformat(value.replace("Z", "+00:00"))
    except ValueError:
        return None
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc)


@dataclass(frozen=True)
class PackageRecord:
    name: str
    ecosystem: str
    description: str = ""
    downloads: int = 0
    stars: int = 0
    forks: int = 0
    dependents: int = 0
    maintainer_count: int = 0
    repository_url: str | None = None
    license: str | None = None
    latest_version: str | None = None
    version_count: int = 0
    created_at: datetime | None = None
    last_release_at: datetime | None = None
    last_updated_at: datetime | None = None
    archive_url: str | None = None
    provenance: str = "local"

    def __post_init__(self) -> None:
        if self.ecosystem not in ECOSYSTEMS:
            raise ValueError(f"unknown ecosystem: {self.ecosystem!r}")
        if self.latest_version is not None and self.version_count < 1:
            raise ValueError("version_count must be >= 1 when latest_version is set")
        if (
            self.created_at is not None
            and self.last_release_at is not None
            and self.created_at > self.last_release_at
        ):
            raise ValueError("created_at must not be after last_release_at")

    def has_core_fields(self) -> bool:
        return any(
            (self.created_at is not None, self.version_count > 0, self.downloads > 0)
        )

    def to_json(self) -> dict:
        doc = {
            "name": self.name,
            "ecosystem": self.ecosystem,
            "description": self.description,
            "downloads": self.downloads,
            "stars": self.stars,
            "forks": self.forks,
            "dependents": self.dependents,
            "maintainer_count": self.maintainer_count,
            "repository_url": self.repository_url,
            "license": self.license,
            "latest_version": self.latest_version,
            "version_count": self.version_count,
            "created_at": self.created_at.isoformat() if self.created_at else None,
            "last_release_at": self.last_release_at.isoformat() if self.last_release_at else None,
            "last_updated_at": self.last_updated_at.isoformat() if self.last_updated_at else None,
            "archive_url": self.archive_url,
        }
        return doc

    @classmethod
    def from_json(cls, doc: dict, provenance: str = "local") -> "PackageRecord":
        return cls(
            name=doc["name"],
            ecosystem=doc["ecosystem"],
            description=doc.get("description") or "",
            downloads=int(doc.get("downloads") or 0),
            stars=int(doc.get("stars") or 0),
            forks=int(doc.get("forks") or 0),
            dependents=int(doc.get("dependents") or 0),
            maintainer_count=int(doc.get("maintainer_count") or 0),
            repository_url=doc.get("repository_url"),
            license=doc.get("license"),
            latest_version=doc.get("latest_version"),
            version_count=int(doc.get("version_count") or 0),
            created_at=_parse_ts(doc.get("created_at")),
            last_release_at=_parse_ts(doc.get("last_release_at")),
            last_updated_at=_parse_ts(doc.get("last_updated_at")),
            archive_url=doc.get("archive_url"),
            provenance=provenance,
        )


@dataclass
class MetadataStore:
    """JSONL-backed record store keyed by (ecosystem, canonical name)."""

    path: str
    records: dict[tuple[str, str], PackageRecord] = field(default_factory=dict)

    @classmethod
    def open(cls, path: str, create: bool = False) -> "MetadataStore":
        store = cls(path=path)
        if not os.path.exists(path):
            if create:
                return store
            raise StoreError(f"store file not found: {path}")
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                if not line.strip():
                    continue
                try:
                    doc = json.loads(line)
                    record = PackageRecord.from_json(doc)
                except (json.JSONDecodeError, KeyError, ValueError) as exc:
                    raise StoreError(f"{path}:{lineno}: corrupt record: {exc}") from exc
                key = (record.ecosystem, canonical_key(record.name))
                if key in store.records:
                    log.warning("%s:%d: duplicate key %s, last record wins", path, lineno, key)
                store.records[key] = record
        return store

    def lookup(self, ecosystem: str, name: str) -> PackageRecord | None:
        return self.records.get((ecosystem, canonical_key(name)))

    def put(self, record: PackageRecord) -> None:
        self.records[(record.ecosystem, canonical_key(record.name))] = record
        with open(self.path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(record.to_json(), sort_keys=True) + "\n")

    def all_records(self, ecosystem: str | None = None) -> list[PackageRecord]:
        return [
            r
            for (eco, _), r in sorted(self.records.items())
            if ecosystem is None or eco == ecosystem
        ]


def _get_json(url: str, retries: int = FETCH_RETRIES) -> dict:
    delay = FETCH_BACKOFF_SECONDS
    last_error: Exception | None = None
    for attempt in range(retries):
        try:
            response = requests.get(
                url, headers={"User-Agent": USER_AGENT}, timeout=FETCH_TIMEOUT_SECONDS
            )
        except requests.RequestException as exc:
            last_error = exc
            time.sleep(delay)
            delay *= 2
            continue
        if response.status_code == 404:
            raise PackageNotFoundError(url)
        if response.status_code // 100 != 2:
            last_error = TransientFetchError(f"{url}: HTTP {response.status_code}")
            time.sleep(delay)
            delay *= 2
            continue
        try:
            return response.json()
        except ValueError as exc:
            # Malformed bodies are permanent; retrying cannot fix them.
            raise MetadataParseError(f"{url}: malformed JSON body") from exc
    raise TransientFetchError(f"{url}: failed after {retries} attempts") from last_error


def _repo_url(repository) -> str | None:
    if isinstance(repository, dict):
        repository = repository.get("url")
    if isinstance(repository, str) and repository:
        return repository
    return None


def _fetch_npm(name: str) -> PackageRecord:
    doc = _get_json(f"{endpoint('npm_registry')}/{name}")
    versions = doc.get("versions") or {}
    times = doc.get("time") or {}
    latest = (doc.get("dist-tags") or {}).get("latest")
    release_times = [_parse_ts(v) for k, v in times.items() if k not in ("created", "modified")]
    release_times = [t for t in release_times if t is not None]
    downloads = 0
    try:
        dl_doc = _get_json(f"{endpoint('npm_downloads')}/point/last-month/{name}")
        downloads = int(dl_doc.get("downloads") or 0)
    except (PackageNotFoundError, TransientFetchError, MetadataParseError):
        log.warning("npm downloads unavailable for %s", name)
    archive_url = None
    if latest and latest in versions:
        archive_url = (versions[latest].get("dist") or {}).get("tarball")
    return PackageRecord(
        name=doc.get("name") or name,
        ecosystem="npm",
        description=doc.get("description") or "",
        downloads=downloads,
        maintainer_count=len(doc.get("maintainers") or []),
        repository_url=_repo_url(doc.get("repository")),
        license=doc.get("license") if isinstance(doc.get("license"), str) else None,
        latest_version=latest if versions else None,
        version_count=len(versions),
        created_at=_parse_ts(times.get("created")),
        last_release_at=max(release_times) if release_times else None,
        last_updated_at=_parse_ts(times.get("modified")),
        archive_url=archive_url,
        provenance="remote",
    )


def _fetch_pypi(name: str) -> PackageRecord:
    doc = _get_json(f"{endpoint('pypi_api')}/{name}/json")
    info = doc.get("info") or {}
    releases = doc.get("releases") or {}
    upload_times = []
    archive_url = None
    for files in releases.values():
        for item in files or []:
            ts = _parse_ts(item.get("upload_time_iso_8601") or item.get("upload_time"))
            if ts:
                upload_times.append(ts)
    latest = info.get("version")
    for item in releases.get(latest) or []:
        if item.get("url"):
            archive_url = item["url"]
            if item.get("packagetype") == "sdist":
                break
    project_urls = info.get("project_urls") or {}
    repo = project_urls.get("Source") or project_urls.get("Repository") or info.get("home_page")
    return PackageRecord(
        name=info.get("name") or name,
        ecosystem="pypi",
        description=info.get("summary") or "",
        maintainer_count=1 if (info.get("author") or info.get("maintainer")) else 0,
        repository_url=repo or None,
        license=info.get("license") or None,
        latest_version=latest if releases else None,
        version_count=len(releases),
        created_at=min(upload_times) if upload_times else None,
        last_release_at=max(upload_times) if upload_times else None,
        last_updated_at=max(upload_times) if upload_times else None,
        archive_url=archive_url,
        provenance="remote",
    )


def _fetch_cargo(name: str) -> PackageRecord:
    doc = _get_json(f"{endpoint('crates_api')}/{name}")
    crate = doc.get("crate") or {}
    versions = doc.get("versions") or []
    latest = crate.get("newest_version")
    archive_url = None
    for version in versions:
        if version.get("num") == latest and version.get("dl_path"):
            archive_url = f"{endpoint('crates_api')}{version['dl_path'].removeprefix('/api/v1/crates')}"
    license_value = versions[0].get("license") if versions else None
    return PackageRecord(
        name=crate.get("name") or name,
        ecosystem="cargo",
        description=crate.get("description") or "",
        downloads=int(crate.get("downloads") or 0),
        maintainer_count=1,
        repository_url=crate.get("repository"),
        license=license_value,
        latest_version=latest if versions else None,
        version_count=len(versions),
        created_at=_parse_ts(crate.get("created_at")),
        last_release_at=_parse_ts(crate.get("updated_at")),
        last_updated_at=_parse_ts(crate.get("updated_at")),
        archive_url=archive_url,
        provenance="remote",
    )


_FETCHERS = {"npm": _fetch_npm, "pypi": _fetch_pypi, "cargo": _fetch_cargo}


def fetch_remote(ecosystem: str, name: str) -> PackageRecord:
    """Fetch one package's metadata from the live registry API."""

    if ecosystem not in _FETCHERS:
        raise ValueError(f"unknown ecosystem: {ecosystem!r}")
    return _FETCHERS[ecosystem](name)


def acquire(
    store: MetadataStore, ecosystem: str, name: str, offline: bool = False
) -> PackageRecord:
    """Local lookup with remote fallback and write-through.

    A remote fetch happens only when the local record is absent or lacks all
    of created_at / version_count / downloads, and the run is online.
    """

    local = store.lookup(ecosystem, name)
    if local is not None and local.has_core_fields():
        return local
    if offline:
        if local is not None:
            return local
        raise UnavailableMetadataError(
            f"{ecosystem}/{name} not in store {store.path} and running offline"
        )
    remote = fetch_remote(ecosystem, name)
    if local is not None:
        merged = {**{k: v for k, v in local.to_json().items()}, **{
            k: v for k, v in remote.to_json().items() if v not in (None, 0, "")
        }}
        record = PackageRecord.from_json(merged, provenance="merged")
    else:
        record = remote
    store.put(record)
    return record

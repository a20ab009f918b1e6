"""Archive acquisition and profiling for the package-content feature group."""

from __future__ import annotations

import json
import logging
import os
import re
import tarfile
import time
import zipfile
from dataclasses import dataclass

import requests

from .namevec import (
    EmbeddingProvider,
    NameVector,
    ZeroVectorError,
    aggregate_package_vector,
    embed_code_file,
)
from .registry import USER_AGENT, PackageRecord

log = logging.getLogger(__name__)

MAX_SOURCE_FILE_BYTES = 1 << 20
MAX_SOURCE_FILES = 500

SOURCE_EXTENSIONS = {
    "npm": (".js", ".mjs", ".cjs", ".ts"),
    "pypi": (".py",),
    "cargo": (".rs",),
}

_REQUIRES_DIST_RE = re.compile(r"^requires-dist:\s*(.+)$", re.IGNORECASE)
_DEP_NAME_RE = re.compile(r"^[A-Za-z0-9][A-Za-z0-9._-]*")
_TOML_SECTION_RE = re.compile(r"^\[([^\]]+)\]\s*$")
_TOML_KEY_RE = re.compile(r"^([A-Za-z0-9_-]+|\"[^\"]+\")\s*=")


class ContentUnavailableError(Exception):
    pass


@dataclass(frozen=True)
class ContentProfile:
    total_size_bytes: int
    file_paths: frozenset[str]
    dependency_names: frozenset[str]
    code_vector: NameVector | None
    source_file_count: int


def set_jaccard(a: frozenset | set, b: frozenset | set) -> float:
    """|A n B| / |A u B|; 1.0 when both sets are empty."""

    union = len(a | b)
    if union == 0:
        return 1.0
    return len(a & b) / union


def fetch_archive(record: PackageRecord, cache_dir: str) -> str:
    """Download the package archive into the cache; cache hits skip the network."""

    if not record.archive_url:
        raise ContentUnavailableError(f"{record.ecosystem}/{record.name}: no archive_url")
    version = record.latest_version or "unversioned"
    filename = record.archive_url.rstrip("/").rsplit("/", 1)[-1] or "archive"
    target_dir = os.path.join(cache_dir, record.ecosystem, record.name.replace("/", "_"), version)
    target = os.path.join(target_dir, filename)
    if os.path.exists(target) and os.path.getsize(target) > 0:
        return target
    os.makedirs(target_dir, exist_ok=True)
    delay = 0.5
    for attempt in range(3):
        try:
            response = requests.get(
                record.archive_url, headers={"User-Agent": USER_AGENT}, timeout=60
            )
            if response.status_code // 100 == 2 and response.content:
                tmp = target + ".part"
                with open(tmp, "wb") as fh:
                    fh.write(response.content)
                os.replace(tmp, target)
                return target
        except requests.RequestException as exc:
            log.warning("archive fetch attempt %d failed: %s", attempt + 1, exc)
        time.sleep(delay)
        delay *= 2
    raise ContentUnavailableError(f"download failed: {record.archive_url}")


def _normalize_paths(paths: list[str]) -> dict[str, str]:
    """Map raw member paths to paths with the single root directory stripped."""

    cleaned = {}
    for raw in paths:
        path = raw.replace("\\", "/").strip("/")
        if not path:
            continue
        cleaned[raw] = path
    roots = {p.split("/", 1)[0] for p in cleaned.values()}
    if len(roots) == 1 and all("/" in p for p in cleaned.values()):
        cleaned = {raw: p.split("/", 1)[1] for raw, p in cleaned.items()}
    return cleaned


def _iter_archive(archive_path: str):
    """Yield (raw_path, size, read_bytes) for every regular member."""

    if zipfile.is_zipfile(archive_path):
        zf = zipfile.ZipFile(archive_path)
        for info in zf.infolist():
            if info.is_dir():
                continue
            yield info.filename, info.file_size, lambda info=info: zf.read(info)
        return
    try:
        tf = tarfile.open(archive_path, "r:*")
    except tarfile.TarError as exc:
        raise ContentUnavailableError(f"unreadable archive: {archive_path}") from exc
    for member in tf.getmembers():
        if not member.isfile():
            continue

        def _read(member=member):
            fh = tf.extractfile(member)
            return fh.read() if fh else b""

        yield member.name, member.size, _read


def _parse_requirement_name(spec: str) -> str | None:
    match = _DEP_NAME_RE.match(spec.strip())
    if not match:
        return None
    return match.group(0).lower().replace("_", "-")


def _npm_dependencies(manifest_bytes: bytes) -> set[str]:
    try:
        doc = json.loads(manifest_bytes)
    except (json.JSONDecodeError, UnicodeDecodeError):
        return set()
    deps = set()
    for section in ("dependencies", "peerDependencies"):
        deps.update((doc.get(section) or {}).keys())
    return {d.lower() for d in deps}


def _pypi_dependencies(text: str) -> set[str]:
    deps = set()
    for line in text.splitlines():
        match = _REQUIRES_DIST_RE.match(line.strip())
        if match:
            name = _parse_requirement_name(match.group(1))
            if name:
                deps.add(name)
    return deps


def _requirements_dependencies(text: str) -> set[str]:
    deps = set()
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith(("#", "-")):
            continue
        name = _parse_requirement_name(line)
        if name:
            deps.add(name)
    return deps


def _cargo_dependencies(text: str) -> set[str]:
    deps = set()
    section = None
    for line in text.splitlines():
        line = line.strip()
        header = _TOML_SECTION_RE.match(line)
        if header:
            section = header.group(1).strip()
            # Inline table-per-dependency form: [dependencies.serde]
            if section.startswith("dependencies."):
                deps.add(section.split(".", 1)[1].strip('"').lower())
            continue
        if section == "dependencies":
            key = _TOML_KEY_RE.match(line)
            if key:
                deps.add(key.group(1).strip('"').lower())
    return deps


def _extract_dependencies(ecosystem: str, files: dict[str, bytes]) -> set[str]:
    if ecosystem == "npm":
        for path, data in files.items():
            if path == "package.json" or path.endswith("/package.json"):
                return _npm_dependencies(data)
    elif ecosystem == "pypi":
        for path, data in files.items():
            base = path.rsplit("/", 1)[-1]
            if base in ("METADATA", "PKG-INFO"):
                deps = _pypi_dependencies(data.decode("utf-8", errors="replace"))
                if deps:
                    return deps
        for path, data in files.items():
            if path.rsplit("/", 1)[-1] == "requirements.txt":
                return _requirements_dependencies(data.decode("utf-8", errors="replace"))
    elif ecosystem == "cargo":
        for path, data in files.items():
            if path == "Cargo.toml" or path.endswith("/Cargo.toml"):
                return _cargo_dependencies(data.decode("utf-8", errors="replace"))
    return set()


def profile_archive(
    archive_path: str, ecosystem: str, provider: EmbeddingProvider
) -> ContentProfile:
    """Measure one archive: size, file list, dependency set, aggregated code vector."""

    members = []
    try:
        for raw_path, size, read in _iter_archive(archive_path):
            members.append((raw_path, size, read))
    except (OSError, zipfile.BadZipFile, tarfile.TarError) as exc:
        raise ContentUnavailableError(f"unreadable archive: {archive_path}") from exc
    if not members:
        raise ContentUnavailableError(f"empty archive: {archive_path}")

    path_map = _normalize_paths([raw for raw, _, _ in members])
    total_size = sum(size for _, size, _ in members)
    file_paths = frozenset(path_map.values())

    manifest_candidates = {}
    source_texts = []
    extensions = SOURCE_EXTENSIONS.get(ecosystem, ())
    embedded = 0
    for raw_path, size, read in sorted(members, key=lambda m: path_map.get(m[0], m[0])):
        path = path_map.get(raw_path)
        if path is None:
            continue
        base = path.rsplit("/", 1)[-1]
        if base in ("package.json", "METADATA", "PKG-INFO", "requirements.txt", "Cargo.toml"):
            manifest_candidates[path] = read()
        if path.endswith(extensions) and size <= MAX_SOURCE_FILE_BYTES and embedded < MAX_SOURCE_FILES:
            try:
                source_texts.append(read().decode("utf-8"))
                embedded += 1
            except UnicodeDecodeError:
                continue

    dependency_names = frozenset(_extract_dependencies(ecosystem, manifest_candidates))
    if not dependency_names and manifest_candidates == {}:
        log.warning("%s: no manifest found, dependency set empty", archive_path)

    vectors = []
    for text in source_texts:
        try:
            vectors.append(embed_code_file(provider, text))
        except ZeroVectorError:
            log.warning("%s: source file with empty token stream skipped", archive_path)
    code_vector = None
    if vectors:
        code_vector = aggregate_package_vector(vectors)
    return ContentProfile(
        total_size_bytes=total_size,
        file_paths=file_paths,
        dependency_names=dependency_names,
        code_vector=code_vector,
        source_file_count=len(source_texts),
    )

from __future__ import annotations

import io
import json
import os
import sys
import tarfile
from dataclasses import dataclass
from datetime import datetime, timezone

import pytest

sys.path.insert(0, os.path.dirname(__file__))

from confuscan import forest as forest_mod
from confuscan.candidate_index import Index, build_index
from confuscan.namevec import EmbeddingProvider
from confuscan.registry import MetadataStore, PackageRecord
from confuscan.target_analysis import EcosystemStats, popularity_score

import synth

SNAPSHOT = datetime(2025, 6, 1, tzinfo=timezone.utc)


def _ts(value: str) -> str:
    return value


FIXTURE_PACKAGES = [
    # name, downloads, stars, forks, dependents, maintainers, repo, license,
    # version, version_count, created, last_release
    ("bz2file", 5_000_000, 2100, 310, 820, 3, "https://github.com/example/bz2file",
     "MIT", "1.2.3", 21, "2015-03-01T00:00:00Z", "2024-11-05T00:00:00Z"),
    ("bzip", 900_000, 450, 60, 120, 2, "https://github.com/example/bzip",
     "Apache-2.0", "2.0.1", 9, "2016-07-12T00:00:00Z", "2024-01-20T00:00:00Z"),
    ("requests", 9_000_000, 5200, 900, 4000, 5, "https://github.com/example/requests",
     "MIT", "2.31.0", 60, "2011-02-14T00:00:00Z", "2024-10-01T00:00:00Z"),
    ("lodash", 12_000_000, 8000, 1500, 9000, 4, "https://github.com/example/lodash",
     "MIT", "4.17.21", 110, "2012-04-23T00:00:00Z", "2023-02-17T00:00:00Z"),
    ("leftpad", 300_000, 120, 15, 40, 1, "https://github.com/example/leftpad",
     "ISC", "1.3.0", 7, "2014-09-01T00:00:00Z", "2022-03-10T00:00:00Z"),
    ("tinycolor", 80_000, 60, 9, 12, 1, "https://github.com/example/tinycolor",
     "MIT", "0.9.1", 4, "2018-05-05T00:00:00Z", "2021-08-08T00:00:00Z"),
]

SUSPECT = ("bz2fiel", 40, 0, 0, 0, 1, None, None, "1.0.0", 1,
           "2025-05-20T00:00:00Z", "2025-05-20T00:00:00Z")


def make_record(row, ecosystem="npm", archive_url=None) -> PackageRecord:
    (name, downloads, stars, forks, dependents, maintainers, repo, license_,
     version, version_count, created, released) = row
    return PackageRecord(
        name=name,
        ecosystem=ecosystem,
        description=f"fixture package {name}",
        downloads=downloads,
        stars=stars,
        forks=forks,
        dependents=dependents,
        maintainer_count=maintainers,
        repository_url=repo,
        license=license_,
        latest_version=version,
        version_count=version_count,
        created_at=datetime.fromisoformat(created.replace("Z", "+00:00")),
        last_release_at=datetime.fromisoformat(released.replace("Z", "+00:00")),
        last_updated_at=datetime.fromisoformat(released.replace("Z", "+00:00")),
        archive_url=archive_url,
    )


def make_npm_tarball(path: str, files: dict[str, str]) -> None:
    with tarfile.open(path, "w:gz") as tf:
        for name, text in files.items():
            data = text.encode("utf-8")
            info = tarfile.TarInfo(name=f"package/{name}")
            info.size = len(data)
            info.mtime = 0
            tf.addfile(info, io.BytesIO(data))


TARGET_FILES = {
    "package.json": json.dumps(
        {"name": "bz2file", "version": "1.2.3",
         "dependencies": {"minimist": "^1.2.0", "chalk": "^4.0.0"}}
    ),
    "index.js": "const minimist = require('minimist');\n"
                "function compress(buffer) { return buffer; }\n"
                "module.exports = { compress };\n",
    "lib/util.js": "exports.clamp = (x, lo, hi) => Math.min(hi, Math.max(lo, x));\n",
    "README.md": "# bz2file\nCompression helpers.\n",
}

SUSPECT_FILES = {
    "package.json": json.dumps(
        {"name": "bz2fiel", "version": "1.0.0",
         "dependencies": {"minimist": "^1.2.0", "chalk": "^4.0.0"}}
    ),
    "index.js": "const minimist = require('minimist');\n"
                "function compress(buffer) { return buffer; }\n"
                "module.exports = { compress };\n",
}


@dataclass
class FixtureEnv:
    root: str
    store_path: str
    index_path: str
    stats_path: str
    model_path: str
    cache_dir: str
    store: MetadataStore
    index: Index
    stats: EcosystemStats
    model: forest_mod.TrainedForest
    snapshot: datetime


def _build_env(root: str) -> FixtureEnv:
    os.makedirs(root, exist_ok=True)
    store_path = os.path.join(root, "store.jsonl")
    cache_dir = os.path.join(root, "cache")

    target_url = "https://registry.invalid/bz2file/-/bz2file-1.2.3.tgz"
    suspect_url = "https://registry.invalid/bz2fiel/-/bz2fiel-1.0.0.tgz"

    store = MetadataStore.open(store_path, create=True)
    for row in FIXTURE_PACKAGES:
        url = target_url if row[0] == "bz2file" else None
        store.put(make_record(row, archive_url=url))
    store.put(make_record(SUSPECT, archive_url=suspect_url))

    os.makedirs(os.path.join(cache_dir, "npm", "bz2file", "1.2.3"), exist_ok=True)
    os.makedirs(os.path.join(cache_dir, "npm", "bz2fiel", "1.0.0"), exist_ok=True)
    make_npm_tarball(
        os.path.join(cache_dir, "npm", "bz2file", "1.2.3", "bz2file-1.2.3.tgz"),
        TARGET_FILES,
    )
    make_npm_tarball(
        os.path.join(cache_dir, "npm", "bz2fiel", "1.0.0", "bz2fiel-1.0.0.tgz"),
        SUSPECT_FILES,
    )

    records = store.all_records("npm")
    stats = EcosystemStats.from_records(records)
    provider = EmbeddingProvider(dimension=64, seed=42)
    # The suspect itself is a published package, so it is indexed too.
    index = build_index([(r.name, popularity_score(r, stats)) for r in records], provider)

    rows = synth.mq_correlated_dataset(seed=13, n_rows=300)
    grid = (forest_mod.Hyperparams(n_trees=60, max_depth=8, min_leaf=1),)
    from confuscan.harness import train_model

    model, _, _, _ = train_model(rows, grid=grid, seed=5)

    from confuscan.candidate_index import save_index

    index_path = os.path.join(root, "npm.index")
    stats_path = os.path.join(root, "npm.stats.json")
    model_path = os.path.join(root, "model.json")
    save_index(index, index_path)
    stats.save(stats_path)
    forest_mod.save(model, model_path)
    return FixtureEnv(
        root=root,
        store_path=store_path,
        index_path=index_path,
        stats_path=stats_path,
        model_path=model_path,
        cache_dir=cache_dir,
        store=store,
        index=index,
        stats=stats,
        model=model,
        snapshot=SNAPSHOT,
    )


@pytest.fixture(scope="session")
def fixture_env(tmp_path_factory) -> FixtureEnv:
    return _build_env(str(tmp_path_factory.mktemp("confuscan-fixture")))

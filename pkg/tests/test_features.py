from __future__ import annotations

import math
from datetime import datetime, timedelta, timezone

import pytest

from confuscan import textsim
from confuscan.candidate_index import CandidateMatch
from confuscan.content import ContentProfile, set_jaccard
from confuscan.features import (
    FEATURE_NAMES,
    ClockSkewError,
    FeatureVector,
    SENTINEL,
    assemble,
    extract_cd,
    extract_mq,
    extract_pc,
    extract_ss,
    extract_ts,
    read_csv,
    write_csv,
    FeatureSchemaError,
)
from confuscan.names import normalize
from confuscan.namevec import EmbeddingProvider
from confuscan.target_analysis import LegitimateTarget

from conftest import FIXTURE_PACKAGES, make_record

NOW = datetime(2025, 6, 1, tzinfo=timezone.utc)


def target_for(name: str, query="bz2fiel", popularity=0.6) -> LegitimateTarget:
    row = next((r for r in FIXTURE_PACKAGES if r[0] == name), None)
    record = make_record(row) if row else make_record(
        (name, 1000, 10, 1, 5, 1, "https://github.com/x/y", "MIT", "1.0.0", 3,
         "2020-01-01T00:00:00Z", "2024-01-01T00:00:00Z"))
    return LegitimateTarget(
        record=record,
        syntactic_max=textsim.max_syntactic_similarity(query, name),
        popularity=popularity,
    )


def match_for(name: str, query="bz2fiel") -> CandidateMatch:
    return CandidateMatch(
        name=normalize(name), s_sem=0.5, s_syn=0.5, s_total=1.0,
        delta_l=abs(len(query) - len(name)), channel="both",
    )


def profile(size=1000, paths=("a.js", "b.js"), deps=("x", "y"), text="const x = 1;\n"):
    provider = EmbeddingProvider(dimension=32, seed=1)
    from confuscan.namevec import embed_code_file

    return ContentProfile(
        total_size_bytes=size,
        file_paths=frozenset(paths),
        dependency_names=frozenset(deps),
        code_vector=embed_code_file(provider, text),
        source_file_count=len(paths),
    )


class TestSS:
    def test_exact_twin(self):
        q = normalize("bz2file")
        values = extract_ss(q, [target_for("bz2file", query="bz2file")])
        assert values == (1.0, 1.0, 1.0)

    def test_singleton_equals_pair_metrics(self):
        q = normalize("bz2fiel")
        values = extract_ss(q, [target_for("bzip")])
        assert values[0] == textsim.levenshtein_similarity(q, "bzip")
        assert values[1] == textsim.jaro_winkler_similarity(q, "bzip")
        assert values[2] == textsim.homoglyph_similarity(q, "bzip")

    def test_max_over_trio_matches_oracle(self):
        q = normalize("bz2fiel")
        trio = [target_for(n) for n in ("bz2file", "bzip", "requests")]
        values = extract_ss(q, trio)
        assert values[0] == max(
            textsim.levenshtein_similarity(q, t.record.name) for t in trio
        )

    def test_empty_top3(self):
        assert extract_ss(normalize("x"), []) == (0.0, 0.0, 0.0)


class TestMQ:
    def test_full_record(self):
        record = make_record(
            ("full", 10, 1, 1, 1, 2, "https://github.com/x/y", "MIT", "1.2.3", 10,
             "2020-01-01T00:00:00Z", "2024-01-01T00:00:00Z"))
        assert extract_mq(record) == (1, 1, 1, 1, 10)

    def test_empty_record(self):
        assert extract_mq(None) == (0, 0, 0, 0, 0)

    def test_bad_version_format(self):
        record = make_record(
            ("v", 10, 1, 1, 1, 1, None, None, "abc", 2,
             "2020-01-01T00:00:00Z", "2024-01-01T00:00:00Z"))
        assert extract_mq(record)[2] == 0.0

    @pytest.mark.parametrize("version,ok", [
        ("1", 1), ("1.2", 1), ("1.2.3", 1), ("1.2.3.4", 1),
        ("1.2.3-beta.1", 1), ("1.2.3+build5", 1),
        ("abc", 0), ("1.2.3.4.5", 0), ("v1.2", 0), ("", 0),
    ])
    def test_version_pattern(self, version, ok):
        record = make_record(
            ("v", 10, 1, 1, 1, 1, None, None, version or None, max(1, ok),
             "2020-01-01T00:00:00Z", "2024-01-01T00:00:00Z")) if version else None
        got = extract_mq(record)[2] if record else 0.0
        assert got == ok

    @pytest.mark.parametrize("license_,ok", [
        ("MIT", 1), ("mit", 1), ("Apache-2.0", 1), ("Apache 2.0", 1),
        ("MIT OR Apache-2.0", 1), ("SEE LICENSE IN LICENSE", 0), (None, 0),
    ])
    def test_license_recognition(self, license_, ok):
        record = make_record(
            ("l", 10, 1, 1, 1, 1, None, license_, "1.0.0", 1,
             "2020-01-01T00:00:00Z", "2024-01-01T00:00:00Z"))
        assert extract_mq(record)[3] == ok

    @pytest.mark.parametrize("url,ok", [
        ("https://github.com/x/y", 1), ("git+https://github.com/x/y.git", 1),
        ("http://example.com/repo", 1), ("ftp://example.com", 0),
        ("not a url", 0), (None, 0),
    ])
    def test_repo_url_validity(self, url, ok):
        record = make_record(
            ("r", 10, 1, 1, 1, 1, url, None, "1.0.0", 1,
             "2020-01-01T00:00:00Z", "2024-01-01T00:00:00Z"))
        assert extract_mq(record)[1] == ok


class TestCD:
    def test_all_identical_candidates(self):
        q = normalize("bz2file")
        candidates = [match_for("bz2file", query="bz2file") for _ in range(4)]
        values = extract_cd(q, candidates, [], None)
        assert values[0] == 4.0

    def test_empty_top3_defaults(self):
        values = extract_cd(normalize("x"), [], [], None)
        assert values == (0.0, 1.0, 0.0)

    def test_threshold_count_matches_recount(self):
        q = normalize("bz2fiel")
        names = ["bz2file", "bz2fie", "bzip", "requests", "lodash"]
        candidates = [match_for(n) for n in names]
        values = extract_cd(q, candidates, [], None)
        expected = sum(
            1 for n in names if textsim.max_syntactic_similarity(q, n) > 0.8
        )
        assert values[0] == expected
        assert expected == 2

    def test_min_length_ratio_over_top3(self):
        q = normalize("bz2fiel")
        trio = [target_for("bz2file"), target_for("bzip")]
        values = extract_cd(q, [], trio, trio[0])
        assert values[1] == min(
            textsim.length_diff_ratio(q, "bz2file"),
            textsim.length_diff_ratio(q, "bzip"),
        )
        assert values[2] == trio[0].popularity


class TestTS:
    def test_created_now_is_zero(self):
        record = make_record(
            ("t", 10, 1, 1, 1, 1, None, None, "1.0.0", 1,
             NOW.isoformat(), NOW.isoformat()))
        assert extract_ts(record, NOW)[0] == 0.0

    def test_absent_timestamp_sentinel(self):
        from confuscan.registry import PackageRecord

        record = PackageRecord(name="t", ecosystem="npm")
        assert extract_ts(record, NOW) == (SENTINEL, SENTINEL, SENTINEL)

    def test_closed_form_value(self):
        then = NOW - timedelta(days=364.0)
        record = make_record(
            ("t", 10, 1, 1, 1, 1, None, None, "1.0.0", 1,
             then.isoformat(), then.isoformat()))
        assert extract_ts(record, NOW)[0] == pytest.approx(math.log(365.0))

    def test_clock_skew_error(self):
        then = NOW + timedelta(days=1)
        from confuscan.registry import PackageRecord

        record = PackageRecord(name="t", ecosystem="npm", created_at=then)
        with pytest.raises(ClockSkewError):
            extract_ts(record, NOW)


class TestPC:
    def test_identical_profiles(self):
        p = profile()
        assert extract_pc(p, p) == (1.0, 1.0, 1.0, 1.0)

    def test_absent_suspect_sentinels(self):
        assert extract_pc(None, profile()) == (SENTINEL,) * 4

    def test_mimic_vs_target_hand_arithmetic(self):
        target = profile(size=50_000, paths=("a.js", "b.js", "c.js", "d.js"),
                         deps=("x", "y", "z"))
        mimic = profile(size=2_000, paths=("a.js", "b.js"), deps=("x", "y", "z"))
        values = extract_pc(mimic, target)
        assert values[0] == pytest.approx(math.log1p(2000) / math.log1p(50000))
        assert values[1] == pytest.approx(set_jaccard(mimic.file_paths, target.file_paths))
        assert values[1] == pytest.approx(2 / 4)
        assert values[2] == 1.0

    def test_missing_code_vector_sentinel(self):
        p = profile()
        bare = ContentProfile(
            total_size_bytes=10, file_paths=frozenset({"x"}),
            dependency_names=frozenset(), code_vector=None, source_file_count=0)
        assert extract_pc(bare, p)[3] == SENTINEL


class TestAssemble:
    def build(self, **overrides):
        q = normalize("bz2fiel")
        trio = [target_for("bz2file"), target_for("bzip")]
        args = dict(
            input_name=q,
            candidates=[match_for("bz2file"), match_for("bzip")],
            top3=trio,
            best=trio[0],
            record=make_record(FIXTURE_PACKAGES[0]),
            suspect_profile=profile(size=100),
            target_profile=profile(size=900),
            now=NOW,
        )
        args.update(overrides)
        return assemble(**args)

    def test_all_empty_inputs(self):
        vec = assemble(normalize("x"), [], [], None, None, None, None, NOW)
        assert vec.values == (0.0,) * 8 + (0.0, 1.0, 0.0) + (SENTINEL,) * 3 + (SENTINEL,) * 4

    def test_order_and_length(self):
        vec = self.build()
        assert len(vec.values) == 18
        assert vec["max_levenshtein"] == vec.values[0]
        assert vec["code_vector_similarity"] == vec.values[17]

    def test_candidate_permutation_invariance(self):
        a = self.build()
        b = self.build(candidates=[match_for("bzip"), match_for("bz2file")])
        assert a.values == b.values

    def test_determinism(self):
        assert self.build().values == self.build().values

    def test_group_completeness_flags(self):
        vec = self.build()
        assert vec.group_complete == {
            "SS": True, "MQ": True, "CD": True, "TS": True, "PC": True
        }
        degraded = self.build(suspect_profile=None)
        assert degraded.group_complete["PC"] is False
        assert degraded.pc_absent()


class TestCsvRoundTrip:
    def test_round_trip_exact(self, tmp_path):
        vec = FeatureVector(values=tuple(float(i) / 7 for i in range(18)))
        path = str(tmp_path / "features.csv")
        write_csv(path, [(vec, 1), (vec, 0)])
        rows = read_csv(path)
        assert rows[0][0].values == vec.values
        assert [label for _, label in rows] == [1, 0]

    def test_header_is_contract(self, tmp_path):
        path = str(tmp_path / "f.csv")
        write_csv(path, [])
        header = open(path, encoding="utf-8").readline().strip().split(",")
        assert header == list(FEATURE_NAMES) + ["label"]

    def test_schema_mismatch_lists_columns(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("foo,bar\n1,2\n", encoding="utf-8")
        with pytest.raises(FeatureSchemaError) as err:
            read_csv(str(path))
        assert "max_levenshtein" in err.value.columns

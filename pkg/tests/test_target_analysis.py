from __future__ import annotations

import math

import pytest

from confuscan.candidate_index import CandidateMatch
from confuscan.names import normalize
from confuscan.target_analysis import (
    EcosystemStats,
    popularity_score,
    select_targets,
)
from confuscan.textsim import max_syntactic_similarity

from conftest import FIXTURE_PACKAGES, SUSPECT, make_record


@pytest.fixture
def records():
    return [make_record(row) for row in FIXTURE_PACKAGES] + [make_record(SUSPECT)]


@pytest.fixture
def stats(records):
    return EcosystemStats.from_records(records)


def match_for(name: str, query: str = "bz2fiel") -> CandidateMatch:
    return CandidateMatch(
        name=normalize(name),
        s_sem=0.5,
        s_syn=0.5,
        s_total=1.0,
        delta_l=abs(len(query) - len(name)),
        channel="both",
    )


class TestPopularityScore:
    def test_maxima_score_one(self, records, stats):
        top = max(records, key=lambda r: r.downloads)
        maxed = make_record(
            ("maxed", max(r.downloads for r in records), max(r.stars for r in records),
             max(r.forks for r in records), max(r.dependents for r in records),
             1, "https://github.com/x/m", "MIT", "1.0.0", 5,
             "2015-01-01T00:00:00Z", "2024-01-01T00:00:00Z")
        )
        assert popularity_score(maxed, stats) == pytest.approx(1.0)

    def test_minima_score_zero(self, records, stats):
        floor = make_record(
            ("floor", min(r.downloads for r in records), min(r.stars for r in records),
             min(r.forks for r in records), min(r.dependents for r in records),
             1, None, None, "0.1.0", 1,
             "2025-01-01T00:00:00Z", "2025-01-01T00:00:00Z")
        )
        assert popularity_score(floor, stats) == pytest.approx(0.0)

    def test_downloads_only_gives_half(self, records):
        lo = make_record(("lo", 0, 0, 0, 0, 1, None, None, "1.0.0", 1,
                          "2020-01-01T00:00:00Z", "2020-01-01T00:00:00Z"))
        hi = make_record(("hi", 1_000_000, 0, 0, 0, 1, None, None, "1.0.0", 1,
                          "2020-01-01T00:00:00Z", "2020-01-01T00:00:00Z"))
        mid = make_record(("mid", 0, 100, 100, 100, 1, None, None, "1.0.0", 1,
                           "2020-01-01T00:00:00Z", "2020-01-01T00:00:00Z"))
        stats = EcosystemStats.from_records([lo, hi, mid])
        assert popularity_score(hi, stats) == pytest.approx(0.5)

    def test_additive_log_shift_invariance(self, records, stats):
        # Shifting every package's ln(1+downloads) by the same amount leaves
        # min-max values unchanged: scale raw (1+downloads) by a constant.
        factor = 7.0
        shifted = []
        for r in records:
            doc = r.to_json()
            doc["downloads"] = int(round((1 + r.downloads) * factor - 1))
            from confuscan.registry import PackageRecord

            shifted.append(PackageRecord.from_json(doc))
        shifted_stats = EcosystemStats.from_records(shifted)
        for original, moved in zip(records, shifted):
            lo, hi = stats.bounds["downloads"]
            slo, shi = shifted_stats.bounds["downloads"]
            m_orig = (math.log1p(original.downloads) - lo) / (hi - lo)
            m_new = (math.log1p(moved.downloads) - slo) / (shi - slo)
            assert m_new == pytest.approx(m_orig, abs=1e-9)

    def test_degenerate_span_contributes_zero(self):
        same = [
            make_record((f"p{i}", 100, 100, 100, 100, 1, None, None, "1.0.0", 1,
                         "2020-01-01T00:00:00Z", "2020-01-01T00:00:00Z"))
            for i in range(3)
        ]
        stats = EcosystemStats.from_records(same)
        assert popularity_score(same[0], stats) == 0.0


class TestSelectTargets:
    def test_single_survivor(self, records, stats):
        by_name = {r.name: r for r in records}
        top3, best, _ = select_targets(
            normalize("bz2fiel"), [match_for("bz2file")],
            {"bz2file": by_name["bz2file"]}, stats,
        )
        assert [t.record.name for t in top3] == ["bz2file"]
        assert best.record.name == "bz2file"

    def test_equal_similarity_prefers_popular(self, stats, records):
        q = normalize("bz2fiel")
        # Two targets at identical syntactic_max but different popularity.
        big = make_record(("bz2filx", 5_000_000, 2100, 310, 820, 3,
                           "https://github.com/x/a", "MIT", "1.0.0", 5,
                           "2015-01-01T00:00:00Z", "2024-01-01T00:00:00Z"))
        small = make_record(("bz2filz", 1000, 5, 1, 2, 1,
                             "https://github.com/x/b", "MIT", "1.0.0", 2,
                             "2020-01-01T00:00:00Z", "2024-01-01T00:00:00Z"))
        assert max_syntactic_similarity(q, "bz2filx") == max_syntactic_similarity(
            q, "bz2filz"
        )
        stats2 = EcosystemStats.from_records(records + [big, small])
        top3, best, _ = select_targets(
            q, [match_for("bz2filx"), match_for("bz2filz")],
            {"bz2filx": big, "bz2filz": small}, stats2,
        )
        assert best.record.name == "bz2filx"

    def test_input_excluded(self, records, stats):
        by_name = {r.name: r for r in records}
        top3, best, _ = select_targets(
            normalize("bz2file"), [match_for("bz2file", query="bz2file")],
            {"bz2file": by_name["bz2file"]}, stats,
        )
        assert top3 == []
        assert best is None

    def test_all_filtered_yields_note(self, records, stats):
        low = make_record(("lowpop", 0, 0, 0, 0, 1, None, None, "1.0.0", 1,
                           "2024-01-01T00:00:00Z", "2024-01-01T00:00:00Z"))
        top3, best, notes = select_targets(
            normalize("bz2fiel"), [match_for("lowpop")], {"lowpop": low}, stats
        )
        assert top3 == [] and best is None
        assert any("no plausible" in n for n in notes)

    def test_best_maximizes_combined(self, records, stats):
        by_name = {r.name: r for r in records}
        candidates = [match_for(n) for n in ("bz2file", "bzip", "requests", "lodash")]
        top3, best, _ = select_targets(normalize("bz2fiel"), candidates, by_name, stats)
        assert len(top3) <= 3
        if best is not None:
            assert best in top3
            assert best.combined == max(t.combined for t in top3)

    def test_missing_popularity_filter(self, records, stats):
        # No repository URL and modest popularity: dropped at 2x threshold.
        norepo = make_record(("norepo", 500, 1, 0, 1, 1, None, "MIT", "1.0.0", 2,
                              "2022-01-01T00:00:00Z", "2023-01-01T00:00:00Z"))
        top3, best, _ = select_targets(
            normalize("norepp"), [match_for("norepo", query="norepp")],
            {"norepo": norepo}, stats,
        )
        assert top3 == []

    def test_deterministic(self, records, stats):
        by_name = {r.name: r for r in records}
        candidates = [match_for(n) for n in ("bzip", "bz2file", "leftpad")]
        first = select_targets(normalize("bz2fiel"), candidates, by_name, stats)
        second = select_targets(normalize("bz2fiel"), candidates, by_name, stats)
        assert [t.record.name for t in first[0]] == [t.record.name for t in second[0]]

from __future__ import annotations

import pytest

from fixcrew.schemas import (
    JsonExtractError,
    SchemaError,
    extract_json_object,
    parse_analysis,
    parse_priorities,
    parse_profiles,
    parse_report,
    parse_verdict,
)
from fixcrew.types import BugCategory, ClaimedStatus, VerdictStatus


class TestExtractJsonObject:
    def test_plain_object(self):
        assert extract_json_object('{"a": 1}') == {"a": 1}

    def test_fenced_object_with_prose(self):
        text = 'Sure! Here is the analysis:\n```json\n{"a": 1}\n```\nHope that helps.'
        assert extract_json_object(text) == {"a": 1}

    def test_braces_inside_strings_do_not_confuse_balancing(self):
        text = '{"code": "if x { return } else { loop }", "n": 2}'
        assert extract_json_object(text)["n"] == 2

    def test_first_object_wins(self):
        assert extract_json_object('{"first": true} {"second": true}') == {"first": True}

    def test_skips_balanced_non_json_and_finds_real_object(self):
        assert extract_json_object("{not json} then {\"ok\": 1}") == {"ok": 1}

    def test_no_object_raises(self):
        with pytest.raises(JsonExtractError):
            extract_json_object("there is no json here")
        with pytest.raises(JsonExtractError):
            extract_json_object("[1, 2, 3]")


class TestAnalysisSchema:
    def test_spec_fixture_parses(self):
        data = extract_json_object(
            '```json\n{"detected_categories":["syntax"],"summary":"missing colon","evidence":[]}\n```'
        )
        analysis = parse_analysis(data)
        assert analysis.detected_categories == (BugCategory.SYNTAX,)
        assert analysis.summary == "missing colon"

    def test_empty_categories_fall_back_to_logic(self):
        analysis = parse_analysis(
            {"detected_categories": [], "summary": "no anomaly, logic check advised"}
        )
        assert analysis.detected_categories == (BugCategory.LOGIC,)

    def test_unknown_category_labels_are_dropped(self):
        analysis = parse_analysis(
            {"detected_categories": ["off_by_one", "Reference"], "summary": "s"}
        )
        assert analysis.detected_categories == (BugCategory.REFERENCE,)

    def test_empty_object_fails_on_summary(self):
        with pytest.raises(SchemaError):
            parse_analysis({})

    def test_duplicates_are_deduped(self):
        analysis = parse_analysis(
            {"detected_categories": ["logic", "LOGIC", "syntax"], "summary": "s"}
        )
        assert analysis.detected_categories == (BugCategory.LOGIC, BugCategory.SYNTAX)


class TestProfilesSchema:
    def test_valid_profiles(self):
        draft = parse_profiles(
            {
                "strategy_summary": "syntax first",
                "profiles": [
                    {"role_name": "syntax_checker", "objective": "o", "task_prompt": "t"},
                    {"role_name": "verifier", "objective": "", "task_prompt": "t2"},
                ],
            }
        )
        assert draft.strategy_summary == "syntax first"
        assert [p.role_name for p in draft.profiles] == ["syntax_checker", "verifier"]

    def test_missing_strategy_is_tolerated(self):
        draft = parse_profiles({"profiles": [{"role_name": "r", "task_prompt": "t"}]})
        assert draft.strategy_summary == ""

    @pytest.mark.parametrize(
        "payload",
        [
            {},
            {"profiles": []},
            {"profiles": [{"role_name": "", "task_prompt": "t"}]},
            {"profiles": [{"role_name": "r", "task_prompt": ""}]},
            {"profiles": ["not an object"]},
        ],
    )
    def test_malformed_profiles_fail(self, payload):
        with pytest.raises(SchemaError):
            parse_profiles(payload)


class TestPrioritiesSchema:
    def test_valid_ranking(self):
        assert parse_priorities({"priorities": {"a": 2, "b": 1}}) == {"a": 2, "b": 1}

    def test_non_integer_rank_fails(self):
        with pytest.raises(SchemaError):
            parse_priorities({"priorities": {"a": "first"}})
        with pytest.raises(SchemaError):
            parse_priorities({"priorities": {"a": True}})

    def test_missing_map_fails(self):
        with pytest.raises(SchemaError):
            parse_priorities({"priorities": {}})


class TestReportSchema:
    def test_resolved_report(self):
        draft = parse_report(
            {
                "findings": "f",
                "recommendations": "r",
                "candidate_code": "code",
                "claimed_status": "resolved",
            }
        )
        assert draft.claimed_status is ClaimedStatus.RESOLVED
        assert draft.candidate_code == "code"

    def test_resolved_without_candidate_still_parses(self):
        # Downgrading to partial is the runtime's job, not the schema's.
        draft = parse_report({"claimed_status": "resolved"})
        assert draft.candidate_code is None

    def test_bad_status_fails(self):
        with pytest.raises(SchemaError):
            parse_report({"claimed_status": "victorious"})
        with pytest.raises(SchemaError):
            parse_report({})


class TestVerdictSchema:
    def test_fixed(self):
        draft = parse_verdict({"status": "fixed", "rationale": "ok", "final_code": None})
        assert draft.status is VerdictStatus.FIXED

    def test_bad_status_fails(self):
        with pytest.raises(SchemaError):
            parse_verdict({"status": "maybe"})

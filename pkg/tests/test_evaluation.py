import json
import statistics
from fractions import Fraction

import pytest
from hypothesis import given
from hypothesis import strategies as st

from ktas_cdss.core import NOT_APPLICABLE, Exact, ExpertAnnotation, Range, RunMode, make_case
from ktas_cdss.evaluation import (
    FIVE_POINT,
    ONE_POINT,
    CaseSetMismatch,
    DuplicateId,
    EmptyDistribution,
    SchemaError,
    compare_modes,
    confusion,
    dump_cases,
    evaluate,
    load_cases,
    mean_scores,
    ratio_text,
    score_distributions,
    triage_metrics,
    write_eval_outputs,
)
from ktas_cdss.records import CaseRunRecord, ParsedBundle
from ktas_cdss.reports import ManagementDecision, TriageAssessment

levels = st.integers(1, 5)
predictions = st.one_of(
    levels.map(Exact),
    st.tuples(levels, levels).filter(lambda t: t[0] < t[1]).map(lambda t: Range(*t)),
    st.just(NOT_APPLICABLE),
)
pairs_st = st.lists(st.tuples(predictions, levels), max_size=60)


def oracle_counts(pairs):
    """Straight-line recount, independent of the harness."""
    exact = sum(1 for p, e in pairs if p.is_exact and p.level.value == e)
    over = sum(1 for p, e in pairs if p.is_exact and p.level.value < e)
    under = sum(1 for p, e in pairs if p.is_exact and p.level.value > e)
    return exact, over, under, len(pairs) - exact - over - under


@given(pairs_st)
def test_metrics_match_oracle(pairs):
    m = triage_metrics(pairs)
    assert (m.exact_match, m.over_triage, m.under_triage, m.indecisive) == oracle_counts(pairs)
    if pairs:
        assert m.accuracy + m.over_rate + m.under_rate + Fraction(m.indecisive, m.n) == 1


@given(pairs_st)
def test_confusion_totals(pairs):
    cm = confusion(pairs)
    assert cm.total == len(pairs)
    for e in range(1, 6):
        assert sum(row[e - 1] for row in cm.counts) == sum(1 for _, x in pairs if x == e)
    assert cm.row_labels[:1] == ("1",)
    assert {"1", "2", "3", "4", "5"} <= set(cm.row_labels)


@given(pairs_st, st.randoms())
def test_confusion_is_order_independent(pairs, rnd):
    shuffled = list(pairs)
    rnd.shuffle(shuffled)
    assert confusion(shuffled) == confusion(pairs)


def test_empty_metrics():
    m = triage_metrics([])
    assert m.n == 0 and m.accuracy == 0 and m.decisiveness == 0
    assert confusion([]).row_labels == ("1", "2", "3", "4", "5")


def test_ratio_text():
    assert ratio_text(Fraction(30, 42), 42) == "30/42"
    assert ratio_text(Fraction(85, 86), 43) == "85/86"
    assert ratio_text(Fraction(0), 0) == "0"


# ---------------------------------------------------------------------------
# scores


def oracle_mean(dist):
    values = [Fraction(str(v)) for v, c in dist.items() for _ in range(c)]
    return statistics.mean(values)


@given(st.dictionaries(st.sampled_from([1, 2, 3, 4, 5]), st.integers(0, 50)).filter(lambda d: sum(d.values())))
def test_five_point_mean_matches_oracle(dist):
    s = mean_scores({"justification": dist}, FIVE_POINT)["justification"]
    assert s.mean == oracle_mean(dist)
    assert 1 <= s.mean <= 5


@given(st.dictionaries(st.sampled_from(["0", "0.5", "1"]), st.integers(0, 50)).filter(lambda d: sum(d.values())))
def test_one_point_mean_matches_oracle(dist):
    s = mean_scores({"monitoring": dist}, ONE_POINT)["monitoring"]
    assert s.mean == oracle_mean(dist)
    assert 0 <= s.mean <= 1


def test_score_errors():
    with pytest.raises(EmptyDistribution):
        mean_scores({"justification": {}}, FIVE_POINT)
    with pytest.raises(EmptyDistribution):
        mean_scores({"justification": {5: 0}}, FIVE_POINT)
    with pytest.raises(ValueError):
        mean_scores({"justification": {6: 1}}, FIVE_POINT)
    with pytest.raises(ValueError):
        mean_scores({"monitoring": {"0.25": 1}}, ONE_POINT)
    with pytest.raises(ValueError):
        mean_scores({"monitoring": {1: 1}}, FIVE_POINT)
    with pytest.raises(ValueError):
        mean_scores({}, "ten_point")


def test_score_distributions_from_annotations():
    cases = [
        make_case("a", "n", annotation=ExpertAnnotation(2, {"justification": 5}, {"monitoring": 1},
                                                        {"justification": 3}, {"monitoring": 0.5})),
        make_case("b", "n", annotation=ExpertAnnotation(3, {"justification": 4}, {"monitoring": 0.5})),
        make_case("c", "n"),
    ]
    multi = score_distributions(cases, RunMode.MULTI_AGENT)
    assert multi[FIVE_POINT]["justification"] == {Fraction(5): 1, Fraction(4): 1}
    single = score_distributions(cases, RunMode.SINGLE_AGENT)
    assert single[ONE_POINT]["monitoring"] == {Fraction(1, 2): 1}


# ---------------------------------------------------------------------------
# case files


def test_load_cases_reports_line_numbers(tmp_path):
    p = tmp_path / "cases.jsonl"
    p.write_text('{"case_id": "a", "narrative": "x"}\n\n{"case_id": "b"\n')
    with pytest.raises(SchemaError) as err:
        load_cases(p)
    assert err.value.line == 3
    p.write_text('{"case_id": "a", "narrative": "x"}\n{"case_id": "b", "narrative": " "}\n')
    with pytest.raises(SchemaError) as err:
        load_cases(p)
    assert err.value.line == 2
    p.write_text('{"case_id": "a", "narrative": "x", "annotation": {"ktas_level": 9}}\n')
    with pytest.raises(SchemaError):
        load_cases(p)
    p.write_text('[1, 2]\n')
    with pytest.raises(SchemaError):
        load_cases(p)


def test_duplicate_ids(tmp_path):
    p = tmp_path / "cases.jsonl"
    p.write_text('{"case_id": "a", "narrative": "x"}\n{"case_id": "a", "narrative": "y"}\n')
    with pytest.raises(DuplicateId) as err:
        load_cases(p)
    assert err.value.line == 2


def test_dump_load_round_trip(tmp_path, replay_cases):
    p = tmp_path / "out.jsonl"
    dump_cases(replay_cases, p)
    assert load_cases(p) == replay_cases


def test_empty_case_file(tmp_path):
    p = tmp_path / "empty.jsonl"
    p.write_text("")
    assert load_cases(p) == []


# ---------------------------------------------------------------------------
# evaluate / compare


def rec(case_id, pred, mode=RunMode.MULTI_AGENT, error=None):
    parsed = (ParsedBundle(triage=TriageAssessment(ktas=pred)) if mode is RunMode.MULTI_AGENT
              else ParsedBundle(management=ManagementDecision(ktas_review=pred)))
    return CaseRunRecord(case_id, mode, parsed=parsed, error=error)


def test_evaluate_excludes_failed_and_unlabeled():
    cases = [make_case("a", "n", annotation=ExpertAnnotation(2)),
             make_case("b", "n", annotation=ExpertAnnotation(3)),
             make_case("c", "n", annotation=ExpertAnnotation(None)),
             make_case("d", "n")]
    records = [rec("a", Exact(2)), rec("b", Exact(1), error="BackendError: x"),
               rec("c", Exact(4)), rec("d", Exact(5))]
    report = evaluate(records, cases)
    assert report.metrics.n == 1 and report.metrics.exact_match == 1
    assert report.failed_cases == ("b",) and report.unlabeled_cases == ("c", "d")


def test_evaluate_unknown_case():
    with pytest.raises(CaseSetMismatch):
        evaluate([rec("zz", Exact(1))], [make_case("a", "n")])


def test_single_mode_uses_ed_doctor_review():
    cases = [make_case("a", "n", annotation=ExpertAnnotation(2))]
    report = evaluate([rec("a", Range(1, 2), RunMode.SINGLE_AGENT)], cases, RunMode.SINGLE_AGENT)
    assert report.confusion.cell("1 or 2", 2) == 1 and report.metrics.indecisive == 1


def test_compare_requires_same_cases():
    cases = [make_case("a", "n", annotation=ExpertAnnotation(2)),
             make_case("b", "n", annotation=ExpertAnnotation(2))]
    m = evaluate([rec("a", Exact(2)), rec("b", Exact(2))], cases)
    s = evaluate([rec("a", NOT_APPLICABLE, RunMode.SINGLE_AGENT)], cases, RunMode.SINGLE_AGENT)
    with pytest.raises(CaseSetMismatch):
        compare_modes(m, s)
    s = evaluate([rec("a", NOT_APPLICABLE, RunMode.SINGLE_AGENT),
                  rec("b", Exact(3), RunMode.SINGLE_AGENT)], cases, RunMode.SINGLE_AGENT)
    cmp = compare_modes(m, s)
    assert cmp.row("decisiveness").delta == Fraction(1, 2)
    assert cmp.to_json()["accuracy"]["delta"] == "2/2"


def test_write_outputs(tmp_path):
    cases = [make_case("a", "n", annotation=ExpertAnnotation(2, {"justification": 5}))]
    report = evaluate([rec("a", Exact(3))], cases)
    paths = write_eval_outputs(report, tmp_path)
    assert set(paths) == {"metrics", "tables_md", "tables_csv", "confusion_png", "scores_png"}
    data = json.loads(paths["metrics"].read_text())
    assert data["triage"]["under_rate"] == {"ratio": "1/1", "decimal": "1.0000"}
    assert "| 3 | 0 | 1 | 0 | 0 | 0 |" in paths["tables_md"].read_text()
    assert paths["tables_csv"].read_text().startswith("table,mode,row,column,value\n")
    assert paths["confusion_png"].read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"

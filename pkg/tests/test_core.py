import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from ktas_cdss.core import (
    NOT_APPLICABLE,
    AgentRole,
    Disposition,
    EmptyField,
    Exact,
    ExpertAnnotation,
    KtasLevel,
    KtasPrediction,
    PatientCase,
    Range,
    RangeError,
    RunMode,
    StructuredFindings,
    Urgency,
    compare_urgency,
    make_case,
)

levels = st.integers(1, 5)


def predictions():
    ranges = st.tuples(levels, levels).filter(lambda t: t[0] < t[1]).map(lambda t: Range(*t))
    return st.one_of(levels.map(Exact), ranges, st.just(NOT_APPLICABLE))


@pytest.mark.parametrize("bad", [0, 6, -1, 2.5, True, "3"])
def test_level_rejects_out_of_range(bad):
    with pytest.raises(RangeError):
        KtasLevel(bad)


def test_level_ordering_and_urgency():
    assert KtasLevel(1) < KtasLevel(2)
    assert KtasLevel(1).more_urgent_than(KtasLevel(3))
    assert not KtasLevel(4).more_urgent_than(KtasLevel(4))


@pytest.mark.parametrize("low,high", [(2, 2), (3, 1)])
def test_range_requires_low_below_high(low, high):
    with pytest.raises(RangeError):
        Range(low, high)


@pytest.mark.parametrize("label,expected", [
    ("2", Exact(2)),
    ("1 or 2", Range(1, 2)),
    ("4 OR 3", Range(3, 4)),
    ("Not applicable", NOT_APPLICABLE),
    (" n/a ", NOT_APPLICABLE),
])
def test_from_label(label, expected):
    assert KtasPrediction.from_label(label) == expected


@pytest.mark.parametrize("label", ["", "6", "1 or 6", "two"])
def test_from_label_rejects_garbage(label):
    with pytest.raises((ValueError, RangeError)):
        KtasPrediction.from_label(label)


@given(predictions())
def test_label_round_trip(pred):
    assert KtasPrediction.from_label(pred.label()) == pred
    assert KtasPrediction.from_json(json.loads(json.dumps(pred.to_json()))) == pred


@given(predictions(), predictions())
def test_sort_key_is_total_and_consistent(a, b):
    assert (a.sort_key() == b.sort_key()) == (a == b)


def test_row_order_matches_table_layout():
    preds = [NOT_APPLICABLE, Exact(5), Range(3, 4), Exact(3), Range(1, 2), Exact(2), Exact(1), Exact(4)]
    assert [p.label() for p in sorted(preds, key=lambda p: p.sort_key())] == [
        "1", "1 or 2", "2", "3", "3 or 4", "4", "5", "Not applicable"]


@given(levels, levels)
def test_compare_urgency_exact(p, e):
    got = compare_urgency(Exact(p), e)
    assert got is (Urgency.EQUAL if p == e else Urgency.MORE_URGENT if p < e else Urgency.LESS_URGENT)


@given(predictions().filter(lambda p: not p.is_exact), levels)
def test_non_exact_is_incomparable(pred, e):
    assert compare_urgency(pred, e) is Urgency.INCOMPARABLE


def test_role_parse_and_titles():
    assert AgentRole.parse("triage-nurse") is AgentRole.TRIAGE_NURSE
    assert AgentRole.parse("ED Doctor in Charge") is AgentRole.ED_DOCTOR_IN_CHARGE
    assert AgentRole.PHARMACIST.title == "Pharmacist"
    with pytest.raises(ValueError):
        AgentRole.parse("surgeon")


def test_disposition_labels():
    assert [d.label for d in Disposition] == ["Continue ER care", "Admit", "Transfer", "Discharge"]


@pytest.mark.parametrize("kwargs", [
    {"spo2_percent": 101}, {"spo2_percent": -1}, {"temperature_c": 50},
    {"heart_rate_bpm": 0}, {"systolic_bp_mmHg": -5}, {"flags": {"bogus"}},
    {"spo2_percent": float("nan")},
])
def test_findings_validation(kwargs):
    with pytest.raises(RangeError):
        StructuredFindings("cough", **kwargs)


def test_make_case_rejects_blank_fields():
    with pytest.raises(EmptyField):
        make_case("", "narrative")
    with pytest.raises(EmptyField):
        make_case("c1", "   ")


def test_annotation_validation_and_modes():
    ann = ExpertAnnotation(2, {"primary_diagnosis": 5}, {"medication": 0.5},
                           {"primary_diagnosis": 4}, {"medication": 1})
    assert ann.scores_for(RunMode.MULTI_AGENT) == ({"primary_diagnosis": 5}, {"medication": 0.5})
    assert ann.scores_for(RunMode.SINGLE_AGENT)[0] == {"primary_diagnosis": 4}
    with pytest.raises(RangeError):
        ExpertAnnotation(2, {"primary_diagnosis": 6})
    with pytest.raises(RangeError):
        ExpertAnnotation(2, one_point_scores={"medication": 0.25})
    with pytest.raises(RangeError):
        ExpertAnnotation(2, {"bedside_manner": 5})


def test_case_json_round_trip():
    case = make_case(
        "c7", "Chest pain.",
        StructuredFindings("chest pain", spo2_percent=97, temperature_c=36.8, flags={"cardiac_arrest"}),
        ExpertAnnotation(1, {"justification": 5}, {"monitoring": 1}, {"justification": 3}, {}),
    )
    assert PatientCase.from_json(json.loads(json.dumps(case.to_json()))) == case

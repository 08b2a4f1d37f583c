from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from ktas_cdss.core import NOT_APPLICABLE, Disposition, Exact, Range
from ktas_cdss.reports import (
    DiagnosisReport,
    ManagementDecision,
    MedicationEntry,
    MedicationReport,
    TriageAssessment,
    parse_diagnosis,
    parse_disposition,
    parse_ktas_line,
    parse_ktas_value,
    parse_management,
    parse_medication,
    parse_triage,
    render_diagnosis,
    render_management,
    render_medication,
    render_triage,
    report_from_json,
    report_to_json,
)

from conftest import WORKED_CASE

# Free text is drawn from plain clinical words: no colons, digits or list
# markers, so a generated value can never be mistaken for a header.
VOCAB = ("acute", "chronic", "pain", "fever", "cough", "oxygen", "saturation", "stable",
         "patient", "history", "blood", "pressure", "rate", "infusion", "dose", "renal",
         "hepatic", "sepsis", "pneumonia", "asthma", "review", "repeat", "culture", "with",
         "without", "and", "of", "the", "left", "right", "mild", "severe", "monitor", "cbc")
word = st.sampled_from(VOCAB)
text = st.lists(word, max_size=8).map(" ".join)
nonempty = st.lists(word, min_size=1, max_size=8).map(" ".join)
items = st.lists(nonempty, max_size=5).map(tuple)
remainder = st.lists(nonempty, max_size=3).map("\n".join)

levels = st.integers(1, 5)
predictions = st.one_of(
    levels.map(Exact),
    st.tuples(levels, levels).filter(lambda t: t[0] < t[1]).map(lambda t: Range(*t)),
    st.just(NOT_APPLICABLE),
)

ROUND_TRIP = settings(max_examples=1000, deadline=None,
                      suppress_health_check=[HealthCheck.too_slow])

triage_reports = st.builds(
    TriageAssessment, ktas=predictions, justification=text, assessment=items,
    critical_findings=text, recommended_actions=text, additional_information=text,
    remainder=remainder)

diagnosis_reports = st.builds(
    DiagnosisReport, primary_diagnosis=text, supporting_evidence=text, differentials=items,
    medications=items, interventions=text, fluid_management=text, pain_management=text,
    tests=items, complications=items, consultations=items, monitoring_plan=text,
    guidelines=text, remainder=remainder)

drug_entries = st.builds(
    MedicationEntry, name=nonempty, dose_route_freq=text, indication=text, appropriateness=text,
    interactions_note=text, contraindications=text, administration=text, monitoring=text)

medication_reports = st.builds(
    MedicationReport, condition_summary=text, medications=st.lists(drug_entries, max_size=4).map(tuple),
    drug_disease_interactions=text, high_alert_medications=text,
    pharmacokinetic_considerations=text, recommendations=items, er_considerations=items,
    references=items, remainder=remainder)

review_texts = st.one_of(
    text,
    predictions.map(lambda p: p.label()),
    st.tuples(predictions.filter(lambda p: p.is_exact or isinstance(p, Range)), nonempty)
    .map(lambda t: f"{t[0].label()}. {t[1]}"),
)
disposition_texts = st.one_of(
    text,
    st.sampled_from(["Admit to the intensive care unit", "Transfer to a tertiary center",
                     "Discharge home with follow up", "Continue ER care for observation"]),
)


@st.composite
def management_reports(draw):
    review = draw(review_texts)
    disp = draw(disposition_texts)
    return ManagementDecision(
        ktas_review=parse_ktas_value(review), ktas_review_text=review,
        primary_diagnosis=draw(text), critical_findings=draw(text),
        disposition=parse_disposition(disp), disposition_text=disp,
        justification=draw(text), immediate_actions=draw(items), medications=draw(items),
        tests=draw(items), consultations=draw(items), monitoring=draw(items),
        resource_allocation=draw(text), communication_patient=draw(text),
        communication_team=draw(text), contingency=draw(text),
        additional_considerations=draw(text), references=draw(items), remainder=draw(remainder))


@ROUND_TRIP
@given(triage_reports)
def test_triage_round_trip(r):
    assert parse_triage(render_triage(r)) == r


@ROUND_TRIP
@given(diagnosis_reports)
def test_diagnosis_round_trip(r):
    assert parse_diagnosis(render_diagnosis(r)) == r


@ROUND_TRIP
@given(medication_reports)
def test_medication_round_trip(r):
    assert parse_medication(render_medication(r)) == r


@ROUND_TRIP
@given(management_reports())
def test_management_round_trip(r):
    assert parse_management(render_management(r)) == r


@given(st.one_of(triage_reports, diagnosis_reports, medication_reports, management_reports()))
def test_json_codec_round_trip(r):
    assert report_from_json(type(r), report_to_json(r)) == r


PARSERS = (parse_triage, parse_diagnosis, parse_medication, parse_management)


@settings(max_examples=1000, deadline=None)
@given(st.binary(max_size=600))
def test_parsers_are_total_on_random_bytes(raw):
    s = raw.decode("utf-8", errors="replace")
    for parse in PARSERS:
        parse(s)
    parse_ktas_line(s)


@settings(max_examples=300, deadline=None)
@given(st.lists(st.sampled_from([
    "KTAS CLASSIFICATION:", "KTAS CLASSIFICATION: 2", "Primary Diagnosis:", "1. Medications:",
    "Disposition Decision:", "Patient Assessment:", "   - a. x", "**Justification:** y", "",
    "Prescribed Medications Analysis:", "1. Drug (RxNorm verified):", "- Dose/Route/Frequency:",
    "References:", "MEDICATION SAFETY REPORT", "3 or 4", "Not applicable", "#", ":", "1.",
]), max_size=30).map("\n".join))
def test_parsers_are_total_on_header_soup(s):
    for parse in PARSERS:
        parse(s)


def test_missing_sections_give_empty_fields():
    t = parse_triage("nothing structured here")
    assert t.ktas is NOT_APPLICABLE and t.justification == "" and t.assessment == ()
    assert t.remainder == "nothing structured here"
    m = parse_management("")
    assert m.disposition is None and m.medications == ()


def test_ktas_values():
    cases = {
        "3": Exact(3), "Level 2": Exact(2), "KTAS 4 - moderate": Exact(4), "**1**": Exact(1),
        "1 or 2": Range(1, 2), "3 or 4 (borderline)": Range(3, 4), "2 or 2": NOT_APPLICABLE,
        "3 of 5": NOT_APPLICABLE, "Not applicable": NOT_APPLICABLE, "": NOT_APPLICABLE,
        "seven": NOT_APPLICABLE, "2, given chest pain": Exact(2),
    }
    for value, expected in cases.items():
        assert parse_ktas_value(value) == expected, value


def test_ktas_line_value_on_following_line():
    assert parse_ktas_line("KTAS CLASSIFICATION:\n\n  2\n") == Exact(2)
    assert parse_ktas_line("**KTAS Classification Review:** 1 or 2, agree") == Range(1, 2)
    assert parse_ktas_line("KTAS Level: 3") == Exact(3)
    assert parse_ktas_line("The KTAS level is probably 3") is NOT_APPLICABLE


def test_first_occurrence_wins_and_duplicates_go_to_remainder():
    t = parse_triage("KTAS CLASSIFICATION: 2\nCritical Findings: first\nCritical Findings: second\n")
    assert t.ktas == Exact(2) and t.critical_findings == "first"
    assert "second" in t.remainder


def test_markdown_decorated_headers():
    t = parse_triage("## KTAS CLASSIFICATION: 1\n**Detailed Justification:** arrest\n"
                     "**Patient Assessment:**\n1. Presenting Symptoms: collapse\n")
    assert t.ktas == Exact(1) and t.justification == "arrest"
    assert t.assessment == ("Presenting Symptoms: collapse",)


def test_disposition_precedence():
    assert parse_disposition("Admit after transfer from clinic") is Disposition.ADMIT
    assert parse_disposition("Transfer, do not discharge") is Disposition.TRANSFER
    assert parse_disposition("Discharge home") is Disposition.DISCHARGE
    assert parse_disposition("Continue emergency care") is Disposition.CONTINUE_ER_CARE
    assert parse_disposition("undecided") is None


def test_worked_management_example():
    r = parse_management((WORKED_CASE / "ed_doctor_output.txt").read_text("utf-8"))
    assert r.disposition is Disposition.ADMIT
    assert r.primary_diagnosis == "Acute Respiratory Distress Syndrome (ARDS) with underlying Pneumonia"
    assert r.medications[1] == "Antibiotics: Ceftriaxone 1g IV q12h"
    assert r.tests == ("Chest X-ray", "Arterial blood gas (ABG) analysis",
                       "Complete blood count (CBC)", "Blood cultures")
    assert len(r.immediate_actions) == 4 and len(r.consultations) == 2 and len(r.monitoring) == 3
    assert r.communication_patient.startswith("The patient's condition and treatment plan")
    # the review is prose with no leading level, so it is not a decisive verdict
    assert r.ktas_review is NOT_APPLICABLE
    assert r.remainder == ""


def test_medication_names_strip_verification_marker():
    r = parse_medication((WORKED_CASE / "pharmacist_output.txt").read_text("utf-8"))
    assert [d.name for d in r.medications] == ["Ceftriaxone", "Albuterol", "Lorazepam"]
    assert r.medications[2].dose_route_freq == "1mg IV q6h as needed"
    assert r.high_alert_medications == "Lorazepam (IV benzodiazepine)"

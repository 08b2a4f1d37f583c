"""Parsers (and matching renderers) for the four templated agent reports.

Parsing is header-driven: a line is a section header when, after stripping
leading markdown markers (``#``, ``*``, ``-``, ``>``) and list numbering, it
starts with a known header name followed by a colon. Matching is
case-insensitive. Everything is total: any string yields a record, with
empty fields where sections are missing.

The renderers emit the exact layout of each template's expected output, so
``parse_x(render_x(r)) == r`` holds for well-formed records.
"""

from __future__ import annotations

import re
from dataclasses import asdict, dataclass, field, fields
from typing import Any, Iterable, Mapping

from .core import NOT_APPLICABLE, Disposition, Exact, KtasPrediction, Range

# ---------------------------------------------------------------------------
# records


@dataclass(frozen=True)
class TriageAssessment:
    ktas: KtasPrediction = NOT_APPLICABLE
    justification: str = ""
    assessment: tuple[str, ...] = ()
    critical_findings: str = ""
    recommended_actions: str = ""
    additional_information: str = ""
    remainder: str = ""


@dataclass(frozen=True)
class DiagnosisReport:
    primary_diagnosis: str = ""
    supporting_evidence: str = ""
    differentials: tuple[str, ...] = ()
    medications: tuple[str, ...] = ()
    interventions: str = ""
    fluid_management: str = ""
    pain_management: str = ""
    tests: tuple[str, ...] = ()
    complications: tuple[str, ...] = ()
    consultations: tuple[str, ...] = ()
    monitoring_plan: str = ""
    guidelines: str = ""
    remainder: str = ""

    @property
    def treatment_items(self) -> tuple[str, ...]:
        extra = tuple(x for x in (self.interventions, self.fluid_management,
                                  self.pain_management) if x)
        return self.medications + extra


@dataclass(frozen=True)
class MedicationEntry:
    name: str
    dose_route_freq: str = ""
    indication: str = ""
    appropriateness: str = ""
    interactions_note: str = ""
    contraindications: str = ""
    administration: str = ""
    monitoring: str = ""


@dataclass(frozen=True)
class MedicationReport:
    condition_summary: str = ""
    medications: tuple[MedicationEntry, ...] = ()
    drug_disease_interactions: str = ""
    high_alert_medications: str = ""
    pharmacokinetic_considerations: str = ""
    recommendations: tuple[str, ...] = ()
    er_considerations: tuple[str, ...] = ()
    references: tuple[str, ...] = ()
    remainder: str = ""


@dataclass(frozen=True)
class ManagementDecision:
    ktas_review: KtasPrediction = NOT_APPLICABLE
    ktas_review_text: str = ""
    primary_diagnosis: str = ""
    critical_findings: str = ""
    disposition: Disposition | None = None
    disposition_text: str = ""
    justification: str = ""
    immediate_actions: tuple[str, ...] = ()
    medications: tuple[str, ...] = ()
    tests: tuple[str, ...] = ()
    consultations: tuple[str, ...] = ()
    monitoring: tuple[str, ...] = ()
    resource_allocation: str = ""
    communication_patient: str = ""
    communication_team: str = ""
    contingency: str = ""
    additional_considerations: str = ""
    references: tuple[str, ...] = ()
    remainder: str = ""


# ---------------------------------------------------------------------------
# json codec for records


def report_to_json(report: Any) -> dict[str, Any]:
    out: dict[str, Any] = {}
    for f in fields(report):
        value = getattr(report, f.name)
        if isinstance(value, KtasPrediction):
            value = value.label()
        elif isinstance(value, Disposition):
            value = value.value
        elif isinstance(value, tuple):
            value = [asdict(v) if isinstance(v, MedicationEntry) else v for v in value]
        out[f.name] = value
    return out


def report_from_json(cls: type, data: Mapping[str, Any]) -> Any:
    kwargs: dict[str, Any] = {}
    for f in fields(cls):
        if f.name not in data:
            continue
        value = data[f.name]
        if f.name in ("ktas", "ktas_review"):
            value = KtasPrediction.from_label(value)
        elif f.name == "disposition":
            value = None if value is None else Disposition(value)
        elif isinstance(value, list):
            if cls is MedicationReport and f.name == "medications":
                value = tuple(MedicationEntry(**v) for v in value)
            else:
                value = tuple(value)
        kwargs[f.name] = value
    return cls(**kwargs)


# ---------------------------------------------------------------------------
# line machinery

_LEAD_RE = re.compile(r"^(?:\s*(?:[#>*_•]+|-+(?=\s)|\d+[.)](?=\s)|[A-Za-z][.)](?=\s))\s*)*")
_ITEM_RE = re.compile(r"^\s*(?:(?:[-*•]|\d+[.)]|[A-Za-z][.)])\s+)+")


def _clean_value(text: str) -> str:
    # drop markdown emphasis left over after a bold header like "**Header:**"
    return re.sub(r"^[*_]+\s*", "", text).strip()


class _Headers:
    def __init__(self, names: Iterable[str], titles: Iterable[str] = ()) -> None:
        names = sorted(names, key=len, reverse=True)
        alt = "|".join(re.escape(n) for n in names)
        self._re = re.compile(rf"^(?P<name>{alt})\s*[*_]*\s*:(?P<rest>.*)$", re.IGNORECASE)
        self._canon = {n.lower(): n for n in names}
        self._titles = {t.lower() for t in titles}

    def match(self, line: str) -> tuple[str, str] | None:
        stripped = _LEAD_RE.sub("", line.strip(), count=1)
        m = self._re.match(stripped)
        if m:
            return self._canon[m.group("name").lower()], _clean_value(m.group("rest"))
        if stripped.strip("*_: ").lower() in self._titles:
            return "", ""
        return None


@dataclass
class _Section:
    name: str
    inline: str
    body: list[str] = field(default_factory=list)

    def text(self) -> str:
        lines = ([self.inline] if self.inline else []) + [ln.strip() for ln in self.body]
        return "\n".join(ln for ln in lines if ln).strip()

    def items(self) -> tuple[str, ...]:
        return _list_items(([self.inline] if self.inline else []) + self.body)


def _list_items(lines: Iterable[str]) -> tuple[str, ...]:
    items: list[str] = []
    for raw in lines:
        if not raw.strip():
            continue
        m = _ITEM_RE.match(raw)
        if m:
            items.append(raw[m.end():].strip())
        elif items:
            items[-1] = f"{items[-1]} {raw.strip()}".strip()
        else:
            items.append(raw.strip())
    return tuple(i for i in items if i)


def _split(text: str, headers: _Headers) -> tuple[dict[str, _Section], str]:
    """Split into first-occurrence sections plus a remainder of unclaimed text."""
    sections: dict[str, _Section] = {}
    remainder: list[str] = []
    current: _Section | None = None
    for line in text.splitlines():
        hit = headers.match(line)
        if hit is not None:
            name, rest = hit
            if name == "":
                current = None
                continue
            if name in sections:
                # later duplicates never override the first occurrence
                current = None
                remainder.append(line)
                continue
            current = sections[name] = _Section(name, rest)
        elif current is not None:
            current.body.append(line)
        else:
            remainder.append(line)
    rem = "\n".join(ln.strip() for ln in remainder if ln.strip())
    return sections, rem


def _text(sections: dict[str, _Section], name: str) -> str:
    sec = sections.get(name)
    return sec.text() if sec else ""


def _items(sections: dict[str, _Section], name: str) -> tuple[str, ...]:
    sec = sections.get(name)
    return sec.items() if sec else ()


# ---------------------------------------------------------------------------
# KTAS line

KTAS_HEADER = "KTAS CLASSIFICATION"
KTAS_REVIEW_HEADER = "KTAS Classification Review"

_KTAS_HEADERS = _Headers([KTAS_HEADER, KTAS_REVIEW_HEADER, "KTAS Level"])
_KTAS_VALUE_RE = re.compile(
    r"^[\s*_\[(]*(?:ktas\s*)?(?:level\s*)?(?P<a>[1-5])"
    r"(?:\s+or\s+(?:level\s*)?(?P<b>[1-5]))?"
    r"(?=$|[.,;:)\]*_]|\s+[-–—(\[]|\s*$)",
    re.IGNORECASE,
)


def parse_ktas_value(value: str) -> KtasPrediction:
    m = _KTAS_VALUE_RE.match(value)
    if not m:
        return NOT_APPLICABLE
    a = int(m.group("a"))
    if m.group("b") is None:
        return Exact(a)
    b = int(m.group("b"))
    if a == b:
        return NOT_APPLICABLE
    return Range(min(a, b), max(a, b))


def parse_ktas_line(text: str) -> KtasPrediction:
    """Parse the first KTAS header in ``text`` into a prediction.

    Accepts a bare level (optionally prefixed by "Level"/"KTAS") or
    ``"<a> or <b>"``; everything else, including a missing header, is
    ``NotApplicable``. An empty header line takes its value from the next
    non-blank line.
    """
    lines = text.splitlines()
    for i, line in enumerate(lines):
        hit = _KTAS_HEADERS.match(line)
        if hit is None or not hit[0]:
            continue
        value = hit[1]
        if not value:
            value = next((ln.strip() for ln in lines[i + 1:] if ln.strip()), "")
            if _KTAS_HEADERS.match(value):
                value = ""
        return parse_ktas_value(value)
    return NOT_APPLICABLE


# ---------------------------------------------------------------------------
# triage

_TRIAGE = _Headers(
    [KTAS_HEADER, "Detailed Justification", "Patient Assessment", "Critical Findings",
     "Recommended Actions", "Additional Information"],
)


def parse_triage(text: str) -> TriageAssessment:
    sections, remainder = _split(text, _TRIAGE)
    return TriageAssessment(
        ktas=parse_ktas_line(text),
        justification=_text(sections, "Detailed Justification"),
        assessment=_items(sections, "Patient Assessment"),
        critical_findings=_text(sections, "Critical Findings"),
        recommended_actions=_text(sections, "Recommended Actions"),
        additional_information=_text(sections, "Additional Information"),
        remainder=remainder,
    )


def _numbered(items: Iterable[str], indent: str = "") -> str:
    return "".join(f"{indent}{i}. {item}\n" for i, item in enumerate(items, 1))


def _lettered(items: Iterable[str], indent: str = "   ") -> str:
    letters = "abcdefghijklmnopqrstuvwxyz"
    return "".join(f"{indent}{letters[i % 26]}. {item}\n" for i, item in enumerate(items))


def _pre(remainder: str) -> str:
    return f"{remainder}\n\n" if remainder else ""


def render_triage(r: TriageAssessment) -> str:
    return (
        _pre(r.remainder)
        + f"KTAS CLASSIFICATION: {r.ktas.label()}\n\n"
        f"Detailed Justification: {r.justification}\n\n"
        "Patient Assessment:\n"
        + _numbered(r.assessment)
        + f"\nCritical Findings: {r.critical_findings}\n\n"
        f"Recommended Actions: {r.recommended_actions}\n\n"
        f"Additional Information: {r.additional_information}\n"
    )


# ---------------------------------------------------------------------------
# diagnosis

_DIAGNOSIS = _Headers(
    ["PRIMARY DIAGNOSIS", "Supporting Evidence", "Differential Diagnoses", "Treatment Plan",
     "Medications", "Interventions/Procedures", "Fluid Management", "Pain Management",
     "Diagnostic Tests", "Potential Complications", "Consultations", "Monitoring Plan",
     "Evidence-Based Guidelines"],
)


def parse_diagnosis(text: str) -> DiagnosisReport:
    sections, remainder = _split(text, _DIAGNOSIS)
    treatment = sections.get("Treatment Plan")
    if treatment is not None and (treatment.inline or any(ln.strip() for ln in treatment.body)):
        # free-form treatment text without sub-headers is kept rather than dropped
        remainder = "\n".join(x for x in (remainder, treatment.text()) if x)
    return DiagnosisReport(
        primary_diagnosis=_text(sections, "PRIMARY DIAGNOSIS"),
        supporting_evidence=_text(sections, "Supporting Evidence"),
        differentials=_items(sections, "Differential Diagnoses"),
        medications=_items(sections, "Medications"),
        interventions=_text(sections, "Interventions/Procedures"),
        fluid_management=_text(sections, "Fluid Management"),
        pain_management=_text(sections, "Pain Management"),
        tests=_items(sections, "Diagnostic Tests"),
        complications=_items(sections, "Potential Complications"),
        consultations=_items(sections, "Consultations"),
        monitoring_plan=_text(sections, "Monitoring Plan"),
        guidelines=_text(sections, "Evidence-Based Guidelines"),
        remainder=remainder,
    )


def render_diagnosis(r: DiagnosisReport) -> str:
    return (
        _pre(r.remainder)
        + f"PRIMARY DIAGNOSIS: {r.primary_diagnosis}\n\n"
        f"Supporting Evidence: {r.supporting_evidence}\n\n"
        "Differential Diagnoses:\n"
        + _numbered(r.differentials)
        + "\nTreatment Plan:\n"
        "1. Medications:\n"
        + _lettered(r.medications)
        + f"2. Interventions/Procedures: {r.interventions}\n"
        f"3. Fluid Management: {r.fluid_management}\n"
        f"4. Pain Management: {r.pain_management}\n\n"
        "Diagnostic Tests:\n"
        + _numbered(r.tests)
        + "\nPotential Complications:\n"
        + _numbered(r.complications)
        + "\nConsultations:\n"
        + _numbered(r.consultations)
        + f"\nMonitoring Plan: {r.monitoring_plan}\n\n"
        f"Evidence-Based Guidelines: {r.guidelines}\n"
    )


# ---------------------------------------------------------------------------
# medication review

_MEDICATION = _Headers(
    ["Patient Condition Summary", "Prescribed Medications Analysis",
     "Overall Medication Therapy Assessment", "Recommendations",
     "Emergency Pharmacology Considerations", "References"],
    titles=["MEDICATION SAFETY REPORT"],
)

_DRUG_FIELDS = {
    "dose/route/frequency": "dose_route_freq",
    "indication": "indication",
    "appropriateness": "appropriateness",
    "interactions": "interactions_note",
    "contraindications": "contraindications",
    "administration instructions": "administration",
    "monitoring": "monitoring",
}
_DRUG_LABELS = {v: k for k, v in _DRUG_FIELDS.items()}
_DRUG_LABEL_TEXT = {
    "dose_route_freq": "Dose/Route/Frequency",
    "indication": "Indication",
    "appropriateness": "Appropriateness",
    "interactions_note": "Interactions",
    "contraindications": "Contraindications",
    "administration": "Administration Instructions",
    "monitoring": "Monitoring",
}
_OVERALL_FIELDS = {
    "drug-disease interactions": "drug_disease_interactions",
    "high-alert medications": "high_alert_medications",
    "pharmacokinetic considerations": "pharmacokinetic_considerations",
}
_LABELED_RE = re.compile(r"^\s*(?:[-*•]\s+)?[*_]*(?P<label>[^:\n]{1,60}?)[*_]*\s*:\s*(?P<value>.*)$")
_NUMBERED_RE = re.compile(r"^\s*[*_]*\d+[.)]\s+(?P<rest>.*)$")
_VERIFIED_RE = re.compile(r"\s*\(RxNorm verified\)\s*:?\s*$", re.IGNORECASE)


def _labeled_block(lines: Iterable[str], mapping: Mapping[str, str]) -> dict[str, str]:
    out: dict[str, str] = {}
    last: str | None = None
    for raw in lines:
        if not raw.strip():
            continue
        m = _LABELED_RE.match(raw)
        key = mapping.get(m.group("label").strip().lower()) if m else None
        if key is not None and key not in out:
            out[key] = _clean_value(m.group("value"))
            last = key
        elif last is not None:
            out[last] = f"{out[last]}\n{raw.strip()}".strip()
    return out


def _parse_drugs(section: _Section | None) -> tuple[MedicationEntry, ...]:
    if section is None:
        return ()
    groups: list[tuple[str, list[str]]] = []
    lines = ([section.inline] if section.inline else []) + section.body
    for raw in lines:
        m = _NUMBERED_RE.match(raw)
        if m:
            name = _VERIFIED_RE.sub("", m.group("rest")).strip()
            groups.append((name.rstrip(":").strip(), []))
        elif groups:
            groups[-1][1].append(raw)
    drugs = []
    for name, body in groups:
        if not name:
            continue
        values = _labeled_block(body, _DRUG_FIELDS)
        drugs.append(MedicationEntry(name=name, **values))
    return tuple(drugs)


def parse_medication(text: str) -> MedicationReport:
    sections, remainder = _split(text, _MEDICATION)
    overall = sections.get("Overall Medication Therapy Assessment")
    overall_values = (
        _labeled_block(([overall.inline] if overall.inline else []) + overall.body, _OVERALL_FIELDS)
        if overall else {}
    )
    return MedicationReport(
        condition_summary=_text(sections, "Patient Condition Summary"),
        medications=_parse_drugs(sections.get("Prescribed Medications Analysis")),
        recommendations=_items(sections, "Recommendations"),
        er_considerations=_items(sections, "Emergency Pharmacology Considerations"),
        references=_items(sections, "References"),
        remainder=remainder,
        **overall_values,
    )


def render_medication(r: MedicationReport) -> str:
    drugs = []
    for i, d in enumerate(r.medications, 1):
        lines = [f"{i}. {d.name} (RxNorm verified):"]
        for attr, label in _DRUG_LABEL_TEXT.items():
            lines.append(f"   - {label}: {getattr(d, attr)}")
        drugs.append("\n".join(lines) + "\n")
    return (
        _pre(r.remainder)
        + "MEDICATION SAFETY REPORT\n\n"
        f"Patient Condition Summary: {r.condition_summary}\n\n"
        "Prescribed Medications Analysis:\n"
        + "\n".join(drugs)
        + "\nOverall Medication Therapy Assessment:\n"
        f"- Drug-Disease Interactions: {r.drug_disease_interactions}\n"
        f"- High-Alert Medications: {r.high_alert_medications}\n"
        f"- Pharmacokinetic Considerations: {r.pharmacokinetic_considerations}\n\n"
        "Recommendations:\n"
        + _numbered(r.recommendations)
        + "\nEmergency Pharmacology Considerations:\n"
        + "".join(f"- {x}\n" for x in r.er_considerations)
        + "\nReferences:\n"
        + "".join(f"- {x}\n" for x in r.references)
    )


# ---------------------------------------------------------------------------
# management decision

_MANAGEMENT = _Headers(
    [KTAS_REVIEW_HEADER, "Clinical Assessment", "Primary Diagnosis", "Critical Findings",
     "Disposition Decision", "Justification", "Management Plan", "Immediate Actions",
     "Medications", "Diagnostic Tests", "Consultations", "Monitoring", "Resource Allocation",
     "Communication Plan", "Patient/Family", "Healthcare Team", "Contingency Planning",
     "Additional Considerations", "References"],
    titles=["EMERGENCY DEPARTMENT MANAGEMENT DECISION"],
)

# checked in precedence order
_DISPOSITION_PATTERNS = (
    (Disposition.ADMIT, re.compile(r"\badmi(?:t|ssion|tted|tting)\b", re.IGNORECASE)),
    (Disposition.TRANSFER, re.compile(r"\btransfer", re.IGNORECASE)),
    (Disposition.DISCHARGE, re.compile(r"\bdischarg", re.IGNORECASE)),
    (Disposition.CONTINUE_ER_CARE, re.compile(
        r"\bcontinu\w*\s+(?:er|ed|emergency)\b|\b(?:er|ed)\s+care\b|\bobservation\b",
        re.IGNORECASE)),
)


def parse_disposition(text: str) -> Disposition | None:
    for disposition, pattern in _DISPOSITION_PATTERNS:
        if pattern.search(text):
            return disposition
    return None


def parse_management(text: str) -> ManagementDecision:
    sections, remainder = _split(text, _MANAGEMENT)
    disposition_text = _text(sections, "Disposition Decision")
    return ManagementDecision(
        ktas_review=parse_ktas_line(text),
        ktas_review_text=_text(sections, KTAS_REVIEW_HEADER),
        primary_diagnosis=_text(sections, "Primary Diagnosis"),
        critical_findings=_text(sections, "Critical Findings"),
        disposition=parse_disposition(disposition_text) if "Disposition Decision" in sections
        else None,
        disposition_text=disposition_text,
        justification=_text(sections, "Justification"),
        immediate_actions=_items(sections, "Immediate Actions"),
        medications=_items(sections, "Medications"),
        tests=_items(sections, "Diagnostic Tests"),
        consultations=_items(sections, "Consultations"),
        monitoring=_items(sections, "Monitoring"),
        resource_allocation=_text(sections, "Resource Allocation"),
        communication_patient=_text(sections, "Patient/Family"),
        communication_team=_text(sections, "Healthcare Team"),
        contingency=_text(sections, "Contingency Planning"),
        additional_considerations=_text(sections, "Additional Considerations"),
        references=_items(sections, "References"),
        remainder=remainder,
    )


def render_management(r: ManagementDecision) -> str:
    def block(n: int, label: str, items: tuple[str, ...]) -> str:
        return f"{n}. {label}:\n" + _lettered(items, indent="    - ")

    return (
        _pre(r.remainder)
        + "EMERGENCY DEPARTMENT MANAGEMENT DECISION\n\n"
        f"KTAS Classification Review: {r.ktas_review_text}\n\n"
        "Clinical Assessment:\n"
        f"- Primary Diagnosis: {r.primary_diagnosis}\n"
        f"- Critical Findings: {r.critical_findings}\n\n"
        f"Disposition Decision: {r.disposition_text}\n\n"
        f"Justification: {r.justification}\n\n"
        "Management Plan:\n"
        + block(1, "Immediate Actions", r.immediate_actions)
        + block(2, "Medications", r.medications)
        + block(3, "Diagnostic Tests", r.tests)
        + block(4, "Consultations", r.consultations)
        + block(5, "Monitoring", r.monitoring)
        + f"\nResource Allocation: {r.resource_allocation}\n\n"
        "Communication Plan:\n"
        f"- Patient/Family: {r.communication_patient}\n"
        f"- Healthcare Team: {r.communication_team}\n\n"
        f"Contingency Planning: {r.contingency}\n\n"
        f"Additional Considerations: {r.additional_considerations}\n\n"
        "References:\n"
        + "".join(f"- {x}\n" for x in r.references)
    )

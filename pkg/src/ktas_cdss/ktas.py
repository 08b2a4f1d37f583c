"""KTAS guide asset and a deterministic advisory classifier.

The classifier never overrides an agent's verdict. It exists so tests have a
rules-based oracle and so the pipeline can attach a sanity warning when the
triage agent disagrees with the guide's own examples.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources

from .core import KtasLevel, StructuredFindings

GUIDE_OPEN = "<KTAS guide>"
GUIDE_CLOSE = "</KTAS guide>"


@dataclass(frozen=True)
class GuideEntry:
    level: KtasLevel
    description: str
    examples: tuple[str, ...]
    priority: str


@dataclass(frozen=True)
class KtasGuide:
    levels: tuple[GuideEntry, ...]

    def __post_init__(self) -> None:
        if [e.level.value for e in self.levels] != [1, 2, 3, 4, 5]:
            raise ValueError("KTAS guide must list levels 1..5 in order")

    def entry(self, level: int) -> GuideEntry:
        return self.levels[level - 1]


@lru_cache(maxsize=1)
def render_guide() -> str:
    """The guide block exactly as embedded in the Triage Nurse task template."""
    text = resources.files(__package__).joinpath("assets/ktas_guide.txt").read_text("utf-8")
    return text.rstrip("\n")


_ENTRY_RE = re.compile(
    r'^(?P<level>[1-5]):\s*\n'
    r'\s*description:\s*"(?P<description>[^"]*)",\s*\n'
    r'\s*examples:\s*\[(?P<examples>[^\]]*)\],\s*\n'
    r'\s*priority:\s*"(?P<priority>[^"]*)"',
    re.MULTILINE,
)


@lru_cache(maxsize=1)
def load_guide() -> KtasGuide:
    body = render_guide()
    entries = []
    for m in _ENTRY_RE.finditer(body):
        examples = tuple(re.findall(r'"([^"]*)"', m.group("examples")))
        entries.append(GuideEntry(KtasLevel(int(m.group("level"))), m.group("description"),
                                  examples, m.group("priority")))
    return KtasGuide(tuple(entries))


# keyword tables; matching is case-insensitive, whole-word for short terms
_LEVEL1_TERMS = ("cardiac arrest", "respiratory arrest", "cardiopulmonary arrest")
_UNCONSCIOUS_TERMS = ("unconscious", "unresponsive")
_LEVEL2_TERMS = (
    "myocardial infarction", "heart attack", "stemi",
    "cerebral hemorrhage", "intracerebral hemorrhage", "brain hemorrhage",
    "cerebral infarction", "stroke",
)
_DYSPNEA_TERMS = ("dyspnea", "shortness of breath", "breathlessness", "difficulty breathing")
_BLEEDING_DIARRHEA_TERMS = ("diarrhea with bleeding", "bloody diarrhea", "bleeding diarrhea",
                            "diarrhea with blood")
_GASTROENTERITIS_TERMS = ("gastroenteritis",)
_UTI_TERMS = ("urinary tract infection", "uti")
_ABDOMINAL_PAIN_TERMS = ("abdominal pain",)


def _has(text: str, terms: tuple[str, ...]) -> bool:
    for term in terms:
        if len(term) <= 4:
            if re.search(rf"\b{re.escape(term)}\b", text):
                return True
        elif term in text:
            return True
    return False


def explain_classification(findings: StructuredFindings) -> tuple[KtasLevel, str]:
    """Return ``(level, rule)`` for the first matching rule of the cascade."""
    complaint = findings.chief_complaint.lower()
    flags = findings.flags
    spo2 = findings.spo2_percent
    temp = findings.temperature_c

    if flags & {"cardiac_arrest", "respiratory_arrest", "unconscious_non_alcohol"}:
        return KtasLevel(1), "level1_flag"
    if _has(complaint, _LEVEL1_TERMS):
        return KtasLevel(1), "level1_arrest"
    if _has(complaint, _UNCONSCIOUS_TERMS) and (
            "alcohol" not in complaint or "not related to alcohol" in complaint):
        return KtasLevel(1), "level1_unconscious"

    if _has(complaint, _LEVEL2_TERMS):
        return KtasLevel(2), "level2_organ_threat"
    dyspnea = _has(complaint, _DYSPNEA_TERMS)
    if dyspnea and spo2 is not None and spo2 <= 90:
        return KtasLevel(2), "level2_hypoxic_dyspnea"

    if dyspnea:
        return KtasLevel(3), "level3_dyspnea"
    if "bleeding_diarrhea" in flags or _has(complaint, _BLEEDING_DIARRHEA_TERMS):
        return KtasLevel(3), "level3_bleeding_diarrhea"

    febrile = temp is not None and temp > 38
    gastro = _has(complaint, _GASTROENTERITIS_TERMS)
    uti = _has(complaint, _UTI_TERMS)
    if gastro and febrile:
        return KtasLevel(4), "level4_febrile_gastroenteritis"
    if uti and (febrile or _has(complaint, _ABDOMINAL_PAIN_TERMS)):
        return KtasLevel(4), "level4_uti"

    return KtasLevel(5), "level5_default"


def advisory_classify(findings: StructuredFindings) -> KtasLevel:
    """Deterministic advisory KTAS level for structured findings.

    Total over valid findings. The result is advisory only; complaints the
    keyword table does not know fall through to level 5.
    """
    return explain_classification(findings)[0]

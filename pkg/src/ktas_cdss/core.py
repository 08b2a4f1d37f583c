"""Domain types shared across the decision-support engine.

Everything here is immutable after construction, so instances can be handed
to concurrent pipeline workers without copying.
"""

from __future__ import annotations

import enum
import math
import re
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Any, Mapping


class CdssError(Exception):
    """Base class for all errors raised by this package."""


class EmptyField(CdssError, ValueError):
    pass


class RangeError(CdssError, ValueError):
    pass


@dataclass(frozen=True, order=True)
class KtasLevel:
    """A KTAS acuity level; 1 is the most urgent, 5 the least."""

    value: int

    def __post_init__(self) -> None:
        if isinstance(self.value, bool) or not isinstance(self.value, int):
            raise RangeError(f"KTAS level must be an integer, got {self.value!r}")
        if not 1 <= self.value <= 5:
            raise RangeError(f"KTAS level must be in 1..5, got {self.value}")

    def more_urgent_than(self, other: KtasLevel) -> bool:
        return self.value < other.value

    def __int__(self) -> int:
        return self.value

    def __str__(self) -> str:
        return str(self.value)


def _level(x: KtasLevel | int) -> KtasLevel:
    return x if isinstance(x, KtasLevel) else KtasLevel(x)


class KtasPrediction:
    """Parsed triage verdict: one of :class:`Exact`, :class:`Range`, :class:`NotApplicable`.

    Predictions encode to the row labels used in confusion tables
    (``"2"``, ``"1 or 2"``, ``"Not applicable"``) and :meth:`from_label`
    inverts :meth:`label`.
    """

    __slots__ = ()

    @property
    def is_exact(self) -> bool:
        return isinstance(self, Exact)

    def label(self) -> str:
        raise NotImplementedError

    def sort_key(self) -> tuple:
        raise NotImplementedError

    @staticmethod
    def from_label(label: str) -> KtasPrediction:
        text = label.strip()
        if text.lower() in ("not applicable", "n/a", "na"):
            return NOT_APPLICABLE
        m = re.fullmatch(r"([1-5])\s+or\s+([1-5])", text, re.IGNORECASE)
        if m:
            a, b = int(m.group(1)), int(m.group(2))
            return Range(min(a, b), max(a, b))
        if re.fullmatch(r"[1-5]", text):
            return Exact(int(text))
        raise ValueError(f"not a KTAS prediction label: {label!r}")

    def to_json(self) -> str:
        return self.label()

    @classmethod
    def from_json(cls, data: Any) -> KtasPrediction:
        if isinstance(data, int) and not isinstance(data, bool):
            return Exact(data)
        return KtasPrediction.from_label(str(data))


@dataclass(frozen=True, init=False)
class Exact(KtasPrediction):
    level: KtasLevel

    def __init__(self, level: KtasLevel | int) -> None:
        object.__setattr__(self, "level", _level(level))

    def label(self) -> str:
        return str(self.level.value)

    def sort_key(self) -> tuple:
        return (self.level.value, 0, 0)

    def __repr__(self) -> str:
        return f"Exact({self.level.value})"


@dataclass(frozen=True, init=False)
class Range(KtasPrediction):
    low: KtasLevel
    high: KtasLevel

    def __init__(self, low: KtasLevel | int, high: KtasLevel | int) -> None:
        lo, hi = _level(low), _level(high)
        if not lo.value < hi.value:
            raise RangeError(f"range requires low < high, got {lo.value} or {hi.value}")
        object.__setattr__(self, "low", lo)
        object.__setattr__(self, "high", hi)

    def label(self) -> str:
        return f"{self.low.value} or {self.high.value}"

    def sort_key(self) -> tuple:
        return (self.low.value, 1, self.high.value)

    def __repr__(self) -> str:
        return f"Range({self.low.value}, {self.high.value})"


@dataclass(frozen=True)
class NotApplicable(KtasPrediction):
    def label(self) -> str:
        return "Not applicable"

    def sort_key(self) -> tuple:
        return (6, 0, 0)

    def __repr__(self) -> str:
        return "NotApplicable()"


NOT_APPLICABLE = NotApplicable()


class Urgency(enum.Enum):
    MORE_URGENT = "more_urgent"
    EQUAL = "equal"
    LESS_URGENT = "less_urgent"
    INCOMPARABLE = "incomparable"


def compare_urgency(prediction: KtasPrediction, expert: KtasLevel | int) -> Urgency:
    """Compare a prediction against the expert level.

    Only exact predictions are comparable; ranges and not-applicable verdicts
    are reported as ``INCOMPARABLE``.
    """
    expert = _level(expert)
    if not isinstance(prediction, Exact):
        return Urgency.INCOMPARABLE
    if prediction.level.value < expert.value:
        return Urgency.MORE_URGENT
    if prediction.level.value > expert.value:
        return Urgency.LESS_URGENT
    return Urgency.EQUAL


class AgentRole(enum.Enum):
    TRIAGE_NURSE = "triage_nurse"
    EMERGENCY_PHYSICIAN = "emergency_physician"
    PHARMACIST = "pharmacist"
    ED_DOCTOR_IN_CHARGE = "ed_doctor_in_charge"

    @property
    def title(self) -> str:
        return _ROLE_TITLES[self]

    @classmethod
    def parse(cls, text: str) -> AgentRole:
        key = text.strip().lower().replace("-", "_").replace(" ", "_")
        for role in cls:
            if key in (role.value, role.name.lower()):
                return role
        raise ValueError(f"unknown agent role: {text!r}")


_ROLE_TITLES = {
    AgentRole.TRIAGE_NURSE: "Triage Nurse",
    AgentRole.EMERGENCY_PHYSICIAN: "Emergency Physician",
    AgentRole.PHARMACIST: "Pharmacist",
    AgentRole.ED_DOCTOR_IN_CHARGE: "ED Doctor in Charge",
}


class Disposition(enum.Enum):
    CONTINUE_ER_CARE = "continue_er_care"
    ADMIT = "admit"
    TRANSFER = "transfer"
    DISCHARGE = "discharge"

    @property
    def label(self) -> str:
        return {
            Disposition.CONTINUE_ER_CARE: "Continue ER care",
            Disposition.ADMIT: "Admit",
            Disposition.TRANSFER: "Transfer",
            Disposition.DISCHARGE: "Discharge",
        }[self]


class RunMode(enum.Enum):
    MULTI_AGENT = "multi"
    SINGLE_AGENT = "single"


FINDING_FLAGS = frozenset(
    {"cardiac_arrest", "respiratory_arrest", "unconscious_non_alcohol", "bleeding_diarrhea"}
)

FIVE_POINT_CATEGORIES = ("primary_diagnosis", "critical_findings", "justification")
ONE_POINT_CATEGORIES = (
    "disposition_decision",
    "immediate_action",
    "medication",
    "diagnostic_test",
    "consultation",
    "monitoring",
)
FIVE_POINT_VALUES = (1, 2, 3, 4, 5)
ONE_POINT_VALUES = (0, 0.5, 1)


def _check_number(name: str, value: float | None, lo: float | None, hi: float | None,
                  positive: bool = False) -> None:
    if value is None:
        return
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise RangeError(f"{name} must be a finite number, got {value!r}")
    if positive and value <= 0:
        raise RangeError(f"{name} must be positive, got {value}")
    if lo is not None and value < lo:
        raise RangeError(f"{name}={value} below {lo}")
    if hi is not None and value > hi:
        raise RangeError(f"{name}={value} above {hi}")


@dataclass(frozen=True)
class StructuredFindings:
    chief_complaint: str
    spo2_percent: float | None = None
    temperature_c: float | None = None
    heart_rate_bpm: float | None = None
    systolic_bp_mmHg: float | None = None
    respiratory_rate_per_min: float | None = None
    flags: frozenset[str] = frozenset()

    def __post_init__(self) -> None:
        object.__setattr__(self, "flags", frozenset(self.flags))
        unknown = self.flags - FINDING_FLAGS
        if unknown:
            raise RangeError(f"unknown finding flags: {sorted(unknown)}")
        _check_number("spo2_percent", self.spo2_percent, 0, 100)
        _check_number("temperature_c", self.temperature_c, 20, 45)
        # generous ceilings; anything above is a data-entry error
        _check_number("heart_rate_bpm", self.heart_rate_bpm, None, 400, positive=True)
        _check_number("systolic_bp_mmHg", self.systolic_bp_mmHg, None, 400, positive=True)
        _check_number("respiratory_rate_per_min", self.respiratory_rate_per_min, None, 120,
                      positive=True)

    def to_json(self) -> dict[str, Any]:
        out: dict[str, Any] = {"chief_complaint": self.chief_complaint}
        for name in ("spo2_percent", "temperature_c", "heart_rate_bpm", "systolic_bp_mmHg",
                     "respiratory_rate_per_min"):
            value = getattr(self, name)
            if value is not None:
                out[name] = value
        if self.flags:
            out["flags"] = sorted(self.flags)
        return out

    @classmethod
    def from_json(cls, data: Mapping[str, Any]) -> StructuredFindings:
        if not isinstance(data, Mapping):
            raise RangeError("findings must be an object")
        known = {"chief_complaint", "spo2_percent", "temperature_c", "heart_rate_bpm",
                 "systolic_bp_mmHg", "respiratory_rate_per_min", "flags"}
        extra = set(data) - known
        if extra:
            raise RangeError(f"unknown findings fields: {sorted(extra)}")
        kwargs = dict(data)
        kwargs["flags"] = frozenset(data.get("flags", ()))
        kwargs.setdefault("chief_complaint", "")
        return cls(**kwargs)


def _frozen_map(data: Mapping[str, Any]) -> Mapping[str, Any]:
    return MappingProxyType(dict(sorted(data.items())))


def _check_scores(kind: str, scores: Mapping[str, Any], categories: tuple[str, ...],
                  allowed: tuple) -> None:
    for category, value in scores.items():
        if category not in categories:
            raise RangeError(f"unknown {kind} category {category!r}")
        if isinstance(value, bool) or value not in allowed:
            raise RangeError(f"{kind} score for {category} must be one of {allowed}, got {value!r}")


@dataclass(frozen=True)
class ExpertAnnotation:
    """Expert ground truth for one case.

    ``five_point_scores``/``one_point_scores`` rate the multi-agent output;
    the ``single_agent_*`` maps rate the single-agent control when present.
    ``ktas_level`` may be ``None`` for cases that were scored but not triaged.
    """

    ktas_level: KtasLevel | None
    five_point_scores: Mapping[str, int] = field(default_factory=dict)
    one_point_scores: Mapping[str, float] = field(default_factory=dict)
    single_agent_five_point_scores: Mapping[str, int] = field(default_factory=dict)
    single_agent_one_point_scores: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.ktas_level is not None:
            object.__setattr__(self, "ktas_level", _level(self.ktas_level))
        for name, kind, cats, allowed in (
            ("five_point_scores", "five-point", FIVE_POINT_CATEGORIES, FIVE_POINT_VALUES),
            ("one_point_scores", "one-point", ONE_POINT_CATEGORIES, ONE_POINT_VALUES),
            ("single_agent_five_point_scores", "five-point", FIVE_POINT_CATEGORIES, FIVE_POINT_VALUES),
            ("single_agent_one_point_scores", "one-point", ONE_POINT_CATEGORIES, ONE_POINT_VALUES),
        ):
            scores = getattr(self, name)
            _check_scores(kind, scores, cats, allowed)
            object.__setattr__(self, name, _frozen_map(scores))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ExpertAnnotation):
            return NotImplemented
        return self.to_json() == other.to_json()

    def __hash__(self) -> int:
        return hash(repr(self.to_json()))

    def scores_for(self, mode: RunMode) -> tuple[Mapping[str, int], Mapping[str, float]]:
        if mode is RunMode.SINGLE_AGENT:
            return self.single_agent_five_point_scores, self.single_agent_one_point_scores
        return self.five_point_scores, self.one_point_scores

    def to_json(self) -> dict[str, Any]:
        out: dict[str, Any] = {
            "ktas_level": self.ktas_level.value if self.ktas_level else None,
            "five_point_scores": dict(self.five_point_scores),
            "one_point_scores": dict(self.one_point_scores),
        }
        if self.single_agent_five_point_scores or self.single_agent_one_point_scores:
            out["single_agent"] = {
                "five_point_scores": dict(self.single_agent_five_point_scores),
                "one_point_scores": dict(self.single_agent_one_point_scores),
            }
        return out

    @classmethod
    def from_json(cls, data: Mapping[str, Any]) -> ExpertAnnotation:
        if not isinstance(data, Mapping):
            raise RangeError("annotation must be an object")
        single = data.get("single_agent") or {}
        level = data.get("ktas_level")
        return cls(
            ktas_level=None if level is None else _level(level),
            five_point_scores=data.get("five_point_scores") or {},
            one_point_scores=data.get("one_point_scores") or {},
            single_agent_five_point_scores=single.get("five_point_scores") or {},
            single_agent_one_point_scores=single.get("one_point_scores") or {},
        )


@dataclass(frozen=True)
class PatientCase:
    case_id: str
    narrative: str
    findings: StructuredFindings | None = None
    annotation: ExpertAnnotation | None = None

    def to_json(self) -> dict[str, Any]:
        out: dict[str, Any] = {"case_id": self.case_id, "narrative": self.narrative}
        if self.findings is not None:
            out["findings"] = self.findings.to_json()
        if self.annotation is not None:
            out["annotation"] = self.annotation.to_json()
        return out

    @classmethod
    def from_json(cls, data: Mapping[str, Any]) -> PatientCase:
        findings = data.get("findings")
        annotation = data.get("annotation")
        return make_case(
            data.get("case_id", ""),
            data.get("narrative", ""),
            StructuredFindings.from_json(findings) if findings is not None else None,
            ExpertAnnotation.from_json(annotation) if annotation is not None else None,
        )


def make_case(case_id: str, narrative: str, findings: StructuredFindings | None = None,
              annotation: ExpertAnnotation | None = None) -> PatientCase:
    """Build a validated :class:`PatientCase`.

    Raises:
        EmptyField: blank ``case_id`` or ``narrative``.
        RangeError: findings or annotation that fail validation.
    """
    if not isinstance(case_id, str) or not case_id.strip():
        raise EmptyField("case_id must be non-empty")
    if not isinstance(narrative, str) or not narrative.strip():
        raise EmptyField("narrative must be non-empty")
    if findings is not None and not isinstance(findings, StructuredFindings):
        findings = StructuredFindings.from_json(findings)
    if annotation is not None and not isinstance(annotation, ExpertAnnotation):
        annotation = ExpertAnnotation.from_json(annotation)
    return PatientCase(case_id, narrative, findings, annotation)

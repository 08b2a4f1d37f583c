"""Transcript records produced by pipeline runs."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Mapping

from .core import NOT_APPLICABLE, AgentRole, KtasPrediction, RunMode
from .reports import (
    DiagnosisReport,
    ManagementDecision,
    MedicationReport,
    TriageAssessment,
    report_from_json,
    report_to_json,
)
from .tools import ToolCallRecord


@dataclass(frozen=True)
class StageRecord:
    role: AgentRole
    rendered_system_prompt: str
    rendered_task_prompt: str
    raw_output: str
    tool_calls: tuple[ToolCallRecord, ...] = ()
    started_ms: float = 0.0
    wall_time_ms: float = 0.0

    @property
    def ended_ms(self) -> float:
        return self.started_ms + self.wall_time_ms

    def to_json(self, stable: bool = False) -> dict[str, Any]:
        return {
            "role": self.role.value,
            "rendered_system_prompt": self.rendered_system_prompt,
            "rendered_task_prompt": self.rendered_task_prompt,
            "raw_output": self.raw_output,
            "tool_calls": [c.to_json() for c in self.tool_calls],
            "started_ms": 0.0 if stable else round(self.started_ms, 3),
            "wall_time_ms": 0.0 if stable else round(self.wall_time_ms, 3),
        }

    @classmethod
    def from_json(cls, data: Mapping[str, Any]) -> StageRecord:
        return cls(
            role=AgentRole(data["role"]),
            rendered_system_prompt=data["rendered_system_prompt"],
            rendered_task_prompt=data["rendered_task_prompt"],
            raw_output=data["raw_output"],
            tool_calls=tuple(ToolCallRecord.from_json(c) for c in data.get("tool_calls", [])),
            started_ms=float(data.get("started_ms", 0.0)),
            wall_time_ms=float(data.get("wall_time_ms", 0.0)),
        )


_BUNDLE_TYPES = {
    "triage": TriageAssessment,
    "diagnosis": DiagnosisReport,
    "medication": MedicationReport,
    "management": ManagementDecision,
}


@dataclass(frozen=True)
class ParsedBundle:
    triage: TriageAssessment | None = None
    diagnosis: DiagnosisReport | None = None
    medication: MedicationReport | None = None
    management: ManagementDecision | None = None

    def to_json(self) -> dict[str, Any]:
        return {name: None if getattr(self, name) is None else report_to_json(getattr(self, name))
                for name in _BUNDLE_TYPES}

    @classmethod
    def from_json(cls, data: Mapping[str, Any]) -> ParsedBundle:
        return cls(**{name: None if data.get(name) is None else report_from_json(tp, data[name])
                      for name, tp in _BUNDLE_TYPES.items()})


@dataclass(frozen=True)
class CaseRunRecord:
    case_id: str
    mode: RunMode
    stages: tuple[StageRecord, ...] = ()
    parsed: ParsedBundle = field(default_factory=ParsedBundle)
    error: str | None = None
    warnings: tuple[str, ...] = ()

    @property
    def ok(self) -> bool:
        return self.error is None

    def stage(self, role: AgentRole) -> StageRecord | None:
        return next((s for s in self.stages if s.role is role), None)

    def ktas_prediction(self) -> KtasPrediction:
        """The system's triage verdict for this run.

        Multi-agent runs use the Triage Nurse's classification; the
        single-agent control only has the ED Doctor's KTAS review.
        """
        if self.mode is RunMode.MULTI_AGENT:
            return self.parsed.triage.ktas if self.parsed.triage else NOT_APPLICABLE
        return self.parsed.management.ktas_review if self.parsed.management else NOT_APPLICABLE

    def to_json(self, stable: bool = False) -> dict[str, Any]:
        return {
            "case_id": self.case_id,
            "mode": self.mode.value,
            "error": self.error,
            "warnings": list(self.warnings),
            "stages": [s.to_json(stable) for s in self.stages],
            "parsed": self.parsed.to_json(),
        }

    @classmethod
    def from_json(cls, data: Mapping[str, Any]) -> CaseRunRecord:
        return cls(
            case_id=data["case_id"],
            mode=RunMode(data["mode"]),
            stages=tuple(StageRecord.from_json(s) for s in data.get("stages", [])),
            parsed=ParsedBundle.from_json(data.get("parsed") or {}),
            error=data.get("error"),
            warnings=tuple(data.get("warnings", [])),
        )

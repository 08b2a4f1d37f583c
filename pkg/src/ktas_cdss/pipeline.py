"""Stage DAG execution for the multi-agent pipeline and the single-agent control.

Multi-agent graph::

    Emergency Physician ─┐
                         ├─> Triage Nurse ─> ED Doctor in Charge
    Pharmacist ──────────┘

The two first-stage agents may run concurrently. Their outputs are injected
downstream in fixed role order, so results never depend on which finished
first.
"""

from __future__ import annotations

import json
import logging
import re
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Sequence

from .backends import DEFAULT_MODEL_ID, BackendError, CompletionRequest, LlmBackend
from .core import AgentRole, Exact, PatientCase, RunMode
from .ktas import explain_classification
from .prompts import render_system_prompt, render_task_prompt
from .records import CaseRunRecord, ParsedBundle, StageRecord
from .reports import parse_diagnosis, parse_management, parse_medication, parse_triage
from .tools import DEFAULT_MAX_ITERATIONS, ToolRegistry, tool_loop

log = logging.getLogger(__name__)

MULTI_AGENT_EDGES = frozenset({
    (AgentRole.EMERGENCY_PHYSICIAN, AgentRole.TRIAGE_NURSE),
    (AgentRole.PHARMACIST, AgentRole.TRIAGE_NURSE),
    (AgentRole.TRIAGE_NURSE, AgentRole.ED_DOCTOR_IN_CHARGE),
})

_PARSERS: dict[AgentRole, tuple[str, Callable]] = {
    AgentRole.EMERGENCY_PHYSICIAN: ("diagnosis", parse_diagnosis),
    AgentRole.PHARMACIST: ("medication", parse_medication),
    AgentRole.TRIAGE_NURSE: ("triage", parse_triage),
    AgentRole.ED_DOCTOR_IN_CHARGE: ("management", parse_management),
}


@dataclass(frozen=True)
class PipelinePlan:
    mode: RunMode = RunMode.MULTI_AGENT
    tools_enabled: bool = True
    max_tool_iterations: int = DEFAULT_MAX_ITERATIONS
    temperature: float = 0.0
    max_tokens: int = 2048
    model_id: str = DEFAULT_MODEL_ID
    parallel_stages: bool = True

    def __post_init__(self) -> None:
        if self.max_tool_iterations < 1:
            raise ValueError("max_tool_iterations must be >= 1")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be >= 1")

    @property
    def stage_graph(self) -> tuple[frozenset[AgentRole], frozenset[tuple[AgentRole, AgentRole]]]:
        """``(nodes, edges)`` of the stage DAG for this mode."""
        if self.mode is RunMode.SINGLE_AGENT:
            return frozenset({AgentRole.ED_DOCTOR_IN_CHARGE}), frozenset()
        return frozenset(AgentRole), MULTI_AGENT_EDGES


class _CaseRun:
    """Single owner of one case's mutable state while it executes."""

    def __init__(self, case: PatientCase, plan: PipelinePlan, backend: LlmBackend,
                 tools: ToolRegistry | None) -> None:
        self.case = case
        self.plan = plan
        self.backend = backend
        self.tools = tools if tools is not None else ToolRegistry()
        self.t0 = time.monotonic()

    def stage(self, role: AgentRole, context: Sequence[tuple[AgentRole, str]]) -> StageRecord:
        use_tools = self.plan.tools_enabled and bool(self.tools.names())
        system = render_system_prompt(role)
        user = render_task_prompt(role, self.case, context, tools_enabled=self.plan.tools_enabled,
                                  tool_help=self.tools.help_text() if use_tools else None)
        request = CompletionRequest(system, user, self.plan.temperature, self.plan.max_tokens,
                                    self.plan.model_id, role=role, case_id=self.case.case_id,
                                    mode=self.plan.mode.value)
        start = time.monotonic()
        text, calls = tool_loop(request, self.backend, self.tools, self.plan.max_tool_iterations,
                                enabled=use_tools)
        end = time.monotonic()
        return StageRecord(role, system, user, text, tuple(calls),
                           started_ms=(start - self.t0) * 1000, wall_time_ms=(end - start) * 1000)


def _parse_stages(stages: Sequence[StageRecord]) -> tuple[ParsedBundle, list[str]]:
    parsed: dict[str, object] = {}
    warnings = []
    for s in stages:
        name, parser = _PARSERS[s.role]
        try:
            parsed[name] = parser(s.raw_output)
        except Exception as exc:  # parsers are total; this guards against regressions
            warnings.append(f"parse failure for {s.role.value}: {exc}")
    return ParsedBundle(**parsed), warnings


def run_case(case: PatientCase, plan: PipelinePlan, backend: LlmBackend,
             tools: ToolRegistry | None = None) -> CaseRunRecord:
    """Run one case through the plan's stage graph.

    A :class:`BackendError` stops the case; the returned record carries the
    stages completed so far and ``error`` set.
    """
    run = _CaseRun(case, plan, backend, tools)
    stages: list[StageRecord] = []
    error: str | None = None
    try:
        if plan.mode is RunMode.SINGLE_AGENT:
            stages.append(run.stage(AgentRole.ED_DOCTOR_IN_CHARGE, ()))
        else:
            first = (AgentRole.EMERGENCY_PHYSICIAN, AgentRole.PHARMACIST)
            if plan.parallel_stages:
                with ThreadPoolExecutor(max_workers=2) as pool:
                    futures = [pool.submit(run.stage, role, ()) for role in first]
                    results, failure = [], None
                    for fut in futures:
                        try:
                            results.append(fut.result())
                        except BackendError as exc:
                            failure = failure or exc
                    stages.extend(results)
                    if failure is not None:
                        raise failure
            else:
                for role in first:
                    stages.append(run.stage(role, ()))
            context = [(s.role, s.raw_output) for s in stages]
            stages.append(run.stage(AgentRole.TRIAGE_NURSE, context))
            context.append((AgentRole.TRIAGE_NURSE, stages[-1].raw_output))
            stages.append(run.stage(AgentRole.ED_DOCTOR_IN_CHARGE, context))
    except BackendError as exc:
        error = f"{type(exc).__name__}: {exc}"
        log.warning("case %s aborted: %s", case.case_id, error)

    parsed, warnings = _parse_stages(stages)
    if case.findings is not None and parsed.triage is not None and isinstance(parsed.triage.ktas, Exact):
        level, rule = explain_classification(case.findings)
        if level != parsed.triage.ktas.level:
            warnings.append(
                f"advisory: structured findings suggest KTAS {level.value} ({rule}); "
                f"triage agent assigned {parsed.triage.ktas.level.value}"
            )
    return CaseRunRecord(case.case_id, plan.mode, tuple(stages), parsed, error, tuple(warnings))


def run_batch(cases: Sequence[PatientCase], plan: PipelinePlan, backend: LlmBackend,
              tools: ToolRegistry | None = None, parallelism: int = 1) -> list[CaseRunRecord]:
    """Run many cases; output order matches input order and failures stay per case."""
    if parallelism < 1:
        raise ValueError("parallelism must be >= 1")

    def one(case: PatientCase) -> CaseRunRecord:
        try:
            return run_case(case, plan, backend, tools)
        except Exception as exc:
            log.exception("case %s failed", case.case_id)
            return CaseRunRecord(case.case_id, plan.mode, error=f"{type(exc).__name__}: {exc}")

    if parallelism == 1 or len(cases) <= 1:
        return [one(c) for c in cases]
    with ThreadPoolExecutor(max_workers=parallelism) as pool:
        return list(pool.map(one, cases))


def _safe_name(text: str) -> str:
    return re.sub(r"[^A-Za-z0-9._-]+", "_", text) or "case"


def make_run_dir(output_dir: str | Path, run_id: str, stable: bool = False) -> Path:
    """``<output_dir>/<run_id>-<UTC timestamp>``, or just ``<run_id>`` in stable mode."""
    name = run_id if stable else f"{run_id}-{datetime.now(timezone.utc):%Y%m%dT%H%M%SZ}"
    path = Path(output_dir) / _safe_name(name)
    path.mkdir(parents=True, exist_ok=True)
    return path


def write_transcripts(records: Sequence[CaseRunRecord], run_dir: str | Path,
                      stable: bool = False) -> list[Path]:
    out_dir = Path(run_dir) / "transcripts"
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for rec in records:
        p = out_dir / f"{_safe_name(rec.case_id)}.{rec.mode.value}.json"
        p.write_text(json.dumps(rec.to_json(stable), indent=2, ensure_ascii=False) + "\n", "utf-8")
        paths.append(p)
    return paths


def read_transcript(path: str | Path) -> CaseRunRecord:
    return CaseRunRecord.from_json(json.loads(Path(path).read_text("utf-8")))

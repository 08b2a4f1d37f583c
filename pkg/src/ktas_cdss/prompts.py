"""Agent prompt assets and rendering.

Assets are plain-text transcriptions stored under ``assets/`` with a
``manifest.json`` pinning each file's sha256. Rendering layout:

System prompt::

    You are the <Role Title>.

    Goal: <goal>

    Backstory: <backstory>

Task prompt::

    <task description, {input} replaced by the case narrative>

    === <ROLE> REPORT ===          (one block per upstream stage, fixed role order)
    <upstream raw output>

    === TOOLS ===                  (only when tools are enabled)
    ...

    Expected Output:
    <expected output template>
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from typing import Iterable, Sequence

from .core import AgentRole, CdssError, PatientCase

PLACEHOLDER = "{input}"

# fixed order used for context injection, independent of completion order
ROLE_ORDER = (
    AgentRole.EMERGENCY_PHYSICIAN,
    AgentRole.PHARMACIST,
    AgentRole.TRIAGE_NURSE,
    AgentRole.ED_DOCTOR_IN_CHARGE,
)

PREDECESSORS: dict[AgentRole, frozenset[AgentRole]] = {
    AgentRole.EMERGENCY_PHYSICIAN: frozenset(),
    AgentRole.PHARMACIST: frozenset(),
    AgentRole.TRIAGE_NURSE: frozenset({AgentRole.EMERGENCY_PHYSICIAN, AgentRole.PHARMACIST}),
    AgentRole.ED_DOCTOR_IN_CHARGE: frozenset(
        {AgentRole.EMERGENCY_PHYSICIAN, AgentRole.PHARMACIST, AgentRole.TRIAGE_NURSE}
    ),
}

_TOOL_SENTENCE_RE = re.compile(r"Use the (?:search|RxNorm) tool\b[^.]*\.[ \t]*", re.IGNORECASE)


class ContextViolation(CdssError):
    pass


class AssetIntegrityError(CdssError):
    pass


@dataclass(frozen=True)
class PromptAsset:
    role: AgentRole
    goal: str
    backstory: str
    task_description_template: str
    expected_output_template: str


StageContext = Sequence[tuple[AgentRole, str]]


def _asset_text(name: str) -> str:
    return resources.files(__package__).joinpath("assets", name).read_text("utf-8")


@lru_cache(maxsize=1)
def manifest() -> dict:
    return json.loads(_asset_text("manifest.json"))


def asset_digest(name: str) -> str:
    data = resources.files(__package__).joinpath("assets", name).read_bytes()
    return hashlib.sha256(data).hexdigest()


def verify_assets() -> list[str]:
    """Return the asset files whose sha256 no longer matches the manifest."""
    man = manifest()
    entries = [man["guide"]]
    for parts in man["roles"].values():
        entries.extend(parts.values())
    return [e["file"] for e in entries if asset_digest(e["file"]) != e["sha256"]]


@lru_cache(maxsize=None)
def load_asset(role: AgentRole) -> PromptAsset:
    parts = manifest()["roles"][role.value]
    return PromptAsset(
        role=role,
        goal=_asset_text(parts["goal"]["file"]),
        backstory=_asset_text(parts["backstory"]["file"]),
        task_description_template=_asset_text(parts["task"]["file"]),
        expected_output_template=_asset_text(parts["expected_output"]["file"]),
    )


def render_system_prompt(role: AgentRole) -> str:
    asset = load_asset(role)
    return (
        f"You are the {role.title}.\n\n"
        f"Goal: {asset.goal.strip()}\n\n"
        f"Backstory: {asset.backstory.strip()}\n"
    )


def strip_tool_instructions(text: str) -> str:
    """Remove the 'Use the ... tool ...' sentences from a task description."""
    out = _TOOL_SENTENCE_RE.sub("", text)
    out = re.sub(r"[ \t]+\n", "\n", out)
    out = re.sub(r"\n{3,}", "\n\n", out)
    return out.rstrip("\n") + "\n"


def report_header(role: AgentRole) -> str:
    return f"=== {role.title.upper()} REPORT ==="


def check_context(role: AgentRole, context: StageContext) -> None:
    allowed = PREDECESSORS[role]
    seen = set()
    for ctx_role, _ in context:
        if ctx_role not in allowed:
            raise ContextViolation(f"{ctx_role.value} is not an upstream stage of {role.value}")
        if ctx_role in seen:
            raise ContextViolation(f"duplicate context entry for {ctx_role.value}")
        seen.add(ctx_role)


def render_task_prompt(role: AgentRole, case: PatientCase, context: StageContext = (), *,
                       tools_enabled: bool = True, tool_help: str | None = None) -> str:
    """Render the user-channel prompt for one stage.

    Substitution of ``{input}`` is single-pass: a narrative that itself
    contains ``{input}`` is inserted verbatim and never re-expanded.

    Raises:
        ContextViolation: ``context`` holds a role that is not upstream of ``role``.
    """
    check_context(role, context)
    asset = load_asset(role)
    description = asset.task_description_template
    if not tools_enabled:
        description = strip_tool_instructions(description)
    head, sep, tail = description.partition(PLACEHOLDER)
    if not sep:
        raise AssetIntegrityError(f"task template for {role.value} lacks {PLACEHOLDER}")
    parts = [head + case.narrative + tail]

    outputs = dict(context)
    for upstream in ROLE_ORDER:
        if upstream in outputs:
            parts.append(f"{report_header(upstream)}\n{outputs[upstream]}\n")
    if tools_enabled and tool_help:
        parts.append(f"=== TOOLS ===\n{tool_help.rstrip()}\n")
    parts.append(f"Expected Output:\n{asset.expected_output_template}")
    return "\n".join(parts)


def dump_assets(roles: Iterable[AgentRole]) -> str:
    """Byte-exact concatenation of each role's assets, with file banners."""
    man = manifest()
    chunks = []
    for role in roles:
        for part in ("goal", "backstory", "task", "expected_output"):
            name = man["roles"][role.value][part]["file"]
            chunks.append(f"----- {name} -----\n{_asset_text(name)}")
    return "".join(chunks)

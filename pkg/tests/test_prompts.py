import hashlib
from importlib import resources

import pytest
from hypothesis import given
from hypothesis import strategies as st

from ktas_cdss.core import AgentRole, make_case
from ktas_cdss.prompts import (
    PLACEHOLDER,
    ROLE_ORDER,
    ContextViolation,
    asset_digest,
    dump_assets,
    load_asset,
    manifest,
    render_system_prompt,
    render_task_prompt,
    report_header,
    strip_tool_instructions,
    verify_assets,
)

# sha256 of each asset at check-in; any edit to a prompt must update this table deliberately
PINNED = {
    "ktas_guide.txt": "066b99d3110a65a6aea23b2ef8ae57f14efd45b27ae6f7aba79379795fbbcc2a",
    "triage_nurse.goal.txt": "0fe9cc55e086f5477d85fb19e7c17343afd6ff8dcc26782e63f0be76f271fddd",
    "triage_nurse.backstory.txt": "e774ad0615a0b1f196e1169d1a1432fa3185375853992b230972a5cb06e6cfb8",
    "triage_nurse.task.txt": "0be43e33aff96cf4364c1082ac7a6c64bbce40245b93946a8be511c23589a67d",
    "triage_nurse.expected_output.txt": "2c52474bda76bd6193c935646b2f978cc43d30cb6bb4f9068319e5559128c96b",
    "emergency_physician.goal.txt": "17b04223513be6209671cc7ca8d1b65fe72506dd191b4611c6cd108d67263cf8",
    "emergency_physician.backstory.txt": "0c755545a9a9b30146f797a7a489dc7b9c9cf6436f7ef01f0cbea25ff795da82",
    "emergency_physician.task.txt": "d802ca7488e2738736be5b182e10ead11aa6829099f884d6e85209d9c0e46660",
    "emergency_physician.expected_output.txt": "dfe4033e9d5d4a5ad679f3a8d5bfe8fb1e6c342ef8a52fb4e04cbd82f01e211f",
    "pharmacist.goal.txt": "17a0664b4a9665c699c2a7217d2677e9570ddb3bbb8f253763914a34dcce8135",
    "pharmacist.backstory.txt": "2288a2d86606aa658a0507bc606c8be649ddda72a03f968a4b42ebd11790028e",
    "pharmacist.task.txt": "86a60a482d5cf001b20d3a6b812237ee01c0c7a793f52803fcc53603bd067d83",
    "pharmacist.expected_output.txt": "c3eb3a694e125fbbfcced7aaa7d371c6cfc355448b1a619a129c7a26ce51a737",
    "ed_doctor_in_charge.goal.txt": "1c979ad48557b3603f5debc21b4f41120da7b1e6a3860bc16e1353dc3e44c6cc",
    "ed_doctor_in_charge.backstory.txt": "12dd211d284502225d8b6fa8c076824325c8bf287500b7a30e6dfd1acf651d0d",
    "ed_doctor_in_charge.task.txt": "132a34b1d2d02a5d8f824a4856c00d83a7335bd42545bd6bce4a909d639da539",
    "ed_doctor_in_charge.expected_output.txt": "c17191846e69d10b667fd1669d7c51d5af4c2f3f983a893c144c86522a0a0469",
}

CASE = make_case("c1", "A 45-year-old with chest pain.")


@pytest.mark.parametrize("name", sorted(PINNED))
def test_asset_digest_pinned(name):
    raw = resources.files("ktas_cdss").joinpath("assets", name).read_bytes()
    assert hashlib.sha256(raw).hexdigest() == PINNED[name] == asset_digest(name)


def test_manifest_agrees_with_pins():
    man = manifest()
    listed = {man["guide"]["file"]: man["guide"]["sha256"]}
    for parts in man["roles"].values():
        listed.update({p["file"]: p["sha256"] for p in parts.values()})
    assert listed == PINNED
    assert verify_assets() == []


@pytest.mark.parametrize("role,phrase", [
    (AgentRole.TRIAGE_NURSE, "Conduct a thorough and rapid assessment of incoming patients"),
    (AgentRole.EMERGENCY_PHYSICIAN, "Provide rapid, accurate diagnoses"),
    (AgentRole.PHARMACIST, "Ensure safe and effective medication use"),
    (AgentRole.ED_DOCTOR_IN_CHARGE, "Oversee and coordinate all aspects of patient care"),
])
def test_system_prompt_layout(role, phrase):
    text = render_system_prompt(role)
    asset = load_asset(role)
    assert text.startswith(f"You are the {role.title}.\n\nGoal: ")
    assert phrase in text
    assert asset.goal.strip() in text and asset.backstory.strip() in text


@pytest.mark.parametrize("role", list(AgentRole))
def test_task_templates_have_one_placeholder(role):
    assert load_asset(role).task_description_template.count(PLACEHOLDER) == 1


def test_triage_prompt_carries_full_guide():
    text = render_task_prompt(AgentRole.TRIAGE_NURSE, CASE)
    assert "Conditions that require immediate intervention" in text
    assert "Gastroenteritis with fever above 38°C" in text
    assert "<symptoms>\nA 45-year-old with chest pain.\n</symptoms>" in text


@given(st.text(min_size=1, max_size=200).filter(str.strip))
def test_placeholder_substitution_is_single_pass(narrative):
    case = make_case("c", narrative)
    for role in AgentRole:
        rendered = render_task_prompt(role, case, tools_enabled=False)
        assert narrative in rendered
        assert rendered.count(PLACEHOLDER) == narrative.count(PLACEHOLDER)


def test_narrative_containing_placeholder_is_not_reexpanded():
    case = make_case("c", "literal {input} inside")
    text = render_task_prompt(AgentRole.PHARMACIST, case)
    assert text.count("literal {input} inside") == 1


def test_context_injection_order_is_fixed():
    ctx = [(AgentRole.PHARMACIST, "PHARM OUT"), (AgentRole.EMERGENCY_PHYSICIAN, "PHYS OUT"),
           (AgentRole.TRIAGE_NURSE, "TRIAGE OUT")]
    text = render_task_prompt(AgentRole.ED_DOCTOR_IN_CHARGE, CASE, ctx)
    positions = [text.index(report_header(r)) for r in ROLE_ORDER[:3]]
    assert positions == sorted(positions)
    assert text.index("PHYS OUT") < text.index("PHARM OUT") < text.index("TRIAGE OUT")
    assert text.rstrip().endswith(load_asset(AgentRole.ED_DOCTOR_IN_CHARGE).expected_output_template.rstrip())


@pytest.mark.parametrize("role,ctx_role", [
    (AgentRole.PHARMACIST, AgentRole.EMERGENCY_PHYSICIAN),
    (AgentRole.EMERGENCY_PHYSICIAN, AgentRole.TRIAGE_NURSE),
    (AgentRole.TRIAGE_NURSE, AgentRole.ED_DOCTOR_IN_CHARGE),
])
def test_downstream_context_is_rejected(role, ctx_role):
    with pytest.raises(ContextViolation):
        render_task_prompt(role, CASE, [(ctx_role, "x")])


def test_duplicate_context_is_rejected():
    with pytest.raises(ContextViolation):
        render_task_prompt(AgentRole.TRIAGE_NURSE, CASE,
                           [(AgentRole.PHARMACIST, "a"), (AgentRole.PHARMACIST, "b")])


def test_tool_sentences_stripped_when_disabled():
    on = render_task_prompt(AgentRole.PHARMACIST, CASE, tool_help="TOOL HELP")
    off = render_task_prompt(AgentRole.PHARMACIST, CASE, tools_enabled=False, tool_help="TOOL HELP")
    assert "Use the RxNorm tool extensively" in on and "=== TOOLS ===\nTOOL HELP" in on
    assert "Use the RxNorm tool" not in off and "Use the search tool" not in off
    assert "=== TOOLS ===" not in off
    # the expected-output template is never rewritten
    assert load_asset(AgentRole.PHARMACIST).expected_output_template in off


def test_strip_is_idempotent():
    for role in AgentRole:
        once = strip_tool_instructions(load_asset(role).task_description_template)
        assert strip_tool_instructions(once) == once


def test_dump_assets_is_byte_exact():
    text = dump_assets([AgentRole.TRIAGE_NURSE])
    for part in ("goal", "backstory", "task", "expected_output"):
        raw = resources.files("ktas_cdss").joinpath("assets", f"triage_nurse.{part}.txt").read_text("utf-8")
        assert raw in text

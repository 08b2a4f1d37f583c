from __future__ import annotations

from pathlib import Path

import pytest

from ktas_cdss.backends import ScriptedBackend
from ktas_cdss.evaluation import load_cases
from ktas_cdss.tools import RecordedTransport, RxNormClient

ROOT = Path(__file__).resolve().parents[1]
FIXTURES = ROOT / "fixtures"
REPLAY = FIXTURES / "replay"
WORKED_CASE = FIXTURES / "worked_case"


@pytest.fixture
def replay_cases():
    return load_cases(REPLAY / "cases.jsonl")


@pytest.fixture
def replay_backend():
    return ScriptedBackend.from_path(REPLAY)


@pytest.fixture
def worked_backend():
    return ScriptedBackend.from_path(WORKED_CASE)


@pytest.fixture
def worked_narrative():
    return (WORKED_CASE / "narrative.txt").read_text("utf-8")


@pytest.fixture
def rxnorm():
    client = RxNormClient(transport=RecordedTransport(FIXTURES / "rxnorm"))
    yield client
    client.close()


# ---------------------------------------------------------------------------
# acceptance summary: one PASS/FAIL line per criterion after the run

_ACCEPTANCE: dict[tuple[int, str], bool] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(number, title): acceptance-gate criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    key = tuple(marker.args)
    if rep.when == "call" or rep.failed or rep.skipped:
        _ACCEPTANCE[key] = _ACCEPTANCE.get(key, True) and rep.passed


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for (number, title), ok in sorted(_ACCEPTANCE.items()):
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {number:>2}. {title}")

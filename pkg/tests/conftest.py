"""Collects one PASS/FAIL line per acceptance criterion for the terminal summary."""

from __future__ import annotations

import pytest

_DETAILS: dict[int, str] = {}
_OUTCOMES: dict[int, tuple[str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion reported in the summary")


@pytest.fixture
def report(request):
    """Call with a short detail string; it is shown next to the criterion verdict."""
    marker = request.node.get_closest_marker("criterion")

    def note(detail: str) -> None:
        _DETAILS[marker.args[0]] = detail
        print(f"criterion {marker.args[0]}: {detail}")

    return note


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or rep.when != "call":
        return
    number, title = marker.args
    _OUTCOMES[number] = ("PASS" if rep.passed else "FAIL", title)


def pytest_terminal_summary(terminalreporter):
    if not _OUTCOMES:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_OUTCOMES):
        verdict, title = _OUTCOMES[number]
        detail = _DETAILS.get(number, "")
        line = f"[{verdict}] criterion {number:>2}: {title}"
        terminalreporter.write_line(f"{line} ({detail})" if detail else line)

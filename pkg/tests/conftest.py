"""Shared fixtures and the acceptance summary printed after the run."""

from __future__ import annotations

import json

import pytest

from implosion.cli import main

ACCEPTANCE = {}


def pytest_configure(config):
    config.addinivalue_line(
        "markers", "acceptance(number, title): test implements a numbered acceptance criterion"
    )


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("acceptance")
    if mark is None:
        return
    number, title = mark.args
    if rep.when == "call" or (rep.when == "setup" and rep.outcome != "passed"):
        prev = ACCEPTANCE.get(number, (title, True))
        ACCEPTANCE[number] = (title, prev[1] and rep.outcome == "passed")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        title, ok = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number:2d} {'PASS' if ok else 'FAIL'}  {title}")


GLOBAL_CASES = [("5/3", 4), ("1.7", 4), ("1.8", 6)]


@pytest.fixture(scope="session")
def solved(tmp_path_factory):
    """Run ``implosion solve`` once per global case; returns paths and exit codes."""
    root = tmp_path_factory.mktemp("solve")
    out = {}
    for gamma, n in GLOBAL_CASES:
        tag = f"{gamma.replace('/', '_')}_{n}"
        csv_path = root / f"{tag}.csv"
        rep_path = root / f"{tag}.json"
        code = main(["solve", "--gamma", gamma, "--n", str(n),
                     "--out", str(csv_path), "--report", str(rep_path)])
        report = json.loads(rep_path.read_text()) if rep_path.exists() else None
        out[(gamma, n)] = {"code": code, "csv": csv_path, "report": report}
    return out


@pytest.fixture(scope="session")
def profiles():
    """In-memory profiles for the three global cases."""
    from implosion.profile import solve

    return {(g, n): solve(g, n) for g, n in GLOBAL_CASES}

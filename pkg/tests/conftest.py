from __future__ import annotations

import os
import re

from hypothesis import HealthCheck, settings

settings.register_profile(
    "default",
    deadline=None,
    max_examples=int(os.environ.get("HYPOTHESIS_MAX_EXAMPLES", "200")),
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")

_ACCEPTANCE: dict = {}


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.failed):
        return
    path, _, name = report.nodeid.partition("::")
    m = re.match(r"test_ac(\d+)", name)
    if not path.endswith("test_acceptance.py") or m is None:
        return
    label = f"AC{m.group(1)}"
    ok = report.passed
    prev = _ACCEPTANCE.get(label, True)
    _ACCEPTANCE[label] = prev and ok


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for label in sorted(_ACCEPTANCE, key=lambda s: int(s[2:])):
        terminalreporter.write_line(f"{label}: {'PASS' if _ACCEPTANCE[label] else 'FAIL'}")

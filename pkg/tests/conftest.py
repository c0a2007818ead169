"""Shared fixtures plus a terminal summary for the acceptance criteria.

Acceptance tests carry @pytest.mark.criterion("Cxx", "description"); after
the run a one-line PASS/FAIL/SKIP verdict is printed per criterion.
"""

import numpy as np
import pytest

_verdicts: dict[str, tuple[str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line(
        "markers", "criterion(tag, description): acceptance criterion metadata")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    tag, description = marker.args
    if rep.when == "call":
        verdict = "SKIP" if rep.skipped else ("PASS" if rep.passed else "FAIL")
        _verdicts[tag] = (verdict, description)
    elif rep.when == "setup" and rep.skipped:
        _verdicts[tag] = ("SKIP", description)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _verdicts:
        return
    tr = terminalreporter
    tr.write_sep("-", "acceptance criteria")
    for tag in sorted(_verdicts):
        verdict, description = _verdicts[tag]
        dots = "." * max(2, 58 - len(tag) - len(description))
        tr.write_line(f"[{tag}] {description} {dots} {verdict}")


@pytest.fixture
def rng_np():
    return np.random.default_rng(1234)

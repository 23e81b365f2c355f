"""Per-criterion pass/fail summary for tests marked ``acceptance(n)``."""

from collections import defaultdict

import pytest

# wall-clock budget in seconds for each numbered criterion
BUDGETS = {1: 10, 2: 10, 3: 60, 4: 60, 5: 30, 6: 30, 7: 600, 8: 300, 9: 600, 10: 900, 11: 600, 12: 1}

_outcomes = defaultdict(list)
_durations = defaultdict(float)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("acceptance")
    if mark is not None:
        rep.user_properties.append(("criterion", int(mark.args[0])))


def pytest_runtest_logreport(report):
    criterion = dict(report.user_properties).get("criterion")
    if criterion is None:
        return
    _durations[criterion] += report.duration
    if report.when == "call" or report.failed:
        _outcomes[criterion].append((report.nodeid.split("::")[-1], report.passed))


def _verdicts():
    for n in sorted(_outcomes):
        results = _outcomes[n]
        elapsed = _durations[n]
        budget = BUDGETS.get(n)
        on_time = budget is None or elapsed <= budget
        failed = [name for name, ok in results if not ok]
        yield n, not failed and on_time, elapsed, budget, failed, on_time


def pytest_sessionfinish(session, exitstatus):
    if any(not ok for _, ok, *_ in _verdicts()) and session.exitstatus == 0:
        session.exitstatus = pytest.ExitCode.TESTS_FAILED


def pytest_terminal_summary(terminalreporter):
    rows = list(_verdicts())
    if not rows:
        return
    terminalreporter.section("acceptance criteria")
    for n, ok, elapsed, budget, failed, on_time in rows:
        line = f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {elapsed:8.2f} s / budget {budget} s"
        if failed:
            line += f"  failing: {', '.join(failed)}"
        if not on_time:
            line += "  over budget"
        terminalreporter.write_line(line)

import re

import pytest

_CRITERION = re.compile(r"test_acceptance\.py::test_c(\d+)_(\w+)")


def pytest_terminal_summary(terminalreporter):
    rows = {}
    for outcome in ("passed", "failed", "error", "skipped"):
        for rep in terminalreporter.stats.get(outcome, []):
            m = _CRITERION.search(getattr(rep, "nodeid", ""))
            if m and rep.when in ("call", "setup"):
                num, name = int(m.group(1)), m.group(2).replace("_", " ")
                if outcome != "passed" or num not in rows:
                    rows[num] = (name, "PASS" if outcome == "passed" else outcome.upper())
    if not rows:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(rows):
        name, status = rows[num]
        terminalreporter.write_line(f"criterion {num:>2}: {status:<6} {name}")


@pytest.fixture(scope="session")
def toy():
    from helpers import planted_toy

    return planted_toy()

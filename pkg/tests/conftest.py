import re

import pytest

CRITERIA = {
    1: "balance classification of the bundled scenario",
    2: "zero-eigenvalue counts per mode",
    3: "rank and spectral identities over the N<=5 corpus",
    4: "Lyapunov certificates over the corpus and random trees",
    5: "jump-map exactness at every switch",
    6: "Lyapunov decay within every mode",
    7: "terminal bipartite / trivial behaviour",
    8: "unicycle p-points match the first-order simulation",
    9: "dwell-time machinery",
    10: "determinism of reproduce-paper",
}

_results: dict[int, list[str]] = {}


def pytest_runtest_logreport(report):
    m = re.search(r"test_acceptance\.py::test_criterion_(\d+)", report.nodeid)
    if not m:
        return
    if report.when == "call" or report.outcome != "passed":
        _results.setdefault(int(m.group(1)), []).append(report.outcome)


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(CRITERIA):
        outcomes = _results.get(k)
        if not outcomes:
            status = "NOT RUN"
        elif all(o == "passed" for o in outcomes):
            status = "PASS"
        else:
            status = "FAIL"
        terminalreporter.write_line(f"criterion {k:2d}: {status:7s} {CRITERIA[k]}")

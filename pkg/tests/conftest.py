import time

import pytest

CRITERIA = {
    "1": "closed-form axis rate",
    "2": "non-convexity and non-concavity",
    "3": "two-big-jumps separation",
    "4": "oracle equivalence",
    "5": "Weibull exactness",
    "6": "homogeneity and monotonicity suites",
    "7a": "moderate deviations, Monte Carlo",
    "7b": "moderate deviations, quadratic rate vs grid",
    "8": "deep-tail quadrature agreement",
    "9": "Stiefel validity",
    "10": "support-rate sanity",
}

_results = {}
_ran_acceptance = []


class Recorder:
    def __init__(self, key, limit):
        self.key, self.limit = key, limit
        self.start = time.perf_counter()

    def done(self, ok: bool, detail: str) -> bool:
        elapsed = time.perf_counter() - self.start
        in_time = elapsed < self.limit
        passed = bool(ok) and in_time
        note = detail if in_time else f"{detail}; runtime {elapsed:.1f}s over {self.limit:g}s"
        _results[self.key] = (passed, f"{note} [{elapsed:.1f}s]")
        return passed


@pytest.fixture
def criterion():
    _ran_acceptance.append(True)
    return Recorder


def pytest_terminal_summary(terminalreporter):
    if not _ran_acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for key, name in CRITERIA.items():
        passed, detail = _results.get(key, (False, "no result recorded"))
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  {key:>3}  {name}: {detail}")

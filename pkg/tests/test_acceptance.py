"""Acceptance criteria 1-10 at their stated tolerances and time limits.

Each test prints one PASS/FAIL line (with capture disabled, so it shows in
``pytest -v`` output) and then asserts the outcome.
"""

import pytest

from latentmpc.acceptance import ALL, run_criterion


@pytest.mark.parametrize("number", ALL)
def test_criterion(number, capsys):
    res = run_criterion(number, echo=False)
    with capsys.disabled():
        if "table" in res.extra:
            print("\n" + res.extra["table"])
        print("\n" + res.line())
    assert res.passed, res.detail
    assert res.seconds <= res.limit, f"took {res.seconds:.1f}s, limit {res.limit:g}s"

"""Acceptance suite: one test per criterion, each printing its [PASS]/[FAIL] line.

Run with ``pytest -s tests/test_acceptance.py`` to see the lines, or
``bandlab verify all`` for the same checks outside pytest.
"""

import pytest

from bandlab.acceptance import CHECKS, RUNTIME_LIMITS, run_check


@pytest.mark.parametrize("number", sorted(CHECKS))
def test_criterion(number):
    result = run_check(number)
    print(result.line())
    assert result.passed, result.line()
    if number in RUNTIME_LIMITS:
        assert result.details["within_runtime"], f"took {result.seconds:.0f}s, limit {RUNTIME_LIMITS[number]}s"

"""Acceptance criteria, each at its stated tolerance.

Every criterion prints one PASS/FAIL line; the lines are also collected and
repeated in the terminal summary.
"""
import pytest

from facetflow import bench

ACCEPTANCE_LINES = []


@pytest.mark.parametrize("key", list(bench.CRITERIA))
def test_criterion(key):
    result = bench.CRITERIA[key]()
    ACCEPTANCE_LINES.append(result.line())
    print(result.line())
    print("\n".join(result.details()))
    assert result.passed, "\n".join([result.line()] + result.details())

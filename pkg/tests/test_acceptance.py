"""End-to-end acceptance criteria at their stated tolerances.

Each case prints one ``[PASS]``/``[FAIL]`` line; the lines are repeated in
the terminal summary so they appear even when output is captured.
"""

import pytest

from alignflow.cases import CASES, run_case

VERDICTS: list[str] = []


@pytest.mark.slow
@pytest.mark.parametrize("name", list(CASES))
def test_acceptance(name):
    res = run_case(name)
    line = res.line()
    VERDICTS.append(line)
    print(line)
    assert res.passed, line

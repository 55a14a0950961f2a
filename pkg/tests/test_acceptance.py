"""The ten acceptance criteria at their stated tolerances and time budgets.

Run with ``pytest -s tests/test_acceptance.py`` to see one line per
criterion, or directly with ``python3 tests/test_acceptance.py``.
"""

import sys

import pytest

from confdeficit.acceptance import CRITERIA, run_all, run_criterion
from confdeficit.config import ExperimentConfig


@pytest.mark.acceptance
@pytest.mark.parametrize("number", sorted(CRITERIA))
def test_criterion(number, capsys):
    result = run_criterion(number, ExperimentConfig())
    with capsys.disabled():
        print()
        print(result.line())
        if not result.passed:
            print(f"    metrics: {result.metrics}")
            for note in result.notes:
                print(f"    note: {note}")
    assert result.passed, result.metrics


if __name__ == "__main__":
    results = run_all(ExperimentConfig(), echo=print)
    print(f"{sum(r.passed for r in results)}/{len(results)} criteria passed")
    sys.exit(0 if all(r.passed for r in results) else 1)

"""Acceptance battery at full scale: one pass/fail line per criterion.

The lines are printed as each check finishes and repeated in the terminal summary.
Run directly (`python tests/test_acceptance.py`) for the lines alone.
"""
import json
import sys

import pytest

from vecadvect import suite

RESULTS = []


def _report(check):
    line = check.line() + f" ({check.runtime:.1f} s)"
    RESULTS.append(line)
    print(line, file=sys.__stdout__, flush=True)
    return check


@pytest.mark.parametrize("fn", suite.CRITERIA, ids=lambda f: f.__name__)
def test_criterion(fn):
    check = _report(fn(False))
    assert check.passed, json.dumps(suite._json(check.metrics), indent=1)[:4000]


if __name__ == "__main__":
    ok = True
    for fn in suite.CRITERIA:
        ok &= _report(fn(False)).passed
    sys.exit(0 if ok else 1)

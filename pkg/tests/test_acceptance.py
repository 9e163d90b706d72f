"""Acceptance gate: every primary criterion at its stated tolerance.

Runs at full scale by default (several minutes on one core).  Set
BCO_LAB_ACCEPT_SCALE=quick for a smoke run.  Each criterion prints one
[PASS]/[FAIL] line and is asserted in its own test, so an honest failure in
one does not hide the others.
"""
import os

import pytest

from bco_lab import acceptance as acc

SCALE = os.environ.get("BCO_LAB_ACCEPT_SCALE", "full")
SEED = 0


@pytest.fixture(scope="module")
def bayes_runs():
    return acc.bayes_runs(SEED, SCALE)


def report(result, capsys):
    with capsys.disabled():
        print("\n" + result.line())
    assert result.passed, result.detail


@pytest.mark.parametrize("number", [1, 2, 3])
def test_bayes_criterion(number, bayes_runs, capsys):
    fn = getattr(acc, f"criterion_{number}")
    report(fn(bayes_runs), capsys)


@pytest.mark.parametrize("number", [4, 5, 6, 7, 8, 9])
def test_criterion(number, capsys):
    fn = getattr(acc, f"criterion_{number}")
    report(fn(SEED, SCALE), capsys)

"""Acceptance gate: one pass/fail line per criterion, at the stated tolerances and time limits."""
import pytest

from poincare_lab.acceptance import CRITERIA, run_criterion
from poincare_lab.cli import run_command


@pytest.mark.parametrize("number", sorted(CRITERIA))
def test_criterion(number):
    res = run_criterion(number, seed=0)
    print("\n" + res.line())
    print(f"   details: {res.details}")
    assert res.passed, res.details
    assert res.within_time, f"took {res.elapsed:.2f}s, limit {res.runtime_limit}s"


def test_criterion_10_selftest_determinism(tmp_path):
    outs = [tmp_path / "a.json", tmp_path / "b.json"]
    codes = [run_command(["selftest", "--seed", "11", "--out", str(p)]) for p in outs]
    same = outs[0].read_bytes() == outs[1].read_bytes()
    print(f"\ncriterion 10 {'PASS' if same and codes == [0, 0] else 'FAIL'}  selftest determinism")
    assert codes == [0, 0]
    assert same

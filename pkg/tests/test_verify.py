import pytest

from dominic.verify import CHECKS, run_checks


@pytest.mark.parametrize("name", [name for name, _ in CHECKS])
def test_invariant_check(name):
    [(got, ok, detail)] = list(run_checks([name]))
    assert got == name
    assert ok, detail

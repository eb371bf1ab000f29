import pytest

from fsm_fixtures import FIXTURES, check


@pytest.mark.parametrize("fixture", FIXTURES, ids=[f.name for f in FIXTURES])
def test_transition_fixture(fixture):
    ok, got = check(fixture)
    assert ok, f"got {got!r}, expected {fixture.expected!r}"

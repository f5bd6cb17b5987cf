import sys

import pytest

from recdecode.catalog import build_catalog


@pytest.fixture
def three_items():
    return build_catalog([
        ("ps3", "Play Station 3", "games"),
        ("ps4", "Play Station 4", "games"),
        ("guitar", "Guitar", "instruments"),
    ])


@pytest.fixture
def xyz_catalog():
    # A=[x,y], B=[x,z], C=[w]
    return build_catalog([("A", "x y", "c1"), ("B", "x z", "c1"), ("C", "w", "c2")])


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        ok, detail = results[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'} - {detail}")

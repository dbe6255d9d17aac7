import zlib

import numpy as np
import pytest

from vind.streams import RandomStream

# acceptance outcomes, filled in by tests/test_acceptance.py
ACCEPTANCE = {}


def _seed(request):
    # stable per-test seed so one unlucky seed cannot correlate unrelated tests
    return zlib.crc32(request.node.nodeid.encode())


@pytest.fixture
def seed(request):
    return _seed(request)


@pytest.fixture
def stream(request):
    return RandomStream(_seed(request))


@pytest.fixture
def rng(request):
    return np.random.default_rng(_seed(request))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"criterion {key}: {'PASS' if ok else 'FAIL'}  {detail}")

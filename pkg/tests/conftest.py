import os

import numpy as np
import pytest

from meshdetect.signal import NodeSignal, SignalParams

QUIET = SignalParams(drift_enabled=False, mains_enabled=False, bursts_enabled=False,
                     events_enabled=False)

_criteria = []


def record_criterion(cid: str, ok: bool, detail: str):
    """Collect one acceptance line; printed in the terminal summary."""
    _criteria.append((cid, ok, detail))


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for cid, ok, detail in _criteria:
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {cid}: {detail}")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def node_series():
    """Two hours of one node under the default model."""
    sig = NodeSignal(0, 5625, 12.0, SignalParams(), seed=777)
    return sig, sig.frames()

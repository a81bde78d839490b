import numpy as np
import pytest

from gapewatch.signal_core import GapeRecord, GapeSeries


def rec(ts, *vals):
    """Record helper: rec(1000, 0.1, None, ...) padded with None to six channels."""
    vals = list(vals) + [None] * (6 - len(vals))
    return GapeRecord(ts, tuple(vals))


def tone(freq_hz, amp, n, fs=10.0, phase=0.0):
    t = np.arange(n) / fs
    return amp * np.sin(2 * np.pi * freq_hz * t + phase)


def series_of(values, channel_id=1, fs=10.0, start=0):
    return GapeSeries(channel_id, np.asarray(values, dtype=float), fs, start)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


# ---------------------------------------------------------------------------
# acceptance reporting: one PASS/FAIL line per criterion in the terminal summary

_ACCEPTANCE = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or report.when not in ("setup", "call"):
        return
    number, title = marker.args
    prev = _ACCEPTANCE.get(number, (title, True))
    ok = prev[1] and not report.failed
    _ACCEPTANCE[number] = (title, ok)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        title, ok = _ACCEPTANCE[number]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] AC{number}: {title}")

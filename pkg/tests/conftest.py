import numpy as np
import pytest

from infodyn import clustering

_criteria = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, text): acceptance criterion checked by the test")


@pytest.fixture(autouse=True)
def _monotone_kmeans(monkeypatch):
    """Every k-means fit anywhere in the suite must have a non-increasing objective."""
    real = clustering.kmeans

    def checked(*args, **kwargs):
        model = real(*args, **kwargs)
        h = np.asarray(model.history)
        assert np.all(np.diff(h) <= 0), f"objective increased: {h}"
        return model

    monkeypatch.setattr(clustering, "kmeans", checked)
    yield


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    n, text = mark.args
    key = (n, text)
    if rep.when == "call" or (rep.when == "setup" and rep.outcome != "passed"):
        ok = rep.outcome == "passed"
        _criteria[key] = _criteria.get(key, True) and ok


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for (n, text), ok in sorted(_criteria.items()):
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {text}")

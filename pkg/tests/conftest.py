import warnings

import pytest
from hypothesis import HealthCheck, settings

from idmauc.fit import RecordArrays
from idmauc.simulate import generate_dataset, scenario

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def dataset(name="A", seed=1, n=None):
    cfg = scenario(name).with_seed(seed)
    if n is not None:
        from dataclasses import replace
        cfg = replace(cfg, n_subjects=n)
    return generate_dataset(cfg)


@pytest.fixture(scope="session")
def data_a():
    """Scenario A, seed 1: (paths, records, arrays)."""
    ds = dataset("A", 1)
    recs = [r for _, r in ds]
    return [p for p, _ in ds], recs, RecordArrays.from_records(recs)


@pytest.fixture(scope="session")
def small_records():
    ds = dataset("B", 5, n=100)
    return [r for _, r in ds]


@pytest.fixture(autouse=True)
def _quiet_runtime_warnings():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        yield


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "LINES", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)

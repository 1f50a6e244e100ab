import pytest

from mmlab import synthgen as sg


@pytest.fixture(scope="session")
def datasets():
    """Full-size datasets with seed-0 splits, generated once per session."""
    cache = {}

    def get(variant):
        if variant not in cache:
            ds = sg.generate(sg.GenConfig(variant=variant, seed=0))
            cache[variant] = (ds, sg.split(ds, seed=0))
        return cache[variant]

    return get


@pytest.fixture(scope="session")
def small_alpha():
    ds = sg.generate(sg.GenConfig(variant="alpha", d1=20, d2=10, d=8, N=400, seed=3))
    return ds, sg.split(ds, seed=0)


@pytest.fixture(scope="session")
def small_beta():
    ds = sg.generate(sg.GenConfig(variant="beta", d1=20, d2=10, d=8, N=400, seed=3))
    return ds, sg.split(ds, seed=0)


ACCEPTANCE_LINES = []


@pytest.fixture
def verdict():
    """Record one pass/fail line per acceptance criterion and assert it."""

    def record(name, ok, detail=""):
        line = f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)

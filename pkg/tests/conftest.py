import pytest

from dripfs.backend import init_backend
from dripfs.clock import VirtualClock
from dripfs.rwclient import RWClient, SyncConfig

KEY = bytes(range(32))


@pytest.fixture
def key():
    return KEY


def mount(N=16, B=4096, k=3, t=10.0, seed=1, selector=None):
    store = init_backend(None, N, B, KEY, k=k, t=t)
    client = RWClient(store, SyncConfig(k, t, seed=seed), selector=selector)
    return store, client, VirtualClock()


@pytest.fixture
def small():
    return mount()


# one line per acceptance criterion, printed at the end of the run
ACCEPTANCE: dict = {}


@pytest.fixture
def criterion():
    def record(n, ok, detail):
        ACCEPTANCE[n] = f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        print(ACCEPTANCE[n])
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])

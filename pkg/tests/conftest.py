import pytest

from shiftext.config import EpisodeConfig
from shiftext.entities import CommittedCourier, OccasionalCourier, Request
from shiftext.environment import SystemState
from shiftext.world import Location


def pytest_addoption(parser):
    parser.addoption("--fast", action="store_true", help="skip tests marked slow")


def pytest_collection_modifyitems(config, items):
    if not config.getoption("--fast"):
        return
    skip = pytest.mark.skip(reason="--fast")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


def make_request(rid, pickup, delivery, arrival=0, deadline=5, revenue=60.0):
    return Request(rid, arrival, deadline, Location(*pickup), Location(*delivery), revenue)


def make_committed(cid, loc, start=0, end=40, busy_until=0.0, extension_start=None):
    return CommittedCourier(cid, start, end, Location(*loc), busy_until, extension_start)


def make_occasional(oid, loc, arrival=0, patience=1):
    return OccasionalCourier(oid, arrival, Location(*loc), patience)


def make_state(epoch=0, requests=(), committed=(), occasional=(), horizon=200, cumulative_lost=0,
               cumulative_extensions=0):
    """State whose derived sets follow the engine's definitions from the raw courier list."""
    on_shift = tuple(c for c in committed if c.on_shift(epoch))
    available = tuple(c for c in on_shift if not c.is_busy(epoch))
    ending = tuple(c for c in available if c.shift_end == epoch + 1)
    return SystemState(epoch, horizon, tuple(requests), available, tuple(occasional), on_shift, ending,
                       cumulative_lost, cumulative_extensions)


@pytest.fixture
def config():
    return EpisodeConfig()


# acceptance results, printed as one line per criterion at the end of the session
ACCEPTANCE: dict[str, tuple[bool, str]] = {}


def record(criterion: str, ok: bool, detail: str) -> bool:
    ACCEPTANCE[criterion] = (ok, detail)
    print(f"[{'PASS' if ok else 'FAIL'}] {criterion}: {detail}")
    return ok


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(ACCEPTANCE, key=lambda n: int(n.split()[0][1:])):
        ok, detail = ACCEPTANCE[name]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")

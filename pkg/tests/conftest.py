import pytest
from hypothesis import HealthCheck, settings

from dualcontrol import MarketModel

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("thorough", deadline=None, max_examples=400)
settings.load_profile("default")

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def capped_market():
    return MarketModel(r=0.0, mu=0.04, sigma=0.2, T=1.0)


@pytest.fixture
def rate_market():
    return MarketModel(r=0.05, mu=0.09, sigma=0.2, T=40.0)


@pytest.fixture
def record_acceptance():
    def record(number: int, ok: bool, detail: str) -> None:
        line = f"ACCEPTANCE {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
